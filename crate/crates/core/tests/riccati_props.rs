mod common;

use alqg_core::matkit;
use alqg_core::riccati::{self, CareProblem, DEFAULT_CARE_TOL};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn care_instance() -> impl Strategy<Value = CareProblem> {
    (1usize..=6, 1usize..=3)
        .prop_flat_map(|(n, m)| {
            (
                common::matrix(n, n, 2.0),
                common::matrix(n, m, 2.0),
                common::matrix(n, n, 1.0),
                common::matrix(m, m, 1.0),
            )
        })
        .prop_map(|(a, b, g, h)| {
            let n = a.nrows();
            let m = b.ncols();
            let q = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
            let r = &h * h.transpose() + DMatrix::identity(m, m);
            CareProblem::new(a, b, q, r).unwrap()
        })
}

/// Block upper-triangular instance: `(A₁, B₁)` generic, `A₃` Hurwitz.
fn block_instance() -> impl Strategy<Value = (CareProblem, usize)> {
    (1usize..=3, 1usize..=3, 1usize..=2)
        .prop_flat_map(|(n1, n2, m)| {
            (
                common::matrix(n1, n1, 2.0),
                common::matrix(n1, n2, 2.0),
                common::matrix(n2, n2, 1.0),
                common::matrix(n1, m, 2.0),
                common::matrix(n1 + n2, n1 + n2, 1.0),
            )
        })
        .prop_map(|(a1, a2, c3, b1, g)| {
            let (n1, n2, m) = (a1.nrows(), c3.nrows(), b1.ncols());
            let n = n1 + n2;
            let a3 = -(&c3 * c3.transpose() + DMatrix::identity(n2, n2) * 0.5);
            let mut a = DMatrix::zeros(n, n);
            a.view_mut((0, 0), (n1, n1)).copy_from(&a1);
            a.view_mut((0, n1), (n1, n2)).copy_from(&a2);
            a.view_mut((n1, n1), (n2, n2)).copy_from(&a3);
            let mut b = DMatrix::zeros(n, m);
            b.view_mut((0, 0), (n1, m)).copy_from(&b1);
            let q = &g * g.transpose() + DMatrix::identity(n, n) * 0.2;
            (CareProblem::new(a, b, q, DMatrix::identity(m, m)).unwrap(), n1)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_care_is_solved(p in care_instance()) {
        let sol = riccati::solve_care(&p, DEFAULT_CARE_TOL).unwrap();
        prop_assert!(sol.relative_residual <= 1e-8, "residual {}", sol.relative_residual);
        prop_assert!(sol.closed_loop_margin < 0.0);
        let min_eig = sol.x.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min_eig >= -1e-9 * (1.0 + sol.x.norm()), "min eig {min_eig}");
        prop_assert!(matkit::is_hurwitz(&(&p.a + &p.b * &sol.gain), 0.0));
    }

    #[test]
    fn newton_step_leaves_solution_fixed(p in care_instance()) {
        let sol = riccati::solve_care(&p, DEFAULT_CARE_TOL).unwrap();
        let s = p.s();
        let acl = &p.a - &s * &sol.x;
        let rhs = &p.q + &sol.x * &s * &sol.x;
        let next = riccati::solve_lyapunov(&acl, &rhs).unwrap();
        prop_assert!((&next - &sol.x).norm() <= 1e-9 * (1.0 + sol.x.norm()));
    }

    #[test]
    fn block_solution_matches_full(case in block_instance()) {
        let (p, n1) = case;
        let full = riccati::solve_care(&p, DEFAULT_CARE_TOL).unwrap();
        let block = riccati::solve_block_care(&p.a, &p.b, &p.q, &p.r, n1, DEFAULT_CARE_TOL).unwrap();
        let assembled = block.assemble();
        prop_assert!((&assembled - &full.x).norm() <= 1e-7 * (1.0 + full.x.norm()));
    }
}

#[test]
fn lyapunov_oracle_for_stable_scalar() {
    // a x + x a + c = 0  →  x = c / (−2a)
    let x = riccati::solve_lyapunov(&DMatrix::from_element(1, 1, -2.0), &DMatrix::from_element(1, 1, 3.0)).unwrap();
    assert!((x[(0, 0)] - 0.75).abs() < 1e-14);
}

#[test]
fn hamiltonian_that_stalls_plain_qr() {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0048755660230066, -1.2898065371273144, 0.0, 1.7958555808550516]);
    let b = DMatrix::from_row_slice(
        2,
        3,
        &[0.05078728135173623, -0.4053116687122323, 1.358847323009925, 1.0338731957311826, -1.199932254543067, -0.45221001208919087],
    );
    let q = DMatrix::from_row_slice(2, 2, &[1.433116657725491, 0.08703034032236284, 0.08703034032236284, 0.6814100330437489]);
    let r = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.588119010918752, 0.33745229033348095, -0.5647527451526346, 0.33745229033348095, 2.3005800429385577,
            0.32125115186551756, -0.5647527451526346, 0.32125115186551756, 2.14948954115511,
        ],
    );
    let sol = riccati::solve_care(&CareProblem::new(a, b, q, r).unwrap(), DEFAULT_CARE_TOL).unwrap();
    assert!(sol.relative_residual <= 1e-8);
    assert!(sol.closed_loop_margin < 0.0);
}
