//! Controllable-with-noise subspace and the masked consistency projection.
//!
//! With `B₀ = [B, D]` and `U` an orthonormal basis of `Im(A|B₀)` followed by
//! its orthogonal complement, `U⁻¹AU` is block upper-triangular and the
//! parameters `(A₁, B₁)` of the excited part are identifiable. The same
//! split can be recovered from data: eigenvectors of `∫φφᵀ` whose eigenvalue
//! stays below `log k` eventually span `Im(A|B₀)^⊥ × {0}`.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::matkit::{self, normalize_column_signs, orthogonal_complement, orthonormal_range};

/// `sin 5°`: largest u-part a weak direction may carry.
pub const DEFAULT_WEAK_PART_TOL: f64 = 0.087_155_742_747_658_17;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubspaceError {
    #[error("decomposition is not block upper-triangular (residual {residual:.3e})")]
    NotBlockTriangular { residual: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("weak direction carries an input component of size {u_part:.3e}")]
    ExcitedInputDirection { u_part: f64 },
}

/// Orthonormal basis of `Im(B₀) + A Im(B₀) + … + A^{n−1} Im(B₀)` and its dimension.
pub fn controllable_subspace(a: &DMatrix<f64>, b0: &DMatrix<f64>, rank_tol: f64) -> (DMatrix<f64>, usize) {
    let n = a.nrows();
    let mut basis = orthonormal_range(b0, rank_tol);
    for _ in 1..n.max(1) {
        if basis.ncols() == n || basis.ncols() == 0 {
            break;
        }
        let image = a * &basis;
        let stacked = DMatrix::from_fn(n, basis.ncols() * 2, |i, j| {
            if j < basis.ncols() {
                basis[(i, j)]
            } else {
                image[(i, j - basis.ncols())]
            }
        });
        let next = orthonormal_range(&stacked, rank_tol);
        if next.ncols() == basis.ncols() {
            break;
        }
        basis = next;
    }
    let n1 = basis.ncols();
    (basis, n1)
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Orthonormal change of basis, controllable part first.
    pub u: DMatrix<f64>,
    pub n1: usize,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub a3: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub d1: DMatrix<f64>,
}

impl Decomposition {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    /// `[[A₁, 0, B₁], [0, 0, 0]]`, the masked image of the true parameter.
    pub fn masked_truth(&self, m: usize) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n + m);
        out.view_mut((0, 0), (self.n1, self.n1)).copy_from(&self.a1);
        out.view_mut((0, n), (self.n1, m)).copy_from(&self.b1);
        out
    }
}

/// Builds `U` from `Im(A|[B, D])` and extracts the blocks of `U⁻¹AU`,
/// `U⁻¹B`, `U⁻¹D`.
pub fn build_decomposition(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    d: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<Decomposition, SubspaceError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || d.nrows() != n {
        return Err(SubspaceError::Dimension("A, B, D row counts differ".into()));
    }
    let b0 = DMatrix::from_fn(n, b.ncols() + d.ncols(), |i, j| {
        if j < b.ncols() {
            b[(i, j)]
        } else {
            d[(i, j - b.ncols())]
        }
    });
    let (ctrl, n1) = controllable_subspace(a, &b0, rank_tol);
    let comp = orthogonal_complement(&ctrl);
    let u = assemble_columns(&ctrl, &comp);
    decompose_with(a, b, d, u, n1, rank_tol)
}

fn assemble_columns(first: &DMatrix<f64>, second: &DMatrix<f64>) -> DMatrix<f64> {
    let n = first.nrows();
    let k1 = first.ncols();
    DMatrix::from_fn(n, k1 + second.ncols(), |i, j| {
        if j < k1 {
            first[(i, j)]
        } else {
            second[(i, j - k1)]
        }
    })
}

fn decompose_with(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    d: &DMatrix<f64>,
    u: DMatrix<f64>,
    n1: usize,
    rank_tol: f64,
) -> Result<Decomposition, SubspaceError> {
    let n = a.nrows();
    let n2 = n - n1;
    let a_bar = u.transpose() * a * &u;
    let b_bar = u.transpose() * b;
    let d_bar = u.transpose() * d;
    let lower = a_bar.view((n1, 0), (n2, n1)).norm();
    let b_lower = b_bar.rows(n1, n2).norm();
    let d_lower = d_bar.rows(n1, n2).norm();
    let bound = |scale: f64| 10.0 * rank_tol * scale + 1e-14;
    let b0_scale = (b.norm_squared() + d.norm_squared()).sqrt();
    if lower > bound(a.norm()) || b_lower > bound(b0_scale) || d_lower > bound(b0_scale) {
        return Err(SubspaceError::NotBlockTriangular {
            residual: lower.max(b_lower).max(d_lower),
        });
    }
    Ok(Decomposition {
        a1: a_bar.view((0, 0), (n1, n1)).into_owned(),
        a2: a_bar.view((0, n1), (n1, n2)).into_owned(),
        a3: a_bar.view((n1, n1), (n2, n2)).into_owned(),
        b1: b_bar.rows(0, n1).into_owned(),
        d1: d_bar.rows(0, n1).into_owned(),
        u,
        n1,
    })
}

/// Eigenvectors of the unweighted Gram matrix with eigenvalue `< ln k`.
pub fn weak_space(gram: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let dim = gram.nrows();
    if dim == 0 || k < 2 {
        return DMatrix::zeros(dim, 0);
    }
    let threshold = (k as f64).ln();
    let sym = (gram + gram.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..dim)
        .filter(|&i| eig.eigenvalues[i] < threshold)
        .collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut basis = DMatrix::zeros(dim, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(i));
    }
    normalize_column_signs(&mut basis);
    basis
}

/// Smallest Gram eigenvalue among the directions outside the weak space.
pub fn strong_min_eigenvalue(gram: &DMatrix<f64>, k: usize) -> f64 {
    if gram.is_empty() || k < 2 {
        return f64::NAN;
    }
    let threshold = (k as f64).ln();
    let eig = SymmetricEigen::new((gram + gram.transpose()) * 0.5);
    eig.eigenvalues
        .iter()
        .copied()
        .filter(|l| *l >= threshold)
        .fold(f64::NAN, f64::min)
}

/// `U⁻¹ θ̂ᵀ diag(U, I_m) diag(I_{n₁}, 0_{n−n₁}, I_m)`.
pub fn masked_estimate(theta_hat: &DMatrix<f64>, dec: &Decomposition) -> Result<DMatrix<f64>, SubspaceError> {
    let n = dec.n();
    if theta_hat.ncols() != n || theta_hat.nrows() < n {
        return Err(SubspaceError::Dimension(format!(
            "theta is {}x{}, state dimension {}",
            theta_hat.nrows(),
            theta_hat.ncols(),
            n
        )));
    }
    let m = theta_hat.nrows() - n;
    let tt = theta_hat.transpose();
    let ut = dec.u.transpose();
    let a_part = &ut * tt.columns(0, n) * &dec.u;
    let b_part = &ut * tt.columns(n, m);
    let mut out = DMatrix::zeros(n, n + m);
    out.view_mut((0, 0), (n, dec.n1))
        .copy_from(&a_part.columns(0, dec.n1));
    out.view_mut((0, n), (n, m)).copy_from(&b_part);
    Ok(out)
}

/// Change of basis estimated from data alone.
#[derive(Debug, Clone)]
pub struct InferredDecomposition {
    pub u: DMatrix<f64>,
    pub n1: usize,
    /// Weak-space basis the estimate was built from, `(n+m) × q`.
    pub weak: DMatrix<f64>,
}

/// Estimates `U` from `∫₀ᵏ φφᵀ`: the x-parts of the weak directions span
/// `Im(A|B₀)^⊥`, the rest of the state space is the excited part.
///
/// Each weak direction must have an input component of norm at most
/// `part_tol`.
pub fn infer_decomposition_from_data(
    gram: &DMatrix<f64>,
    k: usize,
    n: usize,
    part_tol: f64,
) -> Result<InferredDecomposition, SubspaceError> {
    if gram.nrows() < n || gram.ncols() != gram.nrows() {
        return Err(SubspaceError::Dimension("gram must be (n+m) square".into()));
    }
    let m = gram.nrows() - n;
    let weak = weak_space(gram, k);
    for c in 0..weak.ncols() {
        let u_part = weak.view((n, c), (m, 1)).norm();
        if u_part > part_tol {
            return Err(SubspaceError::ExcitedInputDirection { u_part });
        }
    }
    let x_parts = weak.rows(0, n).into_owned();
    let weak_x = orthonormal_range(&x_parts, matkit::DEFAULT_RANK_TOL);
    let excited = orthogonal_complement(&weak_x);
    let u = assemble_columns(&excited, &weak_x);
    Ok(InferredDecomposition {
        n1: n - weak_x.ncols(),
        u,
        weak,
    })
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases of equal dimension.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let sv = (a.transpose() * b).svd(false, false).singular_values;
    sv.min().clamp(-1.0, 1.0).acos()
}

/// Weak-space dimension is trusted only once it agrees at `k/2` and `k`.
pub fn weak_dimension_stable(gram_half: &DMatrix<f64>, gram_full: &DMatrix<f64>, k: usize) -> bool {
    weak_space(gram_half, k / 2).ncols() == weak_space(gram_full, k).ncols()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn block_example() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            dmatrix![0.5, 0.3; 0.0, -1.0],
            dmatrix![1.0; 0.0],
            dmatrix![1.0; 0.0],
        )
    }

    #[test]
    fn controllable_subspace_cases() {
        let a = dmatrix![0.5, 0.3; 0.0, -1.0];
        let (_, n1) = controllable_subspace(&a, &DMatrix::identity(2, 2), 1e-8);
        assert_eq!(n1, 2);
        let (basis, n1) = controllable_subspace(&a, &dmatrix![1.0, 1.0; 0.0, 0.0], 1e-8);
        assert_eq!(n1, 1);
        assert!((basis[(0, 0)] - 1.0).abs() < 1e-14);
        let (basis, n1) = controllable_subspace(&a, &DMatrix::zeros(2, 2), 1e-8);
        assert_eq!((n1, basis.ncols()), (0, 0));
    }

    #[test]
    fn block_decomposition_hand_values() {
        let (a, b, d) = block_example();
        let dec = build_decomposition(&a, &b, &d, 1e-8).unwrap();
        assert_eq!(dec.n1, 1);
        assert!((&dec.u - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
        assert!((dec.a1[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((dec.a2[(0, 0)] - 0.3).abs() < 1e-14);
        assert!((dec.a3[(0, 0)] + 1.0).abs() < 1e-14);
        assert!((dec.b1[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((dec.d1[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn permuted_block_decomposition() {
        // swap the two states
        let a = dmatrix![-1.0, 0.0; 0.3, 0.5];
        let b = dmatrix![0.0; 1.0];
        let dec = build_decomposition(&a, &b, &b, 1e-8).unwrap();
        assert_eq!(dec.n1, 1);
        assert!((dec.a1[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((dec.a2[(0, 0)].abs() - 0.3).abs() < 1e-14);
        assert!((dec.a3[(0, 0)] + 1.0).abs() < 1e-14);
        assert!((dec.b1[(0, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fully_controllable_has_empty_lower_blocks() {
        let a = dmatrix![0.0, 1.0; -1.0, 0.0];
        let dec = build_decomposition(&a, &dmatrix![0.0; 1.0], &dmatrix![0.0; 0.0], 1e-8).unwrap();
        assert_eq!(dec.n1, 2);
        assert_eq!(dec.a3.shape(), (0, 0));
        assert_eq!(dec.a2.shape(), (2, 0));
        assert!((dec.u.transpose() * &dec.u - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn weak_space_cases() {
        let k = 100;
        let gram = DMatrix::<f64>::identity(2, 2) * (k as f64).ln();
        assert_eq!(weak_space(&gram, k).ncols(), 0);
        let w = weak_space(&dmatrix![100.0, 0.0; 0.0, 0.1], k);
        assert_eq!(w.ncols(), 1);
        assert!((w[(1, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn masked_estimate_of_truth() {
        let (a, b, d) = block_example();
        let dec = build_decomposition(&a, &b, &d, 1e-8).unwrap();
        let theta = crate::stabcheck::pack_theta(&a, &b);
        let masked = masked_estimate(&theta, &dec).unwrap();
        assert!((masked - dmatrix![0.5, 0.0, 1.0; 0.0, 0.0, 0.0]).norm() < 1e-14);
        let zero = masked_estimate(&DMatrix::zeros(3, 2), &dec).unwrap();
        assert_eq!(zero, DMatrix::zeros(2, 3));
    }

    #[test]
    fn masked_estimate_without_mask_is_similarity() {
        let a = dmatrix![0.0, 1.0; -1.0, 0.0];
        let b = dmatrix![0.0; 1.0];
        let dec = build_decomposition(&a, &b, &DMatrix::zeros(2, 1), 1e-8).unwrap();
        let theta_hat = dmatrix![1.0, 2.0; 3.0, 4.0; 5.0, 6.0];
        let masked = masked_estimate(&theta_hat, &dec).unwrap();
        let tt = theta_hat.transpose();
        let expected_a = dec.u.transpose() * tt.columns(0, 2) * &dec.u;
        let expected_b = dec.u.transpose() * tt.columns(2, 1);
        assert!((masked.columns(0, 2) - expected_a).norm() < 1e-12);
        assert!((masked.columns(2, 1) - expected_b).norm() < 1e-12);
    }

    #[test]
    fn infer_fully_excited_and_degenerate() {
        let gram = DMatrix::<f64>::identity(3, 3) * 1e3;
        let inf = infer_decomposition_from_data(&gram, 500, 2, DEFAULT_WEAK_PART_TOL).unwrap();
        assert_eq!(inf.n1, 2);
        assert!((inf.u - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        let tiny = DMatrix::<f64>::identity(3, 3) * 1e-6;
        assert!(matches!(
            infer_decomposition_from_data(&tiny, 2, 2, DEFAULT_WEAK_PART_TOL),
            Err(SubspaceError::ExcitedInputDirection { .. })
        ));
    }

    #[test]
    fn principal_angles() {
        let e1 = dmatrix![1.0; 0.0];
        let e2 = dmatrix![0.0; 1.0];
        assert!(principal_angle(&e1, &e1).abs() < 1e-7);
        assert!((principal_angle(&e1, &e2) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
