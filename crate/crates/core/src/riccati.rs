//! Continuous-time algebraic Riccati equation
//! `AᵀX + XA + Q − X B R⁻¹ Bᵀ X = 0`, stabilizing solution.
//!
//! The solver computes a complex Schur form of the Hamiltonian
//! `[[A, −S], [−Q, −Aᵀ]]` (with `S = B R⁻¹ Bᵀ`), reorders it with Givens
//! swaps so the stable eigenvalues lead, reads `X = U₂ U₁⁻¹` off the stable
//! invariant subspace and finally polishes the result with Newton–Kleinman
//! steps. Small Sylvester and Lyapunov equations are solved directly on the
//! vectorized system, which is fine for the dimensions this crate targets.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

use crate::matkit::{self, to_complex};

/// Default relative residual tolerance.
pub const DEFAULT_CARE_TOL: f64 = 1e-9;

const MAX_NEWTON_PASSES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("Schur iteration on the Hamiltonian did not converge")]
    NoConvergence,
    #[error("stable invariant subspace has dimension {found}, expected {expected}")]
    NoStableSubspace { found: usize, expected: usize },
    #[error("stable subspace basis is singular; no stabilizing solution")]
    SingularBasis,
    #[error("relative residual {relative:.3e} exceeds tolerance {tol:.3e}")]
    ResidualTooLarge { relative: f64, tol: f64 },
    #[error("closed loop is not Hurwitz (max real part {margin:.3e})")]
    NotStabilizing { margin: f64 },
    #[error("singular linear matrix equation")]
    SingularEquation,
}

#[derive(Debug, Clone)]
pub struct CareProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct CareSolution {
    pub x: DMatrix<f64>,
    /// `L = −R⁻¹ Bᵀ X`, so that `u = L x`.
    pub gain: DMatrix<f64>,
    /// Frobenius norm of the Riccati residual.
    pub residual_norm: f64,
    /// Residual divided by the magnitude of the individual terms.
    pub relative_residual: f64,
    /// Largest real part of the eigenvalues of `A + B L`.
    pub closed_loop_margin: f64,
}

impl CareProblem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self, RiccatiError> {
        let n = a.nrows();
        let bad = |msg: &str| Err(RiccatiError::InvalidProblem(msg.to_string()));
        if a.ncols() != n {
            return bad("A must be square");
        }
        if b.nrows() != n {
            return bad("B must have as many rows as A");
        }
        if q.shape() != (n, n) {
            return bad("Q must be n x n");
        }
        let m = b.ncols();
        if r.shape() != (m, m) {
            return bad("R must be m x m");
        }
        if [&a, &b, &q, &r].iter().any(|mm| mm.iter().any(|v| !v.is_finite())) {
            return bad("non-finite entries");
        }
        if (&q - q.transpose()).norm() > 1e-10 * q.norm().max(1.0) {
            return bad("Q must be symmetric");
        }
        if n > 0 && q.clone().symmetric_eigen().eigenvalues.min() < -1e-10 * q.norm().max(1.0) {
            return bad("Q must be positive semidefinite");
        }
        if (&r - r.transpose()).norm() > 1e-10 * r.norm().max(1.0) {
            return bad("R must be symmetric");
        }
        if m > 0 && r.clone().cholesky().is_none() {
            return bad("R must be positive definite");
        }
        Ok(Self { a, b, q, r })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// `S = B R⁻¹ Bᵀ`.
    pub fn s(&self) -> DMatrix<f64> {
        &self.b * self.r_inv_bt()
    }

    fn r_inv_bt(&self) -> DMatrix<f64> {
        match self.r.clone().cholesky() {
            Some(ch) => ch.solve(&self.b.transpose()),
            None => DMatrix::zeros(self.b.ncols(), self.n()),
        }
    }

    /// Riccati residual `AᵀX + XA + Q − XSX`.
    pub fn residual(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.s();
        self.a.transpose() * x + x * &self.a + &self.q - x * s * x
    }

    /// Residual normalized by the sizes of the terms that make it up.
    pub fn relative_residual(&self, x: &DMatrix<f64>) -> f64 {
        let s = self.s();
        let scale = self.q.norm()
            + 2.0 * self.a.norm() * x.norm()
            + s.norm() * x.norm() * x.norm();
        self.residual(x).norm() / scale.max(f64::MIN_POSITIVE)
    }

    /// `L = −R⁻¹ Bᵀ X`.
    pub fn gain(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        -(self.r_inv_bt() * x)
    }
}

/// Solves `A X + X B = C` for `X` (`A` p×p, `B` q×q, `C` p×q).
pub fn solve_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, RiccatiError> {
    let p = a.nrows();
    let q = b.nrows();
    if a.ncols() != p || b.ncols() != q || c.shape() != (p, q) {
        return Err(RiccatiError::InvalidProblem(
            "Sylvester dimensions do not match".into(),
        ));
    }
    if p == 0 || q == 0 {
        return Ok(DMatrix::zeros(p, q));
    }
    let ip = DMatrix::<f64>::identity(p, p);
    let iq = DMatrix::<f64>::identity(q, q);
    // Column-major vec: vec(AX) = (I⊗A) vec X, vec(XB) = (Bᵀ⊗I) vec X.
    let k = iq.kronecker(a) + b.transpose().kronecker(&ip);
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let lu = k.lu();
    let sol = lu.solve(&rhs).ok_or(RiccatiError::SingularEquation)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(RiccatiError::SingularEquation);
    }
    Ok(DMatrix::from_column_slice(p, q, sol.as_slice()))
}

/// Solves `AᵀX + XA + C = 0`.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>, RiccatiError> {
    let x = solve_sylvester(&a.transpose(), a, &(-c))?;
    Ok((&x + x.transpose()) * 0.5)
}

type CMat = DMatrix<Complex<f64>>;

/// Swaps the adjacent diagonal entries `k`, `k+1` of the triangular `t`,
/// accumulating the rotation into `q`.
fn swap_adjacent(t: &mut CMat, q: &mut CMat, k: usize) {
    let a = t[(k, k)];
    let b = t[(k + 1, k + 1)];
    let c = t[(k, k + 1)];
    let x1 = c;
    let x2 = b - a;
    let norm = (x1.norm_sqr() + x2.norm_sqr()).sqrt();
    if norm == 0.0 {
        return;
    }
    // G = [g1 g2], g1 the eigenvector of the 2x2 block for eigenvalue b.
    let g11 = x1 / norm;
    let g21 = x2 / norm;
    let g12 = -x2.conj() / norm;
    let g22 = x1.conj() / norm;
    let n = t.nrows();
    for i in 0..n {
        let ti0 = t[(i, k)];
        let ti1 = t[(i, k + 1)];
        t[(i, k)] = ti0 * g11 + ti1 * g21;
        t[(i, k + 1)] = ti0 * g12 + ti1 * g22;
        let qi0 = q[(i, k)];
        let qi1 = q[(i, k + 1)];
        q[(i, k)] = qi0 * g11 + qi1 * g21;
        q[(i, k + 1)] = qi0 * g12 + qi1 * g22;
    }
    for j in 0..n {
        let t0j = t[(k, j)];
        let t1j = t[(k + 1, j)];
        t[(k, j)] = g11.conj() * t0j + g21.conj() * t1j;
        t[(k + 1, j)] = g12.conj() * t0j + g22.conj() * t1j;
    }
    t[(k + 1, k)] = Complex::new(0.0, 0.0);
    t[(k, k)] = b;
    t[(k + 1, k + 1)] = a;
}

/// Splits the real 2x2 diagonal block at `k` of a quasi-triangular `t` into
/// its complex conjugate eigenvalue pair by a unitary rotation.
fn triangularize_block(t: &mut CMat, q: &mut CMat, k: usize) {
    let (a, b) = (t[(k, k)], t[(k, k + 1)]);
    let (c, d) = (t[(k + 1, k)], t[(k + 1, k + 1)]);
    let half_tr = (a + d) * 0.5;
    let disc = ((a - d) * (a - d) * 0.25 + b * c).sqrt();
    let lambda = half_tr + disc;
    // eigenvector of [[a, b], [c, d]] for λ
    let (v1, v2) = if b.norm() >= c.norm() {
        (b, lambda - a)
    } else {
        (lambda - d, c)
    };
    let norm = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
    if norm == 0.0 {
        return;
    }
    let (g11, g21) = (v1 / norm, v2 / norm);
    let (g12, g22) = (-g21.conj(), g11.conj());
    let n = t.nrows();
    for i in 0..n {
        let (ti0, ti1) = (t[(i, k)], t[(i, k + 1)]);
        t[(i, k)] = ti0 * g11 + ti1 * g21;
        t[(i, k + 1)] = ti0 * g12 + ti1 * g22;
        let (qi0, qi1) = (q[(i, k)], q[(i, k + 1)]);
        q[(i, k)] = qi0 * g11 + qi1 * g21;
        q[(i, k + 1)] = qi0 * g12 + qi1 * g22;
    }
    for j in 0..n {
        let (t0j, t1j) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = g11.conj() * t0j + g21.conj() * t1j;
        t[(k + 1, j)] = g12.conj() * t0j + g22.conj() * t1j;
    }
    t[(k + 1, k)] = Complex::new(0.0, 0.0);
}

/// Complex Schur form `M = Q T Q*` with all eigenvalues satisfying `select`
/// moved to the leading positions. Returns `(Q, T, number selected)`.
pub(crate) fn ordered_schur(
    m: &DMatrix<f64>,
    select: impl Fn(Complex<f64>) -> bool,
) -> Result<(CMat, CMat, usize), RiccatiError> {
    let (qr, tr) = matkit::real_schur(m).map_err(|_| RiccatiError::NoConvergence)?;
    let (mut q, mut t) = (to_complex(&qr), to_complex(&tr));
    let n = t.nrows();
    let mut k = 0;
    while k + 1 < n {
        if tr[(k + 1, k)] != 0.0 {
            triangularize_block(&mut t, &mut q, k);
            k += 2;
        } else {
            k += 1;
        }
    }
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = Complex::new(0.0, 0.0);
        }
    }
    let count = (0..n).filter(|&i| select(t[(i, i)])).count();
    // Bubble selected eigenvalues to the top; stable with respect to order.
    loop {
        let mut swapped = false;
        for k in 0..n.saturating_sub(1) {
            if !select(t[(k, k)]) && select(t[(k + 1, k + 1)]) {
                swap_adjacent(&mut t, &mut q, k);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    Ok((q, t, count))
}

fn closed_loop_margin(p: &CareProblem, gain: &DMatrix<f64>) -> f64 {
    let acl = &p.a + &p.b * gain;
    matkit::spectrum(&acl)
        .map(|s| s.max_real())
        .unwrap_or(f64::INFINITY)
}

/// Stabilizing solution of the CARE.
///
/// Stabilizability and detectability are not checked up front; if they fail
/// the stable invariant subspace has the wrong dimension or a singular basis
/// and the corresponding error is returned.
pub fn solve_care(p: &CareProblem, tol: f64) -> Result<CareSolution, RiccatiError> {
    let n = p.n();
    if n == 0 {
        return Ok(CareSolution {
            x: DMatrix::zeros(0, 0),
            gain: DMatrix::zeros(p.b.ncols(), 0),
            residual_norm: 0.0,
            relative_residual: 0.0,
            closed_loop_margin: f64::NEG_INFINITY,
        });
    }
    let s = p.s();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&p.a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&p.q));
    h.view_mut((n, n), (n, n)).copy_from(&(-p.a.transpose()));

    // Eigenvalues on the imaginary axis mean no stabilizing solution exists.
    let axis_band = 1e-10 * h.norm().max(1.0);
    let (q, t, stable) = ordered_schur(&h, |l| l.re < -axis_band)?;
    if stable != n {
        return Err(RiccatiError::NoStableSubspace {
            found: stable,
            expected: n,
        });
    }
    let on_axis = (0..2 * n).any(|i| t[(i, i)].re.abs() <= axis_band);
    if on_axis {
        return Err(RiccatiError::NoStableSubspace {
            found: stable,
            expected: n,
        });
    }
    let u1 = q.view((0, 0), (n, n)).into_owned();
    let u2 = q.view((n, 0), (n, n)).into_owned();
    // Columns of [U1; U2] are orthonormal, so σ_min(U1) is an absolute measure.
    if matkit::complex_singular_range(&u1).0 < 1e-10 {
        return Err(RiccatiError::SingularBasis);
    }
    // X = U2 U1⁻¹  ⇔  U1ᵀ Xᵀ = U2ᵀ
    let lu = u1.transpose().lu();
    let xt = lu.solve(&u2.transpose()).ok_or(RiccatiError::SingularBasis)?;
    let xc = xt.transpose();
    if xc.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(RiccatiError::SingularBasis);
    }
    let mut x = xc.map(|v| v.re);
    x = (&x + x.transpose()) * 0.5;

    let mut rel = p.relative_residual(&x);
    for _ in 0..MAX_NEWTON_PASSES {
        let acl = &p.a - &s * &x;
        let rhs = &p.q + &x * &s * &x;
        let Ok(next) = solve_lyapunov(&acl, &rhs) else {
            break;
        };
        let next_rel = p.relative_residual(&next);
        if !(next_rel <= rel) {
            break;
        }
        x = next;
        rel = next_rel;
        if rel <= 1e-3 * tol {
            break;
        }
    }

    if rel > tol {
        return Err(RiccatiError::ResidualTooLarge { relative: rel, tol });
    }
    let gain = p.gain(&x);
    let margin = closed_loop_margin(p, &gain);
    if margin >= 0.0 {
        return Err(RiccatiError::NotStabilizing { margin });
    }
    Ok(CareSolution {
        residual_norm: p.residual(&x).norm(),
        relative_residual: rel,
        x,
        gain,
        closed_loop_margin: margin,
    })
}

/// `tr(Dᵀ X D)` for the stabilizing `X`.
pub fn oracle_cost(p: &CareProblem, d: &DMatrix<f64>, tol: f64) -> Result<f64, RiccatiError> {
    if d.nrows() != p.n() {
        return Err(RiccatiError::InvalidProblem(
            "D must have as many rows as A".into(),
        ));
    }
    let sol = solve_care(p, tol)?;
    Ok((d.transpose() * &sol.x * d).trace())
}

/// Blocks of `X̄ = [[X₁, X₂], [X₂ᵀ, X₃]]` for a block upper-triangular model.
#[derive(Debug, Clone)]
pub struct BlockCareSolution {
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub x3: DMatrix<f64>,
}

impl BlockCareSolution {
    pub fn assemble(&self) -> DMatrix<f64> {
        let n1 = self.x1.nrows();
        let n2 = self.x3.nrows();
        let mut x = DMatrix::zeros(n1 + n2, n1 + n2);
        x.view_mut((0, 0), (n1, n1)).copy_from(&self.x1);
        x.view_mut((0, n1), (n1, n2)).copy_from(&self.x2);
        x.view_mut((n1, 0), (n2, n1)).copy_from(&self.x2.transpose());
        x.view_mut((n1, n1), (n2, n2)).copy_from(&self.x3);
        x
    }

    /// `tr(D₁ᵀ X₁ D₁)` where `D₁` is the top block of `d_bar`.
    pub fn cost(&self, d_bar: &DMatrix<f64>) -> f64 {
        let n1 = self.x1.nrows();
        let d1 = d_bar.rows(0, n1);
        (d1.transpose() * &self.x1 * d1).trace()
    }
}

/// Solves the CARE of `(Ā, B̄, Q̄, R)` block by block, where
/// `Ā = [[A₁, A₂], [0, A₃]]`, `B̄ = [[B₁], [0]]` and `A₃` is Hurwitz:
///
/// * `A₁ᵀX₁ + X₁A₁ + Q₁ − X₁S₁X₁ = 0` (Riccati),
/// * `(A₁ − S₁X₁)ᵀX₂ + X₂A₃ + Q₂ + X₁A₂ = 0` (Sylvester),
/// * `A₃ᵀX₃ + X₃A₃ + X₂ᵀA₂ + A₂ᵀX₂ + Q₃ − X₂ᵀS₁X₂ = 0` (Lyapunov),
///
/// with `S₁ = B₁R⁻¹B₁ᵀ`.
pub fn solve_block_care(
    a_bar: &DMatrix<f64>,
    b_bar: &DMatrix<f64>,
    q_bar: &DMatrix<f64>,
    r: &DMatrix<f64>,
    n1: usize,
    tol: f64,
) -> Result<BlockCareSolution, RiccatiError> {
    let full = CareProblem::new(a_bar.clone(), b_bar.clone(), q_bar.clone(), r.clone())?;
    let n = full.n();
    if n1 > n {
        return Err(RiccatiError::InvalidProblem("n1 exceeds state dimension".into()));
    }
    let n2 = n - n1;
    let m = b_bar.ncols();
    let scale = a_bar.norm().max(b_bar.norm()).max(1.0);
    if a_bar.view((n1, 0), (n2, n1)).norm() > 1e-8 * scale
        || b_bar.view((n1, 0), (n2, m)).norm() > 1e-8 * scale
    {
        return Err(RiccatiError::InvalidProblem(
            "model is not block upper-triangular at the given split".into(),
        ));
    }
    let a1 = a_bar.view((0, 0), (n1, n1)).into_owned();
    let a2 = a_bar.view((0, n1), (n1, n2)).into_owned();
    let a3 = a_bar.view((n1, n1), (n2, n2)).into_owned();
    let b1 = b_bar.view((0, 0), (n1, m)).into_owned();
    let q1 = q_bar.view((0, 0), (n1, n1)).into_owned();
    let q2 = q_bar.view((0, n1), (n1, n2)).into_owned();
    let q3 = q_bar.view((n1, n1), (n2, n2)).into_owned();

    if n2 > 0 && !matkit::is_hurwitz(&a3, 0.0) {
        return Err(RiccatiError::NotStabilizing {
            margin: matkit::spectrum(&a3).map(|s| s.max_real()).unwrap_or(f64::NAN),
        });
    }

    let top = CareProblem::new(a1.clone(), b1, q1, r.clone())?;
    let x1 = solve_care(&top, tol)?.x;
    let s1 = top.s();

    let acl1 = &a1 - &s1 * &x1;
    let x2 = solve_sylvester(&acl1.transpose(), &a3, &(-(&q2 + &x1 * &a2)))?;
    let c3 = x2.transpose() * &a2 + a2.transpose() * &x2 + &q3 - x2.transpose() * &s1 * &x2;
    let x3 = solve_lyapunov(&a3, &c3)?;
    Ok(BlockCareSolution { x1, x2, x3 })
}
