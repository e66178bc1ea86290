//! Determinant-based stabilizability certificate.
//!
//! For `s = s₁ + s₂ j` the real pencil
//!
//! ```text
//! Z(s, A, B) = [ s₁I − A    s₂I   | B  0 ]
//!              [  −s₂I    s₁I − A | 0  B ]
//! ```
//!
//! is the real form of `[sI − A, B]`. The product
//! `Y(A, B) = ∏_{σ⁺(A)} det(Z(s)Zᵀ(s)) · ∏_{σ⁻(A)} det(Z(−s)Zᵀ(−s))`
//! is positive exactly when `(A, B)` is stabilizable. Everything is carried
//! in the log domain because the Gram determinants overflow quickly.
//! A PBH rank test is provided as an independent cross-check.

use nalgebra::{Complex, DMatrix};
use num_complex::Complex64;

use crate::matkit::{self, complex_singular_range, DEFAULT_BOUNDARY_TOL};

/// A normalized Gram log-determinant below this counts as exactly zero.
pub const ZERO_LOG_THRESHOLD: f64 = -60.0;
/// Default relative tolerance of the PBH rank test.
pub const DEFAULT_PBH_TOL: f64 = 1e-8;

/// `log Y` (or `log f`), `-inf` when the certificate vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateValue {
    pub log_value: f64,
    pub factor_count: usize,
}

impl CertificateValue {
    pub fn is_positive(&self) -> bool {
        self.log_value.is_finite()
    }

    fn zero(factor_count: usize) -> Self {
        Self {
            log_value: f64::NEG_INFINITY,
            factor_count,
        }
    }
}

/// The real `2n × (2n+2m)` pencil `Z(s, A, B)`.
pub fn z_pencil(s: Complex64, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let (s1, s2) = (s.re, s.im);
    let mut z = DMatrix::zeros(2 * n, 2 * n + 2 * m);
    let shifted = DMatrix::from_diagonal_element(n, n, s1) - a;
    let rot = DMatrix::from_diagonal_element(n, n, s2);
    z.view_mut((0, 0), (n, n)).copy_from(&shifted);
    z.view_mut((0, n), (n, n)).copy_from(&rot);
    z.view_mut((n, 0), (n, n)).copy_from(&(-&rot));
    z.view_mut((n, n), (n, n)).copy_from(&shifted);
    z.view_mut((0, 2 * n), (n, m)).copy_from(b);
    z.view_mut((n, 2 * n + m), (n, m)).copy_from(b);
    z
}

/// `log det(Z Zᵀ)`, or `None` when the row-normalized Gram determinant
/// falls below `ZERO_LOG_THRESHOLD`.
pub fn log_gram_det(z: &DMatrix<f64>) -> Option<f64> {
    let rows = z.nrows();
    if rows == 0 {
        return Some(0.0);
    }
    if z.ncols() < rows {
        return None;
    }
    let mut normalized = z.clone();
    let mut log_scale = 0.0;
    for i in 0..rows {
        let norm = z.row(i).norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        normalized.row_mut(i).scale_mut(1.0 / norm);
        log_scale += 2.0 * norm.ln();
    }
    // det(ẐẐᵀ) = ∏ σᵢ(Ẑ)²; the SVD keeps tiny singular values accurate.
    let sv = normalized.svd(false, false).singular_values;
    let mut log_det = 0.0;
    for s in sv.iter() {
        if !(*s > 0.0) {
            return None;
        }
        log_det += 2.0 * s.ln();
    }
    if log_det < ZERO_LOG_THRESHOLD {
        return None;
    }
    Some(log_det + log_scale)
}

/// `log Y(A, B)`.
pub fn y_certificate(a: &DMatrix<f64>, b: &DMatrix<f64>) -> CertificateValue {
    let Ok(spec) = matkit::spectrum(a) else {
        return CertificateValue::zero(0);
    };
    let (plus, minus) = matkit::split_half_planes(&spec, DEFAULT_BOUNDARY_TOL);
    let shifts = plus.iter().copied().chain(minus.iter().map(|s| -s));
    let mut total = 0.0;
    let mut count = 0;
    let mut vanished = false;
    for s in shifts {
        count += 1;
        match log_gram_det(&z_pencil(s, a, b)) {
            Some(v) => total += v,
            None => vanished = true,
        }
    }
    if vanished {
        CertificateValue::zero(count)
    } else {
        CertificateValue {
            log_value: total,
            factor_count: count,
        }
    }
}

/// Detectability of `(A, Qh)` as stabilizability of `(Aᵀ, Qh)`.
pub fn detect_certificate(a: &DMatrix<f64>, qh: &DMatrix<f64>) -> CertificateValue {
    y_certificate(&a.transpose(), qh)
}

/// Splits a stacked `(n+m) × n` parameter `θ` into `(A, B)` with `θᵀ = [A, B]`.
pub fn unpack_theta(theta: &DMatrix<f64>, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = theta.nrows() - n;
    let a = theta.rows(0, n).transpose();
    let b = theta.rows(n, m).transpose();
    (a, b)
}

/// Stacks `(A, B)` into `θ` with `θᵀ = [A, B]`.
pub fn pack_theta(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut theta = DMatrix::zeros(n + m, n);
    theta.rows_mut(0, n).copy_from(&a.transpose());
    theta.rows_mut(n, m).copy_from(&b.transpose());
    theta
}

/// `log f = log Y(Ā, B̄) + log Y(Āᵀ, Qh)` for a candidate `θ`.
pub fn f_objective(theta_candidate: &DMatrix<f64>, qh: &DMatrix<f64>) -> CertificateValue {
    let n = theta_candidate.ncols();
    assert_eq!(qh.shape(), (n, n), "Q^(1/2) must be n x n");
    assert!(theta_candidate.nrows() >= n, "candidate must be (n+m) x n");
    let (a, b) = unpack_theta(theta_candidate, n);
    let y_ctrl = y_certificate(&a, &b);
    let y_obs = detect_certificate(&a, qh);
    let factor_count = y_ctrl.factor_count + y_obs.factor_count;
    if y_ctrl.is_positive() && y_obs.is_positive() {
        CertificateValue {
            log_value: y_ctrl.log_value + y_obs.log_value,
            factor_count,
        }
    } else {
        CertificateValue::zero(factor_count)
    }
}

/// First eigenvalue in `σ⁺(A)` at which `[λI − A, B]` loses row rank.
pub fn pbh_failure(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Option<Complex64> {
    let n = a.nrows();
    let m = b.ncols();
    let spec = match matkit::spectrum(a) {
        Ok(s) => s,
        Err(_) => return Some(Complex64::new(f64::NAN, f64::NAN)),
    };
    let (plus, _) = matkit::split_half_planes(&spec, DEFAULT_BOUNDARY_TOL);
    for lambda in plus {
        let mut pencil = DMatrix::<Complex<f64>>::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                let diag = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
                pencil[(i, j)] = diag - Complex::new(a[(i, j)], 0.0);
            }
            for j in 0..m {
                pencil[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let (smin, smax) = complex_singular_range(&pencil);
        if smin <= tol * smax.max(f64::MIN_POSITIVE) {
            return Some(lambda);
        }
    }
    None
}

/// PBH test: `[λI − A, B]` has full row rank for every `λ ∈ σ⁺(A)`.
pub fn pbh_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    pbh_failure(a, b, tol).is_none()
}

/// PBH detectability of `(A, C)` via the dual pair `(Aᵀ, Cᵀ)`.
pub fn pbh_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> bool {
    pbh_stabilizable(&a.transpose(), &c.transpose(), tol)
}
