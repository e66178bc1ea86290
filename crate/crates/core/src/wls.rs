//! Continuous-time weighted least squares, stepped on the simulation grid.
//!
//! Per micro-step of length `h` with regressor `φ = [x; u]` and realized
//! increment `dx`:
//!
//! ```text
//! r ← r + |φ|² h
//! a = 1 / log²(max(r, e))
//! P ← P − (a h) Pφφᵀ P / (1 + a h φᵀPφ)
//! θ ← θ + a P φ (dxᵀ − φᵀθ h)
//! ```
//!
//! The covariance update is the exact rank-one inverse update, so after any
//! run `P⁻¹ = I + Σ aᵢ φᵢ φᵢᵀ hᵢ` holds to rounding.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::stabcheck::{self, unpack_theta, DEFAULT_PBH_TOL};

const SYMMETRIZE_EVERY: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WlsError {
    #[error("initial estimate has shape {got:?}, expected {expected:?}")]
    Shape {
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("initial (A(0), B(0)) is not stabilizable")]
    InitialNotStabilizable,
    #[error("initial (A(0), Q^(1/2)) is not detectable")]
    InitialNotDetectable,
    #[error("non-finite estimator input")]
    NonFinite,
}

/// Estimator weight `a = 1/log²(max(r, e))`.
pub fn weight(r: f64) -> f64 {
    let l = r.max(std::f64::consts::E).ln();
    1.0 / (l * l)
}

#[derive(Debug, Clone)]
pub struct EstimatorState {
    /// `θ(t)`, `(n+m) × n`, with `θᵀ = [A, B]`.
    pub theta: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub r: f64,
    /// Most recent weight `a(t)`.
    pub a: f64,
    /// Unweighted `∫ φφᵀ dt`.
    pub gram: DMatrix<f64>,
    pub steps: u64,
    n: usize,
    p_phi: DVector<f64>,
    innovation: DVector<f64>,
}

impl EstimatorState {
    /// Fresh estimator with `P = I`, `r = ‖I‖ = 1` and zero Gram matrix.
    ///
    /// `θ(0)` must encode a stabilizable `(A(0), B(0))` with
    /// `(A(0), qh)` detectable.
    pub fn init(theta0: DMatrix<f64>, qh: &DMatrix<f64>, n: usize, m: usize) -> Result<Self, WlsError> {
        if theta0.shape() != (n + m, n) {
            return Err(WlsError::Shape {
                got: theta0.shape(),
                expected: (n + m, n),
            });
        }
        if theta0.iter().any(|v| !v.is_finite()) {
            return Err(WlsError::NonFinite);
        }
        let (a0, b0) = unpack_theta(&theta0, n);
        if !stabcheck::pbh_stabilizable(&a0, &b0, DEFAULT_PBH_TOL) {
            return Err(WlsError::InitialNotStabilizable);
        }
        if !stabcheck::pbh_detectable(&a0, qh, DEFAULT_PBH_TOL) {
            return Err(WlsError::InitialNotDetectable);
        }
        let d = n + m;
        Ok(Self {
            theta: theta0,
            p: DMatrix::identity(d, d),
            r: 1.0,
            a: weight(1.0),
            gram: DMatrix::zeros(d, d),
            steps: 0,
            n,
            p_phi: DVector::zeros(d),
            innovation: DVector::zeros(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.theta.nrows() - self.n
    }

    /// Advances the estimator by one micro-step.
    pub fn step(&mut self, phi: &DVector<f64>, dx: &DVector<f64>, h: f64) -> Result<(), WlsError> {
        if !(h > 0.0) || phi.iter().chain(dx.iter()).any(|v| !v.is_finite()) {
            return Err(WlsError::NonFinite);
        }
        let phi_sq = phi.norm_squared();
        if phi_sq == 0.0 {
            self.steps += 1;
            return Ok(());
        }
        self.r += phi_sq * h;
        let a = weight(self.r);
        self.a = a;

        self.p_phi.gemv(1.0, &self.p, phi, 0.0);
        let quad = phi.dot(&self.p_phi);
        let denom = 1.0 + a * h * quad;
        self.p.ger(-(a * h) / denom, &self.p_phi, &self.p_phi, 1.0);
        // P_new φ = P φ / denom
        self.p_phi.unscale_mut(denom);

        // innovation = dx − θᵀφ h
        self.innovation.copy_from(dx);
        self.innovation.gemv_tr(-h, &self.theta, phi, 1.0);
        self.theta.ger(a, &self.p_phi, &self.innovation, 1.0);

        self.gram.ger(h, phi, phi, 1.0);

        self.steps += 1;
        if self.steps % SYMMETRIZE_EVERY == 0 {
            let p = (&self.p + self.p.transpose()) * 0.5;
            self.p = p;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn default_theta(n: usize, m: usize) -> DMatrix<f64> {
        let a = -DMatrix::<f64>::identity(n, n);
        let b = DMatrix::<f64>::identity(n, m);
        stabcheck::pack_theta(&a, &b)
    }

    #[test]
    fn weight_values() {
        assert!((weight(std::f64::consts::E) - 1.0).abs() < 1e-15);
        let e2 = std::f64::consts::E.powi(2);
        assert!((weight(e2) - 0.25).abs() < 1e-15);
        assert_eq!(weight(1.0), 1.0);
    }

    #[test]
    fn init_accepts_default_and_rejects_uncontrollable() {
        let qh = DMatrix::identity(2, 2);
        let s = EstimatorState::init(default_theta(2, 1), &qh, 2, 1).unwrap();
        assert_eq!(s.p, DMatrix::identity(3, 3));
        assert_eq!(s.r, 1.0);
        assert_eq!(s.gram, DMatrix::zeros(3, 3));

        let bad = stabcheck::pack_theta(&dmatrix![1.0], &dmatrix![0.0]);
        assert_eq!(
            EstimatorState::init(bad, &dmatrix![1.0], 1, 1).unwrap_err(),
            WlsError::InitialNotStabilizable
        );
        let undetectable = stabcheck::pack_theta(&dmatrix![1.0], &dmatrix![1.0]);
        assert_eq!(
            EstimatorState::init(undetectable, &dmatrix![0.0], 1, 1).unwrap_err(),
            WlsError::InitialNotDetectable
        );
    }

    #[test]
    fn zero_regressor_is_a_no_op() {
        let qh = DMatrix::identity(1, 1);
        let mut s = EstimatorState::init(default_theta(1, 1), &qh, 1, 1).unwrap();
        let before = s.clone();
        s.step(&dvector![0.0, 0.0], &dvector![0.3], 1e-3).unwrap();
        assert_eq!(s.theta, before.theta);
        assert_eq!(s.p, before.p);
        assert_eq!(s.r, before.r);
        assert_eq!(s.gram, before.gram);
    }

    #[test]
    fn single_step_matches_direct_inverse() {
        let qh = DMatrix::identity(1, 1);
        let mut s = EstimatorState::init(default_theta(1, 1), &qh, 1, 1).unwrap();
        s.step(&dvector![1.0, 0.0], &dvector![0.0], 1.0).unwrap();
        // r = 2 → clamped to e → a = 1
        let a = weight(2.0);
        let direct = (DMatrix::<f64>::identity(2, 2) + dmatrix![a, 0.0; 0.0, 0.0])
            .try_inverse()
            .unwrap();
        assert!((&s.p - direct).norm() < 1e-15);
    }

    #[test]
    fn noise_free_true_parameter_is_fixed_point() {
        let theta = stabcheck::pack_theta(&dmatrix![0.5], &dmatrix![1.0]);
        let mut s = EstimatorState::init(theta.clone(), &dmatrix![1.0], 1, 1).unwrap();
        let h = 1e-3;
        let mut x = 1.0;
        for i in 0..1000 {
            let u = (i as f64 * 0.01).sin();
            let dx = (0.5 * x + u) * h;
            s.step(&dvector![x, u], &dvector![dx], h).unwrap();
            x += dx;
        }
        assert!((&s.theta - &theta).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut s = EstimatorState::init(default_theta(1, 1), &dmatrix![1.0], 1, 1).unwrap();
        assert_eq!(
            s.step(&dvector![f64::NAN, 0.0], &dvector![0.0], 1e-3),
            Err(WlsError::NonFinite)
        );
    }
}
