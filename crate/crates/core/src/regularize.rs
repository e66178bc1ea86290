//! Random regularization of the WLS estimate.
//!
//! At every integer time `k` a candidate `η_k` is drawn uniformly from the
//! Frobenius unit ball of `R^{(n+m)×n}` and compared against the incumbent
//! perturbation `β(k−1)` through `f_k(β) = Y(Ā, B̄)·Y(Āᵀ, Q^{1/2})`, where
//! `[Ā, B̄]ᵀ = θ(k) − P^{1/2}(k) β`. The candidate replaces the incumbent
//! when `f_k(η_k) ≥ γ f_k(β(k−1))`. The regularized estimate
//! `θ̄(k) = θ(k) − P^{1/2}(k) β(k)` is then held on `(k, k+1]`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::matkit::{self, MatError};
use crate::stabcheck::{self, CertificateValue};

pub const DEFAULT_GAMMA_REG: f64 = 1.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularizeError {
    #[error("regularization constant {0} outside (1, sqrt 2)")]
    BadGamma(f64),
    #[error("covariance square root failed: {0}")]
    Sqrt(#[from] MatError),
    #[error("interval index must be at least 1")]
    BadIndex,
}

/// Uniform draw from the Frobenius unit ball of `(n+m) × n` matrices.
pub fn sample_eta<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> DMatrix<f64> {
    let rows = n + m;
    let d = rows * n;
    if d == 0 {
        return DMatrix::zeros(rows, n);
    }
    let mut eta = DMatrix::from_fn(rows, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = eta.norm();
    let u: f64 = rng.random();
    let radius = u.powf(1.0 / d as f64);
    if norm > 0.0 {
        eta *= radius / norm;
    }
    eta
}

/// Result of one regularization update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizeOutcome {
    pub k: usize,
    pub log_f_candidate: f64,
    pub log_f_incumbent: f64,
    /// `log f_k(β(k))` after the decision.
    pub log_f: f64,
    pub switched: bool,
    /// Both candidates gave `f = 0`; the estimate is unusable on this interval.
    pub degenerate: bool,
}

/// Switch rule in the log domain: any finite value beats `-inf`, `-inf`
/// never beats anything.
pub fn accepts(log_f_candidate: f64, log_f_incumbent: f64, gamma_reg: f64) -> bool {
    if !log_f_candidate.is_finite() {
        return false;
    }
    if !log_f_incumbent.is_finite() {
        return true;
    }
    log_f_candidate >= gamma_reg.ln() + log_f_incumbent
}

/// Index `k` of the unit interval `(k, k+1]` that contains `t > 0`.
pub fn interval_index(t: f64) -> usize {
    (t.ceil() as usize).saturating_sub(1)
}

#[derive(Debug, Clone)]
pub struct RegularizerState {
    pub beta: DMatrix<f64>,
    pub log_f_current: f64,
    pub gamma_reg: f64,
    pub theta_hat: DMatrix<f64>,
    pub k: usize,
    pub switches: usize,
    pub degenerate_intervals: usize,
    rng: ChaCha8Rng,
    history: Vec<DMatrix<f64>>,
}

impl RegularizerState {
    /// `β(0) = 0`, so `θ̄(0) = θ(0)`.
    pub fn new(theta0: &DMatrix<f64>, gamma_reg: f64, seed_eta: u64) -> Result<Self, RegularizeError> {
        if !(gamma_reg > 1.0 && gamma_reg < std::f64::consts::SQRT_2) {
            return Err(RegularizeError::BadGamma(gamma_reg));
        }
        Ok(Self {
            beta: DMatrix::zeros(theta0.nrows(), theta0.ncols()),
            log_f_current: f64::NEG_INFINITY,
            gamma_reg,
            theta_hat: theta0.clone(),
            k: 0,
            switches: 0,
            degenerate_intervals: 0,
            rng: ChaCha8Rng::seed_from_u64(seed_eta),
            history: vec![theta0.clone()],
        })
    }

    fn n(&self) -> usize {
        self.beta.ncols()
    }

    fn m(&self) -> usize {
        self.beta.nrows() - self.n()
    }

    /// Runs the accept/reject recursion at integer time `k ≥ 1`.
    pub fn regularize_step(
        &mut self,
        theta_k: &DMatrix<f64>,
        p_k: &DMatrix<f64>,
        qh: &DMatrix<f64>,
        k: usize,
    ) -> Result<RegularizeOutcome, RegularizeError> {
        if k == 0 {
            return Err(RegularizeError::BadIndex);
        }
        let p_sqrt = matkit::sym_sqrt(p_k)?;
        let (n, m) = (self.n(), self.m());
        let eta = sample_eta(&mut self.rng, n, m);
        let evaluate = |beta: &DMatrix<f64>| -> CertificateValue {
            let candidate = theta_k - &p_sqrt * beta;
            stabcheck::f_objective(&candidate, qh)
        };
        let log_f_candidate = evaluate(&eta).log_value;
        let log_f_incumbent = evaluate(&self.beta).log_value;
        let switched = accepts(log_f_candidate, log_f_incumbent, self.gamma_reg);
        if switched {
            self.beta = eta;
            self.switches += 1;
        }
        let log_f = if switched { log_f_candidate } else { log_f_incumbent };
        let degenerate = !log_f.is_finite();
        if degenerate {
            self.degenerate_intervals += 1;
        }
        self.log_f_current = log_f;
        self.theta_hat = theta_k - &p_sqrt * &self.beta;
        self.k = k;
        self.history.truncate(k);
        self.history.push(self.theta_hat.clone());
        Ok(RegularizeOutcome {
            k,
            log_f_candidate,
            log_f_incumbent,
            log_f,
            switched,
            degenerate,
        })
    }

    /// Piecewise-constant estimate `θ̂(t) = θ̄(k)` for `t ∈ (k, k+1]`.
    ///
    /// `None` when `θ̄(k)` has not been computed yet.
    pub fn hold(&self, t: f64) -> Option<&DMatrix<f64>> {
        if !(t > 0.0) {
            return None;
        }
        self.history.get(interval_index(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn eta_in_unit_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            assert!(sample_eta(&mut rng, 2, 1).norm() <= 1.0);
        }
    }

    #[test]
    fn switch_rule_cases() {
        let ninf = f64::NEG_INFINITY;
        assert!(!accepts(ninf, 0.0, 1.2));
        assert!(accepts(-3.0, ninf, 1.2));
        assert!(!accepts(ninf, ninf, 1.2));
        assert!(accepts(2.0 + 1.5f64.ln(), 2.0, 1.2));
        assert!(!accepts(2.0 + 1.1f64.ln(), 2.0, 1.2));
    }

    #[test]
    fn interval_convention() {
        assert_eq!(interval_index(1.5), 1);
        assert_eq!(interval_index(2.0), 1);
        assert_eq!(interval_index(2.0 + 1e-9), 2);
        assert_eq!(interval_index(0.3), 0);
    }

    #[test]
    fn gamma_range_enforced() {
        let theta = dmatrix![-1.0; 1.0];
        assert!(RegularizerState::new(&theta, 1.0, 0).is_err());
        assert!(RegularizerState::new(&theta, 1.5, 0).is_err());
        assert!(RegularizerState::new(&theta, 1.2, 0).is_ok());
    }

    #[test]
    fn hold_returns_interval_estimates() {
        let theta0 = dmatrix![-1.0; 1.0];
        let mut s = RegularizerState::new(&theta0, 1.2, 3).unwrap();
        let p = DMatrix::identity(2, 2) * 0.01;
        let qh = dmatrix![1.0];
        s.regularize_step(&dmatrix![0.5; 1.0], &p, &qh, 1).unwrap();
        let first = s.theta_hat.clone();
        s.regularize_step(&dmatrix![0.4; 1.1], &p, &qh, 2).unwrap();
        let second = s.theta_hat.clone();
        assert_eq!(s.hold(0.5), Some(&theta0));
        assert_eq!(s.hold(1.5), Some(&first));
        assert_eq!(s.hold(2.0), Some(&first));
        assert_eq!(s.hold(2.0 + 1e-9), Some(&second));
        assert_eq!(s.hold(3.5), None);
    }

    #[test]
    fn zero_incumbent_is_replaced_and_beta_stays_in_ball() {
        // θ encodes A = 1, B = 0: f(β=0) = 0, so the first finite candidate wins.
        let theta = dmatrix![1.0; 0.0];
        let mut s = RegularizerState::new(&theta, 1.2, 11).unwrap();
        let out = s
            .regularize_step(&theta, &DMatrix::identity(2, 2), &dmatrix![1.0], 1)
            .unwrap();
        assert_eq!(out.log_f_incumbent, f64::NEG_INFINITY);
        assert!(out.switched);
        assert!(s.beta.norm() <= 1.0);
    }
}
