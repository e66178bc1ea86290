//! Certainty-equivalence feedback with diminishing excitation.
//!
//! On `(k, k+1]` the control is `u(t) = L(k) x(t) + γ_k (v(t) − v(k))` with
//! `L(k) = −R⁻¹ B̂ᵀ X(k)`, `X(k)` the stabilizing CARE solution of the
//! regularized model, and `γ_k = k^{−exponent}` (`γ₀ = 0`).

use nalgebra::{DMatrix, DVector};

use crate::riccati::{self, CareProblem, RiccatiError};
use crate::stabcheck::unpack_theta;

pub const DEFAULT_EXCITATION_EXPONENT: f64 = 0.2;

/// Excitation amplitude `γ_k`.
pub fn excitation_gain(k: usize, exponent: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        (1.0 / k as f64).powf(exponent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefreshOutcome {
    Refreshed,
    /// The CARE for the interval's model failed; previous gain retained.
    Fallback(String),
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    pub gain: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub k: usize,
    pub gamma_k: f64,
    pub v_anchor: DVector<f64>,
    /// `A(k) + B(k) L(k)` of the model the gain was computed from.
    pub closed_loop: DMatrix<f64>,
    pub exponent: f64,
    pub fallback: bool,
}

impl ControllerState {
    /// Controller for the first interval `(0, 1]`, built from `θ̂(0)`.
    pub fn initial(
        theta_hat: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        exponent: f64,
        care_tol: f64,
    ) -> Result<Self, RiccatiError> {
        let n = theta_hat.ncols();
        let m = theta_hat.nrows() - n;
        let (a, b) = unpack_theta(theta_hat, n);
        let sol = riccati::solve_care(&CareProblem::new(a.clone(), b.clone(), q.clone(), r.clone())?, care_tol)?;
        let closed_loop = &a + &b * &sol.gain;
        Ok(Self {
            gain: sol.gain,
            x: sol.x,
            k: 0,
            gamma_k: 0.0,
            v_anchor: DVector::zeros(m),
            closed_loop,
            exponent,
            fallback: false,
        })
    }

    /// Fixed-gain controller without excitation.
    pub fn fixed(gain: DMatrix<f64>, x: DMatrix<f64>, closed_loop: DMatrix<f64>) -> Self {
        let m = gain.nrows();
        Self {
            gain,
            x,
            k: 0,
            gamma_k: 0.0,
            v_anchor: DVector::zeros(m),
            closed_loop,
            exponent: DEFAULT_EXCITATION_EXPONENT,
            fallback: false,
        }
    }

    /// New controller for interval `k` from the regularized estimate.
    ///
    /// A CARE failure keeps the previous `(L, X)`; `γ_k` and the excitation
    /// anchor still advance.
    pub fn refresh(
        &self,
        theta_hat: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        k: usize,
        v_anchor: &DVector<f64>,
        care_tol: f64,
    ) -> (Self, RefreshOutcome) {
        let n = theta_hat.ncols();
        let (a, b) = unpack_theta(theta_hat, n);
        let solved = CareProblem::new(a.clone(), b.clone(), q.clone(), r.clone())
            .and_then(|p| riccati::solve_care(&p, care_tol));
        match solved {
            Ok(sol) => {
                let closed_loop = &a + &b * &sol.gain;
                let next = Self {
                    gain: sol.gain,
                    x: sol.x,
                    k,
                    gamma_k: excitation_gain(k, self.exponent),
                    v_anchor: v_anchor.clone(),
                    closed_loop,
                    exponent: self.exponent,
                    fallback: false,
                };
                (next, RefreshOutcome::Refreshed)
            }
            Err(e) => (self.hold(k, v_anchor), RefreshOutcome::Fallback(e.to_string())),
        }
    }

    /// Keeps `(L, X)` and advances the interval bookkeeping.
    pub fn hold(&self, k: usize, v_anchor: &DVector<f64>) -> Self {
        Self {
            k,
            gamma_k: excitation_gain(k, self.exponent),
            v_anchor: v_anchor.clone(),
            fallback: true,
            ..self.clone()
        }
    }

    /// `u = L x + γ_k (v − v(k))`.
    pub fn control(&self, x: &DVector<f64>, v_now: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.gain.nrows());
        self.control_into(x, v_now, &mut u);
        u
    }

    /// Allocation-free variant of [`control`](Self::control).
    pub fn control_into(&self, x: &DVector<f64>, v_now: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.gain, x, 0.0);
        if self.gamma_k != 0.0 {
            out.axpy(self.gamma_k, v_now, 1.0);
            out.axpy(-self.gamma_k, &self.v_anchor, 1.0);
        }
    }
}
