//! Closed-loop Euler–Maruyama integration of `dx = (Ax + Bu)dt + D dw`
//! under the adaptive law, with metric accumulation.
//!
//! Ordering within one micro-step `[t, t+h]`:
//! at integer `t = k` the regularizer and then the controller are refreshed;
//! `u` is computed from the pre-step state; `Δw`, `Δv` are drawn from their
//! own streams; the state advances; the estimator consumes `φ = [x; u]` and
//! the realized `Δx`. The estimator and controller never see `D`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Mode, RunConfig, SystemModel};
use crate::controller::{ControllerState, RefreshOutcome};
use crate::matkit::{self, spectral_norm};
use crate::regularize::{RegularizeError, RegularizerState};
use crate::riccati::{self, CareProblem, RiccatiError};
use crate::stabcheck::{self, pack_theta, unpack_theta, DEFAULT_PBH_TOL};
use crate::subspace::{self, Decomposition, SubspaceError};
use crate::wls::{EstimatorState, WlsError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("estimator: {0}")]
    Estimator(#[from] WlsError),
    #[error("regularizer: {0}")]
    Regularizer(#[from] RegularizeError),
    #[error("riccati: {0}")]
    Riccati(#[from] RiccatiError),
    #[error("subspace: {0}")]
    Subspace(#[from] SubspaceError),
}

/// One decimated row of the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub cost_integrand: f64,
    pub running_avg_cost: f64,
    pub theta_err_full: f64,
    pub theta_err_masked: f64,
    pub r: f64,
    pub a: f64,
    pub log_f: f64,
}

/// Per unit-interval diagnostics, recorded at integer time `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRecord {
    pub k: usize,
    pub log_f: f64,
    pub log_f_candidate: f64,
    pub log_f_incumbent: f64,
    pub switched: bool,
    pub degenerate: bool,
    pub fallback: bool,
    pub fallback_reason: Option<String>,
    /// Regularized `(Â(k), B̂(k))` passes the PBH stabilizability test.
    pub pbh_stabilizable: bool,
    /// `(Â(k), Q^{1/2})` passes the PBH detectability test.
    pub pbh_detectable: bool,
    pub closed_loop_hurwitz: bool,
    pub theta_err_full: f64,
    pub theta_err_masked: f64,
    /// Raw WLS error `‖θ(k) − θ‖`.
    pub wls_err: f64,
    /// `‖P^{-1/2}(k)(θ(k) − θ)‖`.
    pub normalized_wls_err: f64,
    /// Smallest Gram eigenvalue outside the weak space.
    pub strong_min_eig: f64,
    pub gamma_k: f64,
    pub gain: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSample {
    pub t: f64,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

/// `(1/T')∫₀^{T'} |x|²` and `(1/T')∫₀^{T'} cost` at dyadic `T'` and at `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: f64,
    pub avg_sq_x: f64,
    pub avg_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Aborted { t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub j_hat: f64,
    pub j_star: f64,
    pub theta_err_full: f64,
    pub theta_err_masked: f64,
    pub stability_stat: f64,
    pub beta_switches: usize,
    pub fallback_intervals: usize,
    pub degenerate_intervals: usize,
    pub max_abs_x: f64,
    pub avg_sq_x: f64,
    pub horizon: f64,
    pub n1: usize,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub mode: Mode,
    pub n: usize,
    pub m: usize,
    pub samples: Vec<Sample>,
    pub intervals: Vec<IntervalRecord>,
    pub noise: Vec<NoiseSample>,
    pub checkpoints: Vec<Checkpoint>,
    pub gram_snapshots: Vec<(usize, DMatrix<f64>)>,
    pub final_theta_hat: Option<DMatrix<f64>>,
    pub outcome: Outcome,
    pub summary: RunSummary,
    pub seeds: (u64, u64, u64),
}

impl RunRecord {
    pub fn aborted(&self) -> bool {
        matches!(self.outcome, Outcome::Aborted { .. })
    }

    pub fn interval(&self, k: usize) -> Option<&IntervalRecord> {
        self.intervals.iter().find(|r| r.k == k)
    }
}

/// `sup` over the recorded checkpoints of `(1/T')∫|x|²`; `+inf` for aborted runs.
pub fn stability_statistic(rec: &RunRecord) -> f64 {
    if rec.aborted() {
        return f64::INFINITY;
    }
    rec.checkpoints
        .iter()
        .map(|c| c.avg_sq_x)
        .fold(0.0, f64::max)
}

fn quad(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

struct Truth {
    theta: DMatrix<f64>,
    decomposition: Option<Decomposition>,
    masked_truth: Option<DMatrix<f64>>,
}

impl Truth {
    fn new(model: &SystemModel, rank_tol: f64) -> Self {
        let theta = pack_theta(&model.a, &model.b);
        let decomposition = subspace::build_decomposition(&model.a, &model.b, &model.d, rank_tol).ok();
        let masked_truth = decomposition.as_ref().map(|d| d.masked_truth(model.m()));
        Self {
            theta,
            decomposition,
            masked_truth,
        }
    }

    fn errors(&self, theta_hat: &DMatrix<f64>) -> (f64, f64) {
        let full = spectral_norm(&(theta_hat - &self.theta));
        let masked = match (&self.decomposition, &self.masked_truth) {
            (Some(dec), Some(truth)) => subspace::masked_estimate(theta_hat, dec)
                .map(|m| spectral_norm(&(m - truth)))
                .unwrap_or(f64::NAN),
            _ => f64::NAN,
        };
        (full, masked)
    }
}

/// Adaptive-loop components; absent in oracle mode.
struct Adaptive {
    estimator: EstimatorState,
    regularizer: RegularizerState,
    qh: DMatrix<f64>,
}

fn is_dyadic_or_end(k: usize, horizon: usize) -> bool {
    k == horizon || (k > 0 && k.is_power_of_two())
}

/// Runs one closed-loop simulation. Blow-ups produce a record with an
/// `Aborted` outcome rather than an error.
pub fn simulate(model: &SystemModel, cfg: &RunConfig) -> Result<RunRecord, SimError> {
    cfg.check()?;
    let n = model.n();
    let m = model.m();
    let p = model.p();
    let h = cfg.h;
    let spu = cfg.steps_per_unit();
    let total = cfg.total_steps();
    let horizon = cfg.horizon.round() as usize;
    let dec_steps = cfg.decimation_steps();
    let sqrt_h = h.sqrt();

    let truth = Truth::new(model, cfg.rank_tol);
    let n1 = truth.decomposition.as_ref().map(|d| d.n1).unwrap_or(n);
    let true_problem = CareProblem::new(model.a.clone(), model.b.clone(), model.q.clone(), model.r.clone())?;
    let true_care = riccati::solve_care(&true_problem, cfg.care_tol)?;
    let j_star = (model.d.transpose() * &true_care.x * &model.d).trace();

    let mut adaptive = None;
    let mut controller = match cfg.mode {
        Mode::Oracle => {
            let closed_loop = &model.a + &model.b * &true_care.gain;
            ControllerState::fixed(true_care.gain.clone(), true_care.x.clone(), closed_loop)
        }
        Mode::Adaptive => {
            let qh = model.q_sqrt()?;
            let theta0 = cfg.theta0()?;
            let estimator = EstimatorState::init(theta0.clone(), &qh, n, m)?;
            let regularizer = RegularizerState::new(&theta0, cfg.gamma_reg, cfg.seed_eta)?;
            let c = ControllerState::initial(&theta0, &model.q, &model.r, cfg.excitation_exponent, cfg.care_tol)?;
            adaptive = Some(Adaptive {
                estimator,
                regularizer,
                qh,
            });
            c
        }
    };

    let mut rng_w = ChaCha8Rng::seed_from_u64(cfg.seed_w);
    let mut rng_v = ChaCha8Rng::seed_from_u64(cfg.seed_v);

    let mut x = model.x0.clone();
    let mut v = DVector::<f64>::zeros(m);
    let mut w = DVector::<f64>::zeros(p);
    let mut u = DVector::<f64>::zeros(m);
    let mut dw = DVector::<f64>::zeros(p);
    let mut dv = DVector::<f64>::zeros(m);
    let mut dx = DVector::<f64>::zeros(n);
    let mut phi = DVector::<f64>::zeros(n + m);

    let (mut theta_err_full, mut theta_err_masked) = match &adaptive {
        Some(ad) => truth.errors(&ad.regularizer.theta_hat),
        None => (f64::NAN, f64::NAN),
    };
    let mut log_f = f64::NAN;

    let mut samples = Vec::with_capacity(total / dec_steps + 2);
    let mut intervals = Vec::new();
    let mut noise = Vec::new();
    let mut checkpoints = Vec::new();
    let mut gram_snapshots = Vec::new();
    let mut fallback_intervals = 0usize;

    let mut cost_integral = 0.0;
    let mut sq_integral = 0.0;
    let mut prev_cost = 0.0;
    let mut prev_sq = 0.0;
    let mut max_abs_x: f64 = 0.0;
    let mut outcome = Outcome::Completed;
    let mut t_reached = 0.0;

    for i in 0..=total {
        let t = i as f64 * h;
        if i > 0 && i % spu == 0 {
            let k = i / spu;
            if let Some(ad) = adaptive.as_mut() {
                let out = ad.regularizer.regularize_step(
                    &ad.estimator.theta,
                    &ad.estimator.p,
                    &ad.qh,
                    k,
                )?;
                let theta_hat = ad.regularizer.theta_hat.clone();
                let (next, refresh) = if out.degenerate {
                    (controller.hold(k, &v), RefreshOutcome::Fallback("degenerate regularized model".into()))
                } else {
                    controller.refresh(&theta_hat, &model.q, &model.r, k, &v, cfg.care_tol)
                };
                controller = next;
                let fallback_reason = match refresh {
                    RefreshOutcome::Refreshed => None,
                    RefreshOutcome::Fallback(reason) => {
                        fallback_intervals += 1;
                        Some(reason)
                    }
                };
                (theta_err_full, theta_err_masked) = truth.errors(&theta_hat);
                log_f = out.log_f;
                let (a_hat, b_hat) = unpack_theta(&theta_hat, n);
                let wls_diff = &ad.estimator.theta - &truth.theta;
                let normalized_wls_err = ad
                    .estimator
                    .p
                    .clone()
                    .try_inverse()
                    .and_then(|pinv| matkit::sym_sqrt(&((&pinv + pinv.transpose()) * 0.5)).ok())
                    .map(|s| spectral_norm(&(s * &wls_diff)))
                    .unwrap_or(f64::NAN);
                intervals.push(IntervalRecord {
                    k,
                    log_f: out.log_f,
                    log_f_candidate: out.log_f_candidate,
                    log_f_incumbent: out.log_f_incumbent,
                    switched: out.switched,
                    degenerate: out.degenerate,
                    fallback: fallback_reason.is_some(),
                    fallback_reason,
                    pbh_stabilizable: stabcheck::pbh_stabilizable(&a_hat, &b_hat, DEFAULT_PBH_TOL),
                    pbh_detectable: stabcheck::pbh_detectable(&a_hat, &ad.qh, DEFAULT_PBH_TOL),
                    closed_loop_hurwitz: matkit::is_hurwitz(&controller.closed_loop, 0.0),
                    theta_err_full,
                    theta_err_masked,
                    wls_err: spectral_norm(&wls_diff),
                    normalized_wls_err,
                    strong_min_eig: subspace::strong_min_eigenvalue(&ad.estimator.gram, k),
                    gamma_k: controller.gamma_k,
                    gain: controller.gain.transpose().as_slice().to_vec(),
                });
                if cfg.gram_snapshots.contains(&k) {
                    gram_snapshots.push((k, ad.estimator.gram.clone()));
                }
            }
        }

        controller.control_into(&x, &v, &mut u);
        let sq = x.norm_squared();
        let cost = quad(&model.q, &x) + quad(&model.r, &u);
        if i > 0 {
            cost_integral += 0.5 * h * (prev_cost + cost);
            sq_integral += 0.5 * h * (prev_sq + sq);
        }
        prev_cost = cost;
        prev_sq = sq;
        t_reached = t;
        max_abs_x = max_abs_x.max(x.norm());

        if i % dec_steps == 0 || i == total {
            let running_avg_cost = if i == 0 { cost } else { cost_integral / t };
            let (r, a) = match &adaptive {
                Some(ad) => (ad.estimator.r, ad.estimator.a),
                None => (f64::NAN, f64::NAN),
            };
            samples.push(Sample {
                t,
                x: x.as_slice().to_vec(),
                u: u.as_slice().to_vec(),
                cost_integrand: cost,
                running_avg_cost,
                theta_err_full,
                theta_err_masked,
                r,
                a,
                log_f,
            });
            if cfg.noise_probe {
                noise.push(NoiseSample {
                    t,
                    w: w.as_slice().to_vec(),
                    v: v.as_slice().to_vec(),
                });
            }
        }
        if i > 0 && i % spu == 0 && is_dyadic_or_end(i / spu, horizon) {
            checkpoints.push(Checkpoint {
                t,
                avg_sq_x: sq_integral / t,
                avg_cost: cost_integral / t,
            });
        }
        if i == total {
            break;
        }

        for j in 0..p {
            dw[j] = sqrt_h * rng_w.sample::<f64, _>(StandardNormal);
        }
        for j in 0..m {
            dv[j] = sqrt_h * rng_v.sample::<f64, _>(StandardNormal);
        }
        // dx = (Ax + Bu) h + D dw
        dx.gemv(h, &model.a, &x, 0.0);
        dx.gemv(h, &model.b, &u, 1.0);
        dx.gemv(1.0, &model.d, &dw, 1.0);

        if let Some(ad) = adaptive.as_mut() {
            phi.rows_mut(0, n).copy_from(&x);
            phi.rows_mut(n, m).copy_from(&u);
            if let Err(e) = ad.estimator.step(&phi, &dx, h) {
                outcome = Outcome::Aborted {
                    t,
                    reason: format!("estimator: {e}"),
                };
                break;
            }
        }
        x += &dx;
        v += &dv;
        if cfg.noise_probe {
            w += &dw;
        }
        let norm = x.norm();
        if !norm.is_finite() || norm > cfg.blowup_cap {
            outcome = Outcome::Aborted {
                t: t + h,
                reason: format!("state norm {norm:.3e} exceeded cap {:.1e}", cfg.blowup_cap),
            };
            t_reached = t + h;
            break;
        }
    }

    let elapsed = t_reached.max(f64::MIN_POSITIVE);
    let (beta_switches, degenerate_intervals, final_theta_hat) = match &adaptive {
        Some(ad) => (
            ad.regularizer.switches,
            ad.regularizer.degenerate_intervals,
            Some(ad.regularizer.theta_hat.clone()),
        ),
        None => (0, 0, None),
    };
    let mut summary = RunSummary {
        j_hat: cost_integral / elapsed,
        j_star,
        theta_err_full,
        theta_err_masked,
        stability_stat: 0.0,
        beta_switches,
        fallback_intervals,
        degenerate_intervals,
        max_abs_x,
        avg_sq_x: sq_integral / elapsed,
        horizon: cfg.horizon,
        n1,
    };
    let mut record = RunRecord {
        mode: cfg.mode,
        n,
        m,
        samples,
        intervals,
        noise,
        checkpoints,
        gram_snapshots,
        final_theta_hat,
        outcome,
        summary: summary.clone(),
        seeds: (cfg.seed_w, cfg.seed_v, cfg.seed_eta),
    };
    summary.stability_stat = stability_statistic(&record);
    record.summary = summary;
    Ok(record)
}

/// Fixed true-parameter optimal gain, no excitation, no adaptation.
pub fn run_oracle(model: &SystemModel, cfg: &RunConfig) -> Result<RunRecord, SimError> {
    let mut cfg = cfg.clone();
    cfg.mode = Mode::Oracle;
    simulate(model, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_cfg(horizon: f64) -> RunConfig {
        let mut c = RunConfig::new(1, 1, 1, horizon);
        c.a = vec![0.5];
        c.b = vec![1.0];
        c.d = vec![0.5];
        c
    }

    #[test]
    fn noiseless_origin_stays_put() {
        let mut cfg = scalar_cfg(20.0);
        cfg.d = vec![0.0];
        let model = cfg.model().unwrap();
        let rec = run_oracle(&model, &cfg).unwrap();
        assert!(rec.samples.iter().all(|s| s.x[0] == 0.0 && s.cost_integrand == 0.0));
        assert_eq!(rec.summary.j_hat, 0.0);
        assert_eq!(stability_statistic(&rec), 0.0);
    }

    #[test]
    fn oracle_transient_washes_out() {
        let mut cfg = scalar_cfg(50.0);
        cfg.d = vec![0.0];
        cfg.x0 = Some(vec![10.0]);
        let model = cfg.model().unwrap();
        let rec = run_oracle(&model, &cfg).unwrap();
        let c10 = rec.checkpoints.iter().find(|c| c.t == 8.0).unwrap().avg_cost;
        assert!(rec.summary.j_hat < c10);
        // total cost of the deterministic transient is x0ᵀ X* x0
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let total = rec.summary.j_hat * 50.0;
        assert!((total - 100.0 * golden).abs() < 0.01 * 100.0 * golden, "{total}");
    }

    #[test]
    fn blowup_is_reported() {
        let mut cfg = scalar_cfg(50.0);
        cfg.a = vec![30.0];
        cfg.x0 = Some(vec![1.0]);
        cfg.blowup_cap = 1e3;
        cfg.theta0_a = Some(vec![-1.0]);
        cfg.theta0_b = Some(vec![-1.0]);
        let model = cfg.model().unwrap();
        let rec = simulate(&model, &cfg).unwrap();
        assert!(rec.aborted());
        assert_eq!(stability_statistic(&rec), f64::INFINITY);
    }

    #[test]
    fn dyadic_checkpoints() {
        assert!(is_dyadic_or_end(1, 10));
        assert!(is_dyadic_or_end(8, 10));
        assert!(is_dyadic_or_end(10, 10));
        assert!(!is_dyadic_or_end(6, 10));
    }
}
