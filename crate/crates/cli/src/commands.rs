//! The `run`, `oracle` and `audit` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use alqg_core::audit::{self, AuditReport};
use alqg_core::matkit;
use alqg_core::riccati::{self, CareProblem};
use alqg_core::subspace;
use alqg_core::{simulate, ConfigError, RunConfig, RunSummary};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::args::RunArgs;
use crate::artifacts;

pub const OUT_ENV: &str = "ALQG_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write artifacts to {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Config = 1,
    Aborted = 2,
}

impl CliError {
    pub fn exit(&self) -> Exit {
        Exit::Config
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(RunConfig::from_json(&text)?)
}

/// Seeds of replicate `s` in a batch: three disjoint streams per replicate,
/// disjoint across replicates.
pub fn replicate_seeds(s: u64) -> (u64, u64, u64) {
    (3 * s, 3 * s + 1, 3 * s + 2)
}

/// Applies command-line and environment overrides. `--out` beats
/// `ALQG_OUT`, which beats the config file.
pub fn apply_overrides(mut cfg: RunConfig, args: &RunArgs, env_out: Option<&str>) -> RunConfig {
    if let Some(s) = args.seed_w {
        cfg.seed_w = s;
    }
    if let Some(s) = args.seed_v {
        cfg.seed_v = s;
    }
    if let Some(s) = args.seed_eta {
        cfg.seed_eta = s;
    }
    if let Some(t) = args.horizon {
        cfg.horizon = t;
    }
    if let Some(h) = args.step {
        cfg.h = h;
    }
    if args.noise_probe {
        cfg.noise_probe = true;
    }
    if let Some(dir) = env_out.filter(|d| !d.is_empty()) {
        cfg.out_dir = dir.to_string();
    }
    if let Some(dir) = &args.out {
        cfg.out_dir = dir.to_string_lossy().into_owned();
    }
    cfg
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub aborted: bool,
}

/// Simulates one configuration and writes its artifacts into `dir`.
/// Aborted runs still write whatever was recorded.
pub fn run_one(cfg: &RunConfig, dir: &Path) -> Result<RunReport, CliError> {
    let model = cfg.model()?;
    let rec = simulate(&model, cfg).map_err(|e| match e {
        alqg_core::simloop::SimError::Config(c) => CliError::Config(c),
        other => CliError::Numerical(other.to_string()),
    })?;
    artifacts::write_all(dir, &rec, cfg).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(RunReport {
        dir: dir.to_path_buf(),
        summary: rec.summary.clone(),
        aborted: rec.aborted(),
    })
}

/// Every configuration a `run` invocation expands to, with its output directory.
pub fn plan_runs(args: &RunArgs, env_out: Option<&str>) -> Result<Vec<(RunConfig, PathBuf)>, CliError> {
    let base = apply_overrides(load_config(&args.config)?, args, env_out);
    base.check()?;
    let root = PathBuf::from(&base.out_dir);
    match &args.seeds {
        None => Ok(vec![(base, root)]),
        Some(range) => {
            if args.seed_w.is_some() || args.seed_v.is_some() || args.seed_eta.is_some() {
                return Err(CliError::Usage("--seeds cannot be combined with explicit --seed-* flags".into()));
            }
            Ok(range
                .clone()
                .map(|s| {
                    let mut cfg = base.clone();
                    (cfg.seed_w, cfg.seed_v, cfg.seed_eta) = replicate_seeds(s);
                    let dir = root.join(format!("seed_{s}"));
                    cfg.out_dir = dir.to_string_lossy().into_owned();
                    (cfg, dir)
                })
                .collect())
        }
    }
}

/// Runs every planned configuration, in parallel when there are several.
pub fn cmd_run(args: &RunArgs, env_out: Option<&str>) -> Result<Vec<RunReport>, CliError> {
    let plan = plan_runs(args, env_out)?;
    // Validate once up front so a bad plant fails before any work starts.
    plan[0].0.model()?;
    plan.par_iter().map(|(cfg, dir)| run_one(cfg, dir)).collect()
}

pub fn run_exit(reports: &[RunReport]) -> Exit {
    if reports.iter().any(|r| r.aborted) {
        Exit::Aborted
    } else {
        Exit::Ok
    }
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `J*`, `X*`, the optimal gain and closed-loop spectrum for the true model,
/// plus the block-decomposed cross-check when the system is not fully reachable
/// from `[B, D]`.
pub fn cmd_oracle(path: &Path) -> Result<Value, CliError> {
    let cfg = load_config(path)?;
    let model = cfg.model()?;
    let problem = CareProblem::new(model.a.clone(), model.b.clone(), model.q.clone(), model.r.clone())
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let sol = riccati::solve_care(&problem, cfg.care_tol).map_err(|e| CliError::Numerical(e.to_string()))?;
    let j_star = (model.d.transpose() * &sol.x * &model.d).trace();
    let closed_loop = &model.a + &model.b * &sol.gain;
    let eigs = matkit::spectrum(&closed_loop).map_err(|e| CliError::Numerical(e.to_string()))?;

    let block = match subspace::build_decomposition(&model.a, &model.b, &model.d, cfg.rank_tol) {
        Ok(dec) => {
            let u = &dec.u;
            let a_bar = u.transpose() * &model.a * u;
            let b_bar = u.transpose() * &model.b;
            let q_bar = u.transpose() * &model.q * u;
            let d_bar = u.transpose() * &model.d;
            match riccati::solve_block_care(&a_bar, &b_bar, &q_bar, &model.r, dec.n1, cfg.care_tol) {
                Ok(bs) => {
                    let x_back = u * bs.assemble() * u.transpose();
                    json!({
                        "n1": dec.n1,
                        "J_star": bs.cost(&d_bar),
                        "max_abs_diff_X": (&x_back - &sol.x).amax(),
                    })
                }
                Err(e) => json!({ "n1": dec.n1, "error": e.to_string() }),
            }
        }
        Err(e) => json!({ "error": e.to_string() }),
    };

    Ok(json!({
        "J_star": j_star,
        "X": matrix_rows(&sol.x),
        "gain": matrix_rows(&sol.gain),
        "closed_loop_eigenvalues": eigs.eigenvalues.iter().map(|l| [l.re, l.im]).collect::<Vec<_>>(),
        "residual_norm": sol.residual_norm,
        "relative_residual": sol.relative_residual,
        "block": block,
    }))
}

pub fn cmd_audit(samples: usize, seed: u64) -> AuditReport {
    audit::run_audit(samples, seed)
}

pub fn audit_exit(report: &AuditReport) -> Exit {
    if report.disagreements() == 0 {
        Exit::Ok
    } else {
        Exit::Config
    }
}
