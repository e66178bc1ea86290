//! Run configuration: plant, weights, horizon, seeds and tuning constants.
//!
//! Matrices are row-major flat arrays with their dimensions given by
//! `n`, `m`, `p`. The on-disk format is JSON with these exact key names.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::DEFAULT_EXCITATION_EXPONENT;
use crate::matkit::{self, DEFAULT_RANK_TOL};
use crate::regularize::DEFAULT_GAMMA_REG;
use crate::riccati::DEFAULT_CARE_TOL;
use crate::stabcheck::{self, DEFAULT_PBH_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("(A, B) is not stabilizable: PBH rank test fails at eigenvalue {}", show_eigenvalue(.0))]
    NotStabilizable(Complex64),
    #[error("(A, Q^(1/2)) is not detectable: PBH rank test fails at eigenvalue {}", show_eigenvalue(.0))]
    NotDetectable(Complex64),
}

fn show_eigenvalue(l: &Complex64) -> String {
    if l.im == 0.0 {
        format!("{}", l.re)
    } else {
        format!("{}{:+}i", l.re, l.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Adaptive,
    Oracle,
}

fn default_h() -> f64 {
    1e-3
}
fn default_gamma_reg() -> f64 {
    DEFAULT_GAMMA_REG
}
fn default_exponent() -> f64 {
    DEFAULT_EXCITATION_EXPONENT
}
fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}
fn default_care_tol() -> f64 {
    DEFAULT_CARE_TOL
}
fn default_out_dir() -> String {
    "out".to_string()
}
fn default_blowup_cap() -> f64 {
    1e8
}
fn default_seed_w() -> u64 {
    1
}
fn default_seed_v() -> u64 {
    2
}
fn default_seed_eta() -> u64 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_seed_w")]
    pub seed_w: u64,
    #[serde(default = "default_seed_v")]
    pub seed_v: u64,
    #[serde(default = "default_seed_eta")]
    pub seed_eta: u64,
    #[serde(default = "default_gamma_reg")]
    pub gamma_reg: f64,
    #[serde(default = "default_exponent")]
    pub excitation_exponent: f64,
    #[serde(rename = "theta0_A", default)]
    pub theta0_a: Option<Vec<f64>>,
    #[serde(rename = "theta0_B", default)]
    pub theta0_b: Option<Vec<f64>>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "default_care_tol")]
    pub care_tol: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Log every `decimation` micro-steps; `None` means `⌈1/(100h)⌉`.
    #[serde(default)]
    pub decimation: Option<usize>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_blowup_cap")]
    pub blowup_cap: f64,
    /// Also record the cumulative noise paths `w(t)`, `v(t)`.
    #[serde(default)]
    pub noise_probe: bool,
    /// Integer times at which `∫φφᵀ` is snapshotted.
    #[serde(default)]
    pub gram_snapshots: Vec<usize>,
}

/// Ground-truth plant and cost weights.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x0: DVector<f64>,
}

impl SystemModel {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.d.ncols()
    }

    /// Checks `(A, B)` stabilizable and `(A, Q^{1/2})` detectable.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(l) = stabcheck::pbh_failure(&self.a, &self.b, DEFAULT_PBH_TOL) {
            return Err(ConfigError::NotStabilizable(l));
        }
        let qh = self.q_sqrt()?;
        if let Some(l) = stabcheck::pbh_failure(&self.a.transpose(), &qh, DEFAULT_PBH_TOL) {
            return Err(ConfigError::NotDetectable(l));
        }
        Ok(())
    }

    pub fn q_sqrt(&self) -> Result<DMatrix<f64>, ConfigError> {
        matkit::sym_sqrt(&self.q).map_err(|e| ConfigError::Invalid(format!("Q: {e}")))
    }
}

fn matrix(name: &str, data: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>, ConfigError> {
    if data.len() != rows * cols {
        return Err(ConfigError::Invalid(format!(
            "{name} has {} entries, expected {rows}x{cols}",
            data.len()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(ConfigError::Invalid(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl RunConfig {
    /// Configuration with all optional fields at their defaults.
    pub fn new(n: usize, m: usize, p: usize, horizon: f64) -> Self {
        Self {
            n,
            m,
            p,
            a: vec![0.0; n * n],
            b: vec![0.0; n * m],
            d: vec![0.0; n * p],
            q: DMatrix::<f64>::identity(n, n).transpose().as_slice().to_vec(),
            r: DMatrix::<f64>::identity(m, m).as_slice().to_vec(),
            x0: None,
            horizon,
            h: default_h(),
            seed_w: default_seed_w(),
            seed_v: default_seed_v(),
            seed_eta: default_seed_eta(),
            gamma_reg: default_gamma_reg(),
            excitation_exponent: default_exponent(),
            theta0_a: None,
            theta0_b: None,
            rank_tol: default_rank_tol(),
            care_tol: default_care_tol(),
            out_dir: default_out_dir(),
            decimation: None,
            mode: Mode::Adaptive,
            blowup_cap: default_blowup_cap(),
            noise_probe: false,
            gram_snapshots: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Micro-steps per unit time interval.
    pub fn steps_per_unit(&self) -> usize {
        (1.0 / self.h).round() as usize
    }

    pub fn total_steps(&self) -> usize {
        (self.horizon.round() as usize) * self.steps_per_unit()
    }

    pub fn decimation_steps(&self) -> usize {
        self.decimation
            .unwrap_or_else(|| (1.0 / (100.0 * self.h)).ceil().max(1.0) as usize)
            .max(1)
    }

    /// Structural checks that do not need the plant to be well posed.
    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be positive".into());
        }
        if !(self.horizon >= 1.0) || (self.horizon - self.horizon.round()).abs() > 1e-9 {
            return bad(format!("T must be an integer >= 1, got {}", self.horizon));
        }
        if !(self.h > 0.0 && self.h <= 0.1) {
            return bad(format!("h must lie in (0, 0.1], got {}", self.h));
        }
        if (self.steps_per_unit() as f64 * self.h - 1.0).abs() > 1e-9 {
            return bad(format!("1/h must be an integer, got h = {}", self.h));
        }
        if !(self.gamma_reg > 1.0 && self.gamma_reg < std::f64::consts::SQRT_2) {
            return bad(format!("gamma_reg must lie in (1, sqrt 2), got {}", self.gamma_reg));
        }
        if !(self.excitation_exponent > 0.0) {
            return bad("excitation_exponent must be positive".into());
        }
        if !(self.rank_tol > 0.0 && self.care_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(self.blowup_cap > 0.0) {
            return bad("blowup_cap must be positive".into());
        }
        if self.decimation == Some(0) {
            return bad("decimation must be positive".into());
        }
        Ok(())
    }

    /// Builds and validates the plant, including Assumption-1 style PBH checks.
    pub fn model(&self) -> Result<SystemModel, ConfigError> {
        self.check()?;
        let (n, m, p) = (self.n, self.m, self.p);
        let x0 = match &self.x0 {
            Some(v) if v.len() != n => {
                return Err(ConfigError::Invalid(format!("x0 has {} entries, expected {n}", v.len())))
            }
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(n),
        };
        let model = SystemModel {
            a: matrix("A", &self.a, n, n)?,
            b: matrix("B", &self.b, n, m)?,
            d: matrix("D", &self.d, n, p)?,
            q: matrix("Q", &self.q, n, n)?,
            r: matrix("R", &self.r, m, m)?,
            x0,
        };
        if (&model.q - model.q.transpose()).norm() > 1e-10 * model.q.norm().max(1.0) {
            return Err(ConfigError::Invalid("Q must be symmetric".into()));
        }
        if model.r.clone().cholesky().is_none()
            || (&model.r - model.r.transpose()).norm() > 1e-10 * model.r.norm().max(1.0)
        {
            return Err(ConfigError::Invalid("R must be symmetric positive definite".into()));
        }
        model.validate()?;
        Ok(model)
    }

    /// `θ(0)` with `θᵀ(0) = [A(0), B(0)]`; defaults to `A(0) = −I`,
    /// `B(0)` = identity padded with zeros.
    pub fn theta0(&self) -> Result<DMatrix<f64>, ConfigError> {
        let (n, m) = (self.n, self.m);
        let a0 = match &self.theta0_a {
            Some(v) => matrix("theta0_A", v, n, n)?,
            None => -DMatrix::<f64>::identity(n, n),
        };
        let b0 = match &self.theta0_b {
            Some(v) => matrix("theta0_B", v, n, m)?,
            None => DMatrix::<f64>::identity(n, m),
        };
        Ok(stabcheck::pack_theta(&a0, &b0))
    }
}
