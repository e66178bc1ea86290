//! Adaptive linear-quadratic-Gaussian control for
//! `dx = (Ax + Bu)dt + D dw` with unknown `(A, B)`.
//!
//! The pipeline: a continuous-time weighted least-squares estimator
//! ([`wls`]), random regularization that keeps the estimated models
//! uniformly stabilizable and detectable ([`regularize`], certified through
//! [`stabcheck`]), certainty-equivalence Riccati feedback with diminishing
//! excitation ([`controller`], [`riccati`]), and the closed-loop simulator
//! that ties them together ([`simloop`]). [`subspace`] provides the
//! controllable-subspace split used for masked consistency.

pub mod audit;
pub mod config;
pub mod controller;
pub mod matkit;
pub mod regularize;
pub mod riccati;
pub mod simloop;
pub mod stabcheck;
pub mod subspace;
pub mod wls;

pub use config::{ConfigError, Mode, RunConfig, SystemModel};
pub use simloop::{run_oracle, simulate, stability_statistic, RunRecord, RunSummary};
