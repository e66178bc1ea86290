//! Serializers for run artifacts.
//!
//! Floats are written with 17 significant digits so that identical runs
//! produce byte-identical files.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use alqg_core::simloop::Outcome;
use alqg_core::{RunConfig, RunRecord};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const TRAJECTORY: &str = "trajectory.csv";
pub const SUMMARY: &str = "summary.json";
pub const EVENTS: &str = "events.csv";
pub const PLOT: &str = "plot.gp";
pub const NOISE: &str = "noise.csv";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// SHA-256 of the effective configuration, independent of where output goes.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut cfg = cfg.clone();
    cfg.out_dir.clear();
    let text = serde_json::to_string(&cfg).expect("config serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn trajectory_header(n: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..n).map(|i| format!("x_{i}")));
    cols.extend((0..m).map(|i| format!("u_{i}")));
    cols.extend(
        ["cost_integrand", "running_avg_cost", "theta_err_full", "theta_err_masked", "r", "log_f"]
            .map(String::from),
    );
    cols.join(",")
}

pub fn write_trajectory(path: &Path, rec: &RunRecord) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", trajectory_header(rec.n, rec.m))?;
    for s in &rec.samples {
        let mut fields = Vec::with_capacity(1 + rec.n + rec.m + 6);
        fields.push(num(s.t));
        fields.extend(s.x.iter().map(|v| num(*v)));
        fields.extend(s.u.iter().map(|v| num(*v)));
        for v in [s.cost_integrand, s.running_avg_cost, s.theta_err_full, s.theta_err_masked, s.r, s.log_f] {
            fields.push(num(v));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()
}

pub fn write_noise(path: &Path, rec: &RunRecord) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let p = rec.noise.first().map(|s| s.w.len()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((0..p).map(|i| format!("w_{i}")));
    header.extend((0..rec.m).map(|i| format!("v_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for s in &rec.noise {
        let fields: Vec<String> = std::iter::once(s.t).chain(s.w.iter().copied()).chain(s.v.iter().copied()).map(num).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()
}

/// One row per β switch, gain refresh and fallback, plus an abort row.
pub fn write_events(path: &Path, rec: &RunRecord) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "k,t,event,detail")?;
    for iv in &rec.intervals {
        let t = iv.k as f64;
        if iv.switched {
            writeln!(
                out,
                "{},{},beta_switch,log_f_candidate={} log_f_incumbent={}",
                iv.k,
                num(t),
                num(iv.log_f_candidate),
                num(iv.log_f_incumbent)
            )?;
        }
        if iv.fallback {
            let reason = iv.fallback_reason.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(out, "{},{},fallback,{}", iv.k, num(t), reason)?;
        } else {
            let gain: Vec<String> = iv.gain.iter().map(|g| num(*g)).collect();
            writeln!(out, "{},{},gain_refresh,{}", iv.k, num(t), gain.join(" "))?;
        }
    }
    if let Outcome::Aborted { t, reason } = &rec.outcome {
        writeln!(out, ",{},abort,{}", num(*t), reason.replace([',', '\n'], ";"))?;
    }
    out.flush()
}

pub fn summary_json(rec: &RunRecord, cfg: &RunConfig) -> Value {
    let s = &rec.summary;
    let (status, abort_reason) = match &rec.outcome {
        Outcome::Completed => ("completed", None),
        Outcome::Aborted { reason, .. } => ("aborted", Some(reason.clone())),
    };
    json!({
        "J_hat": s.j_hat,
        "J_star": s.j_star,
        "theta_err_full": s.theta_err_full,
        "theta_err_masked": s.theta_err_masked,
        "stability_stat": s.stability_stat,
        "beta_switches": s.beta_switches,
        "fallback_intervals": s.fallback_intervals,
        "seeds": { "seed_w": rec.seeds.0, "seed_v": rec.seeds.1, "seed_eta": rec.seeds.2 },
        "config_hash": config_hash(cfg),
        "mode": rec.mode,
        "status": status,
        "abort_reason": abort_reason,
        "degenerate_intervals": s.degenerate_intervals,
        "max_abs_x": s.max_abs_x,
        "avg_sq_x": s.avg_sq_x,
        "horizon": s.horizon,
        "n1": s.n1,
        "checkpoints": rec.checkpoints.iter().map(|c| json!({
            "t": c.t, "avg_sq_x": c.avg_sq_x, "avg_cost": c.avg_cost,
        })).collect::<Vec<_>>(),
    })
}

pub fn plot_script(rec: &RunRecord) -> String {
    let x_col = 2;
    let cost_col = 2 + rec.n + rec.m + 1;
    let full_col = cost_col + 1;
    let masked_col = cost_col + 2;
    format!(
        r#"# gnuplot script for {traj}
set datafile separator ","
set key autotitle columnhead
set terminal pngcairo size 1200,900
set output "trajectory.png"
set multiplot layout 3,1
set xlabel "t"
set ylabel "x_0"
plot "{traj}" using 1:{x_col} with lines
set ylabel "running average cost"
plot "{traj}" using 1:{cost_col} with lines, {j_star:.16e} title "J*" with lines dashtype 2
set logscale y
set ylabel "parameter error"
plot "{traj}" using 1:{full_col} with lines, "" using 1:{masked_col} with lines
unset multiplot
"#,
        traj = TRAJECTORY,
        j_star = rec.summary.j_star,
    )
}

/// Writes every artifact of one run into `dir`, creating it if needed.
pub fn write_all(dir: &Path, rec: &RunRecord, cfg: &RunConfig) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_trajectory(&dir.join(TRAJECTORY), rec)?;
    write_events(&dir.join(EVENTS), rec)?;
    let summary = serde_json::to_string_pretty(&summary_json(rec, cfg)).map_err(io::Error::other)?;
    fs::write(dir.join(SUMMARY), summary + "\n")?;
    fs::write(dir.join(PLOT), plot_script(rec))?;
    if cfg.noise_probe {
        write_noise(&dir.join(NOISE), rec)?;
    }
    Ok(())
}
