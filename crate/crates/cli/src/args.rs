//! Command-line surface.

use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "alqg", version, about = "Adaptive LQG experiments: simulate, compute oracles, audit certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the closed loop and write trajectory, summary, events and plot files.
    Run(RunArgs),
    /// Print the optimal cost and CARE solution for the true model as JSON.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare the determinant certificate against the PBH test on random pairs.
    Audit {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "seed-w")]
    pub seed_w: Option<u64>,
    #[arg(long = "seed-v")]
    pub seed_v: Option<u64>,
    #[arg(long = "seed-eta")]
    pub seed_eta: Option<u64>,
    /// Output directory; takes precedence over ALQG_OUT and the config file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Horizon override.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Step-size override.
    #[arg(long = "h")]
    pub step: Option<f64>,
    /// Batch of replicates, `a..b` (exclusive) or `a..=b`; one directory per seed.
    #[arg(long, value_parser = parse_seed_range)]
    pub seeds: Option<RangeInclusive<u64>>,
    /// Also write the raw w and v paths to noise.csv.
    #[arg(long = "noise-probe")]
    pub noise_probe: bool,
}

pub fn parse_seed_range(s: &str) -> Result<RangeInclusive<u64>, String> {
    let (lo, hi, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(format!("expected a..b or a..=b, got {s:?}"));
    };
    let lo: u64 = lo.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
    let hi: u64 = hi.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
    let hi = if inclusive {
        hi
    } else {
        hi.checked_sub(1).ok_or("empty seed range")?
    };
    if hi < lo {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(lo..=hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("1..6").unwrap(), 1..=5);
        assert_eq!(parse_seed_range("1..=5").unwrap(), 1..=5);
        assert!(parse_seed_range("3..3").is_err());
        assert!(parse_seed_range("7").is_err());
    }

    #[test]
    fn parses_run_overrides() {
        let cli = Cli::try_parse_from([
            "alqg", "run", "--config", "c.json", "--seed-eta", "9", "--T", "20", "--h", "0.01", "--seeds", "1..3",
        ])
        .unwrap();
        let Command::Run(args) = cli.command else {
            panic!("expected run");
        };
        assert_eq!(args.seed_eta, Some(9));
        assert_eq!(args.horizon, Some(20.0));
        assert_eq!(args.step, Some(0.01));
        assert_eq!(args.seeds, Some(1..=2));
    }
}
