//! Command-line front end: configuration loading, subcommand dispatch and
//! file output.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{Method, ReconstructOptions};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use quadtomo::GridSpec;

/// Environment variable that overrides the seed from the config file.
pub const SEED_ENV: &str = "QUADTOMO_SEED";

#[derive(Debug, Parser)]
#[command(name = "quadtomo", version, about = "Homodyne tomography with optical loss and electronic noise")]
pub struct Cli {
    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; overrides QUADTOMO_SEED and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, short, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Acquire electronic-noise, shot-noise and signal traces.
    Simulate {
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Estimate the calibration factor from a shot-noise trace.
    Calibrate {
        trace: PathBuf,
    },
    /// Reconstruct the Wigner function from signal and shot-noise traces.
    Reconstruct {
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        shot: PathBuf,
        #[arg(long, value_enum, default_value = "gaussfit")]
        method: Method,
        /// Group continuous phases into this many bins over [0, π).
        #[arg(long)]
        phase_bins: Option<usize>,
        /// Histogram bins per phase for back-projection.
        #[arg(long, default_value_t = 100)]
        bins: usize,
        /// Grid half-width; requires --grid-n.
        #[arg(long, requires = "grid_n")]
        half_width: Option<f64>,
        #[arg(long, requires = "half_width")]
        grid_n: Option<usize>,
    },
    /// Efficiency inferred from squeezing versus detector SNR.
    Sweep {
        /// SNRs in dB, replacing the config list.
        #[arg(long, value_delimiter = ',')]
        snr_db: Option<Vec<f64>>,
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Compare the electronic-noise and equivalent-loss Wigner functions.
    EquivalenceCheck {
        /// Detector SNR in dB (gain from the config).
        #[arg(long)]
        snr_db: Option<f64>,
        /// Grid points per axis when the config has no grid.
        #[arg(long, default_value_t = 128)]
        grid_n: usize,
    },
}

/// Loads the configuration and applies overrides: flags beat the
/// environment, which beats the file.
pub fn resolve_config(cli: &Cli, env_seed: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = env_seed {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    match &cli.command {
        Command::Simulate { n_samples: Some(n) } | Command::Sweep { n_samples: Some(n), .. } => cfg.n_samples = *n,
        _ => {}
    }
    match &cli.command {
        Command::Sweep { snr_db: Some(list), .. } => cfg.sweep.snr_db = list.clone(),
        Command::EquivalenceCheck { snr_db: Some(db), .. } => {
            let alpha = match cfg.detector {
                config::DetectorConfig::Noise(d) => d.alpha,
                config::DetectorConfig::Snr(d) => d.alpha,
            };
            cfg.detector = config::DetectorConfig::Snr(config::SnrSpec { alpha, snr_db: *db });
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_snr(snr: f64, db: f64) -> String {
    if snr.is_finite() {
        format!("{snr:.4} ({db:.2} dB)")
    } else {
        "inf (noiseless detector)".into()
    }
}

/// Runs one invocation and returns the lines printed to stdout.
pub fn run(cli: &Cli, env_seed: Option<&str>) -> Result<Vec<String>, CliError> {
    let cfg = resolve_config(cli, env_seed)?;
    let dir = cfg.output_dir.clone();
    let mut lines = Vec::new();
    match &cli.command {
        Command::Simulate { .. } => {
            let outputs = commands::simulate(&cfg)?;
            let d = cfg.detector()?;
            for path in commands::write_outputs(&dir, &outputs)? {
                lines.push(format!("wrote {}", path.display()));
            }
            lines.push(format!("alpha_prime = {:.6}", d.alpha_prime()));
        }
        Command::Calibrate { trace } => {
            let report = commands::calibrate_trace(trace)?;
            if cli.output_dir.is_some() || cli.config.is_some() {
                for path in commands::write_outputs(&dir, &commands::calibration_outputs(&report))? {
                    lines.push(format!("wrote {}", path.display()));
                }
            }
            lines.push(format!(
                "alpha_prime = {:.6} ± {:.6} (n = {})",
                report.calibration.alpha_prime, report.calibration.std_error, report.calibration.n
            ));
        }
        Command::Reconstruct {
            signal,
            shot,
            method,
            phase_bins,
            bins,
            half_width,
            grid_n,
        } => {
            let grid = match (half_width, grid_n) {
                (Some(h), Some(n)) => Some(GridSpec::square(*h, *n).map_err(|e| CliError::Config(e.to_string()))?),
                _ => cfg.grid.map(|g| GridSpec::square(g.half_width, g.n)).transpose()?,
            };
            let opts = ReconstructOptions {
                signal,
                shot,
                method: *method,
                phase_bins: *phase_bins,
                bins: *bins,
                grid,
            };
            let (outputs, summary) = commands::reconstruct(&opts)?;
            for path in commands::write_outputs(&dir, &outputs)? {
                lines.push(format!("wrote {}", path.display()));
            }
            lines.push(format!(
                "{:?}: mean = [{:.4}, {:.4}], cov = [[{:.4}, {:.4}], [{:.4}, {:.4}]]",
                summary.method,
                summary.mean[0],
                summary.mean[1],
                summary.cov[0][0],
                summary.cov[0][1],
                summary.cov[1][0],
                summary.cov[1][1]
            ));
        }
        Command::Sweep { .. } => {
            let (outputs, points) = commands::sweep(&cfg)?;
            for path in commands::write_outputs(&dir, &outputs)? {
                lines.push(format!("wrote {}", path.display()));
            }
            lines.push("snr_db  eta_inferred  eta_sigma  eta_predicted".into());
            for p in points {
                lines.push(format!(
                    "{:6.2}  {:12.4}  {:9.4}  {:13.4}",
                    p.snr_db, p.eta_inferred, p.eta_sigma, p.eta_predicted
                ));
            }
        }
        Command::EquivalenceCheck { grid_n, .. } => {
            let (outputs, report) = commands::equivalence_check(&cfg, *grid_n)?;
            for path in commands::write_outputs(&dir, &outputs)? {
                lines.push(format!("wrote {}", path.display()));
            }
            lines.push(format!("eta_eq = {:.4}", report.eta_eq));
            lines.push(format!("snr = {}", fmt_snr(report.snr, report.snr_db)));
            lines.push(format!("max |W_en - W_loss| / peak = {:.3e}", report.max_rel_diff));
            if !report.pass {
                return Err(CliError::Numerical(format!(
                    "equivalence check failed: {:.3e} >= {:.0e}",
                    report.max_rel_diff, report.tolerance
                )));
            }
            lines.push("PASS".into());
        }
    }
    Ok(lines)
}
