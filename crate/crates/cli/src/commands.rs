//! Subcommand implementations.
//!
//! Each command computes everything in memory and returns the files to
//! write; nothing touches the output directory until the computation has
//! succeeded.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use quadtomo::analysis::{predicted_efficiency, snr_sweep_experiment, SweepConfig};
use quadtomo::channels::{
    apply_en_wigner, apply_loss_wigner, calibrate, db_to_linear, equivalent_efficiency_from_gain, linear_to_db,
};
use quadtomo::detector::{acquire_trace, rescale_trace, QuadratureTrace, TraceKind};
use quadtomo::tomography::{
    fit_gaussian_moments, group_by_phase, histogram, inverse_radon, Binning, PhaseGrouping, PhaseMoments,
};
use quadtomo::{Calibration, GridMoments, GridSpec, WignerGrid};
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, StateKind};
use crate::error::CliError;

/// A file to be written, relative to the output directory.
pub struct Output {
    pub name: String,
    pub contents: Vec<u8>,
}

impl Output {
    fn json(name: &str, value: &impl Serialize) -> Self {
        let mut contents = serde_json::to_vec_pretty(value).expect("reports serialize");
        contents.push(b'\n');
        Self {
            name: name.into(),
            contents,
        }
    }

    fn text(name: &str, contents: String) -> Self {
        Self {
            name: name.into(),
            contents: contents.into_bytes(),
        }
    }
}

/// Writes every output into `dir`, each through a temporary file and a rename.
pub fn write_outputs(dir: &Path, outputs: &[Output]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::with_capacity(outputs.len());
    for out in outputs {
        let path = dir.join(&out.name);
        let tmp = dir.join(format!(".{}.partial", out.name));
        std::fs::write(&tmp, &out.contents).map_err(|e| CliError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Configuration as recorded in outputs; the output directory is left out
/// so that identical runs in different places produce identical files.
fn recorded(cfg: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        output_dir: PathBuf::from("."),
        ..cfg.clone()
    }
}

fn snr_json(snr: f64) -> serde_json::Value {
    if snr.is_finite() {
        json!(snr)
    } else {
        json!("inf")
    }
}

fn trace_csv(trace: &QuadratureTrace) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<Output>, CliError> {
    let detector = cfg.detector()?;
    let state = cfg.detected_state()?;
    let n = cfg.n_samples;
    let en = acquire_trace(&detector, None, TraceKind::ElectronicNoise, &cfg.phases, n, cfg.seed)?;
    let shot = acquire_trace(&detector, None, TraceKind::ShotNoise, &cfg.phases, n, cfg.seed)?;
    let signal = acquire_trace(&detector, Some(&state), TraceKind::Signal, &cfg.phases, n, cfg.seed)?;

    let snr = detector.snr_or_infinite();
    let manifest = json!({
        "seed": cfg.seed,
        "config": recorded(cfg),
        "detector": detector,
        "alpha_prime": detector.alpha_prime(),
        "snr": snr_json(snr),
        "snr_db": snr_json(linear_to_db(snr)),
        "eta_eq": equivalent_efficiency_from_gain(&detector),
        "detected_state": { "mean": state.mean(), "cov": state.cov() },
        "files": ["electronic_noise.csv", "shot_noise.csv", "signal.csv"],
    });
    Ok(vec![
        Output {
            name: "electronic_noise.csv".into(),
            contents: trace_csv(&en)?,
        },
        Output {
            name: "shot_noise.csv".into(),
            contents: trace_csv(&shot)?,
        },
        Output {
            name: "signal.csv".into(),
            contents: trace_csv(&signal)?,
        },
        Output::json("manifest.json", &manifest),
    ])
}

pub fn read_trace(path: &Path) -> Result<QuadratureTrace, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    QuadratureTrace::read_csv(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct CalibrationReport {
    pub source: String,
    pub kind: TraceKind,
    pub seed: u64,
    #[serde(flatten)]
    pub calibration: Calibration,
}

fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn vacuum_calibration(trace: &QuadratureTrace, path: &Path) -> Result<Calibration, CliError> {
    if trace.kind() != TraceKind::ShotNoise {
        return Err(CliError::Data(format!(
            "{}: calibration needs a shot_noise trace, found {}",
            path.display(),
            trace.kind()
        )));
    }
    calibrate(trace.samples()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn calibrate_trace(path: &Path) -> Result<CalibrationReport, CliError> {
    let trace = read_trace(path)?;
    let calibration = vacuum_calibration(&trace, path)?;
    Ok(CalibrationReport {
        source: file_label(path),
        kind: trace.kind(),
        seed: trace.seed(),
        calibration,
    })
}

pub fn calibration_outputs(report: &CalibrationReport) -> Vec<Output> {
    vec![Output::json("calibration.json", report)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fbp,
    Gaussfit,
}

pub struct ReconstructOptions<'a> {
    pub signal: &'a Path,
    pub shot: &'a Path,
    pub method: Method,
    /// Phase bins over `[0, π)`; `None` groups by exact phase.
    pub phase_bins: Option<usize>,
    /// Histogram bins per phase for back-projection.
    pub bins: usize,
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Serialize)]
struct MarginalRow {
    theta: f64,
    mean: f64,
    variance: f64,
    count: Option<u64>,
}

#[derive(Debug, Serialize)]
struct MomentsJson {
    integral: f64,
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
}

impl From<GridMoments> for MomentsJson {
    fn from(m: GridMoments) -> Self {
        Self {
            integral: m.integral,
            mean: m.mean,
            cov: m.cov,
        }
    }
}

/// Summary returned alongside the reconstruction outputs.
pub struct ReconstructSummary {
    pub method: Method,
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

pub fn reconstruct(opts: &ReconstructOptions) -> Result<(Vec<Output>, ReconstructSummary), CliError> {
    let signal = read_trace(opts.signal)?;
    if signal.kind() != TraceKind::Signal {
        return Err(CliError::Data(format!(
            "{}: expected a signal trace, found {}",
            opts.signal.display(),
            signal.kind()
        )));
    }
    let shot = read_trace(opts.shot)?;
    let cal = vacuum_calibration(&shot, opts.shot)?;
    let quadratures = rescale_trace(&signal, cal.alpha_prime)?;
    let grouping = match opts.phase_bins {
        Some(n) => PhaseGrouping::Bins(n),
        None => PhaseGrouping::Exact,
    };
    let groups = group_by_phase(&quadratures, signal.phases(), grouping)?;
    let moments: Vec<PhaseMoments> = groups
        .iter()
        .map(|g| PhaseMoments::from_samples(g.theta, &g.samples))
        .collect::<quadtomo::Result<_>>()?;
    let marginals: Vec<MarginalRow> = moments
        .iter()
        .map(|m| MarginalRow {
            theta: m.theta,
            mean: m.mean,
            variance: m.variance,
            count: m.count,
        })
        .collect();

    let (grid, report_body, summary) = match opts.method {
        Method::Gaussfit => {
            let fit = fit_gaussian_moments(&moments)?;
            let spec = match opts.grid {
                Some(s) => s,
                None => {
                    let spread = fit.cov[0][0].max(fit.cov[1][1]);
                    let offset = fit.mean[0].abs().max(fit.mean[1].abs());
                    GridSpec::square(6f64.max(6.0 * (2.0 * spread).sqrt()) + offset, 101)?
                }
            };
            let grid = fit.wigner_grid(&spec)?;
            let body = json!({
                "mean": fit.mean,
                "cov": fit.cov,
                "cov_std": fit.cov_std,
                "mean_std": fit.mean_std,
                "det": fit.det(),
                "physical": fit.is_physical(),
            });
            let summary = ReconstructSummary {
                method: Method::Gaussfit,
                mean: fit.mean,
                cov: fit.cov,
            };
            (grid, body, summary)
        }
        Method::Fbp => {
            let reach = quadratures.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let reach = reach * (1.0 + 1e-9) + f64::MIN_POSITIVE;
            let hists = groups
                .iter()
                .map(|g| {
                    histogram(
                        &g.samples,
                        g.theta,
                        &Binning::Uniform {
                            lo: -reach,
                            hi: reach,
                            count: opts.bins,
                        },
                    )
                })
                .collect::<quadtomo::Result<Vec<_>>>()?;
            let spec = match opts.grid {
                Some(s) => s,
                None => GridSpec::square(reach / std::f64::consts::SQRT_2, 101)?,
            };
            let grid = inverse_radon(&hists, &spec)?;
            let disk = grid.disk_moments();
            let body = json!({
                "moments_region": "inscribed_disk",
                "moments": MomentsJson::from(disk),
                "grid_moments": MomentsJson::from(grid.moments()),
                "histogram_bins": opts.bins,
                "histogram_range": [-reach, reach],
            });
            let summary = ReconstructSummary {
                method: Method::Fbp,
                mean: disk.mean,
                cov: disk.cov,
            };
            (grid, body, summary)
        }
    };

    let report = json!({
        "method": opts.method,
        "seed": signal.seed(),
        "signal": file_label(opts.signal),
        "shot_noise": file_label(opts.shot),
        "alpha_prime": cal.alpha_prime,
        "alpha_prime_std_error": cal.std_error,
        "grid": grid.spec(),
        "reconstruction": report_body,
        "marginals": marginals,
    });
    let mut wigner = Vec::new();
    grid.write_to(&mut wigner)?;
    Ok((
        vec![
            Output {
                name: "wigner.csv".into(),
                contents: wigner,
            },
            Output::json("reconstruction.json", &report),
        ],
        summary,
    ))
}

/// Builds the core sweep configuration from the experiment file.
pub fn sweep_config(cfg: &ExperimentConfig) -> Result<SweepConfig, CliError> {
    if cfg.state.kind != StateKind::Squeezed || cfg.state.r <= 0.0 {
        return Err(CliError::Config(
            "sweep needs a squeezed state with r > 0 to infer the efficiency".into(),
        ));
    }
    let detector = cfg.detector()?;
    Ok(SweepConfig {
        r: cfg.state.r,
        eta_optical: cfg.optical_eta,
        alpha: detector.alpha,
        snrs: cfg.sweep.snr_db.iter().map(|&db| db_to_linear(db)).collect(),
        n: cfg.n_samples,
        phase_count: cfg.sweep.phase_count,
        seed: cfg.seed,
    })
}

/// Dense `η_optical·(S − 1)/S` curve for plotting.
pub fn theory_curve(eta_optical: f64, db_lo: f64, db_hi: f64, points: usize) -> Vec<(f64, f64)> {
    (0..points)
        .map(|k| {
            let db = db_lo + (db_hi - db_lo) * k as f64 / (points - 1) as f64;
            (db, predicted_efficiency(eta_optical, db_to_linear(db)))
        })
        .collect()
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<(Vec<Output>, Vec<quadtomo::SweepPoint>), CliError> {
    let config = sweep_config(cfg)?;
    let mut points = snr_sweep_experiment(&config)?;
    // Report the dB values as configured rather than round-tripped.
    for (p, &db) in points.iter_mut().zip(&cfg.sweep.snr_db) {
        p.snr_db = db;
    }

    let mut csv = String::from("snr_db,eta_inferred,eta_sigma,eta_predicted\n");
    for p in &points {
        csv.push_str(&format!(
            "{:?},{:?},{:?},{:?}\n",
            p.snr_db, p.eta_inferred, p.eta_sigma, p.eta_predicted
        ));
    }
    let lo = cfg.sweep.snr_db.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cfg.sweep.snr_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = ((lo - 1.0).max(0.1), hi + 3.0);
    let mut theory = String::from("snr_db,eta_predicted\n");
    for (db, eta) in theory_curve(cfg.optical_eta, lo, hi, 200) {
        theory.push_str(&format!("{db:?},{eta:?}\n"));
    }
    let summary = json!({
        "seed": cfg.seed,
        "config": recorded(cfg),
        "sweep": config,
        "points": points,
    });
    Ok((
        vec![
            Output::text("sweep.csv", csv),
            Output::json("sweep.json", &summary),
            Output::text("theory_curve.csv", theory),
        ],
        points,
    ))
}

/// Result of comparing the noisy-detector and lossy-channel Wigner functions.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub eta_eq: f64,
    #[serde(serialize_with = "ser_snr")]
    pub snr: f64,
    #[serde(serialize_with = "ser_snr")]
    pub snr_db: f64,
    pub max_rel_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub grid: GridSpec,
}

fn ser_snr<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    snr_json(*v).serialize(s)
}

pub const EQUIVALENCE_TOL: f64 = 1e-9;

pub fn equivalence_check(cfg: &ExperimentConfig, grid_n: usize) -> Result<(Vec<Output>, EquivalenceReport), CliError> {
    let detector = cfg.detector()?;
    let state = cfg.source_state()?;
    let spec = cfg.grid_for(&state, grid_n)?;
    let w = state.wigner_grid(&spec)?;
    let eta_eq = equivalent_efficiency_from_gain(&detector);
    let en: WignerGrid = apply_en_wigner(&w, &detector)?;
    let ol = apply_loss_wigner(&w, eta_eq)?;
    let diff = en.max_rel_diff(&ol)?;
    let snr = detector.snr_or_infinite();
    let report = EquivalenceReport {
        eta_eq,
        snr,
        snr_db: linear_to_db(snr),
        max_rel_diff: diff,
        tolerance: EQUIVALENCE_TOL,
        pass: diff < EQUIVALENCE_TOL,
        grid: spec,
    };
    let body = json!({
        "seed": cfg.seed,
        "config": recorded(cfg),
        "detector": detector,
        "report": report,
    });
    Ok((vec![Output::json("equivalence.json", &body)], report))
}
