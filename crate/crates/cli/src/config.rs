//! Experiment configuration file.
//!
//! JSON with a strict schema: unknown keys are rejected and every range is
//! checked on load. Decibel SNRs are converted to linear here and nowhere
//! else.

use std::path::{Path, PathBuf};

use quadtomo::channels::{apply_loss_cov, db_to_linear};
use quadtomo::detector::PhaseSchedule;
use quadtomo::{DetectorModel, GaussianState, GridSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Vacuum,
    Squeezed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub kind: StateKind,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub phi: f64,
}

/// Detector given either by its noise parameter or by its SNR in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetectorConfig {
    Noise(NoiseSpec),
    Snr(SnrSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub alpha: f64,
    pub t_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrSpec {
    pub alpha: f64,
    pub snr_db: f64,
}

/// Square reconstruction grid centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    #[serde(default = "default_sweep_phases")]
    pub phase_count: usize,
}

fn default_sweep_phases() -> usize {
    16
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            snr_db: vec![3.0, 6.0, 9.0, 12.0, 15.0, 18.0],
            phase_count: default_sweep_phases(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub state: StateConfig,
    pub detector: DetectorConfig,
    pub optical_eta: f64,
    pub n_samples: usize,
    pub phases: PhaseSchedule,
    /// Omitted: sized to the state.
    pub grid: Option<GridConfig>,
    pub output_dir: PathBuf,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            state: StateConfig {
                kind: StateKind::Squeezed,
                r: 1.2,
                phi: 0.0,
            },
            detector: DetectorConfig::Snr(SnrSpec {
                alpha: 1.0,
                snr_db: 10.0,
            }),
            optical_eta: 0.51,
            n_samples: 1_200_000,
            phases: PhaseSchedule::uniform_half_turn(12),
            grid: None,
            output_dir: PathBuf::from("quadtomo-out"),
            sweep: SweepSection::default(),
        }
    }
}

fn bad(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {reason}"))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match self.state.kind {
            StateKind::Vacuum if self.state.r != 0.0 => return Err(bad("state.r", "vacuum takes no squeezing")),
            _ if !(self.state.r >= 0.0 && self.state.r.is_finite()) => {
                return Err(bad("state.r", format!("must be >= 0, got {}", self.state.r)))
            }
            _ if !self.state.phi.is_finite() => return Err(bad("state.phi", "must be finite")),
            _ => {}
        }
        self.detector()?;
        if !(self.optical_eta > 0.0 && self.optical_eta <= 1.0) {
            return Err(bad("optical_eta", format!("must lie in (0, 1], got {}", self.optical_eta)));
        }
        if self.n_samples < 2 {
            return Err(bad("n_samples", "need at least 2 samples"));
        }
        self.phases.validate().map_err(|e| bad("phases", e))?;
        if let Some(g) = self.grid {
            GridSpec::square(g.half_width, g.n).map_err(|e| bad("grid", e))?;
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(bad("output_dir", "must not be empty"));
        }
        if self.sweep.snr_db.is_empty() {
            return Err(bad("sweep.snr_db", "need at least one SNR"));
        }
        for &db in &self.sweep.snr_db {
            if !(db > 0.0 && db.is_finite()) {
                return Err(bad("sweep.snr_db", format!("each SNR must be a finite value above 0 dB, got {db}")));
            }
        }
        if self.sweep.phase_count < 3 {
            return Err(bad("sweep.phase_count", "need at least 3 phases"));
        }
        Ok(())
    }

    pub fn detector(&self) -> Result<DetectorModel, CliError> {
        let d = match self.detector {
            DetectorConfig::Noise(NoiseSpec { alpha, t_noise }) => DetectorModel::new(alpha, t_noise),
            DetectorConfig::Snr(SnrSpec { alpha, snr_db }) => {
                if !snr_db.is_finite() || snr_db <= 0.0 {
                    return Err(bad("detector.snr_db", format!("must be a finite value above 0 dB, got {snr_db}")));
                }
                DetectorModel::from_snr(alpha, db_to_linear(snr_db))
            }
        };
        d.map_err(|e| bad("detector", e))
    }

    /// Pure source state.
    pub fn source_state(&self) -> Result<GaussianState, CliError> {
        match self.state.kind {
            StateKind::Vacuum => Ok(GaussianState::vacuum()),
            StateKind::Squeezed => {
                GaussianState::squeezed_vacuum(self.state.r, self.state.phi).map_err(|e| bad("state", e))
            }
        }
    }

    /// Source state after the optical loss, as it reaches the detector.
    pub fn detected_state(&self) -> Result<GaussianState, CliError> {
        apply_loss_cov(&self.source_state()?, self.optical_eta).map_err(|e| bad("optical_eta", e))
    }

    /// Configured grid, or a default square grid sized to `state`.
    pub fn grid_for(&self, state: &GaussianState, default_n: usize) -> Result<GridSpec, CliError> {
        match self.grid {
            Some(g) => GridSpec::square(g.half_width, g.n),
            None => GridSpec::for_state(state, default_n),
        }
        .map_err(|e| bad("grid", e))
    }
}
