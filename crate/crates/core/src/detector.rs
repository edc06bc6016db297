//! Monte Carlo homodyne detector and the three-trace acquisition protocol
//! (electronic noise, shot noise, signal).
//!
//! A quadrature `x` drawn from the state's marginal at the local-oscillator
//! phase becomes the voltage `V = α·x + e`, where `e` is zero-mean Gaussian
//! electronic noise of variance `T/2`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::DetectorModel;
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::states::GaussianState;

/// Which of the three protocol traces a record holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// Both photodiodes blocked: electronic noise only.
    ElectronicNoise,
    /// Signal blocked: local oscillator on the vacuum.
    ShotNoise,
    /// The state under test.
    Signal,
}

impl TraceKind {
    fn stream_tag(self) -> u16 {
        match self {
            TraceKind::ElectronicNoise => 1,
            TraceKind::ShotNoise => 2,
            TraceKind::Signal => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::ElectronicNoise => "electronic_noise",
            TraceKind::ShotNoise => "shot_noise",
            TraceKind::Signal => "signal",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "electronic_noise" => Ok(TraceKind::ElectronicNoise),
            "shot_noise" => Ok(TraceKind::ShotNoise),
            "signal" => Ok(TraceKind::Signal),
            other => Err(invalid("kind", format!("unknown trace kind {other:?}"))),
        }
    }
}

/// Local-oscillator phase for each sample of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseSchedule {
    /// Locked phase.
    Constant { theta: f64 },
    /// Linear scan over `[0, 2π)`: sample `i` of `n` sits at `2π·i/n`.
    Ramp,
    /// Contiguous equal blocks, one per listed phase. A list as long as
    /// the trace gives one phase per sample.
    Stepped { phases: Vec<f64> },
}

impl PhaseSchedule {
    /// `count` phases equally spaced over `[0, π)`, stepped.
    pub fn uniform_half_turn(count: usize) -> Self {
        PhaseSchedule::Stepped {
            phases: (0..count).map(|k| PI * k as f64 / count as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PhaseSchedule::Constant { theta } if !theta.is_finite() => {
                Err(invalid("phases", "constant phase must be finite"))
            }
            PhaseSchedule::Stepped { phases } if phases.is_empty() => {
                Err(invalid("phases", "stepped schedule needs at least one phase"))
            }
            PhaseSchedule::Stepped { phases } if phases.iter().any(|p| !p.is_finite()) => {
                Err(invalid("phases", "phases must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Phase of sample `i` in a trace of `n` samples.
    pub fn phase(&self, i: usize, n: usize) -> f64 {
        match self {
            PhaseSchedule::Constant { theta } => *theta,
            PhaseSchedule::Ramp => TAU * i as f64 / n as f64,
            PhaseSchedule::Stepped { phases } => {
                let block = (i as u128 * phases.len() as u128 / n as u128) as usize;
                phases[block]
            }
        }
    }
}

/// One acquired trace, as voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTrace {
    kind: TraceKind,
    phases: Vec<f64>,
    samples: Vec<f64>,
    seed: u64,
    detector: DetectorModel,
}

impl QuadratureTrace {
    /// `phases` holds one phase per sample, or a single phase for all of
    /// them. Per-sample phases that are all equal are stored as one.
    pub fn new(
        kind: TraceKind,
        mut phases: Vec<f64>,
        samples: Vec<f64>,
        seed: u64,
        detector: DetectorModel,
    ) -> Result<Self> {
        detector.validate()?;
        if samples.is_empty() {
            return Err(Error::InsufficientData("trace has no samples".into()));
        }
        if phases.len() != 1 && phases.len() != samples.len() {
            return Err(Error::Inconsistent(format!(
                "{} phases for {} samples",
                phases.len(),
                samples.len()
            )));
        }
        if phases.len() > 1 && phases.iter().all(|p| p.to_bits() == phases[0].to_bits()) {
            phases.truncate(1);
        }
        Ok(Self {
            kind,
            phases,
            samples,
            seed,
            detector,
        })
    }

    pub fn kind(&self) -> TraceKind {
        self.kind
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Stored phases: length 1 (constant) or one per sample.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn phase(&self, i: usize) -> f64 {
        if self.phases.len() == 1 {
            self.phases[0]
        } else {
            self.phases[i]
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn detector(&self) -> &DetectorModel {
        &self.detector
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_square(&self) -> f64 {
        mean_square(&self.samples)
    }

    /// CSV with `# key: value` header lines and `phase_rad,volts` rows.
    /// Numbers are written in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# kind: {}", self.kind)?;
        writeln!(out, "# seed: {}", self.seed)?;
        writeln!(out, "# alpha: {:?}", self.detector.alpha)?;
        writeln!(out, "# t_noise: {:?}", self.detector.t_noise)?;
        writeln!(out, "phase_rad,volts")?;
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(out, "{:?},{:?}", self.phase(i), v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut kind = None;
        let mut seed = None;
        let mut alpha = None;
        let mut t_noise = None;
        let mut phases = Vec::new();
        let mut samples = Vec::new();
        let mut seen_columns = false;

        for (k, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = k + 1;
            let parse_err = |reason: String| Error::Parse {
                line: lineno,
                reason,
            };
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                let Some((key, value)) = comment.split_once(':') else {
                    continue;
                };
                let value = value.trim();
                let num = |v: &str| -> Result<f64> {
                    v.parse().map_err(|_| parse_err(format!("bad number {v:?}")))
                };
                match key.trim() {
                    "kind" => kind = Some(value.parse::<TraceKind>().map_err(|e| parse_err(e.to_string()))?),
                    "seed" => {
                        seed = Some(value.parse::<u64>().map_err(|_| parse_err(format!("bad seed {value:?}")))?)
                    }
                    "alpha" => alpha = Some(num(value)?),
                    "t_noise" => t_noise = Some(num(value)?),
                    _ => {}
                }
                continue;
            }
            if !seen_columns {
                if trimmed != "phase_rad,volts" {
                    return Err(parse_err(format!("expected column header, found {trimmed:?}")));
                }
                seen_columns = true;
                continue;
            }
            let (p, v) = trimmed
                .split_once(',')
                .ok_or_else(|| parse_err("expected two columns".into()))?;
            let p: f64 = p.trim().parse().map_err(|_| parse_err(format!("bad phase {p:?}")))?;
            let v: f64 = v.trim().parse().map_err(|_| parse_err(format!("bad sample {v:?}")))?;
            phases.push(p);
            samples.push(v);
        }

        let missing = |what: &str| Error::Parse {
            line: 0,
            reason: format!("missing `# {what}` header"),
        };
        let kind = kind.ok_or_else(|| missing("kind"))?;
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let detector = DetectorModel::new(
            alpha.ok_or_else(|| missing("alpha"))?,
            t_noise.ok_or_else(|| missing("t_noise"))?,
        )?;
        Self::new(kind, phases, samples, seed, detector)
    }
}

/// Mean of the squared samples.
pub fn mean_square(samples: &[f64]) -> f64 {
    samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64
}

/// Draws one quadrature value from the state's marginal at phase `theta`.
pub fn sample_quadrature<R: Rng + ?Sized>(state: &GaussianState, theta: f64, rng: &mut R) -> f64 {
    let m = state.marginal(theta);
    let z: f64 = rng.sample(StandardNormal);
    m.mean + m.variance.sqrt() * z
}

/// `V = α·x + e` with `e ~ N(0, T/2)`.
pub fn measure_voltage<R: Rng + ?Sized>(detector: &DetectorModel, x: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    detector.alpha * x + detector.noise_variance().sqrt() * z
}

/// Acquires `n` samples of one protocol trace.
///
/// `source` must be `None` for electronic noise, `None` or the vacuum for
/// shot noise, and the state under test for a signal trace.
pub fn acquire_trace(
    detector: &DetectorModel,
    source: Option<&GaussianState>,
    kind: TraceKind,
    schedule: &PhaseSchedule,
    n: usize,
    seed: u64,
) -> Result<QuadratureTrace> {
    detector.validate()?;
    schedule.validate()?;
    if n == 0 {
        return Err(invalid("n", "trace needs at least one sample"));
    }
    let state = match (kind, source) {
        (TraceKind::ElectronicNoise, None) => None,
        (TraceKind::ElectronicNoise, Some(_)) => {
            return Err(Error::Inconsistent(
                "electronic-noise traces are taken with the detector blocked; no source allowed".into(),
            ))
        }
        (TraceKind::ShotNoise, None) => Some(GaussianState::vacuum()),
        (TraceKind::ShotNoise, Some(s)) if *s == GaussianState::vacuum() => Some(*s),
        (TraceKind::ShotNoise, Some(_)) => {
            return Err(Error::Inconsistent("shot-noise traces require the vacuum as source".into()))
        }
        (TraceKind::Signal, Some(s)) => Some(*s),
        (TraceKind::Signal, None) => {
            return Err(Error::Inconsistent("signal traces need a source state".into()))
        }
    };

    let phase_of = |i: usize| schedule.phase(i, n);
    let chunks = n.div_ceil(rng::CHUNK);
    let blocks: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, kind.stream_tag(), c as u64);
            let lo = c * rng::CHUNK;
            let hi = (lo + rng::CHUNK).min(n);
            (lo..hi)
                .map(|i| match &state {
                    None => measure_voltage(detector, 0.0, &mut r),
                    Some(s) => {
                        let x = sample_quadrature(s, phase_of(i), &mut r);
                        measure_voltage(detector, x, &mut r)
                    }
                })
                .collect()
        })
        .collect();
    let samples: Vec<f64> = blocks.into_iter().flatten().collect();

    let phases = match schedule {
        PhaseSchedule::Constant { theta } => vec![*theta],
        _ => (0..n).map(phase_of).collect(),
    };
    QuadratureTrace::new(kind, phases, samples, seed, *detector)
}

/// Ratio of shot-noise to electronic-noise mean squares.
pub fn estimate_snr(shot: &QuadratureTrace, en: &QuadratureTrace) -> Result<f64> {
    if shot.is_empty() || en.is_empty() {
        return Err(Error::InsufficientData("empty trace".into()));
    }
    let noise = en.mean_square();
    if noise == 0.0 {
        return Err(Error::Degenerate("electronic-noise trace has zero power".into()));
    }
    Ok(shot.mean_square() / noise)
}

/// Converts voltages to calibrated quadratures by dividing by `alpha_prime`.
pub fn rescale_trace(trace: &QuadratureTrace, alpha_prime: f64) -> Result<Vec<f64>> {
    if !(alpha_prime > 0.0 && alpha_prime.is_finite()) {
        return Err(invalid("alpha_prime", format!("must be positive, got {alpha_prime}")));
    }
    Ok(trace.samples.iter().map(|v| v / alpha_prime).collect())
}
