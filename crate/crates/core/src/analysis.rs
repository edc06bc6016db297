//! Squeezing analysis: the loss model for squeezed quadrature variances,
//! its inversion for the detection efficiency, and the simulated
//! efficiency-versus-SNR sweep.
//!
//! Variances are in shot-noise units where the vacuum gives 1/2. A pure
//! squeezed state has `⟨Q₊²⟩⟨Q₋²⟩ = 1/4`; after a transmission `η` each
//! variance becomes `η⟨Q²⟩ + (1 − η)/2`, from which
//!
//! `η = (2⟨Q₊²⟩ − 1)(1 − 2⟨Q₋²⟩) / (2⟨Q₊²⟩ + 2⟨Q₋²⟩ − 2)`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, RowVector3, Vector2};
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::{apply_loss_cov, calibrate, linear_to_db, DetectorModel};
use crate::detector::{acquire_trace, estimate_snr, rescale_trace, PhaseSchedule, TraceKind};
use crate::error::{invalid, Error, Result};
use crate::rng::derive_seed;
use crate::states::GaussianState;
use crate::tomography::{fit_covariance, fold_phase, group_by_phase, PhaseGrouping, PhaseMoments};

/// Below this `|2⟨Q₊²⟩ + 2⟨Q₋²⟩ − 2|` the efficiency is treated as 0/0.
pub const DENOMINATOR_TOL: f64 = 1e-9;
/// Allowed excess of an inferred efficiency over 1.
pub const EFFICIENCY_TOL: f64 = 1e-9;
/// Largest reduced χ² (weighted fits) or relative RMS residual
/// (unweighted fits) accepted from the `cos 2θ` variance fit.
pub const MAX_REDUCED_CHI2: f64 = 10.0;
pub const MAX_RELATIVE_RMS: f64 = 0.05;

/// `(⟨Q₊²⟩, ⟨Q₋²⟩)` of squeezed vacuum `r` after transmission `eta`.
pub fn predict_loss_variances(r: f64, eta: f64) -> Result<(f64, f64)> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("must be >= 0, got {r}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid("eta", format!("must lie in [0, 1], got {eta}")));
    }
    let vacuum = (1.0 - eta) / 2.0;
    Ok((
        eta * (2.0 * r).exp() / 2.0 + vacuum,
        eta * (-2.0 * r).exp() / 2.0 + vacuum,
    ))
}

fn efficiency_checked_denominator(q_plus_sq: f64, q_minus_sq: f64) -> Result<f64> {
    if !(q_plus_sq.is_finite() && q_minus_sq.is_finite()) {
        return Err(invalid("variances", "must be finite"));
    }
    let denominator = 2.0 * q_plus_sq + 2.0 * q_minus_sq - 2.0;
    if denominator.abs() < DENOMINATOR_TOL {
        return Err(Error::Indeterminate { denominator });
    }
    if q_minus_sq >= 0.5 {
        return Err(Error::NoSqueezing { q_minus_sq });
    }
    if q_plus_sq <= 0.5 {
        return Err(Error::Unphysical(format!(
            "<Q+^2> = {q_plus_sq} shows no anti-squeezing"
        )));
    }
    if q_minus_sq <= 0.0 {
        return Err(invalid("q_minus_sq", "variance must be positive"));
    }
    Ok((2.0 * q_plus_sq - 1.0) * (1.0 - 2.0 * q_minus_sq) / denominator)
}

/// Efficiency a pure squeezed state must have suffered to show the given
/// variances. Results above `1 + EFFICIENCY_TOL` (data below the
/// uncertainty bound) are errors.
pub fn infer_efficiency(q_plus_sq: f64, q_minus_sq: f64) -> Result<f64> {
    let eta = efficiency_checked_denominator(q_plus_sq, q_minus_sq)?;
    if eta > 1.0 + EFFICIENCY_TOL {
        return Err(Error::Unphysical(format!(
            "inferred efficiency {eta} exceeds 1: variances lie below the uncertainty bound"
        )));
    }
    if eta <= 0.0 {
        return Err(Error::Unphysical(format!("inferred efficiency {eta} is not positive")));
    }
    Ok(eta)
}

/// Gradient of the efficiency with respect to `(⟨Q₊²⟩, ⟨Q₋²⟩)`.
fn efficiency_gradient(q_plus_sq: f64, q_minus_sq: f64) -> Vector2<f64> {
    let u = 2.0 * q_plus_sq - 1.0;
    let v = 1.0 - 2.0 * q_minus_sq;
    let d2 = (u - v) * (u - v);
    Vector2::new(-2.0 * v * v / d2, -2.0 * u * u / d2)
}

/// Removes a known loss: `Q_pure² = (Q² − (1 − η)/2)/η`.
pub fn correct_for_loss(q_plus_sq: f64, q_minus_sq: f64, eta: f64) -> Result<(f64, f64)> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(invalid("eta", format!("must lie in (0, 1], got {eta}")));
    }
    let vacuum = (1.0 - eta) / 2.0;
    for (name, q) in [("q_plus_sq", q_plus_sq), ("q_minus_sq", q_minus_sq)] {
        if !(q > vacuum) {
            return Err(invalid(
                name,
                format!("{q} does not exceed the added vacuum noise {vacuum}"),
            ));
        }
    }
    Ok(((q_plus_sq - vacuum) / eta, (q_minus_sq - vacuum) / eta))
}

/// Extremes of a `var(θ) = A + B cos2θ + C sin2θ` fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceCurveFit {
    pub q_plus_sq: f64,
    pub q_minus_sq: f64,
    /// Phase of the minimum, in `[0, π)`.
    pub squeezed_phase: f64,
    /// Covariance of `(⟨Q₊²⟩, ⟨Q₋²⟩)` when sample counts are known.
    pub cov: Option<[[f64; 2]; 2]>,
}

/// `(⟨Q₊²⟩, ⟨Q₋²⟩)` from unweighted `(θ, variance)` pairs.
pub fn extreme_variances(phase_resolved: &[(f64, f64)]) -> Result<(f64, f64)> {
    let moments: Vec<PhaseMoments> = phase_resolved
        .iter()
        .map(|&(theta, variance)| PhaseMoments {
            theta,
            mean: 0.0,
            variance,
            count: None,
        })
        .collect();
    let fit = fit_variance_curve(&moments)?;
    Ok((fit.q_plus_sq, fit.q_minus_sq))
}

/// Fits the `cos 2θ` variance curve and returns its extremes.
///
/// Needs at least three distinct phases modulo π with no gap wider than
/// π/2. The fit is rejected when the residuals are not consistent with a
/// sinusoid: reduced χ² above [`MAX_REDUCED_CHI2`] with counts, or RMS
/// residual above [`MAX_RELATIVE_RMS`] of the mean level without.
pub fn fit_variance_curve(moments: &[PhaseMoments]) -> Result<VarianceCurveFit> {
    if moments.len() < 2 {
        return Err(Error::InsufficientData("need at least two phases".into()));
    }
    let mut folded: Vec<f64> = moments.iter().map(|m| fold_phase(m.theta).0).collect();
    folded.sort_by(f64::total_cmp);
    let widest_gap = folded
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(folded[0] + PI - folded[folded.len() - 1], f64::max);
    if widest_gap > PI / 2.0 + 1e-12 {
        return Err(Error::InsufficientData(format!(
            "phases leave a gap of {widest_gap:.3} rad; they must span at least π/2"
        )));
    }

    let fit = fit_covariance(moments)?;
    let (a, b, d) = (fit.params[0], fit.params[1], fit.params[2]);
    let level = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let radius = half_diff.hypot(b);

    // Residual check.
    let resid: Vec<(f64, Option<u64>)> = moments
        .iter()
        .map(|m| {
            let (s, c) = m.theta.sin_cos();
            let model = a * c * c + 2.0 * b * c * s + d * s * s;
            (m.variance - model, m.count.map(|n| n.max(2)).filter(|_| fit.param_cov.is_some()))
        })
        .collect();
    let dof = moments.len() as f64 - 3.0;
    if fit.param_cov.is_some() && dof > 0.0 {
        let chi2: f64 = moments
            .iter()
            .zip(&resid)
            .map(|(m, (r, n))| {
                let (s, c) = m.theta.sin_cos();
                let model = a * c * c + 2.0 * b * c * s + d * s * s;
                let n = n.unwrap_or(2) as f64;
                r * r * (n - 1.0) / (2.0 * model * model)
            })
            .sum();
        if chi2 / dof > MAX_REDUCED_CHI2 {
            return Err(Error::FitFailure(format!(
                "reduced chi-square {:.2} exceeds {MAX_REDUCED_CHI2}",
                chi2 / dof
            )));
        }
    } else {
        let rms = (resid.iter().map(|(r, _)| r * r).sum::<f64>() / moments.len() as f64).sqrt();
        if rms > MAX_RELATIVE_RMS * level.abs() {
            return Err(Error::FitFailure(format!(
                "RMS residual {rms:.3e} exceeds {MAX_RELATIVE_RMS} of the mean level {level:.3e}"
            )));
        }
    }

    let q_plus_sq = level + radius;
    let q_minus_sq = level - radius;
    // Minimum of A + R cos(2θ − 2θ₊) sits a quarter turn from the maximum.
    let max_phase = 0.5 * b.atan2(half_diff);
    let squeezed_phase = fold_phase(max_phase + PI / 2.0).0;

    let cov = fit.param_cov.map(|p: Matrix3<f64>| {
        let (dr_da, dr_db, dr_dd) = if radius > 0.0 {
            (half_diff / (2.0 * radius), b / radius, -half_diff / (2.0 * radius))
        } else {
            (0.0, 0.0, 0.0)
        };
        let plus = RowVector3::new(0.5 + dr_da, dr_db, 0.5 + dr_dd);
        let minus = RowVector3::new(0.5 - dr_da, -dr_db, 0.5 - dr_dd);
        let pp = (plus * p * plus.transpose())[(0, 0)];
        let pm = (plus * p * minus.transpose())[(0, 0)];
        let mm = (minus * p * minus.transpose())[(0, 0)];
        [[pp, pm], [pm, mm]]
    });
    Ok(VarianceCurveFit {
        q_plus_sq,
        q_minus_sq,
        squeezed_phase,
        cov,
    })
}

/// Extreme variances, inferred efficiency and its statistical error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub q_plus_sq: f64,
    pub q_minus_sq: f64,
    pub eta: f64,
    pub eta_sigma: f64,
    pub snr_db: f64,
}

/// Efficiency from per-phase moments of calibrated quadratures.
///
/// `calibration_rel_var` is the relative variance of the calibration
/// factor squared, `Var(α'²)/α'⁴`; it scales every variance by a common
/// factor and is added to the covariance of the extremes. Statistical
/// excursions above `η = 1` are reported as measured, not rejected.
pub fn efficiency_from_moments(
    moments: &[PhaseMoments],
    calibration_rel_var: f64,
    snr_db: f64,
) -> Result<EfficiencyReport> {
    let fit = fit_variance_curve(moments)?;
    let eta = efficiency_checked_denominator(fit.q_plus_sq, fit.q_minus_sq)?;
    let q = Vector2::new(fit.q_plus_sq, fit.q_minus_sq);
    let mut cov = match fit.cov {
        Some(c) => Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]),
        None => Matrix2::zeros(),
    };
    cov += calibration_rel_var * q * q.transpose();
    let g = efficiency_gradient(fit.q_plus_sq, fit.q_minus_sq);
    let eta_sigma = (g.transpose() * cov * g)[(0, 0)].max(0.0).sqrt();
    Ok(EfficiencyReport {
        q_plus_sq: fit.q_plus_sq,
        q_minus_sq: fit.q_minus_sq,
        eta,
        eta_sigma,
        snr_db,
    })
}

/// Simulated efficiency-versus-SNR experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    /// Squeezing parameter of the pure source.
    pub r: f64,
    /// Optical transmission ahead of the detector.
    pub eta_optical: f64,
    /// Detector gain; the noise is set from each SNR.
    pub alpha: f64,
    /// Linear SNRs, each > 1 (`∞` for a noiseless detector).
    pub snrs: Vec<f64>,
    /// Samples per trace.
    pub n: usize,
    /// Local-oscillator phases, equally spaced over `[0, π)`.
    pub phase_count: usize,
    pub seed: u64,
}

/// One sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub snr: f64,
    pub snr_db: f64,
    /// Shot-noise over electronic-noise power measured from the traces.
    pub snr_measured: f64,
    pub alpha_prime: f64,
    pub q_plus_sq: f64,
    pub q_minus_sq: f64,
    pub eta_inferred: f64,
    pub eta_sigma: f64,
    pub eta_predicted: f64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(invalid("r", "a positive squeezing parameter is needed to infer efficiency"));
        }
        if !(self.eta_optical > 0.0 && self.eta_optical <= 1.0) {
            return Err(invalid("eta_optical", format!("must lie in (0, 1], got {}", self.eta_optical)));
        }
        if let Some(s) = self.snrs.iter().find(|s| !(**s > 1.0)) {
            return Err(invalid("snr", format!("each SNR must exceed 1, got {s}")));
        }
        if self.phase_count < 3 {
            return Err(invalid("phase_count", "need at least 3 phases"));
        }
        if self.n < 100 * self.phase_count {
            return Err(invalid("n", "need at least 100 samples per phase"));
        }
        Ok(())
    }
}

/// Predicted efficiency `η_optical·(S − 1)/S`.
pub fn predicted_efficiency(eta_optical: f64, snr: f64) -> f64 {
    if snr.is_infinite() {
        eta_optical
    } else {
        eta_optical * (snr - 1.0) / snr
    }
}

/// Runs the three-trace protocol once and infers the efficiency.
///
/// Electronic-noise, shot-noise and signal traces of `n` samples each are
/// acquired; the shot-noise trace gives `α'`, the rescaled signal trace is
/// split by phase, and the extremes of the variance curve give `η`.
pub fn measure_efficiency(
    state: &GaussianState,
    detector: &DetectorModel,
    n: usize,
    phase_count: usize,
    seed: u64,
) -> Result<SweepPoint> {
    let schedule = PhaseSchedule::uniform_half_turn(phase_count);
    let en = acquire_trace(detector, None, TraceKind::ElectronicNoise, &schedule, n, seed)?;
    let shot = acquire_trace(detector, None, TraceKind::ShotNoise, &schedule, n, seed)?;
    let signal = acquire_trace(detector, Some(state), TraceKind::Signal, &schedule, n, seed)?;

    let cal = calibrate(shot.samples())?;
    let snr_measured = match estimate_snr(&shot, &en) {
        Ok(s) => s,
        Err(Error::Degenerate(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let rel = 2.0 * cal.std_error / cal.alpha_prime;
    let quadratures = rescale_trace(&signal, cal.alpha_prime)?;
    let moments = group_by_phase(&quadratures, signal.phases(), PhaseGrouping::Exact)?
        .iter()
        .map(|g| PhaseMoments::from_samples(g.theta, &g.samples))
        .collect::<Result<Vec<_>>>()?;
    let snr = detector.snr_or_infinite();
    let report = efficiency_from_moments(&moments, rel * rel, linear_to_db(snr))?;
    Ok(SweepPoint {
        snr,
        snr_db: report.snr_db,
        snr_measured,
        alpha_prime: cal.alpha_prime,
        q_plus_sq: report.q_plus_sq,
        q_minus_sq: report.q_minus_sq,
        eta_inferred: report.eta,
        eta_sigma: report.eta_sigma,
        eta_predicted: f64::NAN,
    })
}

/// Efficiency inferred at each SNR of the sweep, with the prediction
/// `η_optical·(S − 1)/S` alongside. Points run in parallel, each on its
/// own derived seed, and come back in input order.
pub fn snr_sweep_experiment(config: &SweepConfig) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    let pure = GaussianState::squeezed_vacuum(config.r, 0.0)?;
    let state = apply_loss_cov(&pure, config.eta_optical)?;
    config
        .snrs
        .par_iter()
        .enumerate()
        .map(|(i, &snr)| {
            let detector = DetectorModel::from_snr(config.alpha, snr)?;
            let seed = derive_seed(config.seed, i as u64);
            let mut point = measure_efficiency(&state, &detector, config.n, config.phase_count, seed)?;
            point.eta_predicted = predicted_efficiency(config.eta_optical, snr);
            Ok(point)
        })
        .collect()
}
