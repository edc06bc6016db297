//! Optical loss, detector electronic noise, vacuum calibration, and the
//! equivalence between them.
//!
//! A detector with gain `α` and Gaussian electronic noise of density
//! `exp(−V²/T)/√(πT)` (variance `T/2`) that is calibrated on the vacuum
//! reads `α' = √(α² + T)` volts per quadrature unit. Rescaling by `α'`
//! instead of `α` shrinks the quadratures by `α/α'`, and the noise becomes
//! a Gaussian blur of squared width `T/α'²`. That is exactly an optical
//! attenuator with transmission `η_eq = α²/(α² + T) = (S − 1)/S`.

use std::f64::consts::PI;

use nalgebra::{Complex, Matrix2};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::WignerGrid;
use crate::special::faddeeva;
use crate::states::{GaussianState, MarginalDensity, VACUUM_VARIANCE};

/// Homodyne detector gain and electronic-noise parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// Volts per quadrature unit.
    pub alpha: f64,
    /// Electronic-noise parameter `T` in volts²; the noise variance is `T/2`.
    pub t_noise: f64,
}

impl DetectorModel {
    pub fn new(alpha: f64, t_noise: f64) -> Result<Self> {
        let d = Self { alpha, t_noise };
        d.validate()?;
        Ok(d)
    }

    /// Detector with gain `alpha` whose vacuum-to-noise power ratio is `snr`.
    /// `snr = ∞` gives a noiseless detector.
    pub fn from_snr(alpha: f64, snr: f64) -> Result<Self> {
        if !(snr > 1.0) {
            return Err(invalid("snr", format!("must exceed 1, got {snr}")));
        }
        let t_noise = if snr.is_infinite() {
            0.0
        } else {
            alpha * alpha / (snr - 1.0)
        };
        Self::new(alpha, t_noise)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.t_noise >= 0.0 && self.t_noise.is_finite()) {
            return Err(invalid("t_noise", format!("must be >= 0, got {}", self.t_noise)));
        }
        Ok(())
    }

    /// Calibration factor the vacuum procedure reports: `√(α² + T)`.
    pub fn alpha_prime(&self) -> f64 {
        (self.alpha * self.alpha + self.t_noise).sqrt()
    }

    /// Electronic-noise variance in volts².
    pub fn noise_variance(&self) -> f64 {
        self.t_noise / 2.0
    }

    /// Vacuum-to-electronic-noise power ratio `S = (α² + T)/T`, or `∞`
    /// for a noiseless detector.
    pub fn snr_or_infinite(&self) -> f64 {
        if self.t_noise == 0.0 {
            f64::INFINITY
        } else {
            (self.alpha * self.alpha + self.t_noise) / self.t_noise
        }
    }
}

/// `S = (α² + T)/T`. A noiseless detector has no finite SNR and is an error.
pub fn snr(detector: &DetectorModel) -> Result<f64> {
    detector.validate()?;
    if detector.t_noise == 0.0 {
        return Err(invalid("t_noise", "zero electronic noise: SNR is infinite"));
    }
    Ok(detector.snr_or_infinite())
}

/// `η_eq = α²/(α² + T)`.
pub fn equivalent_efficiency_from_gain(detector: &DetectorModel) -> f64 {
    let a2 = detector.alpha * detector.alpha;
    a2 / (a2 + detector.t_noise)
}

/// `η_eq = (S − 1)/S` for a linear SNR `S > 1`; `S = ∞` gives 1.
pub fn equivalent_efficiency_from_snr(s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(invalid(
            "snr",
            format!("S = {s}: electronic noise at or above the vacuum level leaves no efficiency"),
        ));
    }
    if s.is_infinite() {
        return Ok(1.0);
    }
    Ok((s - 1.0) / s)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(s: f64) -> f64 {
    10.0 * s.log10()
}

/// Distribution of the detector output for vacuum input, in volts:
/// zero mean, variance `(α² + T)/2`.
pub fn en_vacuum_distribution(detector: &DetectorModel) -> MarginalDensity {
    MarginalDensity {
        theta: 0.0,
        mean: 0.0,
        variance: (detector.alpha * detector.alpha + detector.t_noise) / 2.0,
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid("eta", format!("transmission must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

/// Beam-splitter loss on a Gaussian state: `Σ → ηΣ + (1 − η)/2·I`,
/// `mean → √η·mean`.
pub fn apply_loss_cov(state: &GaussianState, eta: f64) -> Result<GaussianState> {
    check_eta(eta)?;
    let cov = state.cov_matrix() * eta
        + Matrix2::from_diagonal_element((1.0 - eta) * VACUUM_VARIANCE);
    let mean = state.mean_vec() * eta.sqrt();
    Ok(GaussianState::from_parts_unchecked(mean, cov))
}

/// Loss applied to a gridded Wigner function.
///
/// `η = 1` returns a copy and `η = 0` the vacuum sampled on the same grid;
/// in between the grid is shrunk by `√η` and blurred by a Gaussian of
/// squared width `1 − η` (see [`shrink_and_blur`]).
pub fn apply_loss_wigner(grid: &WignerGrid, eta: f64) -> Result<WignerGrid> {
    check_eta(eta)?;
    if eta == 1.0 {
        return Ok(grid.clone());
    }
    if eta == 0.0 {
        return GaussianState::vacuum().wigner_grid(grid.spec());
    }
    shrink_and_blur(grid, eta.sqrt(), 1.0 - eta)
}

/// Wigner function reconstructed through a noisy detector calibrated on
/// the vacuum: arguments rescaled by `α'/α`, blurred with squared width
/// `T/α'²`. A noiseless detector returns a copy.
pub fn apply_en_wigner(grid: &WignerGrid, detector: &DetectorModel) -> Result<WignerGrid> {
    detector.validate()?;
    if detector.t_noise == 0.0 {
        return Ok(grid.clone());
    }
    let ap = detector.alpha_prime();
    shrink_and_blur(grid, detector.alpha / ap, detector.t_noise / (ap * ap))
}

/// Evaluates
///
/// `W'(v) = 1/(π·w) ∫ W(u) exp(−|v − s·u|²/w) d²u`
///
/// on the nodes of `grid`, for shrink factor `s ∈ (0, 1]` and squared
/// kernel width `w > 0`. This is the loss integral after the change of
/// variables `u = v'/s`.
///
/// The integral over `u` runs over the band-limited (sinc) interpolant of
/// the samples, which makes the per-axis weights
///
/// `A(x, u) = h/(2π) ∫_{|k| < π/(h·s)} exp(ik(x − s·u) − w·k²/4) dk`,
///
/// closed-form through the Faddeeva function. Wide kernels reduce to the
/// sampled Gaussian; kernels narrower than a cell still give the exact
/// rescaled interpolant instead of aliasing.
pub fn shrink_and_blur(grid: &WignerGrid, shrink: f64, width_sq: f64) -> Result<WignerGrid> {
    if !(shrink > 0.0 && shrink <= 1.0) {
        return Err(invalid("shrink", format!("must lie in (0, 1], got {shrink}")));
    }
    if !(width_sq > 0.0 && width_sq.is_finite()) {
        return Err(invalid("width", format!("must be positive, got {width_sq}")));
    }
    let spec = *grid.spec();
    let ax = axis_kernel(&spec.x_nodes(), spec.dx(), shrink, width_sq);
    let ap = if spec.p_nodes() == spec.x_nodes() {
        ax.clone()
    } else {
        axis_kernel(&spec.p_nodes(), spec.dp(), shrink, width_sq)
    };
    let out = ax.dot(grid.values()).dot(&ap.t());
    WignerGrid::new(spec, out)
}

fn axis_kernel(nodes: &[f64], h: f64, shrink: f64, width_sq: f64) -> Array2<f64> {
    let n = nodes.len();
    let a = width_sq / 4.0;
    let sqrt_a = a.sqrt();
    let cutoff = PI / (h * shrink);
    let band_damping = (-a * cutoff * cutoff).exp();
    let gauss_norm = h / (PI * width_sq).sqrt();

    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let x = nodes[i];
        for (j, out) in row.iter_mut().enumerate() {
            let d = x - shrink * nodes[j];
            let mut v = (-d * d / width_sq).exp();
            if band_damping > 0.0 {
                let z = Complex::new(d / (2.0 * sqrt_a), sqrt_a * cutoff);
                let phase = Complex::new(0.0, cutoff * d).exp();
                v -= band_damping * (phase * faddeeva(z)).re;
            }
            *out = gauss_norm * v;
        }
    });
    Array2::from_shape_vec((n, n), data).expect("square kernel")
}

/// Vacuum calibration result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    /// `√(2·⟨V₀²⟩)` in volts per quadrature unit.
    pub alpha_prime: f64,
    /// Standard error of `alpha_prime` from the sample fourth moment.
    pub std_error: f64,
    pub n: usize,
}

/// `α' = √(2⟨V₀²⟩)` from vacuum samples in volts.
pub fn calibration_factor(vacuum_samples: &[f64]) -> Result<f64> {
    Ok(calibrate(vacuum_samples)?.alpha_prime)
}

/// [`calibration_factor`] together with its standard error.
pub fn calibrate(vacuum_samples: &[f64]) -> Result<Calibration> {
    let n = vacuum_samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "calibration needs at least 2 vacuum samples, got {n}"
        )));
    }
    if vacuum_samples.iter().any(|v| !v.is_finite()) {
        return Err(invalid("samples", "non-finite vacuum sample"));
    }
    let nf = n as f64;
    let ms = vacuum_samples.iter().map(|v| v * v).sum::<f64>() / nf;
    if ms == 0.0 {
        return Err(Error::Degenerate("vacuum trace has zero power".into()));
    }
    let var_sq = vacuum_samples
        .iter()
        .map(|v| {
            let d = v * v - ms;
            d * d
        })
        .sum::<f64>()
        / (nf - 1.0);
    let alpha_prime = (2.0 * ms).sqrt();
    // d√(2m)/dm = 1/√(2m)
    let std_error = (var_sq / nf).sqrt() / alpha_prime;
    Ok(Calibration {
        alpha_prime,
        std_error,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn detector_validation() {
        assert!(DetectorModel::new(0.0, 1.0).is_err());
        assert!(DetectorModel::new(1.0, -0.1).is_err());
        assert!(DetectorModel::new(f64::NAN, 1.0).is_err());
        let d = DetectorModel::new(2.0, 1.0).unwrap();
        assert_eq!(d.alpha_prime(), 5f64.sqrt());
        assert!(d.alpha_prime() >= d.alpha);
    }

    #[test]
    fn detector_json_shape() {
        let d = DetectorModel::new(1.5, 0.25).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"alpha":1.5,"t_noise":0.25}"#);
        assert_eq!(serde_json::from_str::<DetectorModel>(&s).unwrap(), d);
        assert!(serde_json::from_str::<DetectorModel>(r#"{"alpha":1,"t_noise":1,"x":2}"#).is_err());
    }

    #[test]
    fn vacuum_distribution_variance() {
        let var = |a, t| en_vacuum_distribution(&DetectorModel::new(a, t).unwrap()).variance;
        assert_eq!(var(1.0, 0.0), 0.5);
        assert_eq!(var(1.0, 1.0), 1.0);
        assert_eq!(var(2.0, 1.0), 2.5);
    }

    #[test]
    fn calibration_exact_inputs() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { h } else { -h }).collect();
        assert!((calibration_factor(&s).unwrap() - 1.0).abs() < 1e-15);
        let s: Vec<f64> = (0..10).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((calibration_factor(&s).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn calibration_rejects_degenerate_input() {
        assert!(matches!(calibration_factor(&[]), Err(Error::InsufficientData(_))));
        assert!(matches!(calibration_factor(&[1.0]), Err(Error::InsufficientData(_))));
        assert!(matches!(calibration_factor(&[0.0; 5]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn efficiency_and_snr_values() {
        let d = |a, t| DetectorModel::new(a, t).unwrap();
        assert_eq!(equivalent_efficiency_from_gain(&d(1.0, 0.0)), 1.0);
        assert_eq!(equivalent_efficiency_from_gain(&d(1.0, 1.0)), 0.5);
        assert!((equivalent_efficiency_from_gain(&d(1.0, 1.0 / 3.0)) - 0.75).abs() < 1e-15);

        assert_eq!(snr(&d(1.0, 1.0)).unwrap(), 2.0);
        assert!((linear_to_db(2.0) - 3.0103).abs() < 1e-4);
        assert!((snr(&d(1.0, 1.0 / 3.0)).unwrap() - 4.0).abs() < 1e-14);
        assert!(snr(&d(1.0, 0.0)).is_err());

        let mut last = 1.0;
        for k in 1..20 {
            let s = snr(&d(0.2 * k as f64, 0.7)).unwrap();
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn efficiency_from_snr_quoted_values() {
        assert_eq!(equivalent_efficiency_from_snr(4.0).unwrap(), 0.75);
        assert!((equivalent_efficiency_from_snr(db_to_linear(14.0)).unwrap() - 0.9602).abs() < 5e-5);
        assert!((equivalent_efficiency_from_snr(100.0).unwrap() - 0.99).abs() < 1e-15);
        assert!((equivalent_efficiency_from_snr(db_to_linear(17.0)).unwrap() - 0.98).abs() < 5e-4);
        assert_eq!(equivalent_efficiency_from_snr(f64::INFINITY).unwrap(), 1.0);
        assert!(equivalent_efficiency_from_snr(1.0).is_err());
        assert!(equivalent_efficiency_from_snr(0.5).is_err());
    }

    #[test]
    fn from_snr_round_trips() {
        let d = DetectorModel::from_snr(1.3, 10.0).unwrap();
        assert!((snr(&d).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(DetectorModel::from_snr(1.0, f64::INFINITY).unwrap().t_noise, 0.0);
        assert!(DetectorModel::from_snr(1.0, 1.0).is_err());
    }

    #[test]
    fn loss_on_covariance() {
        let s = GaussianState::squeezed_vacuum(1.0, 0.0).unwrap();
        assert_eq!(apply_loss_cov(&s, 1.0).unwrap(), s);
        assert_eq!(apply_loss_cov(&s, 0.0).unwrap().cov(), GaussianState::vacuum().cov());
        let half = apply_loss_cov(&s, 0.5).unwrap().cov();
        assert!((half[0][0] - 0.2838338208).abs() < 1e-10);
        assert!((half[1][1] - 2.0972640247).abs() < 1e-10);
        assert!(apply_loss_cov(&s, 1.1).is_err());
        assert!(apply_loss_cov(&s, -0.1).is_err());
    }

    #[test]
    fn loss_endpoints_on_grid() {
        let s = GaussianState::squeezed_vacuum(0.5, 0.3).unwrap();
        let spec = GridSpec::square(6.0, 32).unwrap();
        let g = s.wigner_grid(&spec).unwrap();
        assert_eq!(apply_loss_wigner(&g, 1.0).unwrap(), g);
        let vac = GaussianState::vacuum().wigner_grid(&spec).unwrap();
        assert_eq!(apply_loss_wigner(&g, 0.0).unwrap(), vac);
        assert!(apply_loss_wigner(&g, 1.5).is_err());
    }

    #[test]
    fn vacuum_is_a_fixed_point_of_loss() {
        let spec = GridSpec::square(6.0, 128).unwrap();
        let vac = GaussianState::vacuum().wigner_grid(&spec).unwrap();
        let out = apply_loss_wigner(&vac, 0.5).unwrap();
        assert!(vac.max_rel_diff(&out).unwrap() < 1e-6);
        let d = DetectorModel::new(0.7, 2.3).unwrap();
        let out = apply_en_wigner(&vac, &d).unwrap();
        assert!(vac.max_rel_diff(&out).unwrap() < 1e-6);
    }

    #[test]
    fn noiseless_detector_is_identity() {
        let spec = GridSpec::square(6.0, 16).unwrap();
        let g = GaussianState::vacuum().wigner_grid(&spec).unwrap();
        let d = DetectorModel::new(1.0, 0.0).unwrap();
        assert_eq!(apply_en_wigner(&g, &d).unwrap(), g);
    }

    // Per-axis weight computed by brute-force quadrature over k.
    fn kernel_oracle(d: f64, h: f64, shrink: f64, width_sq: f64) -> f64 {
        let cutoff = PI / (h * shrink);
        let n = 200_000;
        let dk = 2.0 * cutoff / n as f64;
        let mut s = 0.0;
        for m in 0..n {
            let k = -cutoff + (m as f64 + 0.5) * dk;
            s += (k * d).cos() * (-width_sq * k * k / 4.0).exp();
        }
        h / (2.0 * PI) * s * dk
    }

    #[test]
    fn band_limited_kernel_matches_quadrature() {
        let nodes: Vec<f64> = (0..12).map(|i| -1.1 + 0.2 * i as f64).collect();
        for &(shrink, width) in &[(0.9995f64, 1e-3), (0.8, 0.36), (0.3, 0.91)] {
            let k = axis_kernel(&nodes, 0.2, shrink, width);
            for &(i, j) in &[(0, 0), (3, 7), (11, 2), (5, 5)] {
                let d = nodes[i] - shrink * nodes[j];
                let want = kernel_oracle(d, 0.2, shrink, width);
                assert!(
                    (k[[i, j]] - want).abs() < 1e-9,
                    "shrink {shrink}, width {width}, ({i},{j}): {} vs {want}",
                    k[[i, j]]
                );
            }
        }
    }
}
