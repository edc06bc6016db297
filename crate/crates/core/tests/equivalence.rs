//! Electronic noise after vacuum calibration acts as optical loss.

use quadtomo::channels::{
    apply_en_wigner, apply_loss_cov, apply_loss_wigner, equivalent_efficiency_from_gain,
    equivalent_efficiency_from_snr, snr,
};
use quadtomo::{DetectorModel, GaussianState, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gain_and_snr_forms_agree() {
    for &(a, t) in &[(1.0, 1.0), (2.5, 0.1), (0.3, 4.0)] {
        let d = DetectorModel::new(a, t).unwrap();
        let from_snr = equivalent_efficiency_from_snr(snr(&d).unwrap()).unwrap();
        assert!((from_snr - equivalent_efficiency_from_gain(&d)).abs() < 1e-14);
    }
}

/// Calibrated quadrature variance after EN equals the lossy variance.
#[test]
fn variance_level_equivalence() {
    let state = GaussianState::squeezed_vacuum(0.9, 0.4).unwrap();
    let d = DetectorModel::new(1.2, 0.7).unwrap();
    let eta = equivalent_efficiency_from_gain(&d);
    let lossy = apply_loss_cov(&state, eta).unwrap();
    for k in 0..10 {
        let theta = 0.3 * k as f64;
        let v = state.marginal(theta).variance;
        let calibrated = (d.alpha * d.alpha * v + d.noise_variance()) / (d.alpha_prime() * d.alpha_prime());
        assert!((calibrated - lossy.marginal(theta).variance).abs() < 1e-14);
    }
}

#[test]
fn grid_level_equivalence_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..4 {
        let r = rng.random_range(0.0..1.2);
        let phi = rng.random_range(0.0..std::f64::consts::PI);
        let state = GaussianState::squeezed_vacuum(r, phi)
            .unwrap()
            .displaced([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .unwrap();
        let spec = GridSpec::for_state(&state, 128).unwrap();
        let w = state.wigner_grid(&spec).unwrap();
        let s = 10f64.powf(rng.random_range(0.2..3.0));
        let d = DetectorModel::from_snr(rng.random_range(0.5..3.0), s).unwrap();
        let en = apply_en_wigner(&w, &d).unwrap();
        let ol = apply_loss_wigner(&w, equivalent_efficiency_from_snr(s).unwrap()).unwrap();
        let diff = en.max_rel_diff(&ol).unwrap();
        assert!(diff < 1e-9, "S = {s}: {diff:e}");
    }
}

#[test]
fn grid_loss_matches_analytic_lossy_state() {
    let state = GaussianState::squeezed_vacuum(0.8, 0.2).unwrap().displaced([0.5, -0.3]).unwrap();
    let spec = GridSpec::for_state(&state, 160).unwrap();
    let w = state.wigner_grid(&spec).unwrap();
    for &eta in &[0.9, 0.5, 0.1] {
        let numeric = apply_loss_wigner(&w, eta).unwrap();
        let exact = apply_loss_cov(&state, eta).unwrap().wigner_grid(&spec).unwrap();
        let err = numeric.max_rel_diff(&exact).unwrap();
        assert!(err < 1e-6, "eta = {eta}: {err:e}");
    }
}

#[test]
fn noiseless_detector_is_identity() {
    let state = GaussianState::squeezed_vacuum(0.5, 0.0).unwrap();
    let spec = GridSpec::for_state(&state, 64).unwrap();
    let w = state.wigner_grid(&spec).unwrap();
    let d = DetectorModel::new(1.0, 0.0).unwrap();
    assert_eq!(apply_en_wigner(&w, &d).unwrap(), w);
    assert_eq!(equivalent_efficiency_from_gain(&d), 1.0);
}

fn quadratic_form(cov: [[f64; 2]; 2], theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    cov[0][0] * c * c + 2.0 * cov[0][1] * c * s + cov[1][1] * s * s
}

#[test]
fn lossy_grid_marginals_match_covariance_model() {
    let state = GaussianState::squeezed_vacuum(1.0, 0.0).unwrap();
    let spec = GridSpec::for_state(&state, 256).unwrap();
    let w = state.wigner_grid(&spec).unwrap();
    let expected = apply_loss_cov(&state, 0.5).unwrap();
    let by_loss = apply_loss_wigner(&w, 0.5).unwrap();
    let by_noise = apply_en_wigner(&w, &DetectorModel::new(1.0, 1.0).unwrap()).unwrap();
    for out in [&by_loss, &by_noise] {
        let m = out.moments();
        assert!((m.integral - 1.0).abs() < 1e-5, "{}", m.integral);
        for k in 0..6 {
            let t = k as f64 * 0.5;
            let (got, want) = (quadratic_form(m.cov, t), quadratic_form(expected.cov(), t));
            assert!((got - want).abs() < 1e-4, "θ = {t}: {got} vs {want}");
        }
    }
}

#[test]
fn calibrated_vacuum_is_unchanged_by_noise() {
    let vac = GaussianState::vacuum();
    let spec = GridSpec::for_state(&vac, 128).unwrap();
    let w = vac.wigner_grid(&spec).unwrap();
    for &(a, t) in &[(1.0, 1.0), (0.3, 2.0), (3.0, 0.01)] {
        let out = apply_en_wigner(&w, &DetectorModel::new(a, t).unwrap()).unwrap();
        assert!(out.max_rel_diff(&w).unwrap() < 1e-6);
    }
}
