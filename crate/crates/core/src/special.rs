//! Faddeeva function `w(z) = exp(−z²)·erfc(−iz)` in the upper half plane.
//!
//! Weideman's rational expansion: `w` is written as a polynomial in the
//! Möbius variable `(L + iz)/(L − iz)` whose coefficients are the Fourier
//! coefficients of `exp(−t²)(L² + t²)` under `t = L·tan(θ/2)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::Complex;

const TERMS: usize = 64;

struct Expansion {
    l: f64,
    coeffs: [f64; TERMS],
}

fn expansion() -> &'static Expansion {
    static CELL: OnceLock<Expansion> = OnceLock::new();
    CELL.get_or_init(|| {
        let m = 2 * TERMS;
        let m2 = 2 * m;
        let l = (TERMS as f64 / std::f64::consts::SQRT_2).sqrt();
        let samples: Vec<(f64, f64)> = (-(m as i64) + 1..m as i64)
            .map(|k| {
                let t = l * (k as f64 * PI / m as f64 / 2.0).tan();
                (k as f64, (-t * t).exp() * (l * l + t * t))
            })
            .collect();
        let mut coeffs = [0.0; TERMS];
        for (n, c) in coeffs.iter_mut().enumerate() {
            let n = (n + 1) as f64;
            let sum: f64 = samples
                .iter()
                .map(|&(k, f)| f * (PI * n * k / m as f64).cos())
                .sum();
            *c = sum / m2 as f64;
        }
        Expansion { l, coeffs }
    })
}

/// Faddeeva function for `Im z >= 0`.
pub fn faddeeva(z: Complex<f64>) -> Complex<f64> {
    debug_assert!(z.im >= 0.0, "faddeeva is evaluated in the upper half plane");
    let e = expansion();
    let i = Complex::new(0.0, 1.0);
    let denom = e.l - i * z;
    let zz = (e.l + i * z) / denom;
    let mut p = Complex::new(0.0, 0.0);
    for &c in e.coeffs.iter().rev() {
        p = p * zz + c;
    }
    2.0 * p / (denom * denom) + (1.0 / PI.sqrt()) / denom
}
