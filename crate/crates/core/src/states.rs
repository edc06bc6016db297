//! Gaussian states of a single optical mode.
//!
//! Quadratures are normalized so the vacuum has `<X²> = 1/2`; the vacuum
//! marginal is `exp(−X²)/√π` and `W_vac(0, 0) = 1/π`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, SymmetricEigen, Vector2};

use crate::error::{invalid, Error, Result};
use crate::grid::{GridSpec, WignerGrid};

/// Slack allowed below the `det(cov) ≥ 1/4` uncertainty bound.
pub const HEISENBERG_TOL: f64 = 1e-12;

/// Vacuum quadrature variance.
pub const VACUUM_VARIANCE: f64 = 0.5;

/// Mean vector and quadrature covariance of a Gaussian state.
///
/// Constructors guarantee a symmetric, positive-definite covariance that
/// satisfies the uncertainty bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
}

impl GaussianState {
    /// Builds a state from its mean and the three independent covariance
    /// entries.
    pub fn new(mean: [f64; 2], var_x: f64, cov_xp: f64, var_p: f64) -> Result<Self> {
        if !(mean.iter().all(|v| v.is_finite())
            && var_x.is_finite()
            && cov_xp.is_finite()
            && var_p.is_finite())
        {
            return Err(invalid("state", "moments must be finite"));
        }
        let det = var_x * var_p - cov_xp * cov_xp;
        if var_x <= 0.0 || det <= 0.0 {
            return Err(Error::SingularCovariance { det });
        }
        if det < 0.25 - HEISENBERG_TOL {
            return Err(Error::BelowUncertaintyBound { det });
        }
        Ok(Self {
            mean: Vector2::new(mean[0], mean[1]),
            cov: Matrix2::new(var_x, cov_xp, cov_xp, var_p),
        })
    }

    pub fn vacuum() -> Self {
        Self {
            mean: Vector2::zeros(),
            cov: Matrix2::from_diagonal_element(VACUUM_VARIANCE),
        }
    }

    /// Pure squeezed vacuum with variance `e^{−2r}/2` along the axis at
    /// phase `phi` and `e^{2r}/2` along the conjugate axis.
    pub fn squeezed_vacuum(r: f64, phi: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(invalid("r", format!("squeezing parameter must be >= 0, got {r}")));
        }
        if !phi.is_finite() {
            return Err(invalid("phi", "must be finite"));
        }
        let squeezed = (-2.0 * r).exp() / 2.0;
        let anti = (2.0 * r).exp() / 2.0;
        let (s, c) = phi.sin_cos();
        let var_x = squeezed * c * c + anti * s * s;
        let var_p = squeezed * s * s + anti * c * c;
        let cov_xp = (squeezed - anti) * s * c;
        Ok(Self {
            mean: Vector2::zeros(),
            cov: Matrix2::new(var_x, cov_xp, cov_xp, var_p),
        })
    }

    /// Same covariance, shifted mean.
    pub fn displaced(self, mean: [f64; 2]) -> Result<Self> {
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(invalid("mean", "must be finite"));
        }
        Ok(Self {
            mean: Vector2::new(mean[0], mean[1]),
            ..self
        })
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.mean[0], self.mean[1]]
    }

    pub fn cov(&self) -> [[f64; 2]; 2] {
        [
            [self.cov[(0, 0)], self.cov[(0, 1)]],
            [self.cov[(1, 0)], self.cov[(1, 1)]],
        ]
    }

    pub(crate) fn mean_vec(&self) -> Vector2<f64> {
        self.mean
    }

    pub(crate) fn cov_matrix(&self) -> Matrix2<f64> {
        self.cov
    }

    pub(crate) fn from_parts_unchecked(mean: Vector2<f64>, cov: Matrix2<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn det(&self) -> f64 {
        self.cov[(0, 0)] * self.cov[(1, 1)] - self.cov[(0, 1)] * self.cov[(1, 0)]
    }

    /// Covariance eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let eig = SymmetricEigen::new(self.cov).eigenvalues;
        let (a, b) = (eig[0], eig[1]);
        if a <= b {
            [a, b]
        } else {
            [b, a]
        }
    }

    /// Gaussian marginal of the quadrature `X cosθ + P sinθ`.
    pub fn marginal(&self, theta: f64) -> MarginalDensity {
        let u = Vector2::new(theta.cos(), theta.sin());
        MarginalDensity {
            theta,
            mean: u.dot(&self.mean),
            variance: (u.transpose() * self.cov * u)[(0, 0)],
        }
    }

    /// `W(x, p) = exp(−½ dᵀ Σ⁻¹ d) / (2π √det Σ)` with `d = (x, p) − mean`.
    pub fn wigner_at(&self, x: f64, p: f64) -> f64 {
        let det = self.det();
        let dx = x - self.mean[0];
        let dp = p - self.mean[1];
        let q = (self.cov[(1, 1)] * dx * dx - 2.0 * self.cov[(0, 1)] * dx * dp
            + self.cov[(0, 0)] * dp * dp)
            / det;
        (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
    }

    /// Samples the Wigner function at the nodes of `spec`.
    pub fn wigner_grid(&self, spec: &GridSpec) -> Result<WignerGrid> {
        let det = self.det();
        if !(det > 0.0 && self.cov[(0, 0)] > 0.0) {
            return Err(Error::SingularCovariance { det });
        }
        WignerGrid::from_fn(*spec, |x, p| self.wigner_at(x, p))
    }

    /// Half-width used by [`GridSpec::for_state`]: `max(6, 6·√(2·λ_max))`
    /// plus the largest mean offset.
    pub fn default_half_width(&self) -> f64 {
        let lambda = self.eigenvalues()[1];
        let spread = 6.0f64.max(6.0 * (2.0 * lambda).sqrt());
        spread + self.mean[0].abs().max(self.mean[1].abs())
    }
}

impl GridSpec {
    /// Square grid centred on the origin, wide enough that the mass of
    /// `state` outside it is negligible.
    pub fn for_state(state: &GaussianState, n: usize) -> Result<Self> {
        Self::square(state.default_half_width(), n)
    }
}

/// Gaussian density of the quadrature measured at phase `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalDensity {
    pub theta: f64,
    pub mean: f64,
    pub variance: f64,
}

impl MarginalDensity {
    pub fn pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        (-d * d / (2.0 * self.variance)).exp() / (2.0 * PI * self.variance).sqrt()
    }
}
