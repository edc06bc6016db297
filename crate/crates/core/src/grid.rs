//! Rectangular phase-space grids holding sampled Wigner functions.
//!
//! Samples sit at cell centres: node `i` of an axis spanning `[lo, hi]`
//! with `n` cells is at `lo + (i + 1/2)·(hi − lo)/n`. Integrals use the
//! trapezoid rule over those nodes.

use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Smallest number of cells allowed along either axis.
pub const MIN_CELLS: usize = 8;

/// Bounds and resolution of a phase-space grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, p_min: f64, p_max: f64, nx: usize, ny: usize) -> Result<Self> {
        let spec = Self {
            x_min,
            x_max,
            p_min,
            p_max,
            nx,
            ny,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Square grid `[-half_width, half_width]²` with `n` cells per axis.
    pub fn square(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, -half_width, half_width, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.p_min, self.p_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("grid", "bounds must be finite"));
        }
        if self.x_max <= self.x_min {
            return Err(invalid("grid", "x_max must exceed x_min"));
        }
        if self.p_max <= self.p_min {
            return Err(invalid("grid", "p_max must exceed p_min"));
        }
        if self.nx < MIN_CELLS || self.ny < MIN_CELLS {
            return Err(invalid(
                "grid",
                format!("need at least {MIN_CELLS} cells per axis, got {}x{}", self.nx, self.ny),
            ));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.ny as f64
    }

    pub fn x_node(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn p_node(&self, j: usize) -> f64 {
        self.p_min + (j as f64 + 0.5) * self.dp()
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x_node(i)).collect()
    }

    pub fn p_nodes(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.p_node(j)).collect()
    }
}

/// Trapezoid weights for `n` equally spaced nodes with spacing `h`.
pub(crate) fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    w
}

/// Normalization, mean vector and covariance of a gridded distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMoments {
    pub integral: f64,
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

/// A Wigner function sampled on a [`GridSpec`].
///
/// `values[[i, j]]` is the value at `(x_node(i), p_node(j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    spec: GridSpec,
    values: Array2<f64>,
}

impl WignerGrid {
    pub fn new(spec: GridSpec, values: Array2<f64>) -> Result<Self> {
        spec.validate()?;
        if values.dim() != (spec.nx, spec.ny) {
            return Err(Error::Inconsistent(format!(
                "values have shape {:?}, grid expects ({}, {})",
                values.dim(),
                spec.nx,
                spec.ny
            )));
        }
        Ok(Self { spec, values })
    }

    /// Samples `f(x, p)` at every node. Rows are filled in parallel.
    pub fn from_fn<F>(spec: GridSpec, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        use rayon::prelude::*;

        spec.validate()?;
        let p_nodes = spec.p_nodes();
        let mut data = vec![0.0; spec.nx * spec.ny];
        data.par_chunks_mut(spec.ny).enumerate().for_each(|(i, row)| {
            let x = spec.x_node(i);
            for (v, &p) in row.iter_mut().zip(&p_nodes) {
                *v = f(x, p);
            }
        });
        let values = Array2::from_shape_vec((spec.nx, spec.ny), data)
            .expect("buffer length matches grid shape");
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Trapezoid-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        self.moments().integral
    }

    /// Integral, mean and covariance of the gridded function, normalized
    /// by its own integral.
    pub fn moments(&self) -> GridMoments {
        self.moments_where(|_, _| true)
    }

    /// Moments restricted to the largest disk inscribed in the grid and
    /// centred on it.
    ///
    /// Back-projection from few phases leaves streaks that grow towards
    /// the corners; x²-weighted sums over the full square pick them up,
    /// sums over the disk largely do not.
    pub fn disk_moments(&self) -> GridMoments {
        let s = &self.spec;
        let (cx, cp) = (0.5 * (s.x_min + s.x_max), 0.5 * (s.p_min + s.p_max));
        let (rx, rp) = (0.5 * (s.x_max - s.x_min), 0.5 * (s.p_max - s.p_min));
        self.moments_where(|x, p| {
            let (u, v) = ((x - cx) / rx, (p - cp) / rp);
            u * u + v * v <= 1.0
        })
    }

    fn moments_where(&self, keep: impl Fn(f64, f64) -> bool) -> GridMoments {
        let wx = trapezoid_weights(self.spec.nx, self.spec.dx());
        let wp = trapezoid_weights(self.spec.ny, self.spec.dp());
        let xs = self.spec.x_nodes();
        let ps = self.spec.p_nodes();

        let mut s = [0.0f64; 6]; // 1, x, p, xx, xp, pp
        for (i, row) in self.values.outer_iter().enumerate() {
            let x = xs[i];
            for (j, &v) in row.iter().enumerate() {
                let p = ps[j];
                if !keep(x, p) {
                    continue;
                }
                let w = wx[i] * wp[j] * v;
                s[0] += w;
                s[1] += w * x;
                s[2] += w * p;
                s[3] += w * x * x;
                s[4] += w * x * p;
                s[5] += w * p * p;
            }
        }
        let norm = s[0];
        let mx = s[1] / norm;
        let mp = s[2] / norm;
        let cxx = s[3] / norm - mx * mx;
        let cxp = s[4] / norm - mx * mp;
        let cpp = s[5] / norm - mp * mp;
        GridMoments {
            integral: norm,
            mean: [mx, mp],
            cov: [[cxx, cxp], [cxp, cpp]],
        }
    }

    /// Largest absolute elementwise difference divided by the peak of `self`.
    pub fn max_rel_diff(&self, other: &WignerGrid) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::Inconsistent("grids have different specs".into()));
        }
        let peak = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = self
            .values
            .iter()
            .zip(other.values.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Ok(diff / peak)
    }

    /// Bilinear interpolation between nodes; zero outside the node hull.
    pub fn interpolate(&self, x: f64, p: f64) -> f64 {
        let fx = (x - self.spec.x_min) / self.spec.dx() - 0.5;
        let fp = (p - self.spec.p_min) / self.spec.dp() - 0.5;
        if !(fx >= 0.0 && fp >= 0.0) {
            return 0.0;
        }
        let (i, j) = (fx.floor() as usize, fp.floor() as usize);
        if i + 1 >= self.spec.nx || j + 1 >= self.spec.ny {
            return 0.0;
        }
        let (tx, tp) = (fx - i as f64, fp - j as f64);
        let v = &self.values;
        (1.0 - tx) * ((1.0 - tp) * v[[i, j]] + tp * v[[i, j + 1]])
            + tx * ((1.0 - tp) * v[[i + 1, j]] + tp * v[[i + 1, j + 1]])
    }

    /// Writes a `# {json header}` line followed by one CSV row per x node.
    ///
    /// Values use the shortest round-trip decimal form, so reading the
    /// file back reproduces the grid bit for bit.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::to_string(&self.spec).expect("grid spec serializes");
        writeln!(out, "# {header}")?;
        let mut line = String::new();
        for row in self.values.outer_iter() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{v:?}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            reason: "empty grid file".into(),
        })??;
        let json = header.strip_prefix('#').ok_or(Error::Parse {
            line: 1,
            reason: "expected `# {...}` header".into(),
        })?;
        let spec: GridSpec = serde_json::from_str(json.trim()).map_err(|e| Error::Parse {
            line: 1,
            reason: e.to_string(),
        })?;
        spec.validate()?;

        let mut data = Vec::with_capacity(spec.nx * spec.ny);
        let mut rows = 0;
        for (k, line) in lines.enumerate() {
            let line = line?;
            let lineno = k + 2;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line: lineno,
                    reason: format!("not a number: {field:?}"),
                })?;
                data.push(v);
            }
            if data.len() - before != spec.ny {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("expected {} values, found {}", spec.ny, data.len() - before),
                });
            }
            rows += 1;
        }
        if rows != spec.nx {
            return Err(Error::Parse {
                line: rows + 1,
                reason: format!("expected {} rows, found {rows}", spec.nx),
            });
        }
        let values = Array2::from_shape_vec((spec.nx, spec.ny), data).expect("shape checked");
        Self::new(spec, values)
    }
}
