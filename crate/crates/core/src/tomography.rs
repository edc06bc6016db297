//! Marginal histograms, Radon projection of Wigner functions, and
//! reconstruction by filtered back-projection or by fitting a Gaussian
//! state to per-phase moments.
//!
//! Phase convention: the marginal at phase `θ` is the distribution of
//! `X cosθ + P sinθ`, the line integral of `W` over
//! `(X cosθ − P sinθ, X sinθ + P cosθ)` in `P`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{GridSpec, WignerGrid};
use crate::states::{GaussianState, HEISENBERG_TOL};

/// Minimum number of distinct phases for filtered back-projection.
pub const MIN_FBP_PHASES: usize = 8;
/// Minimum histogram total for filtered back-projection.
pub const MIN_FBP_COUNTS: u64 = 1000;

/// How to bin samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Binning {
    /// `count` equal bins over `[lo, hi)`.
    Uniform { lo: f64, hi: f64, count: usize },
    /// `count` equal bins spanning the data range.
    Count(usize),
    /// Explicit increasing edges.
    Edges(Vec<f64>),
}

/// Binned quadrature samples taken at one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalHistogram {
    pub theta: f64,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Sum of `counts`; excludes samples outside the edges.
    pub total: u64,
    /// Samples that fell outside `[first edge, last edge)`.
    pub overflow: u64,
}

/// Builds a histogram of `samples` taken at phase `theta`.
pub fn histogram(samples: &[f64], theta: f64, bins: &Binning) -> Result<MarginalHistogram> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("histogram of an empty sample".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(invalid("samples", "non-finite sample"));
    }
    let edges = match bins {
        Binning::Uniform { lo, hi, count } => uniform_edges(*lo, *hi, *count)?,
        Binning::Count(count) => {
            let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
            let mut hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi == lo {
                hi = lo + 1.0;
            }
            // Widen by one part in 1e9 so the maximum lands inside the last bin.
            let pad = (hi - lo) * 1e-9;
            uniform_edges(lo, hi + pad, *count)?
        }
        Binning::Edges(e) => {
            if e.len() < 2 || e.windows(2).any(|w| !(w[1] > w[0])) || e.iter().any(|v| !v.is_finite()) {
                return Err(invalid("bins", "edges must be finite and strictly increasing"));
            }
            e.clone()
        }
    };

    let nb = edges.len() - 1;
    let uniform = is_uniform(&edges);
    let lo = edges[0];
    let width = (edges[nb] - lo) / nb as f64;
    let mut counts = vec![0u64; nb];
    let mut overflow = 0u64;
    for &v in samples {
        if v < lo || v >= edges[nb] {
            overflow += 1;
            continue;
        }
        let mut k = if uniform {
            (((v - lo) / width) as usize).min(nb - 1)
        } else {
            edges.partition_point(|&e| e <= v) - 1
        };
        // Guard the floor against rounding at interior edges.
        while k > 0 && v < edges[k] {
            k -= 1;
        }
        while k + 1 < nb && v >= edges[k + 1] {
            k += 1;
        }
        counts[k] += 1;
    }
    let total = counts.iter().sum();
    if total == 0 {
        return Err(Error::InsufficientData("all samples fell outside the bins".into()));
    }
    Ok(MarginalHistogram {
        theta,
        bin_edges: edges,
        counts,
        total,
        overflow,
    })
}

fn uniform_edges(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid("bins", format!("need count > 0 and lo < hi, got {count} over [{lo}, {hi}]")));
    }
    let w = (hi - lo) / count as f64;
    Ok((0..=count).map(|k| if k == count { hi } else { lo + k as f64 * w }).collect())
}

fn is_uniform(edges: &[f64]) -> bool {
    let n = edges.len() - 1;
    let w = (edges[n] - edges[0]) / n as f64;
    edges
        .windows(2)
        .all(|e| ((e[1] - e[0]) - w).abs() <= 1e-9 * w.abs())
}

impl MarginalHistogram {
    pub fn validate(&self) -> Result<()> {
        if self.bin_edges.len() < 2 || self.bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("bin_edges", "must be strictly increasing"));
        }
        if self.counts.len() + 1 != self.bin_edges.len() {
            return Err(Error::Inconsistent(format!(
                "{} counts for {} edges",
                self.counts.len(),
                self.bin_edges.len()
            )));
        }
        let sum: u64 = self.counts.iter().sum();
        if sum != self.total || sum == 0 {
            return Err(Error::Inconsistent(format!(
                "total {} does not match positive count sum {sum}",
                self.total
            )));
        }
        Ok(())
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn is_uniform(&self) -> bool {
        is_uniform(&self.bin_edges)
    }

    /// Counts normalized by total and bin width.
    pub fn density(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(&c, w)| c as f64 / (n * (w[1] - w[0])))
            .collect()
    }

    /// Mean and variance from bin centres. For uniform bins the variance
    /// carries Sheppard's correction `−Δ²/12`.
    pub fn moments(&self) -> PhaseMoments {
        let n = self.total as f64;
        let centers = self.centers();
        let mean = centers
            .iter()
            .zip(&self.counts)
            .map(|(x, &c)| x * c as f64)
            .sum::<f64>()
            / n;
        let mut var = centers
            .iter()
            .zip(&self.counts)
            .map(|(x, &c)| (x - mean) * (x - mean) * c as f64)
            .sum::<f64>()
            / n;
        if self.is_uniform() {
            let w = self.bin_edges[1] - self.bin_edges[0];
            var -= w * w / 12.0;
        }
        PhaseMoments {
            theta: self.theta,
            mean,
            variance: var,
            count: Some(self.total),
        }
    }

    /// CSV with `# theta_rad`, `# total`, `# overflow` headers and
    /// `bin_lo,bin_hi,count` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# theta_rad: {:?}", self.theta)?;
        writeln!(out, "# total: {}", self.total)?;
        writeln!(out, "# overflow: {}", self.overflow)?;
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (w, c) in self.bin_edges.windows(2).zip(&self.counts) {
            writeln!(out, "{:?},{:?},{}", w[0], w[1], c)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut theta = None;
        let mut total = None;
        let mut overflow = None;
        let mut edges: Vec<f64> = Vec::new();
        let mut counts = Vec::new();
        let mut seen_columns = false;
        for (k, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = k + 1;
            let err = |reason: String| Error::Parse { line: lineno, reason };
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(c) = t.strip_prefix('#') {
                if let Some((key, value)) = c.split_once(':') {
                    let value = value.trim();
                    match key.trim() {
                        "theta_rad" => theta = Some(value.parse::<f64>().map_err(|_| err(format!("bad theta {value:?}")))?),
                        "total" => total = Some(value.parse::<u64>().map_err(|_| err(format!("bad total {value:?}")))?),
                        "overflow" => overflow = Some(value.parse::<u64>().map_err(|_| err(format!("bad overflow {value:?}")))?),
                        _ => {}
                    }
                }
                continue;
            }
            if !seen_columns {
                if t != "bin_lo,bin_hi,count" {
                    return Err(err(format!("expected column header, found {t:?}")));
                }
                seen_columns = true;
                continue;
            }
            let f: Vec<&str> = t.split(',').collect();
            if f.len() != 3 {
                return Err(err("expected three columns".into()));
            }
            let lo: f64 = f[0].trim().parse().map_err(|_| err(format!("bad bin_lo {:?}", f[0])))?;
            let hi: f64 = f[1].trim().parse().map_err(|_| err(format!("bad bin_hi {:?}", f[1])))?;
            let c: u64 = f[2].trim().parse().map_err(|_| err(format!("bad count {:?}", f[2])))?;
            match edges.last() {
                None => edges.push(lo),
                Some(&prev) if prev.to_bits() != lo.to_bits() => {
                    return Err(err("bins are not contiguous".into()));
                }
                _ => {}
            }
            edges.push(hi);
            counts.push(c);
        }
        let missing = |w: &str| Error::Parse {
            line: 0,
            reason: format!("missing `# {w}` header"),
        };
        let h = MarginalHistogram {
            theta: theta.ok_or_else(|| missing("theta_rad"))?,
            bin_edges: edges,
            counts,
            total: total.ok_or_else(|| missing("total"))?,
            overflow: overflow.ok_or_else(|| missing("overflow"))?,
        };
        h.validate()?;
        Ok(h)
    }
}

/// Samples that share one (folded) local-oscillator phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGroup {
    pub theta: f64,
    pub samples: Vec<f64>,
}

/// How samples are assigned to phase groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseGrouping {
    /// One group per distinct phase.
    Exact,
    /// `n` equal-width phase bins over `[0, π)`, labelled by their centres.
    Bins(usize),
}

/// Folds every phase into `[0, π)` (a sample at `θ + π` is the negated
/// sample at `θ`) and groups the samples.
///
/// `phases` has one entry per sample or a single entry for all. Groups are
/// returned in increasing phase order.
pub fn group_by_phase(samples: &[f64], phases: &[f64], grouping: PhaseGrouping) -> Result<Vec<PhaseGroup>> {
    if phases.len() != 1 && phases.len() != samples.len() {
        return Err(Error::Inconsistent(format!(
            "{} phases for {} samples",
            phases.len(),
            samples.len()
        )));
    }
    if let PhaseGrouping::Bins(0) = grouping {
        return Err(invalid("phase_bins", "need at least one bin"));
    }
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (i, &v) in samples.iter().enumerate() {
        let raw = if phases.len() == 1 { phases[0] } else { phases[i] };
        let (theta, sign) = fold_phase(raw);
        let key = match grouping {
            PhaseGrouping::Exact => theta,
            PhaseGrouping::Bins(n) => {
                let k = ((theta / PI * n as f64) as usize).min(n - 1);
                PI * (k as f64 + 0.5) / n as f64
            }
        };
        groups.entry(key.to_bits()).or_default().push(sign * v);
    }
    Ok(groups
        .into_iter()
        .map(|(k, s)| PhaseGroup {
            theta: f64::from_bits(k),
            samples: s,
        })
        .collect())
}

/// Maps `θ` to `[0, π)` and returns the sign the quadrature picks up.
pub fn fold_phase(theta: f64) -> (f64, f64) {
    let t = theta.rem_euclid(2.0 * PI);
    let (t, sign) = if t >= PI { (t - PI, -1.0) } else { (t, 1.0) };
    // rem_euclid can round up to exactly the modulus.
    if t >= PI {
        (0.0, -sign)
    } else {
        (t + 0.0, sign)
    }
}

/// A marginal density sampled on equally spaced nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedMarginal {
    pub theta: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

impl ProjectedMarginal {
    fn step(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    fn moment(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.step();
        let n = self.x.len();
        self.x
            .iter()
            .zip(&self.density)
            .enumerate()
            .map(|(i, (&x, &d))| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * f(x) * d
            })
            .sum::<f64>()
            * h
    }

    pub fn integral(&self) -> f64 {
        self.moment(|_| 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.moment(|x| x) / self.integral()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(|x| (x - m) * (x - m)) / self.integral()
    }
}

/// Radon projection with the step set to the finer grid spacing.
pub fn radon_project(grid: &WignerGrid, theta: f64) -> Result<ProjectedMarginal> {
    let spec = grid.spec();
    radon_project_with_step(grid, theta, spec.dx().min(spec.dp()))
}

/// Line integrals of `grid` along the direction `(−sinθ, cosθ)` by bilinear
/// interpolation, sampled every `step` in both the projected coordinate
/// and along the line. Nodes are symmetric about the origin and reach the
/// farthest grid corner.
pub fn radon_project_with_step(grid: &WignerGrid, theta: f64, step: f64) -> Result<ProjectedMarginal> {
    let spec = grid.spec();
    let cell = spec.dx().min(spec.dp());
    if !(step > 0.0) {
        return Err(invalid("step", "must be positive"));
    }
    if step > 2.0 * cell {
        return Err(Error::Resolution(format!(
            "projection step {step} exceeds two grid cells ({cell})"
        )));
    }
    let reach = [
        (spec.x_min, spec.p_min),
        (spec.x_min, spec.p_max),
        (spec.x_max, spec.p_min),
        (spec.x_max, spec.p_max),
    ]
    .iter()
    .map(|(x, p)| x.hypot(*p))
    .fold(0.0, f64::max);
    let half = (reach / step).ceil() as i64;
    let nodes: Vec<f64> = (-half..=half).map(|k| k as f64 * step).collect();
    let (s, c) = theta.sin_cos();

    let density: Vec<f64> = nodes
        .par_iter()
        .map(|&x| {
            let mut acc = 0.0;
            for &p in &nodes {
                acc += grid.interpolate(x * c - p * s, x * s + p * c);
            }
            acc * step
        })
        .collect();
    Ok(ProjectedMarginal {
        theta,
        x: nodes,
        density,
    })
}

/// Filtered back-projection with a Ram-Lak ramp filter cut off at the
/// Nyquist frequency of the histogram binning.
///
/// All histograms must share the same uniform bins and have phases in
/// `[0, π)`. Each phase is weighted by the angular interval it covers.
pub fn inverse_radon(histograms: &[MarginalHistogram], spec: &GridSpec) -> Result<WignerGrid> {
    spec.validate()?;
    let mut hists: Vec<&MarginalHistogram> = histograms.iter().collect();
    for h in &hists {
        h.validate()?;
        if !(0.0..PI).contains(&h.theta) {
            return Err(invalid("theta", format!("phase {} outside [0, π)", h.theta)));
        }
        if h.total < MIN_FBP_COUNTS {
            return Err(Error::InsufficientData(format!(
                "histogram at θ = {} has {} counts; need {MIN_FBP_COUNTS}",
                h.theta, h.total
            )));
        }
    }
    hists.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    hists.dedup_by(|a, b| a.theta == b.theta);
    if hists.len() != histograms.len() {
        return Err(Error::Inconsistent("duplicate phases".into()));
    }
    if hists.len() < MIN_FBP_PHASES {
        return Err(Error::InsufficientData(format!(
            "{} distinct phases; filtered back-projection needs {MIN_FBP_PHASES}",
            hists.len()
        )));
    }
    let edges = &hists[0].bin_edges;
    if !hists[0].is_uniform() {
        return Err(Error::Inconsistent("back-projection needs uniform bins".into()));
    }
    if hists.iter().any(|h| h.bin_edges != *edges) {
        return Err(Error::Inconsistent("histograms use different bins".into()));
    }

    let nb = edges.len() - 1;
    let delta = (edges[nb] - edges[0]) / nb as f64;
    let first_center = edges[0] + 0.5 * delta;

    // Filtered projections on an index range covering every grid corner.
    let reach = [
        (spec.x_min, spec.p_min),
        (spec.x_min, spec.p_max),
        (spec.x_max, spec.p_min),
        (spec.x_max, spec.p_max),
    ]
    .iter()
    .map(|(x, p)| x.hypot(*p))
    .fold(0.0, f64::max);
    let lo_idx = ((-reach - first_center) / delta).floor() as i64 - 1;
    let hi_idx = ((reach - first_center) / delta).ceil() as i64 + 1;
    let ramp = |k: i64| -> f64 {
        if k == 0 {
            1.0 / (4.0 * delta * delta)
        } else if k % 2 != 0 {
            -1.0 / ((k * k) as f64 * PI * PI * delta * delta)
        } else {
            0.0
        }
    };

    let filtered: Vec<Vec<f64>> = hists
        .par_iter()
        .map(|h| {
            let p = h.density();
            (lo_idx..=hi_idx)
                .map(|n| {
                    p.iter()
                        .enumerate()
                        .map(|(m, &v)| ramp(n - m as i64) * v)
                        .sum::<f64>()
                        * delta
                })
                .collect()
        })
        .collect();

    let m = hists.len();
    let weights: Vec<f64> = (0..m)
        .map(|k| {
            let prev = if k == 0 { hists[m - 1].theta - PI } else { hists[k - 1].theta };
            let next = if k == m - 1 { hists[0].theta + PI } else { hists[k + 1].theta };
            0.5 * (next - prev)
        })
        .collect();
    let trig: Vec<(f64, f64)> = hists.iter().map(|h| h.theta.sin_cos()).collect();

    let grid = WignerGrid::from_fn(*spec, |x, p| {
        let mut acc = 0.0;
        for k in 0..m {
            let (s, c) = trig[k];
            let t = x * c + p * s;
            let pos = (t - first_center) / delta - lo_idx as f64;
            let i = pos.floor();
            let frac = pos - i;
            let i = i as usize;
            let q = &filtered[k];
            let v = (1.0 - frac) * q[i] + frac * q[i + 1];
            acc += weights[k] * v;
        }
        acc
    })?;
    Ok(grid)
}

/// Mean and variance of the quadrature at one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMoments {
    pub theta: f64,
    pub mean: f64,
    pub variance: f64,
    /// Number of samples behind the moments; enables weighting and error bars.
    pub count: Option<u64>,
}

impl PhaseMoments {
    /// Sample mean and unbiased variance.
    pub fn from_samples(theta: f64, samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientData("need at least two samples per phase".into()));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            theta,
            mean,
            variance,
            count: Some(samples.len() as u64),
        })
    }
}

/// Gaussian state estimate from per-phase moments.
///
/// The covariance may violate the uncertainty bound on noisy data;
/// [`GaussianFit::is_physical`] reports whether it does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    /// Standard errors of `(Σxx, Σxp, Σpp)` when sample counts are known.
    pub cov_std: Option<[f64; 3]>,
    /// Standard errors of the mean vector when sample counts are known.
    pub mean_std: Option<[f64; 2]>,
}

impl GaussianFit {
    pub fn det(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }

    pub fn is_physical(&self) -> bool {
        self.det() >= 0.25 - HEISENBERG_TOL
    }

    pub fn to_state(&self) -> Result<GaussianState> {
        GaussianState::new(self.mean, self.cov[0][0], self.cov[0][1], self.cov[1][1])
    }

    /// Wigner function of the fitted Gaussian, physical or not.
    pub fn wigner_grid(&self, spec: &GridSpec) -> Result<WignerGrid> {
        let det = self.det();
        let [[a, b], [_, d]] = self.cov;
        let [mx, mp] = self.mean;
        WignerGrid::from_fn(*spec, |x, p| {
            let (dx, dp) = (x - mx, p - mp);
            let q = (d * dx * dx - 2.0 * b * dx * dp + a * dp * dp) / det;
            (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
        })
    }
}

/// `(cos²θ, 2 cosθ sinθ, sin²θ)`: the variance at `θ` is this row dotted
/// with `(Σxx, Σxp, Σpp)`.
pub(crate) fn variance_row(theta: f64) -> Vector3<f64> {
    let (s, c) = theta.sin_cos();
    Vector3::new(c * c, 2.0 * c * s, s * s)
}

fn sample_counts(moments: &[PhaseMoments]) -> Option<Vec<f64>> {
    moments
        .iter()
        .map(|m| m.count.filter(|&n| n >= 2).map(|n| n as f64))
        .collect()
}

/// Fitted `(Σxx, Σxp, Σpp)` and, when sample counts are known, their
/// covariance matrix.
pub(crate) struct CovarianceFit {
    pub params: Vector3<f64>,
    pub param_cov: Option<Matrix3<f64>>,
}

/// Least-squares fit of the per-phase variances. With sample counts the
/// weights are `(n − 1)/(2·v(θ)²)` from the current model, iterated until
/// the parameters settle.
pub(crate) fn fit_covariance(moments: &[PhaseMoments]) -> Result<CovarianceFit> {
    let mut distinct: Vec<f64> = moments.iter().map(|m| fold_phase(m.theta).0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() > 1 && PI - (distinct[distinct.len() - 1] - distinct[0]) < 1e-12 {
        distinct.pop();
    }
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} distinct phases modulo π; the covariance needs 3",
            distinct.len()
        )));
    }
    if moments.iter().any(|m| !(m.variance.is_finite() && m.mean.is_finite())) {
        return Err(invalid("moments", "non-finite moment"));
    }
    let rows: Vec<Vector3<f64>> = moments.iter().map(|m| variance_row(m.theta)).collect();
    let solve = |weights: &[f64]| -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let mut ata = Matrix3::zeros();
        let mut atb = Vector3::zeros();
        for ((row, m), &w) in rows.iter().zip(moments).zip(weights) {
            ata += w * row * row.transpose();
            atb += w * m.variance * row;
        }
        let inv = ata
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("covariance normal equations are singular".into()))?;
        Ok((inv * atb, inv))
    };

    let (mut params, mut inv) = solve(&vec![1.0; moments.len()])?;
    let Some(counts) = sample_counts(moments) else {
        return Ok(CovarianceFit {
            params,
            param_cov: None,
        });
    };
    for _ in 0..50 {
        let w: Vec<f64> = rows
            .iter()
            .zip(&counts)
            .map(|(row, &n)| {
                let v = row.dot(&params).max(1e-12);
                (n - 1.0) / (2.0 * v * v)
            })
            .collect();
        let (next, next_inv) = solve(&w)?;
        let change = (next - params).abs().max();
        params = next;
        inv = next_inv;
        if change <= 1e-15 * params.abs().max() {
            break;
        }
    }
    Ok(CovarianceFit {
        params,
        param_cov: Some(inv),
    })
}

/// Fits a Gaussian state to histograms via their moments.
pub fn fit_gaussian_state(histograms: &[MarginalHistogram]) -> Result<GaussianFit> {
    let moments: Vec<PhaseMoments> = histograms
        .iter()
        .map(|h| h.validate().map(|_| h.moments()))
        .collect::<Result<_>>()?;
    fit_gaussian_moments(&moments)
}

/// Least-squares fit of `var(θ) = uᵀΣu` and `mean(θ) = u·m`,
/// `u = (cosθ, sinθ)`.
///
/// With sample counts on every entry the fit is weighted by the model
/// variance of each estimate and iterated to convergence; otherwise it
/// is unweighted.
pub fn fit_gaussian_moments(moments: &[PhaseMoments]) -> Result<GaussianFit> {
    let CovarianceFit {
        params: sigma,
        param_cov,
    } = fit_covariance(moments)?;
    let counts = sample_counts(moments);
    let rows: Vec<Vector2<f64>> = moments
        .iter()
        .map(|m| {
            let (s, c) = m.theta.sin_cos();
            Vector2::new(c, s)
        })
        .collect();

    // Means, weighted by n/var(θ) from the covariance fit.
    let mut ata = Matrix2::zeros();
    let mut atb = Vector2::zeros();
    for (k, (row2, m)) in rows.iter().zip(moments).enumerate() {
        let w = match &counts {
            Some(n) => n[k] / variance_row(m.theta).dot(&sigma).max(1e-12),
            None => 1.0,
        };
        ata += w * row2 * row2.transpose();
        atb += w * m.mean * row2;
    }
    let mean_inv = ata
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("mean normal equations are singular".into()))?;
    let mean = mean_inv * atb;

    let cov = [[sigma[0], sigma[1]], [sigma[1], sigma[2]]];
    let det = sigma[0] * sigma[2] - sigma[1] * sigma[1];
    if !(sigma[0] > 0.0 && det > 0.0) {
        return Err(Error::Degenerate(format!(
            "fitted covariance is not positive definite (det = {det:e})"
        )));
    }
    let (cov_std, mean_std) = match param_cov {
        Some(inv) => (
            Some([inv[(0, 0)].sqrt(), inv[(1, 1)].sqrt(), inv[(2, 2)].sqrt()]),
            Some([mean_inv[(0, 0)].sqrt(), mean_inv[(1, 1)].sqrt()]),
        ),
        None => (None, None),
    };
    Ok(GaussianFit {
        mean: [mean[0], mean[1]],
        cov,
        cov_std,
        mean_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn single_sample_histogram() {
        let h = histogram(&[0.0], 0.0, &Binning::Edges(vec![-1.0, 1.0])).unwrap();
        assert_eq!(h.counts, vec![1]);
        assert_eq!(h.total, 1);
        assert_eq!(h.overflow, 0);
    }

    #[test]
    fn overflow_is_tallied() {
        let h = histogram(&[-3.0, 0.2, 0.7, 5.0, 1.0], 0.0, &Binning::Uniform { lo: -1.0, hi: 1.0, count: 4 }).unwrap();
        assert_eq!(h.counts, vec![0, 0, 1, 1]);
        assert_eq!(h.total, 2);
        assert_eq!(h.overflow, 3);
    }

    #[test]
    fn histogram_errors() {
        assert!(matches!(histogram(&[], 0.0, &Binning::Count(4)), Err(Error::InsufficientData(_))));
        assert!(histogram(&[0.0], 0.0, &Binning::Edges(vec![0.0, -1.0])).is_err());
        assert!(histogram(&[0.0], 0.0, &Binning::Edges(vec![1.0])).is_err());
        assert!(histogram(&[0.0], 0.0, &Binning::Uniform { lo: 1.0, hi: 0.0, count: 3 }).is_err());
    }

    #[test]
    fn auto_range_keeps_every_sample() {
        let s = [0.1, -2.0, 3.5, 3.5, 0.0];
        let h = histogram(&s, 0.0, &Binning::Count(7)).unwrap();
        assert_eq!(h.total, 5);
        assert_eq!(h.overflow, 0);
    }

    #[test]
    fn histogram_csv_round_trip() {
        let s: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.37).sin() * 2.0).collect();
        let h = histogram(&s, 0.3, &Binning::Uniform { lo: -1.5, hi: 1.5, count: 13 }).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(MarginalHistogram::read_csv(buf.as_slice()).unwrap(), h);

        let text = String::from_utf8(buf).unwrap().replace("# total: ", "# total: 1");
        assert!(MarginalHistogram::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn phase_folding() {
        assert_eq!(fold_phase(0.5), (0.5, 1.0));
        let (t, s) = fold_phase(PI + 0.5);
        assert!((t - 0.5).abs() < 1e-15 && s == -1.0);
        let (t, s) = fold_phase(-0.5);
        assert!((t - (PI - 0.5)).abs() < 1e-15 && s == -1.0);
        let (t, _) = fold_phase(2.0 * PI);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn grouping_exact_and_binned() {
        let samples = [1.0, 2.0, 3.0, 4.0];
        let phases = [0.0, PI, 0.5, 0.5];
        let g = group_by_phase(&samples, &phases, PhaseGrouping::Exact).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].theta, 0.0);
        assert_eq!(g[0].samples, vec![1.0, -2.0]);
        assert_eq!(g[1].samples, vec![3.0, 4.0]);

        let g = group_by_phase(&samples, &phases, PhaseGrouping::Bins(2)).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].theta, FRAC_PI_4);
        assert!(group_by_phase(&samples, &[0.0, 1.0], PhaseGrouping::Exact).is_err());
    }

    fn exact_moments(state: &GaussianState, phases: &[f64]) -> Vec<PhaseMoments> {
        phases
            .iter()
            .map(|&t| {
                let m = state.marginal(t);
                PhaseMoments {
                    theta: t,
                    mean: m.mean,
                    variance: m.variance,
                    count: None,
                }
            })
            .collect()
    }

    #[test]
    fn fit_recovers_vacuum_from_three_phases() {
        let m = exact_moments(&GaussianState::vacuum(), &[0.0, FRAC_PI_4, FRAC_PI_2]);
        let fit = fit_gaussian_moments(&m).unwrap();
        for (a, b) in fit.cov.iter().flatten().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(fit.is_physical());
        assert!(fit.cov_std.is_none());
    }

    #[test]
    fn fit_recovers_squeezed_state_exactly() {
        let s = GaussianState::squeezed_vacuum(1.0, 0.3).unwrap().displaced([0.4, -1.1]).unwrap();
        let phases: Vec<f64> = (0..6).map(|k| PI * k as f64 / 6.0).collect();
        let fit = fit_gaussian_moments(&exact_moments(&s, &phases)).unwrap();
        for (a, b) in fit.cov.iter().flatten().zip(s.cov().iter().flatten()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for (a, b) in fit.mean.iter().zip(s.mean()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_needs_three_phases() {
        let m = exact_moments(&GaussianState::vacuum(), &[0.0, FRAC_PI_2, PI]);
        assert!(matches!(fit_gaussian_moments(&m), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn fit_flags_unphysical_covariance() {
        let m: Vec<PhaseMoments> = [0.0, FRAC_PI_4, FRAC_PI_2]
            .iter()
            .map(|&t| PhaseMoments { theta: t, mean: 0.0, variance: 0.4, count: None })
            .collect();
        let fit = fit_gaussian_moments(&m).unwrap();
        assert!(!fit.is_physical());
        assert!(fit.to_state().is_err());

        let m: Vec<PhaseMoments> = [(0.0, 1.0), (FRAC_PI_2, 1.0), (FRAC_PI_4, 3.0)]
            .iter()
            .map(|&(t, v)| PhaseMoments { theta: t, mean: 0.0, variance: v, count: None })
            .collect();
        assert!(matches!(fit_gaussian_moments(&m), Err(Error::Degenerate(_))));
    }

    #[test]
    fn projection_parity_and_resolution_error() {
        let spec = GridSpec::square(4.0, 64).unwrap();
        let s = GaussianState::squeezed_vacuum(0.5, 0.2).unwrap();
        let g = s.wigner_grid(&spec).unwrap();
        let a = radon_project(&g, 0.4).unwrap();
        let b = radon_project(&g, 0.4 + PI).unwrap();
        let n = a.density.len();
        for i in 0..n {
            assert!((a.density[i] - b.density[n - 1 - i]).abs() < 1e-9);
            assert!((a.density[i] - b.density[i]).abs() < 1e-9);
        }
        assert!(matches!(radon_project_with_step(&g, 0.0, 0.5), Err(Error::Resolution(_))));
    }

    #[test]
    fn fbp_input_validation() {
        let spec = GridSpec::square(4.0, 32).unwrap();
        let samples: Vec<f64> = (0..2000).map(|i| ((i as f64) * 0.731).sin()).collect();
        let bins = Binning::Uniform { lo: -2.0, hi: 2.0, count: 40 };
        let hist = |t: f64| histogram(&samples, t, &bins).unwrap();
        let few: Vec<_> = (0..5).map(|k| hist(k as f64 * 0.5)).collect();
        assert!(matches!(inverse_radon(&few, &spec), Err(Error::InsufficientData(_))));

        let mut mixed: Vec<_> = (0..8).map(|k| hist(PI * k as f64 / 8.0)).collect();
        mixed[3] = histogram(&samples, mixed[3].theta, &Binning::Uniform { lo: -2.0, hi: 2.0, count: 41 }).unwrap();
        assert!(matches!(inverse_radon(&mixed, &spec), Err(Error::Inconsistent(_))));

        let small: Vec<_> = (0..8)
            .map(|k| histogram(&samples[..500], PI * k as f64 / 8.0, &bins).unwrap())
            .collect();
        assert!(matches!(inverse_radon(&small, &spec), Err(Error::InsufficientData(_))));

        let outside: Vec<_> = (0..8).map(|k| hist(0.5 + PI * k as f64 / 8.0)).collect();
        assert!(inverse_radon(&outside, &spec).is_err());
    }
}
