//! Gaussian kernel density estimates, their half-plane restriction on a grid,
//! and the cell-based inverse-transform sampler used for MCMC proposals.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::diagram::{Point, PointSet};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Kernel scaling: `Scalar(eta)` means `Sigma = eta^2 I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Scalar(f64),
    /// Full covariance matrix, given row by row.
    Matrix(Vec<Vec<f64>>),
}

impl Bandwidth {
    /// The covariance matrix in dimension `dim`, row-major.
    fn covariance(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            Bandwidth::Scalar(eta) => {
                if !(*eta > 0.0) || !eta.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                let mut m = vec![0.0; dim * dim];
                for d in 0..dim {
                    m[d * dim + d] = eta * eta;
                }
                Ok(m)
            }
            Bandwidth::Matrix(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::DimensionMismatch { expected: dim, got: rows.len() });
                }
                Ok(rows.iter().flatten().copied().collect())
            }
        }
    }

    /// Per-axis kernel standard deviations, `sqrt(Sigma_kk)`.
    pub fn axis_scales(&self, dim: usize) -> Vec<f64> {
        match self {
            Bandwidth::Scalar(eta) => vec![*eta; dim],
            Bandwidth::Matrix(rows) => (0..dim).map(|k| rows[k][k].sqrt()).collect(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        match self {
            Bandwidth::Scalar(_) => true,
            Bandwidth::Matrix(rows) => {
                rows.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, &v)| i == j || v == 0.0))
            }
        }
    }
}

/// Gaussian KDE with a shared bandwidth matrix.
#[derive(Clone, Debug)]
pub struct KernelDensity {
    dim: usize,
    centers: Vec<f64>,
    bandwidth: Bandwidth,
    precision: Vec<f64>,
    log_norm: f64,
}

impl KernelDensity {
    pub fn new(dim: usize, centers: Vec<f64>, bandwidth: Bandwidth) -> Result<Self> {
        if dim == 0 || centers.is_empty() || !centers.len().is_multiple_of(dim) {
            return Err(Error::TooFewPoints { needed: 1, got: centers.len() / dim.max(1) });
        }
        let cov = bandwidth.covariance(dim)?;
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (cov[i * dim + j], cov[j * dim + i]);
                if (a - b).abs() > 1e-12 * (a.abs() + b.abs()).max(f64::MIN_POSITIVE) {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        let m = DMatrix::from_row_slice(dim, dim, &cov);
        let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse();
        let precision: Vec<f64> = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect();
        let n = centers.len() / dim;
        let log_norm = -(n as f64).ln() - 0.5 * log_det - 0.5 * dim as f64 * LN_2PI;
        Ok(Self { dim, centers, bandwidth, precision, log_norm })
    }

    pub fn from_points(ps: &PointSet, bandwidth: Bandwidth) -> Result<Self> {
        Self::new(2, ps.points.iter().flatten().copied().collect(), bandwidth)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn bandwidth(&self) -> &Bandwidth {
        &self.bandwidth
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    fn quad_form(&self, x: &[f64], c: &[f64]) -> f64 {
        match self.dim {
            2 => {
                let (u, v) = (x[0] - c[0], x[1] - c[1]);
                let p = &self.precision;
                p[0] * u * u + (p[1] + p[2]) * u * v + p[3] * v * v
            }
            d => {
                let mut q = 0.0;
                for i in 0..d {
                    let ui = x[i] - c[i];
                    for j in 0..d {
                        q += ui * self.precision[i * d + j] * (x[j] - c[j]);
                    }
                }
                q
            }
        }
    }

    /// Natural log of the density, computed stably (finite far in the tails).
    pub fn log_eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        // Streaming log-sum-exp over -q/2.
        let mut min_q = f64::INFINITY;
        let mut acc = 0.0;
        for c in self.centers.chunks_exact(self.dim) {
            let q = self.quad_form(x, c);
            if q < min_q {
                acc = acc * (-(min_q - q) * 0.5).exp() + 1.0;
                min_q = q;
            } else {
                acc += (-(q - min_q) * 0.5).exp();
            }
        }
        self.log_norm - 0.5 * min_q + acc.ln()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.log_eval(x).exp()
    }

    /// Checked evaluation for callers with untrusted dimensions.
    pub fn try_eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.eval(x))
    }
}

/// `max(sd_1, sd_2) * N^(-1/6)` with sample standard deviations (divisor `n - 1`).
pub fn rule_of_thumb_bandwidth(ps: &PointSet) -> Result<f64> {
    if ps.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: ps.len() });
    }
    let (_, sd) = ps.moments();
    let s = sd[0].max(sd[1]);
    if !(s > 0.0) {
        return Err(Error::DegenerateSpread);
    }
    Ok(s * (ps.len() as f64).powf(-1.0 / 6.0))
}

/// Normal-reference full bandwidth matrix `N^(-1/3) S` (S the sample covariance).
pub fn normal_reference_matrix(ps: &PointSet) -> Result<Bandwidth> {
    let n = ps.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let (mean, _) = ps.moments();
    let mut s = [[0.0; 2]; 2];
    for p in &ps.points {
        for a in 0..2 {
            for b in 0..2 {
                s[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    let f = (n as f64).powf(-1.0 / 3.0) / (n - 1) as f64;
    let rows = vec![vec![s[0][0] * f, s[0][1] * f], vec![s[1][0] * f, s[1][1] * f]];
    let det = rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0];
    if !(rows[0][0] > 0.0 && det > 0.0) {
        return Err(Error::DegenerateSpread);
    }
    Ok(Bandwidth::Matrix(rows))
}

/// Rectangular evaluation grid in the closed upper half-plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
    pub n1: usize,
    pub n2: usize,
}

impl GridSpec {
    pub const DEFAULT_RESOLUTION: usize = 101;

    /// Mean +- 4 SD in `x1` and `[0, mean + 4 SD]` in `x2`, widened when needed so
    /// every data point lies at least three kernel widths inside the box.
    pub fn for_points(ps: &PointSet, bandwidth: &Bandwidth, resolution: usize) -> Result<Self> {
        if ps.len() < 2 {
            return Err(Error::TooFewPoints { needed: 2, got: ps.len() });
        }
        let (mean, sd) = ps.moments();
        let scale = bandwidth.axis_scales(2);
        let (mut lo1, mut hi1) = (mean[0] - 4.0 * sd[0], mean[0] + 4.0 * sd[0]);
        let mut hi2 = mean[1] + 4.0 * sd[1];
        for p in &ps.points {
            lo1 = lo1.min(p[0] - 3.0 * scale[0]);
            hi1 = hi1.max(p[0] + 3.0 * scale[0]);
            hi2 = hi2.max(p[1] + 3.0 * scale[1]);
        }
        let spec = Self { x1: [lo1, hi1], x2: [0.0, hi2], n1: resolution, n2: resolution };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_resolution(&self, n1: usize, n2: usize) -> Self {
        Self { n1, n2, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 < 2 || self.n2 < 2 {
            return Err(Error::DegenerateRectangle(format!("resolution {}x{} below 2", self.n1, self.n2)));
        }
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[1] > r[0];
        if !ok(self.x1) || !ok(self.x2) {
            return Err(Error::DegenerateRectangle(format!("x1 {:?}, x2 {:?}", self.x1, self.x2)));
        }
        if self.x2[0] < 0.0 {
            return Err(Error::DegenerateRectangle(format!("x2 lower edge {} below 0", self.x2[0])));
        }
        Ok(())
    }

    pub fn step(&self) -> [f64; 2] {
        [(self.x1[1] - self.x1[0]) / (self.n1 - 1) as f64, (self.x2[1] - self.x2[0]) / (self.n2 - 1) as f64]
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn area(&self) -> f64 {
        (self.x1[1] - self.x1[0]) * (self.x2[1] - self.x2[0])
    }

    /// Node `(i, j)`; linear index `i * n2 + j`.
    pub fn node(&self, i: usize, j: usize) -> Point {
        let h = self.step();
        // Pin the last node to the edge to avoid drift.
        let x = if i + 1 == self.n1 { self.x1[1] } else { self.x1[0] + i as f64 * h[0] };
        let y = if j + 1 == self.n2 { self.x2[1] } else { self.x2[0] + j as f64 * h[1] };
        [x, y]
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.n1).flat_map(|i| (0..self.n2).map(move |j| (i, j))).map(|(i, j)| self.node(i, j)).collect()
    }

    /// Product trapezoid weights, aligned with [`GridSpec::nodes`].
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let w1 = |i: usize| if i == 0 || i + 1 == self.n1 { 0.5 * h[0] } else { h[0] };
        let w2 = |j: usize| if j == 0 || j + 1 == self.n2 { 0.5 * h[1] } else { h[1] };
        (0..self.n1).flat_map(|i| (0..self.n2).map(move |j| w1(i) * w2(j))).collect()
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x1[0] && p[0] <= self.x1[1] && p[1] >= self.x2[0] && p[1] <= self.x2[1]
    }
}

/// Trapezoid integral of node values over the grid rectangle.
pub fn trapezoid(spec: &GridSpec, values: &[f64]) -> f64 {
    spec.trapezoid_weights().iter().zip(values).map(|(w, v)| w * v).sum()
}

/// The KDE restricted to the half-plane and normalized by its trapezoid
/// integral over the grid rectangle.
#[derive(Clone, Debug)]
pub struct GridDensity {
    spec: GridSpec,
    kde: KernelDensity,
    log_normalizer: f64,
    log_values: Vec<f64>,
}

impl GridDensity {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn kde(&self) -> &KernelDensity {
        &self.kde
    }

    /// Log of the trapezoid integral of the unnormalized KDE.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// `ln fbar` at the grid nodes.
    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    pub fn max_value(&self) -> f64 {
        self.log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp()
    }

    /// `ln fbar(x)`; `-inf` below the horizontal axis.
    pub fn log_eval(&self, x: Point) -> f64 {
        if x[1] < 0.0 {
            return f64::NEG_INFINITY;
        }
        self.kde.log_eval(&x) - self.log_normalizer
    }

    pub fn eval(&self, x: Point) -> f64 {
        self.log_eval(x).exp()
    }

    /// CSV with header `x1,x2,value`, one row per grid node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,value\n");
        for (p, lv) in self.spec.nodes().iter().zip(&self.log_values) {
            writeln!(out, "{},{},{}", p[0], p[1], lv.exp()).unwrap();
        }
        out
    }
}

/// Tabulates the KDE on `spec` and normalizes it to unit trapezoid mass.
pub fn restrict_halfplane(kd: &KernelDensity, spec: &GridSpec) -> Result<GridDensity> {
    if kd.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: kd.dim() });
    }
    spec.validate()?;
    let raw: Vec<f64> = spec.nodes().iter().map(|p| kd.log_eval(p)).collect();
    let weights = spec.trapezoid_weights();
    let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = raw.iter().zip(&weights).map(|(l, w)| w * (l - m).exp()).sum();
    let log_normalizer = m + s.ln();
    let log_values = raw.iter().map(|l| l - log_normalizer).collect();
    Ok(GridDensity { spec: spec.clone(), kde: kd.clone(), log_normalizer, log_values })
}

/// Convenience: KDE of `ps` with `bandwidth` on the default grid.
pub fn shape_prior(ps: &PointSet, bandwidth: &Bandwidth, resolution: usize) -> Result<GridDensity> {
    let kd = KernelDensity::from_points(ps, bandwidth.clone())?;
    let spec = GridSpec::for_points(ps, bandwidth, resolution)?;
    restrict_halfplane(&kd, &spec)
}

/// Standard normal mass of `[a, b]`, accurate in both tails.
pub fn normal_interval_mass(a: f64, b: f64) -> f64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a * r) - erfc(b * r))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * r) - erfc(-a * r))
    } else {
        1.0 - 0.5 * (erfc(-a * r) + erfc(b * r))
    }
}

/// Piecewise-uniform proposal distribution over an `i1 x i2` partition of the
/// support rectangle.
#[derive(Clone, Debug)]
pub struct RectangleSampler {
    rect: [f64; 4],
    i1: usize,
    i2: usize,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RectangleSampler {
    pub const DEFAULT_CELLS: usize = 100;
    pub const DEFAULT_EPS_FRACTION: f64 = 1e-6;
    /// Sub-cells per axis for non-diagonal bandwidths.
    pub const SUBCELLS: usize = 32;

    /// `[x1_lo, x1_hi, x2_lo, x2_hi]`.
    pub fn rect(&self) -> [f64; 4] {
        self.rect
    }

    pub fn cells(&self) -> (usize, usize) {
        (self.i1, self.i2)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `[x1_lo, x1_hi, x2_lo, x2_hi]` of cell `k` (row-major, `k = i * i2 + j`).
    pub fn cell_bounds(&self, k: usize) -> [f64; 4] {
        let (i, j) = (k / self.i2, k % self.i2);
        let w1 = (self.rect[1] - self.rect[0]) / self.i1 as f64;
        let w2 = (self.rect[3] - self.rect[2]) / self.i2 as f64;
        let x_lo = self.rect[0] + i as f64 * w1;
        let y_lo = self.rect[2] + j as f64 * w2;
        let x_hi = if i + 1 == self.i1 { self.rect[1] } else { x_lo + w1 };
        let y_hi = if j + 1 == self.i2 { self.rect[3] } else { y_lo + w2 };
        [x_lo, x_hi, y_lo, y_hi]
    }

    /// Cell containing `p`, or `None` outside the support rectangle.
    pub fn cell_of(&self, p: Point) -> Option<usize> {
        let r = self.rect;
        if p[0] < r[0] || p[0] > r[1] || p[1] < r[2] || p[1] > r[3] {
            return None;
        }
        let i = (((p[0] - r[0]) / (r[1] - r[0]) * self.i1 as f64) as usize).min(self.i1 - 1);
        let j = (((p[1] - r[2]) / (r[3] - r[2]) * self.i2 as f64) as usize).min(self.i2 - 1);
        Some(i * self.i2 + j)
    }

    /// Inverse-transform draw of a cell, then a uniform point inside it.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let u: f64 = rng.random();
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.probs.len() - 1);
        let b = self.cell_bounds(k);
        let s: f64 = rng.random();
        let t: f64 = rng.random();
        [b[0] + s * (b[1] - b[0]), b[2] + t * (b[3] - b[2])]
    }
}

/// Builds the proposal sampler for `gd`.
///
/// The support rectangle is the smallest node-aligned box containing every grid
/// node with `fbar > eps`, widened by one node on each side. `eps` defaults to
/// `1e-6` times the largest grid value.
pub fn build_sampler(gd: &GridDensity, i1: usize, i2: usize, eps: Option<f64>) -> Result<RectangleSampler> {
    if i1 == 0 || i2 == 0 {
        return Err(Error::InvalidParameter("sampler needs at least one cell per axis".into()));
    }
    let eps = eps.unwrap_or(RectangleSampler::DEFAULT_EPS_FRACTION * gd.max_value());
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("support threshold must be positive, got {eps}")));
    }
    let spec = gd.spec();
    let log_eps = eps.ln();
    let (mut imin, mut imax, mut jmin, mut jmax) = (usize::MAX, 0, usize::MAX, 0);
    for i in 0..spec.n1 {
        for j in 0..spec.n2 {
            if gd.log_values()[i * spec.n2 + j] > log_eps {
                imin = imin.min(i);
                imax = imax.max(i);
                jmin = jmin.min(j);
                jmax = jmax.max(j);
            }
        }
    }
    if imin == usize::MAX {
        return Err(Error::EmptySupport { eps });
    }
    let imin = imin.saturating_sub(1);
    let jmin = jmin.saturating_sub(1);
    let imax = (imax + 1).min(spec.n1 - 1);
    let jmax = (jmax + 1).min(spec.n2 - 1);
    let lo = spec.node(imin, jmin);
    let hi = spec.node(imax, jmax);
    let rect = [lo[0], hi[0], lo[1].max(0.0), hi[1]];

    let kd = gd.kde();
    let mut probs = vec![0.0; i1 * i2];
    let edges = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..=n).map(|k| if k == n { hi } else { lo + (hi - lo) * k as f64 / n as f64 }).collect()
    };
    let e1 = edges(rect[0], rect[1], i1);
    let e2 = edges(rect[2], rect[3], i2);
    if kd.bandwidth().is_diagonal() {
        let s = kd.bandwidth().axis_scales(2);
        let mut m1 = vec![0.0; i1];
        let mut m2 = vec![0.0; i2];
        for c in 0..kd.len() {
            let x = kd.center(c);
            for (i, m) in m1.iter_mut().enumerate() {
                *m = normal_interval_mass((e1[i] - x[0]) / s[0], (e1[i + 1] - x[0]) / s[0]);
            }
            for (j, m) in m2.iter_mut().enumerate() {
                *m = normal_interval_mass((e2[j] - x[1]) / s[1], (e2[j + 1] - x[1]) / s[1]);
            }
            for i in 0..i1 {
                let row = &mut probs[i * i2..(i + 1) * i2];
                for (p, b) in row.iter_mut().zip(&m2) {
                    *p += m1[i] * b;
                }
            }
        }
    } else {
        // Trapezoid over a shared fine lattice, SUBCELLS sub-intervals per cell side.
        let s = RectangleSampler::SUBCELLS;
        let (f1, f2) = (i1 * s + 1, i2 * s + 1);
        let fine = GridSpec { x1: [rect[0], rect[1]], x2: [rect[2], rect[3]], n1: f1, n2: f2 };
        let vals: Vec<f64> = fine.nodes().iter().map(|p| kd.eval(p)).collect();
        let h = fine.step();
        for ci in 0..i1 {
            for cj in 0..i2 {
                let mut acc = 0.0;
                for a in 0..=s {
                    let wa = if a == 0 || a == s { 0.5 } else { 1.0 };
                    let row = (ci * s + a) * f2;
                    for b in 0..=s {
                        let wb = if b == 0 || b == s { 0.5 } else { 1.0 };
                        acc += wa * wb * vals[row + cj * s + b];
                    }
                }
                probs[ci * i2 + cj] = acc * h[0] * h[1];
            }
        }
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptySupport { eps });
    }
    probs.iter_mut().for_each(|p| *p /= total);
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cumulative.push(acc);
    }
    *cumulative.last_mut().unwrap() = 1.0;
    Ok(RectangleSampler { rect, i1, i2, probs, cumulative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kde(points: &[Point], bw: Bandwidth) -> KernelDensity {
        KernelDensity::from_points(&PointSet::new(points.to_vec()), bw).unwrap()
    }

    #[test]
    fn gaussian_mode_and_tail() {
        let k = kde(&[[0.0, 0.0]], Bandwidth::Scalar(1.0));
        assert!((k.eval(&[0.0, 0.0]) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!(k.eval(&[10.0, 10.0]) < 1e-20);
        assert!(k.log_eval(&[1e3, 1e3]).is_finite());
    }

    #[test]
    fn symmetric_centers_give_even_density() {
        let k = kde(&[[1.0, 0.5], [-1.0, -0.5]], Bandwidth::Matrix(vec![vec![0.7, 0.2], vec![0.2, 0.4]]));
        for x in [[0.3, 0.1], [2.0, -1.0], [-0.4, 0.9]] {
            let a = k.eval(&x);
            let b = k.eval(&[-x[0], -x[1]]);
            assert!((a - b).abs() <= 1e-15 * a.max(b));
        }
    }

    #[test]
    fn full_matrix_matches_closed_form() {
        let s = [[0.5, 0.1], [0.1, 0.3]];
        let k = kde(&[[0.2, -0.1]], Bandwidth::Matrix(vec![s[0].to_vec(), s[1].to_vec()]));
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
        let (u, v) = (0.7 - 0.2, 0.4 + 0.1);
        let q = inv[0][0] * u * u + 2.0 * inv[0][1] * u * v + inv[1][1] * v * v;
        let expect = (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
        assert!((k.eval(&[0.7, 0.4]) - expect).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_spd() {
        let ps = PointSet::new(vec![[0.0, 0.0]]);
        assert!(KernelDensity::from_points(&ps, Bandwidth::Matrix(vec![vec![1.0, 2.0], vec![2.0, 1.0]])).is_err());
        assert!(KernelDensity::from_points(&ps, Bandwidth::Matrix(vec![vec![1.0, 0.1], vec![0.0, 1.0]])).is_err());
        assert!(KernelDensity::from_points(&ps, Bandwidth::Scalar(0.0)).is_err());
        let k = kde(&[[0.0, 0.0]], Bandwidth::Scalar(1.0));
        assert!(k.try_eval(&[0.0]).is_err());
    }

    #[test]
    fn mixture_linearity() {
        let a = [[0.1, 0.2], [0.4, 0.1], [0.3, 0.9]];
        let b = [[1.0, 1.0], [0.7, 0.2]];
        let all: Vec<Point> = a.iter().chain(&b).copied().collect();
        let bw = Bandwidth::Scalar(0.3);
        let (ka, kb, kall) = (kde(&a, bw.clone()), kde(&b, bw.clone()), kde(&all, bw));
        for x in [[0.0, 0.0], [0.5, 0.5], [1.3, -0.2]] {
            let lhs = kall.eval(&x);
            let rhs = 3.0 / 5.0 * ka.eval(&x) + 2.0 / 5.0 * kb.eval(&x);
            assert!((lhs - rhs).abs() < 1e-14, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn rule_of_thumb_hand_value() {
        let ps = PointSet::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
        let eta = rule_of_thumb_bandwidth(&ps).unwrap();
        let expect = (5.0f64 / 3.0).sqrt() * 4.0f64.powf(-1.0 / 6.0);
        assert!((eta - expect).abs() < 1e-15);

        let scaled = PointSet::new(ps.points.iter().map(|p| [p[0] * 3.0, p[1] * 3.0]).collect());
        assert!((rule_of_thumb_bandwidth(&scaled).unwrap() - 3.0 * eta).abs() < 1e-14);

        let doubled = PointSet::new(ps.points.iter().chain(&ps.points).copied().collect());
        // Divisor n-1 changes with duplication: sd(8 pts) = sd(4 pts) * sqrt(6/7 * 4/3).
        let sd8 = (5.0f64 / 3.0 * 3.0 / 7.0 * 4.0 / 2.0).sqrt();
        let expect8 = sd8 * 8.0f64.powf(-1.0 / 6.0);
        assert!((rule_of_thumb_bandwidth(&doubled).unwrap() - expect8).abs() < 1e-14);

        let same = PointSet::new(vec![[1.0, 1.0]; 3]);
        assert!(matches!(rule_of_thumb_bandwidth(&same), Err(Error::DegenerateSpread)));
    }

    #[test]
    fn normalization_is_unit_mass() {
        let ps = PointSet::new(vec![[0.2, 0.05], [0.25, 0.1], [0.1, 0.02], [0.3, 0.3]]);
        let bw = Bandwidth::Scalar(rule_of_thumb_bandwidth(&ps).unwrap());
        let gd = shape_prior(&ps, &bw, 101).unwrap();
        assert!((trapezoid(gd.spec(), &gd.values()) - 1.0).abs() < 1e-10);
        for p in &ps.points {
            assert!(gd.spec().contains(*p));
        }
        assert_eq!(gd.log_eval([0.0, -1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn normalization_is_scale_free_in_the_kernel() {
        // Duplicating every center leaves the KDE unchanged, hence the prior too;
        // the normalized grid values are invariant under positive rescaling.
        let ps = PointSet::new(vec![[0.2, 0.05], [0.25, 0.1], [0.1, 0.02]]);
        let dup = PointSet::new(ps.points.iter().chain(&ps.points).copied().collect());
        let bw = Bandwidth::Scalar(0.05);
        let spec = GridSpec { x1: [0.0, 0.5], x2: [0.0, 0.3], n1: 41, n2: 31 };
        let a = restrict_halfplane(&KernelDensity::from_points(&ps, bw.clone()).unwrap(), &spec).unwrap();
        let b = restrict_halfplane(&KernelDensity::from_points(&dup, bw).unwrap(), &spec).unwrap();
        for (x, y) in a.log_values().iter().zip(b.log_values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_center_normalizer_matches_gaussian_mass() {
        let eta = 0.1;
        let c = [0.5, 0.6];
        let k = kde(&[c], Bandwidth::Scalar(eta));
        let spec = GridSpec { x1: [0.0, 1.0], x2: [0.0, 1.2], n1: 101, n2: 101 };
        let gd = restrict_halfplane(&k, &spec).unwrap();
        let phi = |z: f64| 0.5 * erfc(-z / std::f64::consts::SQRT_2);
        let mass = (phi((1.0 - c[0]) / eta) - phi((0.0 - c[0]) / eta)) * (phi((1.2 - c[1]) / eta) - phi((0.0 - c[1]) / eta));
        let z = gd.log_normalizer().exp();
        assert!((z - mass).abs() / mass < 1e-3, "{z} vs {mass}");
    }

    #[test]
    fn degenerate_rectangles_rejected() {
        let k = kde(&[[0.0, 0.0]], Bandwidth::Scalar(1.0));
        for spec in [
            GridSpec { x1: [0.0, 0.0], x2: [0.0, 1.0], n1: 11, n2: 11 },
            GridSpec { x1: [0.0, 1.0], x2: [-1.0, 1.0], n1: 11, n2: 11 },
            GridSpec { x1: [0.0, 1.0], x2: [0.0, 1.0], n1: 1, n2: 11 },
        ] {
            assert!(matches!(restrict_halfplane(&k, &spec), Err(Error::DegenerateRectangle(_))));
        }
    }

    fn sampler_fixture() -> (GridDensity, RectangleSampler) {
        let ps = PointSet::new(vec![[0.2, 0.05], [0.25, 0.1], [0.1, 0.02], [0.3, 0.2], [0.22, 0.07]]);
        let bw = Bandwidth::Scalar(rule_of_thumb_bandwidth(&ps).unwrap());
        let gd = shape_prior(&ps, &bw, 101).unwrap();
        let s = build_sampler(&gd, 100, 100, None).unwrap();
        (gd, s)
    }

    #[test]
    fn sampler_table_is_normalized_and_monotone() {
        let (_, s) = sampler_fixture();
        let total: f64 = s.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(s.probabilities().iter().all(|&p| p >= 0.0));
        assert!(s.cumulative().windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*s.cumulative().last().unwrap(), 1.0);
        assert!(s.rect()[2] >= 0.0);
    }

    #[test]
    fn tight_center_owns_the_heaviest_cell() {
        let c = [0.537, 0.412];
        let k = kde(&[c], Bandwidth::Scalar(0.01));
        let spec = GridSpec { x1: [0.0, 1.0], x2: [0.0, 1.0], n1: 201, n2: 201 };
        let gd = restrict_halfplane(&k, &spec).unwrap();
        let s = build_sampler(&gd, 100, 100, None).unwrap();
        let argmax = s.probabilities().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(Some(argmax), s.cell_of(c));
    }

    #[test]
    fn samples_respect_support_and_seed() {
        let (_, s) = sampler_fixture();
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let p = s.sample_point(&mut a);
            assert_eq!(p, s.sample_point(&mut b));
            assert!(p[1] >= 0.0);
            assert!(s.cell_of(p).is_some());
        }
    }

    #[test]
    fn single_cell_sampler_stays_in_cell() {
        let k = kde(&[[0.5, 0.5]], Bandwidth::Scalar(0.05));
        let spec = GridSpec { x1: [0.0, 1.0], x2: [0.0, 1.0], n1: 11, n2: 11 };
        let gd = restrict_halfplane(&k, &spec).unwrap();
        let s = build_sampler(&gd, 1, 1, None).unwrap();
        let b = s.cell_bounds(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = s.sample_point(&mut rng);
            assert!(p[0] >= b[0] && p[0] <= b[1] && p[1] >= b[2] && p[1] <= b[3]);
        }
    }

    #[test]
    fn eps_too_large_is_rejected() {
        let (gd, _) = sampler_fixture();
        assert!(matches!(build_sampler(&gd, 10, 10, Some(gd.max_value() * 2.0)), Err(Error::EmptySupport { .. })));
    }

    #[test]
    fn full_matrix_sampler_agrees_with_diagonal_route() {
        // A diagonal matrix given as `Matrix` but with a tiny off-diagonal term
        // goes through the sub-cell trapezoid route; compare with the CDF route.
        let ps = PointSet::new(vec![[0.2, 0.1], [0.3, 0.15], [0.25, 0.3]]);
        let diag = Bandwidth::Matrix(vec![vec![0.004, 0.0], vec![0.0, 0.003]]);
        let near = Bandwidth::Matrix(vec![vec![0.004, 1e-12], vec![1e-12, 0.003]]);
        let spec = GridSpec { x1: [-0.2, 0.7], x2: [0.0, 0.6], n1: 41, n2: 41 };
        let g1 = restrict_halfplane(&KernelDensity::from_points(&ps, diag).unwrap(), &spec).unwrap();
        let g2 = restrict_halfplane(&KernelDensity::from_points(&ps, near).unwrap(), &spec).unwrap();
        let s1 = build_sampler(&g1, 12, 10, None).unwrap();
        let s2 = build_sampler(&g2, 12, 10, None).unwrap();
        assert_eq!(s1.rect(), s2.rect());
        for (a, b) in s1.probabilities().iter().zip(s2.probabilities()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}
