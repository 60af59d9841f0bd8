//! Inflation-factor calibration and replicate-based outlier p-values.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bagplot::BagCore;
use crate::diagram::{Point, PointSet};
use crate::error::{Error, Result};

/// Inflation factors `lo, lo + step, ..., hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for CGrid {
    fn default() -> Self {
        Self { lo: 1.0, hi: 5.0, step: 0.02 }
    }
}

impl CGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.hi >= self.lo) || !(self.lo > 0.0) || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(format!("bad inflation grid {}:{}:{}", self.lo, self.hi, self.step)));
        }
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        Ok((0..=count).map(|k| self.lo + k as f64 * self.step).collect())
    }
}

impl FromStr for CGrid {
    type Err = Error;

    /// Parses `lo:hi:step`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidParameter(format!("expected lo:hi:step, got {s:?}")));
        }
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| Error::InvalidParameter(format!("{t:?}: {e}")));
        let g = Self { lo: num(parts[0])?, hi: num(parts[1])?, step: num(parts[2])? };
        g.values()?;
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub p_star: f64,
    pub c_grid: CGrid,
    #[serde(rename = "A")]
    pub a: usize,
    pub epsilon: f64,
    pub n1: usize,
    pub n2: usize,
    /// Skip calibration and score with this inflation factor.
    #[serde(default)]
    pub fixed_c: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { p_star: 0.05, c_grid: CGrid::default(), a: 2, epsilon: 0.001, n1: 50, n2: 50, fixed_c: None, seed: 0 }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_star) {
            return Err(Error::InvalidParameter(format!("p* must lie in [0, 1], got {}", self.p_star)));
        }
        if self.a == 0 {
            return Err(Error::InvalidParameter("A must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        if self.n2 == 0 || (self.n1 == 0 && self.fixed_c.is_none()) {
            return Err(Error::InvalidParameter("n1 and n2 must be at least 1".into()));
        }
        self.c_grid.values()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c: f64,
    /// No grid value met the target; `c` is the grid maximum.
    pub warning: bool,
}

/// `min { c : fraction of rows with at least A outliers at c <= p* }`.
/// `counts[i][j]` is the outlier count of bagplot `i` at `c_grid[j]`.
pub fn calibrate_inflation(counts: &[Vec<usize>], c_grid: &[f64], a: usize, p_star: f64) -> Result<Calibration> {
    if c_grid.is_empty() {
        return Err(Error::InvalidParameter("empty inflation grid".into()));
    }
    if counts.is_empty() {
        return Err(Error::NotEnoughReplicates { needed: 1, available: 0 });
    }
    let n1 = counts.len() as f64;
    for (j, &c) in c_grid.iter().enumerate() {
        let exceed = counts.iter().filter(|row| row[j] >= a).count() as f64;
        if exceed / n1 <= p_star {
            return Ok(Calibration { c, warning: false });
        }
    }
    log::warn!("no inflation factor in the grid met the target rate; using {}", c_grid[c_grid.len() - 1]);
    Ok(Calibration { c: *c_grid.last().unwrap(), warning: true })
}

/// Gauges of the points of `points` that may count as outliers (lifetime above
/// `epsilon`); others get 0.
fn gauges(core: &BagCore, points: &[Point], epsilon: f64) -> Vec<f64> {
    points.iter().map(|p| if p[1] > epsilon { core.gauge(*p) } else { 0.0 }).collect()
}

/// Outlier counts of each diagram's own bagplot over the grid, ignoring points
/// within `epsilon` of the diagonal.
pub fn outlier_count_matrix(diagrams: &[PointSet], c_grid: &[f64], epsilon: f64, seed: u64) -> Result<Vec<Vec<usize>>> {
    diagrams
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let core = BagCore::new(&d.points, &mut rng)?;
            let g = gauges(&core, &d.points, epsilon);
            Ok(c_grid.iter().map(|&c| g.iter().filter(|&&v| v > c).count()).collect())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub calibrated_c: f64,
    pub calibration_warning: bool,
    /// Fraction of scoring bagplots flagging each original point.
    pub f: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n_scored: usize,
}

impl DetectionReport {
    pub fn flagged(&self, threshold: f64) -> Vec<usize> {
        (0..self.p_values.len()).filter(|&i| self.p_values[i] <= threshold).collect()
    }
}

/// Fraction of the scoring bagplots whose fence at `c` excludes each point of
/// `original`.
pub fn score(original: &PointSet, scoring: &[PointSet], c: f64, epsilon: f64, seed: u64) -> Result<Vec<f64>> {
    let mut hits = vec![0usize; original.len()];
    for (i, d) in scoring.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let core = BagCore::new(&d.points, &mut rng)?;
        for (h, g) in hits.iter_mut().zip(gauges(&core, &original.points, epsilon)) {
            if g > c {
                *h += 1;
            }
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / scoring.len() as f64).collect())
}

/// Calibrates `c` on the first `n1` replicates (unless fixed) and scores the
/// original diagram against the next `n2`. All diagrams are in the
/// birth-persistence plane.
pub fn detect(original: &PointSet, replicates: &[PointSet], config: &DetectionConfig) -> Result<DetectionReport> {
    config.validate()?;
    let n1 = if config.fixed_c.is_some() { 0 } else { config.n1 };
    if n1 + config.n2 > replicates.len() {
        return Err(Error::NotEnoughReplicates { needed: n1 + config.n2, available: replicates.len() });
    }
    let calibration = match config.fixed_c {
        Some(c) => Calibration { c, warning: false },
        None => {
            let grid = config.c_grid.values()?;
            let counts = outlier_count_matrix(&replicates[..n1], &grid, config.epsilon, config.seed)?;
            calibrate_inflation(&counts, &grid, config.a, config.p_star)?
        }
    };
    let scoring = &replicates[n1..n1 + config.n2];
    let f = score(original, scoring, calibration.c, config.epsilon, config.seed.wrapping_add(n1 as u64))?;
    let p_values = f.iter().map(|v| 1.0 - v).collect();
    Ok(DetectionReport { calibrated_c: calibration.c, calibration_warning: calibration.warning, f, p_values, n_scored: config.n2 })
}
