//! Stationary Gaussian random fields on `[0,1]^2` by circulant embedding.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::GridFunction;
use crate::error::{Error, Result};

/// Covariance `R(x) = exp(-b |x|^(2a))` sampled on an `m x m` grid of spacing `1/m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub a: f64,
    pub b: f64,
    pub m: usize,
}

impl GrfSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::InvalidParameter(format!("a must lie in (0, 1], got {}", self.a)));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::InvalidParameter(format!("b must be positive, got {}", self.b)));
        }
        if self.m < 2 {
            return Err(Error::InvalidParameter(format!("grid size must be at least 2, got {}", self.m)));
        }
        Ok(())
    }

    pub fn covariance(&self, dist: f64) -> f64 {
        (-self.b * dist.powf(2.0 * self.a)).exp()
    }
}

/// Negative eigenvalues above this fraction of the largest are truncated with a warning.
pub const TRUNCATION_TOLERANCE: f64 = 1e-3;

/// In-place 2-D DFT of a row-major `n x n` array.
fn fft2(data: &mut [Complex<f64>], n: usize, planner: &mut FftPlanner<f64>) {
    let fft = planner.plan_fft_forward(n);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

/// Spectral factor of an embedding, reusable across draws.
pub struct GrfSimulator {
    spec: GrfSpec,
    size: usize,
    scale: Vec<f64>,
    /// Most negative eigenvalue before truncation, relative to the largest.
    pub min_relative_eigenvalue: f64,
    planner: FftPlanner<f64>,
}

impl GrfSimulator {
    /// Embeds the `m x m` covariance in a torus of side `2m`, doubling up to
    /// `8m` while the spectrum has significant negative values.
    pub fn new(spec: GrfSpec) -> Result<Self> {
        spec.validate()?;
        let mut planner = FftPlanner::new();
        let mut size = 2 * spec.m;
        loop {
            let mut c = vec![Complex::new(0.0, 0.0); size * size];
            let h = 1.0 / spec.m as f64;
            for i in 0..size {
                let di = i.min(size - i) as f64 * h;
                for j in 0..size {
                    let dj = j.min(size - j) as f64 * h;
                    c[i * size + j] = Complex::new(spec.covariance((di * di + dj * dj).sqrt()), 0.0);
                }
            }
            fft2(&mut c, size, &mut planner);
            let lambda: Vec<f64> = c.iter().map(|z| z.re).collect();
            let max = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
            let rel = min / max;
            if rel >= -TRUNCATION_TOLERANCE || size >= 8 * spec.m {
                if rel < -TRUNCATION_TOLERANCE {
                    return Err(Error::EmbeddingFailed { min_eigenvalue: min, relative: rel });
                }
                if min < 0.0 {
                    log::warn!("circulant embedding of size {size}: truncating negative eigenvalues (minimum {min:e})");
                }
                let total = (size * size) as f64;
                let scale = lambda.iter().map(|l| (l.max(0.0) / total).sqrt()).collect();
                return Ok(Self { spec, size, scale, min_relative_eigenvalue: rel.min(0.0), planner });
            }
            size *= 2;
        }
    }

    pub fn embedding_size(&self) -> usize {
        self.size
    }

    /// Two independent fields from one complex draw.
    pub fn sample_pair<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (GridFunction, GridFunction) {
        let n = self.size;
        let mut z: Vec<Complex<f64>> = self
            .scale
            .iter()
            .map(|s| Complex::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        fft2(&mut z, n, &mut self.planner);
        let m = self.spec.m;
        let mut re = Vec::with_capacity(m * m);
        let mut im = Vec::with_capacity(m * m);
        for i in 0..m {
            for v in &z[i * n..i * n + m] {
                re.push(v.re);
                im.push(v.im);
            }
        }
        let hi = (m - 1) as f64 / m as f64;
        let make = |v| GridFunction::new(vec![m, m], vec![0.0, 0.0], vec![hi, hi], v).expect("finite field");
        (make(re), make(im))
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> GridFunction {
        self.sample_pair(rng).0
    }
}

/// One field with the covariance of `spec`.
pub fn grf_simulate<R: Rng + ?Sized>(spec: &GrfSpec, rng: &mut R) -> Result<GridFunction> {
    Ok(GrfSimulator::new(*spec)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spec_validation() {
        assert!(GrfSpec { a: 0.0, b: 1.0, m: 8 }.validate().is_err());
        assert!(GrfSpec { a: 1.5, b: 1.0, m: 8 }.validate().is_err());
        assert!(GrfSpec { a: 1.0, b: 0.0, m: 8 }.validate().is_err());
        assert!(GrfSpec { a: 0.5, b: 10.0, m: 8 }.validate().is_ok());
    }

    #[test]
    fn fft2_of_delta_is_flat() {
        let n = 4;
        let mut d = vec![Complex::new(0.0, 0.0); n * n];
        d[0] = Complex::new(1.0, 0.0);
        fft2(&mut d, n, &mut FftPlanner::new());
        assert!(d.iter().all(|z| (z.re - 1.0).abs() < 1e-15 && z.im.abs() < 1e-15));
    }

    #[test]
    fn pointwise_variance_is_one() {
        let spec = GrfSpec { a: 1.0, b: 100.0, m: 16 };
        let mut sim = GrfSimulator::new(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 2000;
        let vals: Vec<f64> = (0..n / 2)
            .flat_map(|_| {
                let (a, b) = sim.sample_pair(&mut rng);
                [a.values[17], b.values[17]]
            })
            .collect();
        let var = vals.iter().map(|v| v * v).sum::<f64>() / n as f64;
        // SE of the variance of a N(0,1) sample: sqrt(2/n).
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "var = {var}");
    }

    #[test]
    fn different_seeds_differ_everywhere() {
        let spec = GrfSpec { a: 1.0, b: 100.0, m: 32 };
        let a = grf_simulate(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = grf_simulate(&spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let same = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
        assert_eq!(same, 0);
    }
}
