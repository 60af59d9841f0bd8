//! Isotropic Gaussian KDE tabulated on a lattice.

use super::GridFunction;
use crate::error::{Error, Result};

/// Kernel contributions are dropped beyond this many bandwidths per axis.
const CUTOFF: f64 = 8.0;

/// Per-axis kernel weights of one sample: first node index and weights.
fn axis_weights(coord: f64, axis: &[f64], eta: f64) -> (usize, Vec<f64>) {
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * eta);
    let lo = axis.partition_point(|&x| x < coord - CUTOFF * eta);
    let hi = axis.partition_point(|&x| x <= coord + CUTOFF * eta);
    let w = axis[lo..hi].iter().map(|x| norm * (-0.5 * ((x - coord) / eta).powi(2)).exp()).collect();
    (lo, w)
}

fn grid_kde(samples: &[&[f64]], eta: f64, lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> Result<GridFunction> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {eta}")));
    }
    if samples.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let d = shape.len();
    let n: usize = shape.iter().product();
    let mut g = GridFunction::new(shape, lo, hi, vec![0.0; n])?;
    let axes: Vec<Vec<f64>> = (0..d).map(|a| g.axis(a)).collect();
    let inv_n = 1.0 / samples.len() as f64;
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: s.len() });
        }
        let w: Vec<(usize, Vec<f64>)> = (0..d).map(|a| axis_weights(s[a], &axes[a], eta)).collect();
        if d == 2 {
            let n1 = g.shape[1];
            for (i, wi) in w[0].1.iter().enumerate() {
                let row = (w[0].0 + i) * n1 + w[1].0;
                for (j, wj) in w[1].1.iter().enumerate() {
                    g.values[row + j] += inv_n * wi * wj;
                }
            }
        } else {
            let (n1, n2) = (g.shape[1], g.shape[2]);
            for (i, wi) in w[0].1.iter().enumerate() {
                for (j, wj) in w[1].1.iter().enumerate() {
                    let row = ((w[0].0 + i) * n1 + w[1].0 + j) * n2 + w[2].0;
                    let wij = inv_n * wi * wj;
                    for (k, wk) in w[2].1.iter().enumerate() {
                        g.values[row + k] += wij * wk;
                    }
                }
            }
        }
    }
    Ok(g)
}

/// KDE with kernel `N(0, eta^2 I)` on the `shape[0] x shape[1]` lattice over `[lo, hi]`.
pub fn grid_kde_2d(samples: &[[f64; 2]], eta: f64, lo: [f64; 2], hi: [f64; 2], shape: [usize; 2]) -> Result<GridFunction> {
    let refs: Vec<&[f64]> = samples.iter().map(|s| s.as_slice()).collect();
    grid_kde(&refs, eta, lo.to_vec(), hi.to_vec(), shape.to_vec())
}

pub fn grid_kde_3d(samples: &[[f64; 3]], eta: f64, lo: [f64; 3], hi: [f64; 3], shape: [usize; 3]) -> Result<GridFunction> {
    let refs: Vec<&[f64]> = samples.iter().map(|s| s.as_slice()).collect();
    grid_kde(&refs, eta, lo.to_vec(), hi.to_vec(), shape.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{Bandwidth, KernelDensity};

    #[test]
    fn single_sample_peaks_at_its_node() {
        let g = grid_kde_2d(&[[0.5, 0.25]], 0.1, [0.0, 0.0], [1.0, 1.0], [21, 21]).unwrap();
        let (k, _) = g.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(g.unravel(k), vec![10, 5]);
        assert!(g.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn agrees_with_dense_kde() {
        let s = [[0.1, 0.2], [0.5, 0.5], [0.52, 0.48], [0.9, 0.1]];
        let eta = 0.07;
        let g = grid_kde_2d(&s, eta, [0.0, 0.0], [1.0, 1.0], [31, 26]).unwrap();
        let kd = KernelDensity::new(2, s.iter().flatten().copied().collect(), Bandwidth::Scalar(eta)).unwrap();
        let (ax, ay) = (g.axis(0), g.axis(1));
        for (k, v) in g.values.iter().enumerate() {
            let idx = g.unravel(k);
            let expect = kd.eval(&[ax[idx[0]], ay[idx[1]]]);
            assert!((v - expect).abs() < 1e-12 * (1.0 + expect), "{v} vs {expect}");
        }
    }

    #[test]
    fn riemann_sum_near_one() {
        let s = [[0.0, 0.0], [0.3, -0.2], [-0.25, 0.1]];
        let eta = 0.1;
        let g = grid_kde_2d(&s, eta, [-0.75, -0.7], [0.7, 0.5], [146, 121]).unwrap();
        let sum: f64 = g.values.iter().sum::<f64>() * g.step(0) * g.step(1);
        assert!((sum - 1.0).abs() < 0.02, "{sum}");
        let s3 = [[0.0, 0.0, 0.0], [0.2, 0.1, -0.1]];
        let g3 = grid_kde_3d(&s3, eta, [-0.5; 3], [0.7; 3], [49, 49, 49]).unwrap();
        let sum3: f64 = g3.values.iter().sum::<f64>() * g3.step(0) * g3.step(1) * g3.step(2);
        assert!((sum3 - 1.0).abs() < 0.02, "{sum3}");
    }
}
