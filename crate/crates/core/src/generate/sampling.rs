//! Uniform samples on circles and the unit sphere.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diagram::Point;

/// `n` points uniform on the circle of `radius` about `center`.
pub fn sample_circle<R: Rng + ?Sized>(n: usize, radius: f64, center: Point, rng: &mut R) -> Vec<Point> {
    (0..n)
        .map(|_| {
            let t = rng.random::<f64>() * std::f64::consts::TAU;
            [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
        })
        .collect()
}

/// `n` points uniform on the unit sphere, as normalized Gaussian vectors.
pub fn sample_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r > 1e-12 {
            out.push([v[0] / r, v[1] / r, v[2] / r]);
        }
    }
    out
}
