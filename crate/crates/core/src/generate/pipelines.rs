//! End-to-end generators for the worked examples: point clouds smoothed by a
//! kernel estimate, or Gaussian fields, reduced to persistence diagrams.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{grid_kde_2d, grid_kde_3d, h0_persistence, h1_persistence_2d, sample_circle, sample_sphere, Connectivity, GridFunction, GrfSimulator};
use crate::diagram::{strip_infinite, Point, PersistenceDiagram};
use crate::error::Result;

/// A sample from one or more circles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleComponent {
    pub n: usize,
    pub radius: f64,
    pub center: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CirclesConfig {
    pub circles: Vec<CircleComponent>,
    pub eta: f64,
    pub lo: Point,
    pub hi: Point,
    pub resolution: usize,
}

impl CirclesConfig {
    /// 500 points on the circle of radius 2 and 300 on radius 1, both centered
    /// at the origin.
    pub fn concentric() -> Self {
        Self {
            circles: vec![
                CircleComponent { n: 500, radius: 2.0, center: [0.0, 0.0] },
                CircleComponent { n: 300, radius: 1.0, center: [0.0, 0.0] },
            ],
            eta: 0.1,
            lo: [-2.5, -2.5],
            hi: [2.5, 2.5],
            resolution: 201,
        }
    }

    /// 500 points on a circle of radius 0.5 and 650 on a disjoint one of radius 1.2.
    pub fn non_concentric() -> Self {
        Self {
            circles: vec![
                CircleComponent { n: 500, radius: 0.5, center: [0.0, 0.0] },
                CircleComponent { n: 650, radius: 1.2, center: [2.0, 0.0] },
            ],
            eta: 0.1,
            lo: [-1.0, -1.7],
            hi: [3.7, 1.7],
            resolution: 201,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Point> {
        self.circles.iter().flat_map(|c| sample_circle(c.n, c.radius, c.center, rng)).collect()
    }

    pub fn density(&self, samples: &[Point]) -> Result<GridFunction> {
        grid_kde_2d(samples, self.eta, self.lo, self.hi, [self.resolution, self.resolution])
    }
}

/// Diagrams of one smoothed sample, with point counts recorded in the metadata
/// both with and without the points at infinity.
#[derive(Clone, Debug)]
pub struct SampleDiagrams {
    pub samples: Vec<Point>,
    pub density: GridFunction,
    pub h0: PersistenceDiagram,
    pub h1: PersistenceDiagram,
}

fn annotate(d: &mut PersistenceDiagram) {
    let finite = d.finite_count();
    d.metadata.insert("points_total".into(), d.len().to_string());
    d.metadata.insert("points_finite".into(), finite.to_string());
}

pub fn circles_diagrams<R: Rng + ?Sized>(config: &CirclesConfig, rng: &mut R) -> Result<SampleDiagrams> {
    let samples = config.sample(rng);
    let density = config.density(&samples)?;
    let mut h0 = h0_persistence(&density, Connectivity::Face);
    let mut h1 = h1_persistence_2d(&density);
    annotate(&mut h0);
    annotate(&mut h1);
    Ok(SampleDiagrams { samples, density, h0, h1 })
}

/// Finite H0 diagram of a circles sample, the input of the fitting pipeline.
pub fn circles_h0<R: Rng + ?Sized>(config: &CirclesConfig, rng: &mut R) -> Result<PersistenceDiagram> {
    let mut d = circles_diagrams(config, rng)?.h0;
    let meta = d.metadata.clone();
    d = strip_infinite(&d).0;
    d.metadata = meta;
    Ok(d)
}

/// H1 diagram of one simulated field.
pub fn grf_h1<R: Rng + ?Sized>(sim: &mut GrfSimulator, rng: &mut R) -> PersistenceDiagram {
    let mut d = h1_persistence_2d(&sim.sample(rng));
    annotate(&mut d);
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereConfig {
    pub n: usize,
    pub eta: f64,
    /// Nodes per axis on `[-1.5, 1.5]^3`.
    pub resolution: usize,
}

impl Default for SphereConfig {
    fn default() -> Self {
        Self { n: 1000, eta: 0.1, resolution: 61 }
    }
}

/// H0 diagram of a smoothed uniform sample from the unit sphere, using
/// 6-connectivity.
pub fn sphere_h0<R: Rng + ?Sized>(config: &SphereConfig, rng: &mut R) -> Result<(Vec<[f64; 3]>, PersistenceDiagram)> {
    let samples = sample_sphere(config.n, rng);
    let r = config.resolution;
    let density = grid_kde_3d(&samples, config.eta, [-1.5; 3], [1.5; 3], [r, r, r])?;
    let mut d = h0_persistence(&density, Connectivity::Face);
    annotate(&mut d);
    Ok((samples, d))
}
