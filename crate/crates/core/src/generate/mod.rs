//! Point-cloud samplers, grid density estimates, Gaussian random fields and
//! superlevel-set persistence of grid functions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod grf;
pub mod kde;
pub mod persistence;
pub mod pipelines;
pub mod sampling;

pub use grf::{grf_simulate, GrfSimulator, GrfSpec};
pub use kde::{grid_kde_2d, grid_kde_3d};
pub use persistence::{euler_characteristic_2d, h0_persistence, h1_persistence_2d, Connectivity};
pub use sampling::{sample_circle, sample_sphere};

/// Values on a regular 2-D or 3-D lattice, row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub shape: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(shape: Vec<usize>, lo: Vec<f64>, hi: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let d = shape.len();
        if !(d == 2 || d == 3) || lo.len() != d || hi.len() != d {
            return Err(Error::DimensionMismatch { expected: 2, got: d });
        }
        if shape.iter().any(|&s| s < 2) {
            return Err(Error::InvalidParameter(format!("resolution must be at least 2 per axis, got {shape:?}")));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return Err(Error::DegenerateRectangle(format!("{lo:?} .. {hi:?}")));
        }
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite grid value at node {i}")));
        }
        Ok(Self { shape, lo, hi, values })
    }

    /// Unit-spaced lattice `0..shape` on each axis.
    pub fn from_values(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let lo = vec![0.0; shape.len()];
        let hi = shape.iter().map(|&s| (s - 1) as f64).collect();
        Self::new(shape, lo, hi, values)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.shape[axis] - 1) as f64
    }

    /// Coordinates along one axis.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        let n = self.shape[axis];
        (0..n).map(|i| if i + 1 == n { self.hi[axis] } else { self.lo[axis] + i as f64 * self.step(axis) }).collect()
    }

    /// Multi-index of linear index `k`.
    pub fn unravel(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = k % self.shape[a];
            k /= self.shape[a];
        }
        idx
    }

    /// CSV with one row per node: coordinates then value.
    pub fn to_csv(&self) -> String {
        let names = ["x", "y", "z"];
        let mut out = names[..self.dim()].join(",");
        out.push_str(",value\n");
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|a| self.axis(a)).collect();
        for (k, v) in self.values.iter().enumerate() {
            for (a, i) in self.unravel(k).into_iter().enumerate() {
                write!(out, "{},", axes[a][i]).unwrap();
            }
            writeln!(out, "{v}").unwrap();
        }
        out
    }
}
