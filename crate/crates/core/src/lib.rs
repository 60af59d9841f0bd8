//! Replicating persistence diagrams with a Gibbs-type pseudo-likelihood model,
//! plus bagplot-based outlier detection and the generators used to produce
//! diagrams from point clouds and random fields.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod depth;
pub mod diagram;
pub mod error;
pub mod fit;
pub mod generate;
pub mod geometry;
pub mod mcmc;
pub mod model;
pub mod stats;

pub use error::{Error, Result};
