//! Halfspace depth, bagplots and the replicate-based detection of topological signal.

pub mod bagplot;
pub mod cluster;
pub mod detect;
pub mod tukey;

pub use bagplot::{bagplot, BagCore, Bagplot};
pub use cluster::{cluster_diagram, ClusterFeatures, Clustering};
pub use detect::{calibrate_inflation, detect, outlier_count_matrix, score, CGrid, Calibration, DetectionConfig, DetectionReport};
pub use tukey::{tukey_depth, tukey_depth_brute_force};
