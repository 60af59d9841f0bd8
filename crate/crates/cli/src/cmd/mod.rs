pub mod cluster;
pub mod detect;
pub mod fit;
pub mod generate;
pub mod replicate;
pub mod superpose;
