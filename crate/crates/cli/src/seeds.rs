//! Per-stage seeds derived from the root seed through ChaCha stream selection.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub enum Stage {
    Generate = 1,
    Fit = 2,
    Replicate = 3,
    Detect = 4,
}

/// Seed for item `index` of `stage`, independent of every other stage and item.
pub fn stage_seed(root: u64, stage: Stage, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(((stage as u64) << 32) | index);
    rng.next_u64()
}

pub fn stage_rng(root: u64, stage: Stage, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stage_seed(root, stage, index))
}
