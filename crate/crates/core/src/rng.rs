//! Keyed counter-mode streams: every random draw is a pure function of
//! `(seed, stream)`, so results never depend on iteration order or threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Displacements for one evaluation sample.
pub fn eval_stream(seed: u64, level: u32, sample: u32) -> ChaCha20Rng {
    stream(seed, ((level as u64) << 32) | sample as u64)
}

/// Displacements for one training batch.
pub fn batch_stream(seed: u64, epoch: u32, batch: u32) -> ChaCha20Rng {
    stream(seed, (1 << 63) | ((epoch as u64) << 32) | batch as u64)
}

/// Shuffle order for one epoch.
pub fn shuffle_stream(seed: u64, epoch: u32) -> ChaCha20Rng {
    stream(seed, (1 << 62) | epoch as u64)
}
