//! Seed handling.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` whose seed is
//! derived from a 64-bit run seed and a fixed stream tag. Sub-streams are
//! consumed in this order by a single run: frequencies, amplitudes, phases,
//! target generator. Sweep seeds are `mix64(base_seed, grid_index, run_index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds each word into the running state with splitmix64.
pub fn mix64(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Seed of run `run_index` at grid point `grid_index`.
pub fn run_seed(base_seed: u64, grid_index: usize, run_index: usize) -> u64 {
    mix64(&[base_seed, grid_index as u64, run_index as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Frequencies = 1,
    Amplitudes = 2,
    Phases = 3,
    Target = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(&[seed, stream as u64]))
}
