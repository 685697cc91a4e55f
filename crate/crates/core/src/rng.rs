//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by one
//! 64-bit master seed. Independent streams are selected with ChaCha's 64-bit
//! stream counter: the stream id is a SplitMix64 fold of a list of labels
//! (experiment tag, block count, realization index, retry number, ...). The
//! same `(seed, labels)` pair always yields the same sequence, regardless of
//! which thread evaluates it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds the labels into a single stream id.
pub fn stream_id(labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(labels.len() as u64), |acc, &l| {
        splitmix64(acc ^ splitmix64(l))
    })
}

/// Generator for the stream identified by `labels` under `seed`.
pub fn stream(seed: u64, labels: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(labels));
    rng
}

/// Stable 64-bit tag for a short ASCII label, used as the first stream label.
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01B3)
    })
}
