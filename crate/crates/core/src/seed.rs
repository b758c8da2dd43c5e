//! Deterministic seed derivation.
//!
//! Every random draw in the pipeline comes from a generator seeded by
//! `derive(root, tags)`, so results depend only on the root seed and the
//! logical position of the draw (patient, slice, epoch, sample index), never
//! on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `root`; order matters.
pub fn derive(root: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(root), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Stable 64-bit FNV-1a hash, used to turn identifiers into seed tags.
pub fn tag(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn rng_for(root: u64, tags: &[u64]) -> Rng {
    rng(derive(root, tags))
}

/// Seed for one per-sample operation on `(patient, slice)` in `epoch`.
pub fn sample_seed(root: u64, patient_id: &str, slice_index: usize, epoch: usize) -> u64 {
    derive(root, &[tag(patient_id), slice_index as u64, epoch as u64])
}
