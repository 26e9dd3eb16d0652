//! Seed derivation and counter-style random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream whose key is derived from
//! the master seed and a purpose tag, and whose stream id is a hash of the lattice
//! cell (or realization index). A cell therefore sees the same numbers regardless of
//! the box it is sampled in or the order in which cells are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of tags into a seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x6C69_6673_6869_7473);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x1234_5678_9ABC_DEF1)));
    }
    h
}

fn hash_cell(cell: &[i64]) -> u64 {
    let mut h = splitmix64(cell.len() as u64);
    for &c in cell {
        h = splitmix64(h ^ (c as u64));
    }
    h
}

/// Stream tags for the different consumers of randomness.
pub mod stream {
    pub const MEASURE: u64 = 1;
    pub const REALIZATION: u64 = 2;
    pub const EIGEN_START: u64 = 3;
    pub const STATS: u64 = 4;
}

/// Random stream attached to one lattice cell.
pub fn cell_rng(seed: u64, tag: u64, cell: &[i64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag]));
    rng.set_stream(hash_cell(cell));
    rng
}

/// Random stream for an indexed item (realization, draw, start vector).
pub fn indexed_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag, 0xA5A5]));
    rng.set_stream(splitmix64(index));
    rng
}

/// Seed of the `index`-th realization derived from a master seed.
pub fn realization_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, &[stream::REALIZATION, index])
}
