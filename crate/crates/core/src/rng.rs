//! Counter-based seed derivation.
//!
//! Every random stream in the crate is keyed by a master seed and a path of
//! integers (trial index, tree index, role tag, ...). Streams are therefore
//! independent of evaluation order and can be replayed individually.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used for every stream.
pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `path` into `master`; distinct paths give unrelated seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x2545_F491_4F6C_DD1D)));
    }
    h
}

/// A fresh generator for the stream named by `path`.
pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, path))
}

/// Hash of the exact bit patterns of a feature vector.
pub fn hash_bits(x: &[f64]) -> u64 {
    let mut h = splitmix64(x.len() as u64);
    for v in x {
        h = splitmix64(h ^ v.to_bits());
    }
    h
}
