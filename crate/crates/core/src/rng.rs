//! Seed derivation and keyed hashing.
//!
//! Every random quantity in a run is drawn from a stream derived from the
//! run seed and a fixed tag, so runs replay exactly and adding a new stream
//! never perturbs existing ones. Point-keyed values (acquisition noise,
//! tie-breaking) hash the state's bit pattern instead of its position in a
//! list, which keeps them identical across datasets that share the state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine two words into one well-mixed word.
#[inline]
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

/// FNV-1a over a tag; stable across platforms and compiler versions.
pub fn tag_hash(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for the named stream of a run.
pub fn stream_seed(seed: u64, tag: &str) -> u64 {
    mix(seed, tag_hash(tag))
}

/// Deterministic generator for the named stream of a run.
pub fn stream(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, tag))
}

/// Hash of a state vector under a key. Distinguishes `0.0` from `-0.0`.
pub fn hash_state(key: u64, x: &[f64]) -> u64 {
    let mut h = splitmix64(key ^ (x.len() as u64));
    for v in x {
        h = mix(h, v.to_bits());
    }
    h
}

/// Map a hash to `[0, 1)` using its top 53 bits.
#[inline]
pub fn unit_closed_open(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Map a hash to `(0, 1]`.
#[inline]
pub fn unit_open_closed(h: u64) -> f64 {
    ((h >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}
