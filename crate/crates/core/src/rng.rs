//! Seed derivation.
//!
//! Every random stream is a ChaCha8 generator keyed by a stable hash of
//! `(seed, purpose, ids...)`, so results never depend on the order in
//! which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags mixed into derived seeds.
pub mod purpose {
    pub const DATASET: u64 = 0x01;
    pub const INIT: u64 = 0x02;
    pub const BATCH: u64 = 0x03;
    pub const ITEM: u64 = 0x04;
    pub const NODE_NOISE: u64 = 0x05;
    pub const T_START: u64 = 0x06;
    pub const CONDITION: u64 = 0x07;
    pub const SHOT_DROP: u64 = 0x08;
    pub const HELD_OUT: u64 = 0x09;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable hash of a seed and a sequence of ids.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x6a09_e667_f3bc_c908);
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x3c6e_f372_fe94_f82b)));
    }
    h
}

pub fn stream(seed: u64, parts: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_order_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        let a: u64 = stream(3, &[purpose::ITEM, 9]).random();
        let b: u64 = stream(3, &[purpose::ITEM, 9]).random();
        assert_eq!(a, b);
    }
}
