//! Counter-based derivation of independent RNG streams from one master
//! seed.
//!
//! A stream is identified by a label and an index. Its seed is
//! `splitmix64(splitmix64(master) ^ fnv1a64(label) ^ splitmix64(index + 1))`,
//! so adding streams never perturbs existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ fnv1a64(label) ^ splitmix64(index.wrapping_add(1)))
}

pub fn stream(master: u64, label: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, label, index))
}
