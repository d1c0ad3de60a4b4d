//! Deterministic sub-seed derivation.
//!
//! All randomness in the crate flows from a single user seed; independent
//! streams (per path, per replicate) are derived by stably hashing
//! `(seed, purpose, index)`. The hash is fixed here rather than borrowed from
//! `std` so that outputs are reproducible across platforms and Rust versions.

/// FNV-1a over the seed, a purpose tag and an index, with a final splitmix64
/// finisher to spread low-entropy inputs across all 64 bits.
pub fn derive_seed(seed: u64, purpose: &str, index: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &b in seed
        .to_le_bytes()
        .iter()
        .chain(purpose.as_bytes())
        .chain(index.to_le_bytes().iter())
    {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_purposes_and_indices_decorrelate() {
        let a = derive_seed(7, "simulate-path", 0);
        let b = derive_seed(7, "simulate-path", 1);
        let c = derive_seed(7, "coverage-rep", 0);
        let d = derive_seed(8, "simulate-path", 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn stable_value() {
        // Pinned: a change here would silently re-randomize every experiment.
        assert_eq!(derive_seed(0, "x", 0), derive_seed(0, "x", 0));
        assert_eq!(derive_seed(1, "simulate-path", 2), 12487763737842624890);
    }
}
