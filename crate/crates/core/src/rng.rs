//! Seeded, platform-independent random streams.
//!
//! Every consumer of randomness asks for a stream keyed by a root seed, a
//! purpose tag, and a few integers (iteration, image id, epoch, ...). Keys
//! are folded with SplitMix64 finalizers, so streams for different purposes
//! never share state and results do not depend on call order or threading.
//! The generator itself is Xoshiro256++.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3)
    })
}

/// Derive a 64-bit seed from a root seed, a tag and integer keys.
pub fn derive_seed(seed: u64, tag: &str, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ fnv1a(tag));
    for &k in keys {
        h = splitmix64(h ^ k);
    }
    h
}

/// A fresh generator for `(seed, tag, keys)`.
pub fn stream(seed: u64, tag: &str, keys: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, tag, keys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    const PINNED_SEED: u64 = 0xb3de_20b6_ecdf_cef6;
    const PINNED_DRAW: u64 = 0x6bfd_a5c9_8d8d_4604;

    #[test]
    fn streams_are_reproducible_and_separated() {
        let draw = |tag: &str, keys: &[u64]| -> Vec<u64> {
            let mut r = stream(7, tag, keys);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(draw("split", &[1]), draw("split", &[1]));
        assert_ne!(draw("split", &[1]), draw("split", &[2]));
        assert_ne!(draw("split", &[1]), draw("noise", &[1]));
        assert_ne!(derive_seed(7, "x", &[1, 2]), derive_seed(7, "x", &[2, 1]));
    }

    #[test]
    fn first_output_is_pinned() {
        // Any change here silently changes every split and initialization.
        assert_eq!(derive_seed(0, "split", &[0]), PINNED_SEED);
        assert_eq!(stream(0, "split", &[0]).next_u64(), PINNED_DRAW);
    }
}
