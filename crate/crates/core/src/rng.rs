//! Counter-based hashing used to derive edge weights and seed substreams.
//!
//! Every random quantity in the crate is a pure function of a root seed and
//! an integer key, so values do not depend on evaluation order, box size or
//! thread count.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a sequence of words under `seed`.
#[inline]
pub fn hash_words(seed: u64, words: &[u64]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    for &w in words {
        h = mix64(h ^ w.wrapping_add(GOLDEN).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    h
}

/// Maps a 64-bit hash to a uniform double in `[0, 1)`.
#[inline]
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn label_word(label: &str) -> u64 {
    // FNV-1a
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Derives the seed of the labeled substream `index` of `seed`.
pub fn substream(seed: u64, label: &str, index: u64) -> u64 {
    hash_words(seed, &[label_word(label), index])
}
