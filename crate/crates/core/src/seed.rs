// SPDX-License-Identifier: Apache-2.0

//! Reproducible seed derivation.
//!
//! Every random stream in the crate is a ChaCha20 generator keyed by a 64-bit
//! seed derived from a master seed and a label. The label is a sequence of
//! parts (strings and integers) hashed with FNV-1a and finalized with the
//! SplitMix64 mixer, so derived seeds depend only on the values involved and
//! never on execution order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type NoiseRng = ChaCha20Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// One component of a derivation label.
#[derive(Debug, Clone, Copy)]
pub enum Part<'a> {
    Str(&'a str),
    Int(u64),
}

impl<'a> From<&'a str> for Part<'a> {
    fn from(s: &'a str) -> Self {
        Part::Str(s)
    }
}

impl From<u64> for Part<'_> {
    fn from(v: u64) -> Self {
        Part::Int(v)
    }
}

impl From<usize> for Part<'_> {
    fn from(v: usize) -> Self {
        Part::Int(v as u64)
    }
}

fn fnv_bytes(mut hash: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a label.
///
/// Each part is prefixed with a type tag and a length so that different
/// part sequences cannot collide by concatenation.
pub fn derive(master: u64, parts: &[Part<'_>]) -> u64 {
    let mut hash = fnv_bytes(FNV_OFFSET, &master.to_le_bytes());
    for part in parts {
        match part {
            Part::Str(s) => {
                hash = fnv_bytes(hash, b"s");
                hash = fnv_bytes(hash, &(s.len() as u64).to_le_bytes());
                hash = fnv_bytes(hash, s.as_bytes());
            }
            Part::Int(v) => {
                hash = fnv_bytes(hash, b"i");
                hash = fnv_bytes(hash, &v.to_le_bytes());
            }
        }
    }
    splitmix64(hash)
}

pub fn rng_from_seed(seed: u64) -> NoiseRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent stream for `(master, label)`.
pub fn stream(master: u64, parts: &[Part<'_>]) -> NoiseRng {
    rng_from_seed(derive(master, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derivation_is_stable_and_label_sensitive() {
        let a = derive(7, &["trial".into(), 3u64.into()]);
        assert_eq!(a, derive(7, &["trial".into(), 3u64.into()]));
        assert_ne!(a, derive(7, &["trial".into(), 4u64.into()]));
        assert_ne!(a, derive(8, &["trial".into(), 3u64.into()]));
        // "ab" + "c" must differ from "a" + "bc"
        assert_ne!(
            derive(0, &["ab".into(), "c".into()]),
            derive(0, &["a".into(), "bc".into()])
        );
    }

    #[test]
    fn streams_replay() {
        let mut r1 = stream(42, &["x".into()]);
        let mut r2 = stream(42, &["x".into()]);
        for _ in 0..16 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }
}
