//! Deterministic surrogate for the random oracle.
//!
//! Keys are mapped to a subsketch index ("bucket"), a continuous vertical
//! dart coordinate `u = -log2(v)` with `v` in `(0, 1]`, and from there to a
//! cell index. The construction is fixed so that hash values, and therefore
//! sketch states, are portable across platforms and versions:
//!
//! * `hash64` absorbs the key in 8-byte little-endian chunks (zero-padded
//!   tail) plus the key length, passing each word through the SplitMix64
//!   finalizer (Stafford mix 13) with the golden-ratio increment between
//!   rounds.
//! * `split` reduces the hash to a bucket by high-bits multiply-shift
//!   (`(h * m) >> 64`), which is exact up to a relative bias of at most
//!   `m / 2^64 <= 2^-44` and works for any `m`, not just powers of two.
//! * The low 44 bits form `v = (2^44 - fraction) / 2^44`, so the all-zero
//!   encoding means `v = 1` and `v = 0` cannot occur.

use crate::error::{Error, Result};

/// Largest supported number of subsketches.
pub const MAX_SUBSKETCHES: u32 = 1 << 20;

/// Number of low hash bits interpreted as the dart's vertical position.
///
/// 44 fraction bits cap distinguishable cell indices near 44, which is
/// consistent with sketches sized for universes up to 2^64.
pub const FRACTION_BITS: u32 = 44;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const FRACTION_MASK: u64 = (1u64 << FRACTION_BITS) - 1;
const FRACTION_SCALE: f64 = 1.0 / (1u64 << FRACTION_BITS) as f64;

/// A hashed stream element: its subsketch and dart coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashedItem {
    /// Subsketch index in `[0, m)`.
    pub bucket: u32,
    /// Vertical dart coordinate `u = -log2(v)`, finite and `>= 0`.
    pub u: f64,
    /// The raw 64-bit hash the item was derived from.
    pub raw: u64,
}

/// SplitMix64 finalizer (Stafford variant 13). Full-avalanche 64-bit mix.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a byte key under a 64-bit seed. Deterministic and portable.
pub fn hash64(key: &[u8], seed: u64) -> u64 {
    let mut h = mix64(seed ^ GOLDEN);
    let mut chunks = key.chunks_exact(8);
    for chunk in &mut chunks {
        let word = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        h = mix64(h.wrapping_add(GOLDEN) ^ word);
    }
    let rem = chunks.remainder();
    if !rem.is_empty() {
        let mut tail = [0u8; 8];
        tail[..rem.len()].copy_from_slice(rem);
        h = mix64(h.wrapping_add(GOLDEN) ^ u64::from_le_bytes(tail));
    }
    // Absorbing the length separates keys that differ only by zero padding.
    mix64(h.wrapping_add(GOLDEN) ^ (key.len() as u64))
}

/// Splits a 64-bit hash into a bucket in `[0, m)` and a vertical coordinate.
pub fn split(h: u64, m: u32) -> Result<HashedItem> {
    if m == 0 || m > MAX_SUBSKETCHES {
        return Err(Error::invalid(format!(
            "subsketch count m={m} outside [1, 2^20]"
        )));
    }
    let bucket = ((h as u128 * m as u128) >> 64) as u32;
    let fraction = h & FRACTION_MASK;
    // v in (0, 1], exactly representable (at most 45 significant bits).
    let v = ((1u64 << FRACTION_BITS) - fraction) as f64 * FRACTION_SCALE;
    let u = -v.log2();
    Ok(HashedItem { bucket, u, raw: h })
}

/// Cell index of a dart at height `u` under offset `offset` in `[0, 1)`.
///
/// Returns the unique `j` with `2^(-j-offset) < v <= 2^(-(j-1)-offset)`,
/// i.e. `floor(u - offset) + 1`. The result may be `<= 0` when `u < offset`
/// (infinite-board semantics); streaming sketches clamp it to their cell
/// range.
#[inline]
pub fn cell_index(u: f64, offset: f64) -> i64 {
    debug_assert!(u >= 0.0 && u.is_finite());
    debug_assert!((0.0..1.0).contains(&offset));
    (u - offset).floor() as i64 + 1
}

/// Small deterministic PRNG: the SplitMix64 sequence generator.
///
/// Used for offset vectors and the simulation harness so that results are
/// bit-stable across platforms and library versions.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    /// Creates a generator with the given seed.
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Next 64 uniform bits.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform f64 in `[0, 1)` with 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform f64 strictly inside `(0, 1)`; safe to pass through `ln`.
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

/// Seed for an independent per-trial stream, following the convention
/// `hash64(trial_index_le, master_seed)`.
pub fn derive_stream_seed(master_seed: u64, index: u64) -> u64 {
    hash64(&index.to_le_bytes(), master_seed)
}
