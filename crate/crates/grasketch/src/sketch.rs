//! PCSA and LogLog sketch states: construction, insertion, merging.
//!
//! Both sketches consist of `m` subsketches selected by stochastic averaging.
//! A per-subsketch offset in `[0, 1)` shifts the cell boundaries ("smoothing")
//! to remove the period-2 oscillation of bias and variance. Streaming sketches
//! live on the unit board: cell indices are clamped to `[1, clamp_max]`
//! (LogLog) or `[1, 64]` (PCSA); the infinite board exists only in the
//! simulation harness.

use crate::error::{Error, Result};
use crate::hashing::{self, cell_index, hash64, split, SplitMix64};
use serde::Serialize;

/// Which sketch family a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchKind {
    /// Bitmap-per-subsketch probabilistic counting.
    Pcsa,
    /// Max-occupied-cell register per subsketch.
    LogLog,
}

impl SketchKind {
    /// Stable name used in CLI flags and report output.
    pub fn name(self) -> &'static str {
        match self {
            SketchKind::Pcsa => "pcsa",
            SketchKind::LogLog => "loglog",
        }
    }
}

impl std::str::FromStr for SketchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcsa" => Ok(SketchKind::Pcsa),
            "loglog" => Ok(SketchKind::LogLog),
            other => Err(Error::invalid(format!("unknown sketch kind {other:?}"))),
        }
    }
}

/// Offset (smoothing) policy for a sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// All offsets zero: the classic unsmoothed sketch.
    None,
    /// Offsets drawn uniformly from `[0, 1)`, reproducible from a seed.
    Random,
    /// The uniformly spaced vector `(0, 1/m, ..., (m-1)/m)`.
    Uniform,
}

impl Smoothing {
    /// Stable name used in CLI flags and report output.
    pub fn name(self) -> &'static str {
        match self {
            Smoothing::None => "none",
            Smoothing::Random => "random",
            Smoothing::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for Smoothing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Smoothing::None),
            "random" => Ok(Smoothing::Random),
            "uniform" => Ok(Smoothing::Uniform),
            other => Err(Error::invalid(format!("unknown smoothing mode {other:?}"))),
        }
    }
}

/// Default LogLog register ceiling; leaves headroom below the 64-bit PCSA
/// word for smoothed shifts.
pub const DEFAULT_CLAMP_MAX: u8 = 62;

/// Per-subsketch offsets together with how they were produced.
///
/// Offsets are frozen at construction and are part of sketch identity: two
/// sketches merge only if their offset vectors were built identically.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetVector {
    mode: Smoothing,
    values: Vec<f64>,
    rng_seed: u64,
}

impl OffsetVector {
    /// Materializes the offset vector for `m` subsketches.
    ///
    /// `rng_seed` is consumed only in random mode, where offsets come from a
    /// dedicated SplitMix64 stream so they stay independent of item hashing.
    pub fn new(mode: Smoothing, m: u32, rng_seed: u64) -> Self {
        let values = match mode {
            Smoothing::None => vec![0.0; m as usize],
            Smoothing::Uniform => (0..m).map(|i| i as f64 / m as f64).collect(),
            Smoothing::Random => {
                let mut rng = SplitMix64::new(rng_seed);
                (0..m).map(|_| rng.next_f64()).collect()
            }
        };
        let rng_seed = if mode == Smoothing::Random { rng_seed } else { 0 };
        OffsetVector { mode, values, rng_seed }
    }

    /// The smoothing mode the vector was built with.
    pub fn mode(&self) -> Smoothing {
        self.mode
    }

    /// Offset values, one per subsketch, each in `[0, 1)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Seed of the offset stream (zero outside random mode).
    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Arithmetic mean of the offsets.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn compatible(&self, other: &Self) -> bool {
        self.mode == other.mode && self.rng_seed == other.rng_seed
    }

    /// Replaces the offset values with an arbitrary vector (fixtures only).
    #[cfg(test)]
    pub(crate) fn with_values_for_test(mut self, values: Vec<f64>) -> Self {
        self.values = values;
        self
    }
}

/// Builds an offset vector with explicit values for simulation trials.
///
/// The simulation harness redraws random offsets per trial from its own
/// stream; those vectors never cross the wire, so mode/seed identity is not
/// material there.
pub(crate) fn offsets_from_values(mode: Smoothing, values: Vec<f64>) -> OffsetVector {
    OffsetVector {
        mode,
        values,
        rng_seed: 0,
    }
}

/// Derives the dedicated offset-stream seed from a sketch seed.
pub(crate) fn offset_seed_for(seed: u64) -> u64 {
    hash64(b"offset-stream", seed)
}

fn check_m(m: u32) -> Result<()> {
    if m == 0 || m > hashing::MAX_SUBSKETCHES {
        return Err(Error::invalid(format!(
            "subsketch count m={m} outside [1, 2^20]"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// LogLog
// ---------------------------------------------------------------------------

/// LogLog sketch: per subsketch, the highest occupied cell index.
///
/// Register value 0 is the EMPTY sentinel ("no dart yet"), distinct from a
/// dart in cell 1; occupied registers hold values in `[1, clamp_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLogSketch {
    m: u32,
    offsets: OffsetVector,
    registers: Vec<u8>,
    seed: u64,
    clamp_max: u8,
}

impl LogLogSketch {
    /// Creates an empty sketch with `m` subsketches.
    pub fn new(m: u32, smoothing: Smoothing, seed: u64) -> Result<Self> {
        Self::with_clamp(m, smoothing, seed, DEFAULT_CLAMP_MAX)
    }

    /// Creates an empty sketch with an explicit register ceiling.
    pub fn with_clamp(m: u32, smoothing: Smoothing, seed: u64, clamp_max: u8) -> Result<Self> {
        check_m(m)?;
        if clamp_max == 0 || clamp_max > 62 {
            return Err(Error::invalid(format!(
                "clamp_max={clamp_max} outside [1, 62]"
            )));
        }
        Ok(LogLogSketch {
            m,
            offsets: OffsetVector::new(smoothing, m, offset_seed_for(seed)),
            registers: vec![0; m as usize],
            seed,
            clamp_max,
        })
    }

    pub(crate) fn from_parts(
        m: u32,
        offsets: OffsetVector,
        registers: Vec<u8>,
        seed: u64,
    ) -> Self {
        debug_assert_eq!(registers.len(), m as usize);
        LogLogSketch {
            m,
            offsets,
            registers,
            seed,
            clamp_max: DEFAULT_CLAMP_MAX,
        }
    }

    /// Number of subsketches.
    pub fn m(&self) -> u32 {
        self.m
    }

    /// Hash seed the sketch was built with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Register ceiling.
    pub fn clamp_max(&self) -> u8 {
        self.clamp_max
    }

    /// The frozen offset vector.
    pub fn offsets(&self) -> &OffsetVector {
        &self.offsets
    }

    /// Raw registers; 0 is the EMPTY sentinel.
    pub fn registers(&self) -> &[u8] {
        &self.registers
    }

    /// True if no subsketch has been hit.
    pub fn is_empty(&self) -> bool {
        self.registers.iter().all(|&r| r == 0)
    }

    /// Inserts one element. Duplicate keys never change state.
    pub fn insert(&mut self, key: &[u8]) {
        self.insert_hash(hash64(key, self.seed));
    }

    /// Inserts a pre-hashed element (the hash must come from `hash64` with
    /// this sketch's seed for merge semantics to hold).
    pub fn insert_hash(&mut self, h: u64) {
        let item = split(h, self.m).expect("m validated at construction");
        let offset = self.offsets.values[item.bucket as usize];
        let j = cell_index(item.u, offset).clamp(1, self.clamp_max as i64) as u8;
        let reg = &mut self.registers[item.bucket as usize];
        if j > *reg {
            *reg = j;
        }
    }

    /// Merges two sketches built with identical parameters.
    ///
    /// The result equals the sketch of the union stream: registers combine
    /// by elementwise max, with EMPTY as the identity.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let registers = self
            .registers
            .iter()
            .zip(&other.registers)
            .map(|(&a, &b)| a.max(b))
            .collect();
        Ok(LogLogSketch {
            m: self.m,
            offsets: self.offsets.clone(),
            registers,
            seed: self.seed,
            clamp_max: self.clamp_max,
        })
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.m != other.m {
            return Err(Error::IncompatibleSketch { field: "m" });
        }
        if self.seed != other.seed {
            return Err(Error::IncompatibleSketch { field: "seed" });
        }
        if !self.offsets.compatible(&other.offsets) {
            return Err(Error::IncompatibleSketch { field: "offsets" });
        }
        if self.clamp_max != other.clamp_max {
            return Err(Error::IncompatibleSketch { field: "clamp_max" });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// PCSA
// ---------------------------------------------------------------------------

/// PCSA sketch: per subsketch, a 64-bit occupancy bitmap.
///
/// Bit `k - 1` of a word is set iff cell `k` (for `k` in `[1, 64]`) has been
/// hit. Cells above 64 are treated as always free; estimators close that
/// tail analytically.
#[derive(Debug, Clone, PartialEq)]
pub struct PcsaSketch {
    m: u32,
    offsets: OffsetVector,
    bitmaps: Vec<u64>,
    seed: u64,
}

impl PcsaSketch {
    /// Creates an empty sketch with `m` subsketches.
    pub fn new(m: u32, smoothing: Smoothing, seed: u64) -> Result<Self> {
        check_m(m)?;
        Ok(PcsaSketch {
            m,
            offsets: OffsetVector::new(smoothing, m, offset_seed_for(seed)),
            bitmaps: vec![0; m as usize],
            seed,
        })
    }

    pub(crate) fn from_parts(m: u32, offsets: OffsetVector, bitmaps: Vec<u64>, seed: u64) -> Self {
        debug_assert_eq!(bitmaps.len(), m as usize);
        PcsaSketch {
            m,
            offsets,
            bitmaps,
            seed,
        }
    }

    /// Number of subsketches.
    pub fn m(&self) -> u32 {
        self.m
    }

    /// Hash seed the sketch was built with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The frozen offset vector.
    pub fn offsets(&self) -> &OffsetVector {
        &self.offsets
    }

    /// Occupancy bitmaps, one 64-bit word per subsketch.
    pub fn bitmaps(&self) -> &[u64] {
        &self.bitmaps
    }

    /// True if no cell is occupied.
    pub fn is_empty(&self) -> bool {
        self.bitmaps.iter().all(|&b| b == 0)
    }

    /// Inserts one element. Duplicate keys never change state.
    pub fn insert(&mut self, key: &[u8]) {
        self.insert_hash(hash64(key, self.seed));
    }

    /// Inserts a pre-hashed element.
    pub fn insert_hash(&mut self, h: u64) {
        let item = split(h, self.m).expect("m validated at construction");
        let offset = self.offsets.values[item.bucket as usize];
        let k = cell_index(item.u, offset).clamp(1, 64);
        self.bitmaps[item.bucket as usize] |= 1u64 << (k - 1);
    }

    /// Merges two sketches built with identical parameters (bitwise OR).
    pub fn merge(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let bitmaps = self
            .bitmaps
            .iter()
            .zip(&other.bitmaps)
            .map(|(&a, &b)| a | b)
            .collect();
        Ok(PcsaSketch {
            m: self.m,
            offsets: self.offsets.clone(),
            bitmaps,
            seed: self.seed,
        })
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.m != other.m {
            return Err(Error::IncompatibleSketch { field: "m" });
        }
        if self.seed != other.seed {
            return Err(Error::IncompatibleSketch { field: "seed" });
        }
        if !self.offsets.compatible(&other.offsets) {
            return Err(Error::IncompatibleSketch { field: "offsets" });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Kind-erased wrapper
// ---------------------------------------------------------------------------

/// A sketch of either kind, for code paths selected at runtime (CLI, wire).
#[derive(Debug, Clone, PartialEq)]
pub enum Sketch {
    /// PCSA variant.
    Pcsa(PcsaSketch),
    /// LogLog variant.
    LogLog(LogLogSketch),
}

/// Creates an empty sketch of the requested kind.
pub fn new_sketch(kind: SketchKind, m: u32, smoothing: Smoothing, seed: u64) -> Result<Sketch> {
    Ok(match kind {
        SketchKind::Pcsa => Sketch::Pcsa(PcsaSketch::new(m, smoothing, seed)?),
        SketchKind::LogLog => Sketch::LogLog(LogLogSketch::new(m, smoothing, seed)?),
    })
}

impl Sketch {
    /// The sketch family.
    pub fn kind(&self) -> SketchKind {
        match self {
            Sketch::Pcsa(_) => SketchKind::Pcsa,
            Sketch::LogLog(_) => SketchKind::LogLog,
        }
    }

    /// Number of subsketches.
    pub fn m(&self) -> u32 {
        match self {
            Sketch::Pcsa(s) => s.m(),
            Sketch::LogLog(s) => s.m(),
        }
    }

    /// True if nothing has been inserted.
    pub fn is_empty(&self) -> bool {
        match self {
            Sketch::Pcsa(s) => s.is_empty(),
            Sketch::LogLog(s) => s.is_empty(),
        }
    }

    /// Inserts one element.
    pub fn insert(&mut self, key: &[u8]) {
        match self {
            Sketch::Pcsa(s) => s.insert(key),
            Sketch::LogLog(s) => s.insert(key),
        }
    }

    /// Merges two sketches of the same kind and parameters.
    pub fn merge(&self, other: &Self) -> Result<Sketch> {
        match (self, other) {
            (Sketch::Pcsa(a), Sketch::Pcsa(b)) => Ok(Sketch::Pcsa(a.merge(b)?)),
            (Sketch::LogLog(a), Sketch::LogLog(b)) => Ok(Sketch::LogLog(a.merge(b)?)),
            _ => Err(Error::IncompatibleSketch { field: "kind" }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_sketch_offsets() {
        let s = LogLogSketch::new(4, Smoothing::None, 7).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.offsets().values(), &[0.0, 0.0, 0.0, 0.0]);

        let p = PcsaSketch::new(4, Smoothing::Uniform, 7).unwrap();
        assert_eq!(p.offsets().values(), &[0.0, 0.25, 0.5, 0.75]);

        let r1 = LogLogSketch::new(2, Smoothing::Random, 3).unwrap();
        let r2 = LogLogSketch::new(2, Smoothing::Random, 3).unwrap();
        assert_eq!(r1.offsets().values(), r2.offsets().values());
        for &v in r1.offsets().values() {
            assert!((0.0..1.0).contains(&v));
        }

        assert!(LogLogSketch::new(0, Smoothing::None, 0).is_err());
        assert!(PcsaSketch::new(1 << 21, Smoothing::None, 0).is_err());
    }

    #[test]
    fn duplicate_insert_is_noop() {
        let mut s = new_sketch(SketchKind::LogLog, 8, Smoothing::Random, 1).unwrap();
        s.insert(b"key");
        let snapshot = s.clone();
        s.insert(b"key");
        assert_eq!(s, snapshot);

        let mut p = new_sketch(SketchKind::Pcsa, 8, Smoothing::Uniform, 1).unwrap();
        p.insert(b"key");
        let snapshot = p.clone();
        p.insert(b"key");
        assert_eq!(p, snapshot);
    }

    #[test]
    fn insert_applies_cell_index() {
        // Offset 0.5 with u = 2.3 lands in cell 2 (floor(1.8) + 1).
        let offsets = OffsetVector {
            mode: Smoothing::Random,
            values: vec![0.5],
            rng_seed: 9,
        };
        let mut s = LogLogSketch::from_parts(1, offsets, vec![0], 0);
        // Build a hash whose fraction encodes v = 2^-2.3.
        let v = (-2.3f64).exp2();
        let fraction = ((1u64 << 44) as f64 * (1.0 - v)).round() as u64;
        s.insert_hash(fraction);
        assert_eq!(s.registers(), &[2]);
    }

    #[test]
    fn registers_monotone_under_stream() {
        let mut s = LogLogSketch::new(4, Smoothing::Random, 5).unwrap();
        let mut prev = s.registers().to_vec();
        for i in 0u64..2000 {
            s.insert(&i.to_le_bytes());
            for (a, b) in prev.iter().zip(s.registers()) {
                assert!(b >= a, "register decreased");
            }
            prev = s.registers().to_vec();
        }
        // PCSA bits only flip upward
        let mut p = PcsaSketch::new(4, Smoothing::Uniform, 5).unwrap();
        let mut prev = p.bitmaps().to_vec();
        for i in 0u64..2000 {
            p.insert(&i.to_le_bytes());
            for (a, b) in prev.iter().zip(p.bitmaps()) {
                assert_eq!(a & !b, 0, "bit cleared");
            }
            prev = p.bitmaps().to_vec();
        }
    }

    #[test]
    fn merge_laws() {
        let mut a = PcsaSketch::new(16, Smoothing::Uniform, 2).unwrap();
        let mut b = PcsaSketch::new(16, Smoothing::Uniform, 2).unwrap();
        let empty = PcsaSketch::new(16, Smoothing::Uniform, 2).unwrap();
        for i in 0u64..500 {
            a.insert(&i.to_le_bytes());
            b.insert(&(i + 300).to_le_bytes());
        }
        assert_eq!(a.merge(&empty).unwrap(), a);
        assert_eq!(a.merge(&a).unwrap(), a);
        assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());

        // union-stream equivalence
        let mut union = PcsaSketch::new(16, Smoothing::Uniform, 2).unwrap();
        for i in 0u64..800 {
            union.insert(&i.to_le_bytes());
        }
        assert_eq!(a.merge(&b).unwrap(), union);
    }

    #[test]
    fn merge_rejects_mismatches() {
        let a = LogLogSketch::new(8, Smoothing::Random, 1).unwrap();
        let b = LogLogSketch::new(16, Smoothing::Random, 1).unwrap();
        assert_eq!(
            a.merge(&b).unwrap_err(),
            Error::IncompatibleSketch { field: "m" }
        );
        let c = LogLogSketch::new(8, Smoothing::Random, 2).unwrap();
        assert_eq!(
            a.merge(&c).unwrap_err(),
            Error::IncompatibleSketch { field: "seed" }
        );
        let d = LogLogSketch::new(8, Smoothing::Uniform, 1).unwrap();
        assert_eq!(
            a.merge(&d).unwrap_err(),
            Error::IncompatibleSketch { field: "offsets" }
        );
        let k1 = new_sketch(SketchKind::Pcsa, 8, Smoothing::Uniform, 1).unwrap();
        let k2 = new_sketch(SketchKind::LogLog, 8, Smoothing::Uniform, 1).unwrap();
        assert_eq!(
            k1.merge(&k2).unwrap_err(),
            Error::IncompatibleSketch { field: "kind" }
        );
    }

    #[test]
    fn loglog_is_projection_of_pcsa() {
        // Same stream, same seed, same offsets: each LogLog register equals
        // the highest set bit of the PCSA bitmap.
        for smoothing in [Smoothing::None, Smoothing::Random, Smoothing::Uniform] {
            let mut ll = LogLogSketch::new(32, smoothing, 77).unwrap();
            let mut pc = PcsaSketch::new(32, smoothing, 77).unwrap();
            for i in 0u64..5000 {
                ll.insert(&i.to_le_bytes());
                pc.insert(&i.to_le_bytes());
            }
            for (&reg, &bm) in ll.registers().iter().zip(pc.bitmaps()) {
                if bm == 0 {
                    assert_eq!(reg, 0);
                } else {
                    assert_eq!(reg as u32, 64 - bm.leading_zeros());
                }
            }
        }
    }

    #[test]
    fn order_insensitivity() {
        let keys: Vec<u64> = (0..300).collect();
        let build = |order: &[u64]| {
            let mut s = LogLogSketch::new(8, Smoothing::Random, 3).unwrap();
            for k in order {
                s.insert(&k.to_le_bytes());
            }
            s
        };
        let reference = build(&keys);
        let mut rng = SplitMix64::new(123);
        let mut shuffled = keys.clone();
        for _ in 0..100 {
            // Fisher-Yates
            for i in (1..shuffled.len()).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            assert_eq!(build(&shuffled), reference);
        }
    }
}
