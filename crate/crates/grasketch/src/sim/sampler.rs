//! Samplers for the smoothed, Poissonized, infinite dartboard.
//!
//! Under Poissonization every cell is independent and free with probability
//! `exp(-|c| lambda)`, where cell `j` of subsketch `i` has size
//! `2^-(j + R_i) / m`. Two samplers realize this model:
//!
//! * an inverse-CDF sampler for the LogLog register (the highest occupied
//!   cell index), exact per the conditional CDF
//!   `P(X <= x | R = r) = exp(-lambda/m * 2^-(floor(x) + r))`;
//! * a per-cell Bernoulli oracle over a finite index window, with cells
//!   below the window forced occupied and cells above forced free. The
//!   window is chosen so the truncated probabilities are below 1e-12.
//!
//! The oracle is the brute-force reference; a threshold-table variant walks
//! the identical Bernoulli sequence for speed, and tests pin the two to
//! byte-identical behaviour.

use crate::error::{Error, Result};
use crate::hashing::SplitMix64;
use crate::sketch::{offsets_from_values, PcsaSketch, Smoothing};

/// Truncation guard: probabilities outside the window must be below this.
pub const WINDOW_GUARD: f64 = 1e-12;

/// Half-width of the default index window around `log2(lambda / m)`.
pub const WINDOW_HALF_WIDTH: i64 = 45;

/// Default cell-index window for density `lambda` over `m` subsketches:
/// `floor(log2(lambda/m)) +- 45`.
pub fn default_window(lambda: f64, m: u32) -> (i64, i64) {
    let center = (lambda / m as f64).log2().floor() as i64;
    (center - WINDOW_HALF_WIDTH, center + WINDOW_HALF_WIDTH)
}

/// Checks that a window covers all cells with occupancy probability in
/// `(1e-12, 1 - 1e-12)` for the given density.
pub fn validate_window(window: (i64, i64), lambda: f64, m: u32) -> Result<()> {
    let (lo, hi) = window;
    if lo >= hi {
        return Err(Error::InvalidWindow {
            lo,
            hi,
            reason: "lower bound must be below upper bound".into(),
        });
    }
    let rate = lambda / m as f64;
    // Worst offsets: occupancy at the top edge is largest at R = 0, the
    // free probability at the bottom edge is largest as R -> 1.
    let occupied_above = rate * (-(hi as f64)).exp2();
    if !(occupied_above <= WINDOW_GUARD) {
        return Err(Error::InvalidWindow {
            lo,
            hi,
            reason: format!("occupancy {occupied_above:.3e} above window exceeds guard"),
        });
    }
    let free_below = (-rate * (-(lo as f64) - 1.0).exp2()).exp();
    if !(free_below <= WINDOW_GUARD) {
        return Err(Error::InvalidWindow {
            lo,
            hi,
            reason: format!("free probability {free_below:.3e} below window exceeds guard"),
        });
    }
    Ok(())
}

/// Materializes trial offsets for a smoothing mode.
///
/// Random mode consumes `m` draws from the trial stream (always first, so
/// the draw order is part of the determinism contract); the other modes
/// consume nothing.
pub fn trial_offsets(smoothing: Smoothing, m: u32, rng: &mut SplitMix64) -> Vec<f64> {
    match smoothing {
        Smoothing::None => vec![0.0; m as usize],
        Smoothing::Uniform => (0..m).map(|i| i as f64 / m as f64).collect(),
        Smoothing::Random => (0..m).map(|_| rng.next_f64()).collect(),
    }
}

// ---------------------------------------------------------------------------
// LogLog inverse-CDF sampler
// ---------------------------------------------------------------------------

/// Exact inverse-CDF sample of the highest occupied cell index given a
/// uniform `u` in `(0, 1)`: `ceil(-log2(-ln(u) * m * 2^offset / lambda))`.
#[inline]
pub fn loglog_register_from_uniform(u: f64, lambda: f64, m: u32, offset: f64) -> i64 {
    debug_assert!(u > 0.0 && u < 1.0 || (u > 0.0 && u <= 1.0 && (-u.ln()) > 0.0));
    let e = -u.ln();
    (-(e * m as f64 * offset.exp2() / lambda).log2()).ceil() as i64
}

/// Draws the `m` register values of a Poissonized LogLog sketch on the
/// infinite board (indices range over all of Z).
pub fn sample_loglog_registers(
    m: u32,
    lambda: f64,
    offsets: &[f64],
    rng: &mut SplitMix64,
) -> Vec<i64> {
    debug_assert_eq!(offsets.len(), m as usize);
    offsets
        .iter()
        .map(|&r| loglog_register_from_uniform(rng.next_open01(), lambda, m, r))
        .collect()
}

// ---------------------------------------------------------------------------
// Per-cell Bernoulli oracle
// ---------------------------------------------------------------------------

/// Brute-force Poissonized board state over a finite window.
#[derive(Debug, Clone)]
pub struct OracleBoard {
    window: (i64, i64),
    /// Subsketch-major free flags, `width` cells per subsketch.
    free: Vec<bool>,
}

impl OracleBoard {
    /// Number of cells per subsketch.
    pub fn width(&self) -> usize {
        (self.window.1 - self.window.0 + 1) as usize
    }

    /// The sampled window.
    pub fn window(&self) -> (i64, i64) {
        self.window
    }

    /// Whether cell `j` of `subsketch` is free. Cells below the window are
    /// occupied, cells above are free, by construction.
    pub fn is_free(&self, subsketch: usize, j: i64) -> bool {
        if j < self.window.0 {
            false
        } else if j > self.window.1 {
            true
        } else {
            self.free[subsketch * self.width() + (j - self.window.0) as usize]
        }
    }

    /// Highest occupied cell index of a subsketch (the LogLog register).
    pub fn register(&self, subsketch: usize) -> i64 {
        let w = self.width();
        let row = &self.free[subsketch * w..(subsketch + 1) * w];
        for (k, &f) in row.iter().enumerate().rev() {
            if !f {
                return self.window.0 + k as i64;
            }
        }
        // The whole window is free; under the guard band this has
        // probability below 1e-12 per trial and the convention is that
        // everything below the window is occupied.
        self.window.0 - 1
    }

    /// Total tau-generalized remaining area of the board: free cells in the
    /// window plus the closed-form always-free tail above it.
    pub fn gra_total(&self, tau: f64, offsets: &[f64]) -> f64 {
        let w = self.width();
        let ln2 = std::f64::consts::LN_2;
        let tail_factor = (-tau * ln2).exp() / -(-tau * ln2).exp_m1();
        let mut total = 0.0;
        for (i, &r) in offsets.iter().enumerate() {
            let row = &self.free[i * w..(i + 1) * w];
            for (k, &f) in row.iter().enumerate() {
                if f {
                    total += (-tau * ((self.window.0 + k as i64) as f64 + r)).exp2();
                }
            }
            total += (-tau * (self.window.1 as f64 + r)).exp2() * tail_factor;
        }
        total
    }
}

/// Samples every cell in the window independently: cell `j` of subsketch
/// `i` is free with probability `exp(-lambda/m * 2^-(j + R_i))`.
pub fn sample_cells_oracle(
    m: u32,
    lambda: f64,
    offsets: &[f64],
    window: (i64, i64),
    rng: &mut SplitMix64,
) -> Result<OracleBoard> {
    validate_window(window, lambda, m)?;
    let width = (window.1 - window.0 + 1) as usize;
    let rate = lambda / m as f64;
    let mut free = Vec::with_capacity(m as usize * width);
    for &r in offsets {
        for j in window.0..=window.1 {
            let p_free = (-rate * (-(j as f64) - r).exp2()).exp();
            free.push(rng.next_u64() < free_threshold(p_free));
        }
    }
    Ok(OracleBoard { window, free })
}

/// Scales a probability to the u64 comparison threshold used by all
/// Bernoulli draws: free iff `next_u64() < threshold`.
#[inline]
fn free_threshold(p_free: f64) -> u64 {
    debug_assert!((0.0..=1.0).contains(&p_free));
    (p_free * 18_446_744_073_709_551_616.0) as u64 // p * 2^64, saturating
}

// ---------------------------------------------------------------------------
// Threshold table (fast path, identical draw sequence)
// ---------------------------------------------------------------------------

/// Precomputed Bernoulli thresholds and GRA weights for repeated PCSA trials
/// with fixed offsets. Walks the same draw sequence as the oracle.
#[derive(Debug, Clone)]
pub struct PcsaCellTable {
    thresholds: Vec<u64>,
    weights: Vec<f64>,
    /// Closed-form contribution of the always-free cells above the window.
    tail_total: f64,
}

impl PcsaCellTable {
    /// Builds the table for density `lambda`, offsets `offsets`, and the
    /// given window and tau.
    pub fn new(
        m: u32,
        lambda: f64,
        offsets: &[f64],
        window: (i64, i64),
        tau: f64,
    ) -> Result<Self> {
        validate_window(window, lambda, m)?;
        let width = (window.1 - window.0 + 1) as usize;
        let rate = lambda / m as f64;
        let ln2 = std::f64::consts::LN_2;
        let tail_factor = (-tau * ln2).exp() / -(-tau * ln2).exp_m1();
        let mut thresholds = Vec::with_capacity(m as usize * width);
        let mut weights = Vec::with_capacity(m as usize * width);
        let mut tail_total = 0.0;
        for &r in offsets {
            for j in window.0..=window.1 {
                let p_free = (-rate * (-(j as f64) - r).exp2()).exp();
                thresholds.push(free_threshold(p_free));
                weights.push((-tau * (j as f64 + r)).exp2());
            }
            tail_total += (-tau * (window.1 as f64 + r)).exp2() * tail_factor;
        }
        Ok(PcsaCellTable {
            thresholds,
            weights,
            tail_total,
        })
    }

    /// Draws one board and returns its total tau-GRA.
    pub fn sample_total_area(&self, rng: &mut SplitMix64) -> f64 {
        let mut total = self.tail_total;
        for (&t, &w) in self.thresholds.iter().zip(&self.weights) {
            if rng.next_u64() < t {
                total += w;
            }
        }
        total
    }
}

// ---------------------------------------------------------------------------
// Unit-board PCSA sampler (streaming-sketch geometry)
// ---------------------------------------------------------------------------

/// Draws a Poissonized PCSA sketch on the streaming unit board (cells 1..64).
///
/// Used for estimators whose definition lives on the finite board (Lang's
/// ones count, FM's first zero). The density should keep the occupied
/// region well inside the 64 cells, i.e. `lambda/m` roughly within
/// `[2^7, 2^40]`.
pub fn sample_pcsa_unit_board(
    m: u32,
    lambda: f64,
    smoothing: Smoothing,
    rng: &mut SplitMix64,
) -> PcsaSketch {
    let offsets = trial_offsets(smoothing, m, rng);
    let rate = lambda / m as f64;
    let mut bitmaps = Vec::with_capacity(m as usize);
    for &r in &offsets {
        let mut word = 0u64;
        for k in 1..=64i64 {
            let p_free = (-rate * (-(k as f64) - r).exp2()).exp();
            if rng.next_u64() >= free_threshold(p_free) {
                word |= 1u64 << (k - 1);
            }
        }
        bitmaps.push(word);
    }
    PcsaSketch::from_parts(m, offsets_from_values(smoothing, offsets), bitmaps, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_inversion_boundary() {
        // -ln u = lambda * 2^-R / m exactly puts the sample at X = 0.
        let lambda = 3.0;
        let m = 4u32;
        let r = 0.25;
        let u = (-(lambda * (-r as f64).exp2() / m as f64)).exp();
        assert_eq!(loglog_register_from_uniform(u, lambda, m, r), 0);
        // slightly smaller u pushes X to 1, slightly larger stays at 0
        assert_eq!(loglog_register_from_uniform(u * 0.999, lambda, m, r), 1);
        assert_eq!(loglog_register_from_uniform(u * 1.001, lambda, m, r), 0);
    }

    #[test]
    fn register_matches_conditional_cdf() {
        // Empirical CDF at integer k vs exp(-(lambda/m) 2^-(k+R)).
        let (lambda, m, r) = (1.0, 1u32, 0.37);
        let mut rng = SplitMix64::new(42);
        let n = 100_000;
        let mut xs: Vec<i64> = (0..n)
            .map(|_| loglog_register_from_uniform(rng.next_open01(), lambda, m, r))
            .collect();
        xs.sort_unstable();
        let mut worst: f64 = 0.0;
        for k in -8..=8i64 {
            let emp = xs.partition_point(|&x| x <= k) as f64 / n as f64;
            let cdf = (-(lambda / m as f64) * (-(k as f64) - r).exp2()).exp();
            worst = worst.max((emp - cdf).abs());
        }
        assert!(worst < 0.01, "KS against conditional CDF = {worst}");
    }

    #[test]
    fn doubling_lambda_shifts_registers_by_one() {
        // Under smoothing the distribution of X at 2*lambda equals the
        // distribution of X + 1 at lambda, exactly.
        let m = 1u32;
        let n = 100_000;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut rng_a = SplitMix64::new(1);
        let mut rng_b = SplitMix64::new(2);
        for _ in 0..n {
            let r = rng_a.next_f64();
            a.push(loglog_register_from_uniform(rng_a.next_open01(), 1.0, m, r) + 1);
            let r = rng_b.next_f64();
            b.push(loglog_register_from_uniform(rng_b.next_open01(), 2.0, m, r));
        }
        let a: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        let b: Vec<f64> = b.iter().map(|&x| x as f64).collect();
        let ks = crate::sim::ks::two_sample_ks(&a, &b);
        assert!(ks < 0.01, "shift-by-one KS = {ks}");
    }

    #[test]
    fn window_validation() {
        assert!(validate_window(default_window(1.0, 1024), 1.0, 1024).is_ok());
        assert!(validate_window((-3, 3), 1.0, 1024).is_err());
        assert!(validate_window((5, -5), 1.0, 1024).is_err());
        // far too low: occupied cells above the window
        assert!(validate_window((-100, -60), 1.0, 1024).is_err());
    }

    #[test]
    fn oracle_limits() {
        let m = 8u32;
        let offsets = vec![0.5; 8];
        // Huge density with the window above the action: everything below
        // the crossover is occupied.
        let lambda = 2f64.powi(40);
        let window = default_window(lambda, m);
        let mut rng = SplitMix64::new(3);
        let board = sample_cells_oracle(m, lambda, &offsets, window, &mut rng).unwrap();
        for i in 0..m as usize {
            assert!(!board.is_free(i, window.0));
            assert!(board.is_free(i, window.1));
            let x = board.register(i);
            assert!((x - 40).abs() < 10, "register {x} far from crossover 40");
        }
        // Tiny density: everything in sight is free.
        let lambda = 2f64.powi(-30);
        let window = default_window(lambda, m);
        let board = sample_cells_oracle(m, lambda, &offsets, window, &mut rng).unwrap();
        for i in 0..m as usize {
            assert!(board.is_free(i, -29));
        }
    }

    #[test]
    fn table_walks_same_sequence_as_oracle() {
        let m = 16u32;
        let lambda = 1.0;
        let offsets: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
        let window = default_window(lambda, m);
        let tau = 0.7;
        let table = PcsaCellTable::new(m, lambda, &offsets, window, tau).unwrap();
        for seed in 0..20 {
            let mut rng_a = SplitMix64::new(seed);
            let mut rng_b = SplitMix64::new(seed);
            let fast = table.sample_total_area(&mut rng_a);
            let board = sample_cells_oracle(m, lambda, &offsets, window, &mut rng_b).unwrap();
            let slow = board.gra_total(tau, &offsets);
            assert_eq!(fast.to_bits(), slow.to_bits(), "seed {seed}");
        }
    }

    #[test]
    fn oracle_and_inversion_agree_in_distribution() {
        // Registers derived from oracle boards match the inverse-CDF
        // sampler for several densities.
        let m = 4u32;
        let n = 25_000;
        for (si, rate) in [0.1f64, 1.0, 10.0].iter().enumerate() {
            let lambda = rate * m as f64;
            let window = default_window(lambda, m);
            let mut xs = Vec::with_capacity(n * m as usize);
            let mut ys = Vec::with_capacity(n * m as usize);
            let mut rng = SplitMix64::new(1000 + si as u64);
            for _ in 0..n {
                let offsets = trial_offsets(Smoothing::Random, m, &mut rng);
                let board = sample_cells_oracle(m, lambda, &offsets, window, &mut rng).unwrap();
                for i in 0..m as usize {
                    xs.push(board.register(i) as f64);
                }
                let offsets = trial_offsets(Smoothing::Random, m, &mut rng);
                for x in sample_loglog_registers(m, lambda, &offsets, &mut rng) {
                    ys.push(x as f64);
                }
            }
            let ks = crate::sim::ks::two_sample_ks(&xs, &ys);
            assert!(ks < 0.01, "rate {rate}: sampler KS = {ks}");
        }
    }

    #[test]
    fn pcsa_cells_are_independent() {
        // Empirical covariance between two distinct cells' free indicators
        // stays within 3 standard errors of zero.
        let m = 1u32;
        let lambda = 8.0;
        let window = default_window(lambda, m);
        let offsets = vec![0.0];
        let n = 40_000usize;
        let mut rng = SplitMix64::new(9);
        let (ja, jb) = (2i64, 4i64); // both near the crossover
        let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let board = sample_cells_oracle(m, lambda, &offsets, window, &mut rng).unwrap();
            let a = board.is_free(0, ja) as u8 as f64;
            let b = board.is_free(0, jb) as u8 as f64;
            sa += a;
            sb += b;
            sab += a * b;
        }
        let (pa, pb, pab) = (sa / n as f64, sb / n as f64, sab / n as f64);
        let cov = pab - pa * pb;
        let stderr = (pa * (1.0 - pa) * pb * (1.0 - pb) / n as f64).sqrt();
        assert!(
            cov.abs() < 3.0 * stderr + 1e-12,
            "cov {cov} vs stderr {stderr}"
        );
    }
}
