//! Closed-form limiting-variance curves, bias constants, special functions,
//! and the tau* optimizer.
//!
//! The limiting relative variance (times m) of the generalized remaining-area
//! estimator is, for the LogLog sketch with random offsets,
//!
//! ```text
//! v_ll(tau) = tau^-2 * ( Gamma(2 tau) ln2 / Gamma(tau)^2
//!                        * (1 + 2^-tau) / (1 - 2^-tau)  -  1 )
//! ```
//!
//! and for the PCSA sketch with uniformly spaced offsets,
//!
//! ```text
//! v_pc(tau) = (1 - 2^-2tau) Gamma(2 tau) ln2 / (tau^2 Gamma(tau)^2).
//! ```
//!
//! Both expressions are evaluated directly for `tau > 1e-4`. Below that the
//! direct form of `v_ll` loses all significance (`Gamma(tau) ~ 1/tau` makes
//! the bracketed difference cancel catastrophically), so both curves switch
//! to their first-order expansions around zero:
//!
//! ```text
//! v_ll(tau) -> (2 pi^2 + ln^2 2)/12 - 2 zeta(3) tau + O(tau^2)
//! v_pc(tau) -> ln^2 2 - ln^3 2 * tau + O(tau^2)
//! ```
//!
//! which agree with the direct evaluation at the crossover to better than
//! 1e-6 and return the exact analytic limits at `tau = 0`.

use crate::error::{Error, Result};
use crate::sketch::SketchKind;
use serde::Serialize;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// zeta(3), the slope term in the small-tau expansion of the LogLog curve.
const ZETA_3: f64 = 1.202_056_903_159_594_3;

/// Largest admissible tau. Beyond this `Gamma(2 tau)` overflows the useful
/// range while the statistic itself vanishes.
pub const TAU_MAX: f64 = 16.0;

/// Below this threshold the variance curves use their small-tau expansions.
pub const TAU_SMALL: f64 = 1e-4;

const LN_2: f64 = std::f64::consts::LN_2;

// ---------------------------------------------------------------------------
// Gamma function
// ---------------------------------------------------------------------------

// Lanczos approximation with Pugh's coefficients (g = 10.900511, n = 11),
// relative error below 1e-13 over the supported domain.
const LANCZOS_G: f64 = 10.900511;
const LANCZOS_COEFFS: [f64; 11] = [
    2.485_740_891_387_535_5e-5,
    1.051_423_785_817_219_7,
    -3.456_870_972_220_162_5,
    4.512_277_094_668_948,
    -2.982_852_253_235_766_4,
    1.056_397_115_771_267_1,
    -1.954_287_731_916_458_7e-1,
    1.709_705_434_044_412_2e-2,
    -5.719_261_174_043_057e-4,
    4.633_994_733_599_057e-6,
    -2.719_949_084_886_077_2e-9,
];
const TWO_SQRT_E_OVER_PI: f64 = 1.860_382_734_205_265_7;

/// Gamma function on `(0, 35]` with relative error below 1e-12.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 || x > 35.0 {
        return Err(Error::invalid(format!("gamma_fn domain is (0, 35], got {x}")));
    }
    Ok(lanczos_gamma(x))
}

fn lanczos_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let s = LANCZOS_COEFFS
            .iter()
            .enumerate()
            .skip(1)
            .fold(LANCZOS_COEFFS[0], |s, (i, &c)| s + c / (i as f64 - x));
        std::f64::consts::PI
            / ((std::f64::consts::PI * x).sin()
                * s
                * TWO_SQRT_E_OVER_PI
                * ((0.5 - x + LANCZOS_G) / std::f64::consts::E).powf(0.5 - x))
    } else {
        let s = LANCZOS_COEFFS
            .iter()
            .enumerate()
            .skip(1)
            .fold(LANCZOS_COEFFS[0], |s, (i, &c)| s + c / (x + i as f64 - 1.0));
        s * TWO_SQRT_E_OVER_PI * ((x - 0.5 + LANCZOS_G) / std::f64::consts::E).powf(x - 0.5)
    }
}

/// `1 - 2^-tau` without cancellation for small tau.
#[inline]
fn one_minus_2_pow_neg(tau: f64) -> f64 {
    -(-tau * LN_2).exp_m1()
}

// ---------------------------------------------------------------------------
// Variance curves
// ---------------------------------------------------------------------------

fn check_tau_range(tau: f64, lo_open: bool) -> Result<()> {
    let ok = tau.is_finite() && tau <= TAU_MAX && if lo_open { tau > 0.0 } else { tau >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "tau must lie in {}0, {TAU_MAX}], got {tau}",
            if lo_open { "(" } else { "[" }
        )))
    }
}

/// Limiting relative variance (times m) of the LogLog tau-GRA estimator.
pub fn loglog_variance(tau: f64) -> Result<f64> {
    check_tau_range(tau, false)?;
    if tau <= TAU_SMALL {
        let limit = (2.0 * std::f64::consts::PI.powi(2) + LN_2 * LN_2) / 12.0;
        return Ok(limit - 2.0 * ZETA_3 * tau);
    }
    Ok(loglog_variance_direct(tau))
}

fn loglog_variance_direct(tau: f64) -> f64 {
    let g1 = lanczos_gamma(tau);
    let g2 = lanczos_gamma(2.0 * tau);
    let q = (-tau * LN_2).exp();
    let p = g2 * LN_2 / (g1 * g1) * (1.0 + q) / (1.0 - q);
    (p - 1.0) / (tau * tau)
}

/// Limiting relative variance (times m) of the PCSA tau-GRA estimator.
pub fn pcsa_variance(tau: f64) -> Result<f64> {
    check_tau_range(tau, false)?;
    if tau <= TAU_SMALL {
        return Ok(LN_2 * LN_2 - LN_2.powi(3) * tau);
    }
    Ok(pcsa_variance_direct(tau))
}

fn pcsa_variance_direct(tau: f64) -> f64 {
    let g1 = lanczos_gamma(tau);
    let g2 = lanczos_gamma(2.0 * tau);
    one_minus_2_pow_neg(2.0 * tau) * g2 * LN_2 / (tau * tau * g1 * g1)
}

/// Limiting variance curve for a sketch kind.
pub fn variance(kind: SketchKind, tau: f64) -> Result<f64> {
    match kind {
        SketchKind::LogLog => loglog_variance(tau),
        SketchKind::Pcsa => pcsa_variance(tau),
    }
}

// ---------------------------------------------------------------------------
// Bias constants
// ---------------------------------------------------------------------------

/// Natural log of the LogLog bias constant
/// `(Gamma(tau) (1 - 2^-tau) / ln2)^(1/tau)`.
///
/// Kept in log space so estimators can fold it into their own exponent;
/// this stays finite and accurate down to tau ~ 1e-300.
pub(crate) fn ln_loglog_bias(tau: f64) -> f64 {
    (lanczos_gamma(tau).ln() + one_minus_2_pow_neg(tau).ln() - LN_2.ln()) / tau
}

/// Natural log of the PCSA bias constant `(Gamma(tau) / ln2)^(1/tau)`.
pub(crate) fn ln_pcsa_bias(tau: f64) -> f64 {
    (lanczos_gamma(tau).ln() - LN_2.ln()) / tau
}

/// LogLog bias constant `(Gamma(tau) (1 - 2^-tau) / ln2)^(1/tau)`.
///
/// Tends to `e^-gamma / sqrt(2)` as tau tends to zero.
pub fn loglog_bias_constant(tau: f64) -> Result<f64> {
    check_tau_range(tau, true)?;
    Ok(ln_loglog_bias(tau).exp())
}

/// PCSA bias constant `(Gamma(tau) / ln2)^(1/tau)`.
///
/// The constant itself diverges as tau tends to zero (the tau-GRA statistic
/// counts an unbounded number of free cells in that limit); below
/// tau ~ 5.5e-3 it exceeds the f64 range and the function returns infinity.
/// Estimators avoid this by combining the log of the constant with the log
/// of the statistic before exponentiating.
pub fn pcsa_bias_constant(tau: f64) -> Result<f64> {
    check_tau_range(tau, true)?;
    Ok(ln_pcsa_bias(tau).exp())
}

// ---------------------------------------------------------------------------
// Poissonized moment closed forms
// ---------------------------------------------------------------------------

/// Closed-form mean of the normalized tau-GRA statistic at density 1.
///
/// LogLog (per-subsketch area, normalized by `m^-tau`):
/// `Gamma(tau) (1 - 2^-tau) / ln2`. PCSA (total area, normalized by
/// `m^-(1+tau)`): `Gamma(tau) / ln2`.
pub fn gra_moment_mean(kind: SketchKind, tau: f64) -> Result<f64> {
    check_tau_range(tau, true)?;
    let g = gamma_fn(tau)?;
    Ok(match kind {
        SketchKind::LogLog => g * one_minus_2_pow_neg(tau) / LN_2,
        SketchKind::Pcsa => g / LN_2,
    })
}

/// Closed-form variance of the normalized tau-GRA statistic at density 1.
///
/// LogLog (per-subsketch, normalized by `m^-2tau`):
/// `Gamma(2tau)(1 - 2^-2tau)/ln2 - mean^2`. PCSA (variance sum, normalized
/// by `m^-(1+2tau)`): `(1 - 2^-2tau) Gamma(2tau) / ln2`.
pub fn gra_moment_variance(kind: SketchKind, tau: f64) -> Result<f64> {
    check_tau_range(tau, true)?;
    if 2.0 * tau > 35.0 {
        return Err(Error::invalid(format!(
            "second moment needs Gamma(2 tau); tau={tau} too large"
        )));
    }
    let second = gamma_fn(2.0 * tau)? * one_minus_2_pow_neg(2.0 * tau) / LN_2;
    Ok(match kind {
        SketchKind::LogLog => {
            let mean = gra_moment_mean(kind, tau)?;
            second - mean * mean
        }
        SketchKind::Pcsa => second,
    })
}

// ---------------------------------------------------------------------------
// Cramer-Rao reference constants
// ---------------------------------------------------------------------------

/// Reference Cramer-Rao lower bound (times m) on the relative variance of an
/// unbiased estimator for the given sketch kind: `ln2 / (pi^2/6 - 1)` for
/// LogLog and `ln2 / (pi^2/6)` for PCSA.
pub fn cramer_rao(kind: SketchKind) -> f64 {
    let i0 = std::f64::consts::PI.powi(2) / 6.0;
    match kind {
        SketchKind::LogLog => LN_2 / (i0 - 1.0),
        SketchKind::Pcsa => LN_2 / i0,
    }
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Minimizes a unimodal function on `[lo, hi]` by golden-section search.
///
/// Returns `(x_min, f(x_min))` with `|x_min - argmin| <= tol`.
pub fn golden_section_min<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite objective near [{a}, {b}]"
            )));
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)))
}

/// Finds the variance-minimizing tau for a sketch kind on `[lo, hi]`.
///
/// A coarse grid pre-scan checks that the curve is unimodal on the interval;
/// if it is not, the search falls back to the bracket around the best grid
/// point before refining, so a local dip cannot mislead the golden section.
pub fn optimize_tau(kind: SketchKind, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    if !(lo > 0.0 && lo < hi && hi <= TAU_MAX) {
        return Err(Error::invalid(format!(
            "optimizer range [{lo}, {hi}] must satisfy 0 < lo < hi <= {TAU_MAX}"
        )));
    }
    if !(tol >= 1e-8) {
        return Err(Error::invalid(format!("tolerance {tol} below 1e-8")));
    }
    let f = |t: f64| variance(kind, t).unwrap_or(f64::NAN);

    const SCAN: usize = 64;
    let step = (hi - lo) / SCAN as f64;
    let values: Vec<f64> = (0..=SCAN).map(|i| f(lo + i as f64 * step)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(
            "variance curve non-finite on scan grid".into(),
        ));
    }
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty scan");
    let descents = values.windows(2).filter(|w| w[1] < w[0]).count();
    let unimodal = values[..=best].windows(2).all(|w| w[1] <= w[0])
        && values[best..].windows(2).all(|w| w[1] >= w[0]);
    let _ = descents;

    let (a, b) = if unimodal {
        (lo, hi)
    } else {
        // Grid + local refine around the best sample.
        (
            lo + best.saturating_sub(1) as f64 * step,
            lo + (best + 1).min(SCAN) as f64 * step,
        )
    };
    golden_section_min(f, a, b, tol)
}

// ---------------------------------------------------------------------------
// Sampled curve
// ---------------------------------------------------------------------------

/// A sampled variance curve together with its minimum.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceCurve {
    /// Which sketch the curve describes.
    pub kind: SketchKind,
    /// `(tau, limiting relative variance times m)` samples.
    pub points: Vec<(f64, f64)>,
    /// Variance-minimizing tau on the sampled range.
    pub tau_star: f64,
    /// Curve value at `tau_star`.
    pub v_star: f64,
}

/// Samples the limiting variance curve on `[lo, hi]` with `steps` intervals
/// and locates its minimum.
pub fn variance_curve(kind: SketchKind, lo: f64, hi: f64, steps: usize) -> Result<VarianceCurve> {
    if !(lo >= 0.0 && lo < hi && hi <= TAU_MAX) || steps == 0 {
        return Err(Error::invalid(format!(
            "curve range [{lo}, {hi}] with {steps} steps is invalid"
        )));
    }
    let mut points = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let tau = lo + (hi - lo) * i as f64 / steps as f64;
        points.push((tau, variance(kind, tau)?));
    }
    let (tau_star, v_star) = optimize_tau(kind, lo.max(0.01), hi, 1e-8)?;
    Ok(VarianceCurve {
        kind,
        points,
        tau_star,
        v_star,
    })
}

/// Default tau for a sketch kind: the variance-minimizing value.
pub fn default_tau(kind: SketchKind) -> f64 {
    // The curves are smooth and unimodal on this range for both kinds.
    optimize_tau(kind, 0.05, 3.0, 1e-8)
        .expect("variance curves are finite on [0.05, 3]")
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_known_values() {
        assert_relative_eq!(gamma_fn(1.0).unwrap(), 1.0, max_relative = 1e-13);
        assert_relative_eq!(gamma_fn(5.0).unwrap(), 24.0, max_relative = 1e-13);
        assert_relative_eq!(
            gamma_fn(0.5).unwrap(),
            std::f64::consts::PI.sqrt(),
            max_relative = 1e-13
        );
        assert!(gamma_fn(0.0).is_err());
        assert!(gamma_fn(-1.0).is_err());
        assert!(gamma_fn(35.5).is_err());
    }

    #[test]
    fn gamma_recurrence() {
        // Gamma(x + 1) = x Gamma(x) across the domain.
        let mut x = 1e-3;
        while x < 17.0 {
            let lhs = gamma_fn(x + 1.0).unwrap();
            let rhs = x * gamma_fn(x).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-11);
            x += 0.137;
        }
    }

    #[test]
    fn loglog_variance_values() {
        // tau = 1: 3 ln2 - 1
        assert_relative_eq!(
            loglog_variance(1.0).unwrap(),
            3.0 * LN_2 - 1.0,
            epsilon = 1e-12
        );
        // tau = 0: (2 pi^2 + ln^2 2) / 12
        let limit = (2.0 * std::f64::consts::PI.powi(2) + LN_2 * LN_2) / 12.0;
        assert_relative_eq!(loglog_variance(0.0).unwrap(), limit, epsilon = 1e-14);
        // tau* from the curve minimum
        assert_relative_eq!(
            loglog_variance(0.889897).unwrap(),
            1.07507,
            epsilon = 1e-5
        );
        assert!(loglog_variance(-0.1).is_err());
        assert!(loglog_variance(16.5).is_err());
    }

    #[test]
    fn pcsa_variance_values() {
        assert_relative_eq!(pcsa_variance(0.0).unwrap(), LN_2 * LN_2, epsilon = 1e-14);
        assert_relative_eq!(
            pcsa_variance(1.0).unwrap(),
            0.75 * LN_2,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            pcsa_variance(0.343557).unwrap(),
            0.435532,
            epsilon = 1e-5
        );
    }

    #[test]
    fn crossover_is_smooth() {
        // The small-tau branch value at the crossover matches the direct
        // formula to within 1e-6 for both kinds.
        let t = TAU_SMALL;
        let ll_branch = loglog_variance(t).unwrap();
        let ll_direct = loglog_variance_direct(t);
        assert!(
            (ll_branch - ll_direct).abs() < 1e-6,
            "loglog crossover gap {}",
            (ll_branch - ll_direct).abs()
        );
        let pc_branch = pcsa_variance(t).unwrap();
        let pc_direct = pcsa_variance_direct(t);
        assert!(
            (pc_branch - pc_direct).abs() < 1e-6,
            "pcsa crossover gap {}",
            (pc_branch - pc_direct).abs()
        );
    }

    #[test]
    fn bias_constants() {
        assert_relative_eq!(
            loglog_bias_constant(1.0).unwrap(),
            1.0 / (2.0 * LN_2),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            loglog_bias_constant(2.0).unwrap(),
            (0.75 / LN_2).sqrt(),
            max_relative = 1e-12
        );
        // tau -> 0 limit: e^-gamma / sqrt(2)
        let limit = (-EULER_GAMMA).exp() / std::f64::consts::SQRT_2;
        assert!((loglog_bias_constant(1e-6).unwrap() - limit).abs() < 1e-4);

        assert_relative_eq!(
            pcsa_bias_constant(1.0).unwrap(),
            1.0 / LN_2,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            pcsa_bias_constant(2.0).unwrap(),
            (1.0 / LN_2).sqrt(),
            max_relative = 1e-12
        );
        // High-precision reference for the PCSA tau* constant.
        assert_relative_eq!(
            pcsa_bias_constant(0.343556525596077).unwrap(),
            46.684881247239876,
            max_relative = 1e-10
        );
        assert!(loglog_bias_constant(0.0).is_err());
    }

    #[test]
    fn optimizer_synthetic_parabola() {
        let (x, v) = golden_section_min(|t| (t - 1.0).powi(2) + 1.0, 0.0, 3.0, 1e-9).unwrap();
        assert!((x - 1.0).abs() < 1e-8);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn optimizer_finds_tau_star() {
        let (t_ll, v_ll) = optimize_tau(SketchKind::LogLog, 0.1, 3.0, 1e-8).unwrap();
        assert!((t_ll - 0.889897).abs() < 1e-4, "loglog tau* = {t_ll}");
        assert!((v_ll - 1.07507).abs() < 1e-5);
        let (t_pc, v_pc) = optimize_tau(SketchKind::Pcsa, 0.05, 3.0, 1e-8).unwrap();
        assert!((t_pc - 0.343557).abs() < 1e-4, "pcsa tau* = {t_pc}");
        assert!((v_pc - 0.435532).abs() < 1e-5);
        // rejections
        assert!(optimize_tau(SketchKind::Pcsa, 0.0, 3.0, 1e-8).is_err());
        assert!(optimize_tau(SketchKind::Pcsa, 0.1, 3.0, 1e-9).is_err());
    }

    #[test]
    fn cramer_rao_ordering() {
        let cr_ll = cramer_rao(SketchKind::LogLog);
        let cr_pc = cramer_rao(SketchKind::Pcsa);
        assert_relative_eq!(cr_ll, 1.07475, epsilon = 1e-4);
        assert_relative_eq!(cr_pc, 0.42138, epsilon = 1e-4);
        let (_, v_ll) = optimize_tau(SketchKind::LogLog, 0.1, 3.0, 1e-8).unwrap();
        let (_, v_pc) = optimize_tau(SketchKind::Pcsa, 0.05, 3.0, 1e-8).unwrap();
        assert!(cr_ll < v_ll);
        assert!(cr_pc < v_pc);
    }

    #[test]
    fn curve_dominates_cramer_rao_everywhere() {
        for kind in [SketchKind::LogLog, SketchKind::Pcsa] {
            let curve = variance_curve(kind, 0.05, 3.0, 500).unwrap();
            let bound = cramer_rao(kind);
            for &(tau, v) in &curve.points {
                assert!(v > 0.0);
                assert!(v >= curve.v_star - 1e-12, "v({tau}) below sampled minimum");
                assert!(v >= bound, "v({tau}) = {v} under Cramer-Rao {bound}");
            }
        }
    }
}
