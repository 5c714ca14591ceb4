//! Monte Carlo harness over the smoothed, Poissonized, infinite dartboard.
//!
//! Every run is deterministic given its [`SimConfig`], including the seed:
//! trial `t` draws from an independent SplitMix64 stream seeded with
//! `hash64(t_le_bytes, master_seed)`, and aggregation folds the per-trial
//! values in trial order, so the results are identical under any degree of
//! parallelism.

pub mod ks;
pub mod sampler;

use crate::analysis::{
    self, gra_moment_mean, gra_moment_variance, loglog_variance, pcsa_variance,
};
use crate::error::{Error, Result};
use crate::estimators::{
    df_estimate_from_mean_exponent, estimate_fm, estimate_lang, loglog_estimate_from_mean,
    pcsa_estimate_from_total, EstimatorId,
};
use crate::hashing::{derive_stream_seed, SplitMix64};
use crate::sketch::{SketchKind, Smoothing};
use rayon::prelude::*;
use sampler::{
    sample_loglog_registers, sample_pcsa_unit_board, trial_offsets, PcsaCellTable,
};
use serde::Serialize;

/// Reported reference for the FM estimator's limiting relative variance
/// (times m); the analysis module has no closed form for it.
pub const FM_RELVAR_REFERENCE: f64 = 0.6;

/// Density bounds (lambda / m) for unit-board estimators (Lang, FM), keeping
/// the occupied region far from both ends of the 64-cell word.
const UNIT_BOARD_RATE_RANGE: (f64, f64) = (128.0, 1.099511627776e12); // [2^7, 2^40]

/// Parameters of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    /// Sketch family being simulated.
    pub kind: SketchKind,
    /// Number of subsketches.
    pub m: u32,
    /// Poisson density (the "cardinality" of the model).
    pub lambda: f64,
    /// GRA exponent used by tau-dependent quantities.
    pub tau: f64,
    /// Number of independent trials.
    pub trials: u64,
    /// Master seed; trial streams derive from it.
    pub seed: u64,
    /// Offset policy (random for LogLog and uniform for PCSA by default,
    /// matching the analysis; the cross configurations are allowed).
    pub smoothing: Smoothing,
    /// Cell-index window `(j_lo, j_hi)` sampled explicitly; outside it,
    /// cells are closed in analytic form.
    pub index_window: (i64, i64),
    /// Estimator applied by estimator-statistics runs.
    pub estimator: EstimatorId,
}

impl SimConfig {
    /// Builds a config with the conventional defaults for the kind:
    /// random offsets for LogLog, uniform for PCSA, tau-GRA estimator,
    /// and the default index window for `lambda / m`.
    pub fn new(
        kind: SketchKind,
        m: u32,
        lambda: f64,
        tau: f64,
        trials: u64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = SimConfig {
            kind,
            m,
            lambda,
            tau,
            trials,
            seed,
            smoothing: match kind {
                SketchKind::LogLog => Smoothing::Random,
                SketchKind::Pcsa => Smoothing::Uniform,
            },
            index_window: sampler::default_window(lambda, m),
            estimator: EstimatorId::TauGra,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides the smoothing mode.
    pub fn with_smoothing(mut self, smoothing: Smoothing) -> Self {
        self.smoothing = smoothing;
        self
    }

    /// Overrides the estimator.
    pub fn with_estimator(mut self, estimator: EstimatorId) -> Self {
        self.estimator = estimator;
        self
    }

    /// Overrides the index window (validated).
    pub fn with_window(mut self, window: (i64, i64)) -> Result<Self> {
        sampler::validate_window(window, self.lambda, self.m)?;
        self.index_window = window;
        Ok(self)
    }

    /// Validates every field.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > crate::hashing::MAX_SUBSKETCHES {
            return Err(Error::invalid(format!("m={} outside [1, 2^20]", self.m)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid(format!("lambda={} must be positive", self.lambda)));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if !(self.tau.is_finite() && (0.0..=analysis::TAU_MAX).contains(&self.tau)) {
            return Err(Error::invalid(format!("tau={} outside [0, 16]", self.tau)));
        }
        sampler::validate_window(self.index_window, self.lambda, self.m)
    }

    fn require_positive_tau(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(Error::invalid("this run needs tau > 0"));
        }
        Ok(())
    }
}

/// Outcome of a simulation run, with the prediction it is checked against.
///
/// For estimator runs `empirical_mean` is `mean(lambda_hat) / lambda` and
/// `empirical_relvar_times_m` is `m` times the sample relative variance.
/// For GRA-moment runs the same two slots hold the normalized statistic
/// mean and the normalized statistic variance, checked against the
/// Poissonized closed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    /// What was measured: `estimator_stats` or `gra_moments`.
    pub quantity: String,
    /// Number of trials actually run.
    pub trials: u64,
    /// Headline mean (see type docs).
    pub empirical_mean: f64,
    /// Standard error of `empirical_mean` from trial-level variance.
    pub stderr_of_mean: f64,
    /// Predicted value of `empirical_mean`.
    pub predicted_mean: f64,
    /// Headline dispersion (see type docs).
    pub empirical_relvar_times_m: f64,
    /// Standard error of `empirical_relvar_times_m`.
    pub stderr_of_estimate: f64,
    /// Predicted value of `empirical_relvar_times_m`.
    pub predicted: f64,
    /// Echo of the configuration that produced the report.
    pub config: SimConfig,
}

impl SimReport {
    /// CSV header matching [`SimReport::csv_row`].
    pub fn csv_header() -> &'static str {
        "quantity,kind,m,lambda,tau,trials,seed,smoothing,estimator,window_lo,window_hi,\
         empirical_mean,stderr_of_mean,predicted_mean,empirical_relvar_times_m,\
         stderr_of_estimate,predicted"
    }

    /// One CSV row with the stable column set.
    pub fn csv_row(&self) -> String {
        let c = &self.config;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.quantity,
            c.kind.name(),
            c.m,
            c.lambda,
            c.tau,
            c.trials,
            c.seed,
            c.smoothing.name(),
            c.estimator.name(),
            c.index_window.0,
            c.index_window.1,
            self.empirical_mean,
            self.stderr_of_mean,
            self.predicted_mean,
            self.empirical_relvar_times_m,
            self.stderr_of_estimate,
            self.predicted,
        )
    }
}

/// Summary statistics helpers shared by reports and tests.
pub mod stats {
    /// Sample mean and its standard error.
    pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return (mean, f64::INFINITY);
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    /// Unbiased sample variance and the standard error of that estimate,
    /// `Var(s^2) = (mu4 - s^4 (n-3)/(n-1)) / n`, from the empirical fourth
    /// central moment.
    pub fn variance_and_stderr(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for x in xs {
            let d = x - mean;
            m2 += d * d;
            m4 += d * d * d * d;
        }
        let s2 = m2 / (n - 1.0);
        let mu4 = m4 / n;
        let var_s2 = (mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n;
        (s2, var_s2.max(0.0).sqrt())
    }
}

/// Runs `trials` independent trials in parallel, each on its own derived
/// stream, and returns the per-trial values in trial order.
fn run_trials<T, F>(trials: u64, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut SplitMix64) -> T + Sync + Send,
{
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = SplitMix64::new(derive_stream_seed(seed, t));
            f(&mut rng)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// GRA moments
// ---------------------------------------------------------------------------

/// Measures mean and variance of the normalized tau-GRA statistic at the
/// configured density and compares them with the Poissonized closed forms.
pub fn empirical_gra_moments(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    config.require_positive_tau()?;
    let m = config.m;
    let mf = m as f64;
    let tau = config.tau;

    let (means, variances): (Vec<f64>, Vec<f64>) = match config.kind {
        SketchKind::LogLog => {
            let scale_mean = mf.powf(-tau);
            let scale_var = mf.powf(-2.0 * tau);
            run_trials(config.trials, config.seed, |rng| {
                let offsets = trial_offsets(config.smoothing, m, rng);
                let registers = sample_loglog_registers(m, config.lambda, &offsets, rng);
                let areas: Vec<f64> = registers
                    .iter()
                    .zip(&offsets)
                    .map(|(&x, &r)| (-tau * (r + x as f64)).exp2())
                    .collect();
                let mean = areas.iter().sum::<f64>() / mf;
                let var = {
                    let mut s = 0.0;
                    for a in &areas {
                        s += (a - mean) * (a - mean);
                    }
                    s / (mf - 1.0)
                };
                (scale_mean * mean, scale_var * var)
            })
            .into_iter()
            .unzip()
        }
        SketchKind::Pcsa => {
            let totals = sample_pcsa_totals(config)?;
            let scale_mean = mf.powf(-1.0 - tau);
            // Subsketches are independent, so the across-trial variance of
            // the total equals the variance sum of the proposition.
            let (var_total, var_stderr) = stats::variance_and_stderr(&totals);
            let scale_var = mf.powf(-1.0 - 2.0 * tau);
            let means: Vec<f64> = totals.iter().map(|t| t * scale_mean).collect();
            let (mean, mean_stderr) = stats::mean_and_stderr(&means);
            return Ok(SimReport {
                quantity: "gra_moments".into(),
                trials: config.trials,
                empirical_mean: mean,
                stderr_of_mean: mean_stderr,
                predicted_mean: gra_moment_mean(SketchKind::Pcsa, tau)?,
                empirical_relvar_times_m: var_total * scale_var,
                stderr_of_estimate: var_stderr * scale_var,
                predicted: gra_moment_variance(SketchKind::Pcsa, tau)?,
                config: *config,
            });
        }
    };

    let (mean, mean_stderr) = stats::mean_and_stderr(&means);
    let (var_mean, var_stderr) = stats::mean_and_stderr(&variances);
    Ok(SimReport {
        quantity: "gra_moments".into(),
        trials: config.trials,
        empirical_mean: mean,
        stderr_of_mean: mean_stderr,
        predicted_mean: gra_moment_mean(SketchKind::LogLog, tau)?,
        empirical_relvar_times_m: var_mean,
        stderr_of_estimate: var_stderr,
        predicted: gra_moment_variance(SketchKind::LogLog, tau)?,
        config: *config,
    })
}

/// Per-trial total tau-GRA of a Poissonized PCSA board.
fn sample_pcsa_totals(config: &SimConfig) -> Result<Vec<f64>> {
    let m = config.m;
    match config.smoothing {
        Smoothing::Random => {
            // Offsets are redrawn per trial; the table cannot be shared.
            let lambda = config.lambda;
            let window = config.index_window;
            let tau = config.tau;
            Ok(run_trials(config.trials, config.seed, move |rng| {
                let offsets = trial_offsets(Smoothing::Random, m, rng);
                let table = PcsaCellTable::new(m, lambda, &offsets, window, tau)
                    .expect("window validated");
                table.sample_total_area(rng)
            }))
        }
        mode => {
            let mut unused = SplitMix64::new(0);
            let offsets = trial_offsets(mode, m, &mut unused);
            let table =
                PcsaCellTable::new(m, config.lambda, &offsets, config.index_window, config.tau)?;
            Ok(run_trials(config.trials, config.seed, move |rng| {
                table.sample_total_area(rng)
            }))
        }
    }
}

// ---------------------------------------------------------------------------
// Estimator statistics
// ---------------------------------------------------------------------------

/// Runs independent Poissonized trials, applies the configured estimator,
/// and reports bias and `m * relvar` against the analysis prediction.
pub fn empirical_estimator_stats(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let ratios = sample_estimator_ratios(config)?;
    let predicted = predicted_relvar(config.kind, config.estimator, config.tau)?;
    let (mean, mean_stderr) = stats::mean_and_stderr(&ratios);
    let (var, var_stderr) = stats::variance_and_stderr(&ratios);
    let mf = config.m as f64;
    Ok(SimReport {
        quantity: "estimator_stats".into(),
        trials: config.trials,
        empirical_mean: mean,
        stderr_of_mean: mean_stderr,
        predicted_mean: 1.0,
        empirical_relvar_times_m: mf * var,
        stderr_of_estimate: mf * var_stderr,
        predicted,
        config: *config,
    })
}

/// The analysis-module prediction for `m * relvar` of an estimator.
pub fn predicted_relvar(kind: SketchKind, estimator: EstimatorId, tau: f64) -> Result<f64> {
    match (kind, estimator) {
        (SketchKind::LogLog, EstimatorId::TauGra) => loglog_variance(tau),
        (SketchKind::LogLog, EstimatorId::Ffgm) => loglog_variance(1.0),
        (SketchKind::LogLog, EstimatorId::Df) => loglog_variance(0.0),
        (SketchKind::Pcsa, EstimatorId::TauGra) => pcsa_variance(tau),
        (SketchKind::Pcsa, EstimatorId::Lang) => pcsa_variance(0.0),
        (SketchKind::Pcsa, EstimatorId::Fm) => Ok(FM_RELVAR_REFERENCE),
        (kind, estimator) => Err(Error::invalid(format!(
            "estimator {} is not defined for {} sketches",
            estimator.name(),
            kind.name()
        ))),
    }
}

/// Per-trial `lambda_hat / lambda` samples for the configured estimator.
fn sample_estimator_ratios(config: &SimConfig) -> Result<Vec<f64>> {
    let m = config.m;
    let mf = m as f64;
    let lambda = config.lambda;
    match (config.kind, config.estimator) {
        (SketchKind::LogLog, EstimatorId::TauGra | EstimatorId::Ffgm) => {
            config.require_positive_tau()?;
            let tau = if config.estimator == EstimatorId::Ffgm {
                1.0
            } else {
                config.tau
            };
            Ok(run_trials(config.trials, config.seed, move |rng| {
                let offsets = trial_offsets(config.smoothing, m, rng);
                let registers = sample_loglog_registers(m, lambda, &offsets, rng);
                let gra_mean = registers
                    .iter()
                    .zip(&offsets)
                    .map(|(&x, &r)| (-tau * (r + x as f64)).exp2())
                    .sum::<f64>()
                    / mf;
                loglog_estimate_from_mean(mf, tau, gra_mean) / lambda
            }))
        }
        (SketchKind::LogLog, EstimatorId::Df) => {
            Ok(run_trials(config.trials, config.seed, move |rng| {
                let offsets = trial_offsets(config.smoothing, m, rng);
                let registers = sample_loglog_registers(m, lambda, &offsets, rng);
                let mean_rx = registers
                    .iter()
                    .zip(&offsets)
                    .map(|(&x, &r)| r + x as f64)
                    .sum::<f64>()
                    / mf;
                df_estimate_from_mean_exponent(mf, mean_rx) / lambda
            }))
        }
        (SketchKind::Pcsa, EstimatorId::TauGra) => {
            config.require_positive_tau()?;
            let tau = config.tau;
            let totals = sample_pcsa_totals(config)?;
            Ok(totals
                .into_iter()
                .map(|total| pcsa_estimate_from_total(mf, tau, total) / lambda)
                .collect())
        }
        (SketchKind::Pcsa, EstimatorId::Lang | EstimatorId::Fm) => {
            let rate = lambda / mf;
            if !(UNIT_BOARD_RATE_RANGE.0..=UNIT_BOARD_RATE_RANGE.1).contains(&rate) {
                return Err(Error::invalid(format!(
                    "unit-board estimators need lambda/m in [2^7, 2^40], got {rate}"
                )));
            }
            let estimator = config.estimator;
            let smoothing = config.smoothing;
            Ok(run_trials(config.trials, config.seed, move |rng| {
                let sketch = sample_pcsa_unit_board(m, lambda, smoothing, rng);
                let est = match estimator {
                    EstimatorId::Lang => estimate_lang(&sketch),
                    _ => estimate_fm(&sketch),
                };
                est.lambda_hat / lambda
            }))
        }
        (kind, estimator) => Err(Error::invalid(format!(
            "estimator {} is not defined for {} sketches",
            estimator.name(),
            kind.name()
        ))),
    }
}

// ---------------------------------------------------------------------------
// Scale invariance
// ---------------------------------------------------------------------------

/// KS statistics comparing one density pair under scale invariance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScaleInvariance {
    /// First density.
    pub lambda1: f64,
    /// Second density.
    pub lambda2: f64,
    /// Two-sample KS between `lambda_hat / lambda` at the two densities.
    pub ks_estimator: f64,
    /// Two-sample KS between `lambda^tau * A` at the two densities.
    pub ks_area: f64,
}

/// Tests scale invariance of the tau-GRA statistic and estimator: for each
/// `(lambda1, lambda2)` pair, draws `trials` samples per side and compares
/// the distributions of `lambda_hat / lambda` and `lambda^tau * A`.
pub fn scale_invariance_test(
    kind: SketchKind,
    tau: f64,
    m: u32,
    lambda_pairs: &[(f64, f64)],
    trials: u64,
    seed: u64,
) -> Result<Vec<ScaleInvariance>> {
    let mut results = Vec::with_capacity(lambda_pairs.len());
    for (pair_index, &(lambda1, lambda2)) in lambda_pairs.iter().enumerate() {
        let mut sides = Vec::with_capacity(2);
        for (side, lambda) in [lambda1, lambda2].into_iter().enumerate() {
            let side_seed = derive_stream_seed(seed, (pair_index as u64) << 1 | side as u64);
            let config = SimConfig::new(kind, m, lambda, tau, trials, side_seed)?;
            let samples = sample_ratio_and_area(&config)?;
            sides.push(samples);
        }
        let (r1, a1): (Vec<f64>, Vec<f64>) = sides.remove(0).into_iter().unzip();
        let (r2, a2): (Vec<f64>, Vec<f64>) = sides.remove(0).into_iter().unzip();
        results.push(ScaleInvariance {
            lambda1,
            lambda2,
            ks_estimator: ks::two_sample_ks(&r1, &r2),
            ks_area: ks::two_sample_ks(&a1, &a2),
        });
    }
    Ok(results)
}

/// Per-trial `(lambda_hat / lambda, lambda^tau * A)` samples.
fn sample_ratio_and_area(config: &SimConfig) -> Result<Vec<(f64, f64)>> {
    config.validate()?;
    config.require_positive_tau()?;
    let m = config.m;
    let mf = m as f64;
    let lambda = config.lambda;
    let tau = config.tau;
    let area_scale = lambda.powf(tau);
    match config.kind {
        SketchKind::LogLog => Ok(run_trials(config.trials, config.seed, move |rng| {
            let offsets = trial_offsets(config.smoothing, m, rng);
            let registers = sample_loglog_registers(m, lambda, &offsets, rng);
            let gra_mean = registers
                .iter()
                .zip(&offsets)
                .map(|(&x, &r)| (-tau * (r + x as f64)).exp2())
                .sum::<f64>()
                / mf;
            (
                loglog_estimate_from_mean(mf, tau, gra_mean) / lambda,
                area_scale * gra_mean,
            )
        })),
        SketchKind::Pcsa => {
            let totals = sample_pcsa_totals(config)?;
            Ok(totals
                .into_iter()
                .map(|total| {
                    (
                        pcsa_estimate_from_total(mf, tau, total) / lambda,
                        area_scale * total,
                    )
                })
                .collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// Result of calibrating a proportionality constant by Monte Carlo.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Calibration {
    /// Estimator the constant belongs to.
    pub estimator: EstimatorId,
    /// Multiplicative constant that makes `mean(lambda_hat)/lambda = 1`.
    pub constant: f64,
    /// Standard error of the constant.
    pub stderr: f64,
    /// Trials used.
    pub trials: u64,
    /// Subsketch count used.
    pub m: u32,
    /// Density used (`256 * m`, keeping the unit board comfortably filled).
    pub lambda: f64,
}

/// Calibrates the multiplicative constant of the FM or Lang estimator over
/// Poissonized unit-board trials at density `256 * m`.
pub fn calibrate(estimator: EstimatorId, m: u32, trials: u64, seed: u64) -> Result<Calibration> {
    if !matches!(estimator, EstimatorId::Fm | EstimatorId::Lang) {
        return Err(Error::invalid(format!(
            "only fm and lang carry a calibrated constant, got {}",
            estimator.name()
        )));
    }
    if m == 0 || m > crate::hashing::MAX_SUBSKETCHES {
        return Err(Error::invalid(format!("m={m} outside [1, 2^20]")));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let lambda = 256.0 * m as f64;
    let mf = m as f64;
    // Per-trial value of the un-normalized estimator (kappa = 1) over lambda.
    let bases = run_trials(trials, seed, move |rng| {
        let sketch = sample_pcsa_unit_board(m, lambda, Smoothing::Uniform, rng);
        let mean_stat = match estimator {
            EstimatorId::Lang => {
                sketch.bitmaps().iter().map(|b| b.count_ones() as u64).sum::<u64>() as f64 / mf
            }
            _ => {
                sketch
                    .bitmaps()
                    .iter()
                    .map(|&b| crate::estimators::least_zero(b) as u64)
                    .sum::<u64>() as f64
                    / mf
            }
        };
        mf * (mean_stat + sketch.offsets().mean()).exp2() / lambda
    });
    let (mean, stderr) = stats::mean_and_stderr(&bases);
    Ok(Calibration {
        estimator,
        constant: 1.0 / mean,
        stderr: stderr / (mean * mean),
        trials,
        m,
        lambda,
    })
}
