//! Mergeable cardinality sketches with generalized remaining-area estimation.
//!
//! The crate implements the PCSA and LogLog sketch families over a common
//! dartboard abstraction: elements hash to a subsketch and a geometric cell,
//! per-subsketch offsets smooth the cell boundaries, and cardinality is read
//! back through the tau-generalized remaining area — the total size of free
//! cells with each cell weighted by `|cell|^tau`. The classical estimators
//! (harmonic mean, geometric mean, ones counting, first zero) fall out as
//! special cases of the same statistic.
//!
//! Alongside the sketches there are analytic limiting-variance curves with a
//! tau* optimizer ([`analysis`]) and a deterministic Poissonized Monte Carlo
//! harness ([`sim`]) that verifies the curves empirically.

#![warn(missing_docs)]

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod hashing;
pub mod sim;
pub mod sketch;
pub mod wire;

pub use error::{Error, Result};
pub use estimators::{Estimate, EstimatorId};
pub use sketch::{new_sketch, LogLogSketch, PcsaSketch, Sketch, SketchKind, Smoothing};

/// Applies an estimator to a kind-erased sketch.
///
/// Estimators specific to one family reject the other kind; `tau` is
/// required by the tau-GRA estimator and ignored by the rest.
pub fn estimate(sketch: &Sketch, estimator: EstimatorId, tau: Option<f64>) -> Result<Estimate> {
    use estimators::*;
    match (sketch, estimator) {
        (Sketch::LogLog(s), EstimatorId::TauGra) => {
            let tau = tau.ok_or_else(|| Error::invalid("tau-gra needs an explicit tau"))?;
            estimate_loglog_gra(s, tau)
        }
        (Sketch::LogLog(s), EstimatorId::Ffgm) => estimate_ffgm(s),
        (Sketch::LogLog(s), EstimatorId::Df) => estimate_df(s),
        (Sketch::Pcsa(s), EstimatorId::TauGra) => {
            let tau = tau.ok_or_else(|| Error::invalid("tau-gra needs an explicit tau"))?;
            estimate_pcsa_gra(s, tau)
        }
        (Sketch::Pcsa(s), EstimatorId::Lang) => Ok(estimate_lang(s)),
        (Sketch::Pcsa(s), EstimatorId::Fm) => Ok(estimate_fm(s)),
        (sketch, estimator) => Err(Error::invalid(format!(
            "estimator {} is not defined for {} sketches",
            estimator.name(),
            sketch.kind().name()
        ))),
    }
}
