//! Regime detection for sparse daily event counts.
//!
//! Daily counts are windowed into `(X, Y)` statistics (active days, total events) and decoded
//! into Inactive/Active regimes with a hidden Markov model. A self-exciting hurdle model serves
//! as the clustering baseline, and point-process diagnostics (Ripley's K, a KS test on
//! exponential spacings) check whether activity looks Poisson once conditioned on the regime.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases below fix `f64`.

pub mod emissions;
pub mod error;
pub mod hmm;
pub mod io;
pub mod optimize;
pub mod ppstats;
pub mod predict;
pub mod robustness;
pub mod scalar;
pub mod sehm;
pub mod series;
pub mod simulate;
pub mod special;

pub use emissions::Family;
pub use error::{Error, Result};
pub use hmm::ObsKind;
pub use scalar::Real;
pub use series::{EventRecord, EventSeries, InterArrivalSeries, WindowSeries};

pub type EmissionModel = emissions::EmissionModel<f64>;
pub type HmmModel = hmm::HmmModel<f64>;
pub type TransitionMatrix = hmm::TransitionMatrix<f64>;
pub type StatePath = hmm::StatePath<f64>;
pub type Classification = hmm::Classification<f64>;
pub type ClassifyOptions = hmm::ClassifyOptions<f64>;
pub type SehmModel = sehm::SehmModel<f64>;
pub type SehmFit = sehm::SehmFit<f64>;
pub type RipleyCurve = ppstats::RipleyCurve<f64>;
pub type KsResult = ppstats::KsResult<f64>;
pub type PredictionRun = predict::PredictionRun<f64>;
pub type RobustnessCurve = robustness::RobustnessCurve<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type EmissionModel = crate::emissions::EmissionModel<f32>;
    pub type HmmModel = crate::hmm::HmmModel<f32>;
    pub type StatePath = crate::hmm::StatePath<f32>;
    pub type SehmModel = crate::sehm::SehmModel<f32>;
    pub type RipleyCurve = crate::ppstats::RipleyCurve<f32>;
    pub type KsResult = crate::ppstats::KsResult<f32>;
}
