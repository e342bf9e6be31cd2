//! Sensitivity of the state classification to added (previously missing) events.

use serde::{Deserialize, Serialize};

use crate::emissions::Family;
use crate::error::{invalid_input, Result};
use crate::hmm::{classify, daily_states, ClassifyOptions, ObsKind};
use crate::scalar::Real;
use crate::series::{merge_missing, EventRecord, EventSeries};

/// `(Σ M̃ - Σ M) / Σ M`.
pub fn frac_missing<T: Real>(base: &EventSeries, augmented: &EventSeries) -> Result<T> {
    if base.start() != augmented.start() || base.len() != augmented.len() {
        return Err(invalid_input("series must cover the same span"));
    }
    if base.counts().iter().zip(augmented.counts()).any(|(b, a)| a < b) {
        return Err(invalid_input("augmented series falls below the base series"));
    }
    let total = base.total();
    if total == 0 {
        return Err(invalid_input("base series has no events"));
    }
    Ok(T::lit((augmented.total() - total) as f64) / T::lit(total as f64))
}

/// Fraction of days whose state label differs.
pub fn frac_state_changes<T: Real>(base: &[usize], new: &[usize]) -> Result<T> {
    if base.len() != new.len() || base.is_empty() {
        return Err(invalid_input("paths must be non-empty and of equal length"));
    }
    let changed = base.iter().zip(new).filter(|(a, b)| a != b).count();
    Ok(T::of_usize(changed) / T::of_usize(base.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RobustnessStep<T> {
    pub step: usize,
    pub frac_missing: T,
    pub frac_changes: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RobustnessCurve<T> {
    pub steps: Vec<RobustnessStep<T>>,
}

impl<T: Real> RobustnessCurve<T> {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["step", "frac_missing", "frac_changes"])?;
        for s in &self.steps {
            wtr.write_record([s.step.to_string(), s.frac_missing.to_string(), s.frac_changes.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SweepConfig<T> {
    pub delta: usize,
    pub family: Family,
    pub obs_kind: ObsKind,
    pub classify: ClassifyOptions<T>,
}

fn daily_path<T: Real>(series: &EventSeries, cfg: &SweepConfig<T>) -> Result<Vec<usize>> {
    let c = classify(series, cfg.delta, cfg.family, cfg.obs_kind, &cfg.classify)?;
    Ok(daily_states(&c.path.states, cfg.delta, series.len()))
}

/// Classifies `base`, then each cumulative augmentation from [`merge_missing`], and reports the
/// day-level churn against the base labels. With nothing to add the curve is a single zero step.
pub fn robustness_sweep<T: Real>(base: &EventSeries, extra: &[EventRecord], steps: usize, cfg: &SweepConfig<T>) -> Result<RobustnessCurve<T>> {
    if cfg.obs_kind == ObsKind::Dt {
        return Err(invalid_input("robustness needs a windowed observation kind"));
    }
    let reference = daily_path(base, cfg)?;
    if extra.is_empty() {
        return Ok(RobustnessCurve { steps: vec![RobustnessStep { step: 0, frac_missing: T::zero(), frac_changes: T::zero() }] });
    }
    let mut out = Vec::new();
    for (j, s) in merge_missing(base, extra, steps)?.iter().enumerate() {
        let path = daily_path(s, cfg)?;
        out.push(RobustnessStep { step: j + 1, frac_missing: frac_missing(base, s)?, frac_changes: frac_state_changes(&reference, &path)? });
    }
    Ok(RobustnessCurve { steps: out })
}
