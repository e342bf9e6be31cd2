//! Synthetic generators for the regime-switching, waiting-time and self-exciting models.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::emissions::EmissionModel;
use crate::error::{invalid_param, Result};
use crate::hmm::{HmmModel, ObsKind, TransitionMatrix};
use crate::scalar::Real;
use crate::series::EventSeries;

/// Simulated daily series together with the hidden states that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSeries {
    pub series: EventSeries,
    /// Hidden state per window (window models) or per inter-arrival duration (waiting-time models).
    pub states: Vec<usize>,
}

fn draw_state<T: Real, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u = T::lit(rng.random::<f64>());
    let mut acc = T::zero();
    for (i, &p) in probs.iter().enumerate() {
        acc = acc + p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn markov_chain<T: Real, R: Rng + ?Sized>(initial: &[T], transition: &TransitionMatrix<T>, len: usize, rng: &mut R) -> Vec<usize> {
    let mut states = Vec::with_capacity(len);
    let mut s = draw_state(initial, rng);
    for _ in 0..len {
        states.push(s);
        s = draw_state(&transition.rows()[s], rng);
    }
    states
}

/// `n_windows` windows of `model.delta` days; the state is held within a window and each
/// day's count is drawn from that state's emission.
pub fn simulate_windows<T: Real, R: Rng + ?Sized>(model: &HmmModel<T>, n_windows: usize, rng: &mut R) -> Result<SimulatedSeries> {
    model.validate()?;
    if !model.obs_kind.is_windowed() {
        return Err(invalid_param("window simulation needs a windowed observation kind"));
    }
    if n_windows == 0 {
        return Err(invalid_param("need at least one window"));
    }
    let states = markov_chain(&model.initial, &model.transition, n_windows, rng);
    let mut counts = Vec::with_capacity(n_windows * model.delta);
    for &s in &states {
        for _ in 0..model.delta {
            counts.push(model.emissions[s].sample(rng));
        }
    }
    Ok(SimulatedSeries { series: EventSeries::from_counts(counts)?, states })
}

/// `n_events` active days whose gaps are geometric on `{1, 2, ..}` with the hidden state's
/// activity probability; counts on active days are `1 + marks.sample()`.
pub fn simulate_durations<T: Real, R: Rng + ?Sized>(
    model: &HmmModel<T>,
    marks: &EmissionModel<T>,
    n_events: usize,
    rng: &mut R,
) -> Result<SimulatedSeries> {
    model.validate()?;
    marks.validate()?;
    if model.obs_kind != ObsKind::Dt {
        return Err(invalid_param("duration simulation needs a `dt` model"));
    }
    if n_events == 0 {
        return Err(invalid_param("need at least one event"));
    }
    let states = markov_chain(&model.initial, &model.transition, n_events, rng);
    let mut counts = Vec::new();
    for &s in &states {
        let gamma = model.emissions[s].activity_prob().as_f64();
        let gap = 1 + geometric_failures(1.0 - gamma, rng.random::<f64>());
        counts.extend(std::iter::repeat_n(0u64, (gap - 1) as usize));
        counts.push(1 + marks.sample(rng));
    }
    Ok(SimulatedSeries { series: EventSeries::from_counts(counts)?, states })
}

fn geometric_failures(q: f64, u: f64) -> u64 {
    if q <= 0.0 {
        return 0;
    }
    ((1.0 - u).ln() / q.ln()).floor() as u64
}

/// `n` distinct days drawn uniformly from `1..=span`, sorted.
pub fn uniform_days<R: Rng + ?Sized>(n: usize, span: u64, rng: &mut R) -> Result<Vec<u64>> {
    if n as u64 > span {
        return Err(invalid_param("more points than days"));
    }
    let mut days: Vec<u64> = rand::seq::index::sample(rng, span as usize, n).into_iter().map(|i| i as u64 + 1).collect();
    days.sort_unstable();
    Ok(days)
}
