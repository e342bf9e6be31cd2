//! Observation sequences and per-state log-densities for each observation kind.

use crate::emissions::{
    window_ln_pmf_joint, window_ln_pmf_x, window_ln_pmf_y_geometric, EmissionModel, Family,
};
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Real};
use crate::series::{interarrivals, windowize, EventSeries, InterArrivalSeries, WindowSeries};
use crate::special::ln_choose;

use super::model::{HmmModel, ObsKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowObs {
    pub x: u64,
    pub y: u64,
    pub len: usize,
    /// Daily counts inside the window; empty when built from window statistics alone.
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observations {
    Windows(Vec<WindowObs>),
    Durations(Vec<u64>),
}

impl Observations {
    /// δ-day windows of `series`; the trailing partial window only when `include_partial`.
    pub fn windows(series: &EventSeries, delta: usize, include_partial: bool) -> Result<Self> {
        let ws = windowize(series, delta)?;
        let n = ws.observations(include_partial).len();
        let obs: Vec<WindowObs> = ws
            .windows()
            .iter()
            .zip(series.counts().chunks(delta))
            .take(n)
            .map(|(w, c)| WindowObs { x: w.x, y: w.y, len: w.len, counts: c.to_vec() })
            .collect();
        if obs.is_empty() {
            return Err(Error::Degenerate(format!("series of {} days has no complete {delta}-day window", series.len())));
        }
        Ok(Observations::Windows(obs))
    }

    pub fn from_window_series(ws: &WindowSeries, include_partial: bool) -> Result<Self> {
        let obs: Vec<WindowObs> = ws
            .observations(include_partial)
            .iter()
            .map(|w| WindowObs { x: w.x, y: w.y, len: w.len, counts: Vec::new() })
            .collect();
        if obs.is_empty() {
            return Err(Error::Degenerate("no windows".into()));
        }
        Ok(Observations::Windows(obs))
    }

    pub fn durations(ia: &InterArrivalSeries) -> Self {
        Observations::Durations(ia.durations().to_vec())
    }

    pub fn durations_of(series: &EventSeries) -> Result<Self> {
        Ok(Self::durations(&interarrivals(series)?))
    }

    pub fn len(&self) -> usize {
        match self {
            Observations::Windows(w) => w.len(),
            Observations::Durations(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_kind(&self, kind: ObsKind) -> Result<()> {
        match (self, kind) {
            (Observations::Durations(_), ObsKind::Dt) => Ok(()),
            (Observations::Windows(w), ObsKind::Daily) => {
                if w.iter().any(|o| o.counts.len() != o.len) {
                    Err(Error::InvalidInput("daily observations need per-day counts".into()))
                } else {
                    Ok(())
                }
            }
            (Observations::Windows(_), k) if k.is_windowed() => Ok(()),
            _ => Err(Error::InvalidInput(format!("observations do not match kind `{kind}`"))),
        }
    }
}

/// `P(X = k, Y = r)` tables for families without a closed-form window density.
struct ConvolutionTable<T> {
    ln_p0: T,
    /// `conv[k][r]` = mass of `k` positive days summing to `r` (includes the activity factor).
    conv: Vec<Vec<T>>,
}

impl<T: Real> ConvolutionTable<T> {
    fn new(e: &EmissionModel<T>, max_k: usize, max_r: usize) -> Self {
        let q: Vec<T> = (0..=max_r).map(|j| if j == 0 { T::zero() } else { e.pmf(j as u64) }).collect();
        let mut conv = Vec::with_capacity(max_k + 1);
        let mut cur = vec![T::zero(); max_r + 1];
        cur[0] = T::one();
        conv.push(cur.clone());
        for _ in 1..=max_k {
            let mut next = vec![T::zero(); max_r + 1];
            for (r, n) in next.iter_mut().enumerate() {
                let mut acc = T::zero();
                for j in 1..=r {
                    acc = acc + q[j] * cur[r - j];
                }
                *n = acc;
            }
            conv.push(next.clone());
            cur = next;
        }
        Self { ln_p0: e.ln_pmf(0), conv }
    }

    fn ln_joint(&self, len: usize, k: u64, r: u64) -> T {
        if k as usize > len {
            return T::neg_infinity();
        }
        let c = self.conv[k as usize][r as usize];
        if c <= T::zero() {
            return T::neg_infinity();
        }
        let zeros = T::lit((len as u64 - k) as f64);
        let p0_term = if zeros == T::zero() { T::zero() } else { zeros * self.ln_p0 };
        ln_choose::<T>(len as u64, k) + p0_term + c.ln()
    }

    fn ln_y(&self, len: usize, r: u64) -> T {
        let terms: Vec<T> = (0..=len.min(r as usize) as u64).map(|k| self.ln_joint(len, k, r)).collect();
        log_sum_exp(&terms)
    }
}

/// Log-density of every observation under one state's emission model.
pub fn state_log_density<T: Real>(e: &EmissionModel<T>, kind: ObsKind, obs: &Observations) -> Result<Vec<T>> {
    obs.check_kind(kind)?;
    let family = e.family();
    let closed_form = matches!(family, Family::Geometric | Family::HurdleGeometric);
    match obs {
        Observations::Durations(d) => {
            let g = e.activity_prob();
            Ok(d.iter()
                .map(|&t| {
                    let miss = T::lit(t as f64 - 1.0);
                    let miss_term = if miss == T::zero() { T::zero() } else { miss * (T::one() - g).ln() };
                    miss_term + g.ln()
                })
                .collect())
        }
        Observations::Windows(w) => match kind {
            ObsKind::X => {
                let g = e.activity_prob();
                Ok(w.iter().map(|o| window_ln_pmf_x(g, o.len as u64, o.x)).collect())
            }
            ObsKind::Daily => Ok(w.iter().map(|o| o.counts.iter().map(|&m| e.ln_pmf(m)).sum()).collect()),
            ObsKind::Xy if closed_form => w
                .iter()
                .map(|o| window_ln_pmf_joint(e, o.len as u64, o.x, o.y))
                .collect(),
            ObsKind::Y if family == Family::Geometric => {
                let EmissionModel::Geometric { gamma } = *e else { unreachable!() };
                Ok(w.iter().map(|o| window_ln_pmf_y_geometric(gamma, o.len as u64, o.y)).collect())
            }
            ObsKind::Y if family == Family::HurdleGeometric => w
                .iter()
                .map(|o| {
                    let terms = (0..=(o.len as u64).min(o.y))
                        .map(|k| window_ln_pmf_joint(e, o.len as u64, k, o.y))
                        .collect::<Result<Vec<T>>>()?;
                    Ok(log_sum_exp(&terms))
                })
                .collect(),
            ObsKind::Y | ObsKind::Xy => {
                let max_k = w.iter().map(|o| o.len).max().unwrap_or(0);
                let max_r = w.iter().map(|o| o.y).max().unwrap_or(0) as usize;
                let table = ConvolutionTable::new(e, max_k, max_r);
                Ok(w.iter()
                    .map(|o| if kind == ObsKind::Y { table.ln_y(o.len, o.y) } else { table.ln_joint(o.len, o.x, o.y) })
                    .collect())
            }
            ObsKind::Dt => unreachable!("checked by check_kind"),
        },
    }
}

/// `K × d` matrix of per-state observation log-densities.
pub fn log_emission_matrix<T: Real>(model: &HmmModel<T>, obs: &Observations) -> Result<Vec<Vec<T>>> {
    let per_state: Vec<Vec<T>> = model
        .emissions
        .iter()
        .map(|e| state_log_density(e, model.obs_kind, obs))
        .collect::<Result<_>>()?;
    let k = obs.len();
    Ok((0..k).map(|n| per_state.iter().map(|s| s[n]).collect()).collect())
}
