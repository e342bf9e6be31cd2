use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::emissions::EmissionModel;
use crate::error::{invalid_param, Error, Result};
use crate::scalar::Real;

fn row_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
}

/// Row-stochastic `d × d` matrix, `P_ij = P(s_n = j | s_{n-1} = i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<T>>", into = "Vec<Vec<T>>", bound = "T: Real")]
pub struct TransitionMatrix<T> {
    probs: Vec<Vec<T>>,
}

impl<T: Real> TryFrom<Vec<Vec<T>>> for TransitionMatrix<T> {
    type Error = Error;

    fn try_from(v: Vec<Vec<T>>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T: Real> From<TransitionMatrix<T>> for Vec<Vec<T>> {
    fn from(m: TransitionMatrix<T>) -> Self {
        m.probs
    }
}

impl<T: Real> TransitionMatrix<T> {
    pub fn new(probs: Vec<Vec<T>>) -> Result<Self> {
        let d = probs.len();
        if d == 0 {
            return Err(invalid_param("transition matrix needs at least one state"));
        }
        for row in &probs {
            if row.len() != d {
                return Err(invalid_param("transition matrix must be square"));
            }
            if row.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
                return Err(invalid_param("transition probabilities must lie in [0, 1]"));
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs() > row_tolerance::<T>() {
                return Err(invalid_param(format!("transition row sums to {s}, not 1")));
            }
        }
        Ok(Self { probs })
    }

    /// Two-state chain with `p0 = P(0 → 1)` and `q0 = P(1 → 0)`.
    pub fn two_state(p0: T, q0: T) -> Result<Self> {
        Self::new(vec![vec![T::one() - p0, p0], vec![q0, T::one() - q0]])
    }

    /// `stay` on the diagonal, the rest spread evenly.
    pub fn sticky(d: usize, stay: T) -> Result<Self> {
        if d == 1 {
            return Self::new(vec![vec![T::one()]]);
        }
        let off = (T::one() - stay) / T::of_usize(d - 1);
        Self::new((0..d).map(|i| (0..d).map(|j| if i == j { stay } else { off }).collect()).collect())
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.probs[i][j]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.probs
    }

    pub fn log_probs(&self) -> Vec<Vec<T>> {
        self.probs.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect()
    }

    /// Stationary distribution via power iteration (uniform when the chain is reducible and slow).
    pub fn stationary(&self) -> Vec<T> {
        let d = self.n_states();
        if d == 2 {
            let (p, q) = (self.probs[0][1], self.probs[1][0]);
            if p + q > T::zero() {
                return vec![q / (p + q), p / (p + q)];
            }
            return vec![T::lit(0.5); 2];
        }
        let mut pi = vec![T::one() / T::of_usize(d); d];
        for _ in 0..10_000 {
            let next: Vec<T> = (0..d).map(|j| (0..d).map(|i| pi[i] * self.probs[i][j]).sum()).collect();
            let diff: T = next.iter().zip(&pi).map(|(a, b)| (*a - *b).abs()).sum();
            pi = next;
            if diff < T::lit(1e-15) {
                break;
            }
        }
        let s: T = pi.iter().copied().sum();
        pi.into_iter().map(|p| p / s).collect()
    }

    pub(crate) fn permuted(&self, order: &[usize]) -> Self {
        let probs = order.iter().map(|&i| order.iter().map(|&j| self.probs[i][j]).collect()).collect();
        Self { probs }
    }
}

/// What each HMM observation is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsKind {
    /// Active days per window, binomial in the state's activity probability.
    X,
    /// Total events per window.
    Y,
    /// Joint `(X, Y)` per window.
    Xy,
    /// Daily counts, state held fixed over each window.
    Daily,
    /// Inter-arrival durations, geometric on `{1, 2, ...}` with the state's activity probability.
    Dt,
}

impl ObsKind {
    pub fn short_name(self) -> &'static str {
        match self {
            ObsKind::X => "x",
            ObsKind::Y => "y",
            ObsKind::Xy => "xy",
            ObsKind::Daily => "m",
            ObsKind::Dt => "dt",
        }
    }

    pub fn is_windowed(self) -> bool {
        !matches!(self, ObsKind::Dt)
    }
}

impl fmt::Display for ObsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ObsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(ObsKind::X),
            "y" => Ok(ObsKind::Y),
            "xy" => Ok(ObsKind::Xy),
            "m" | "daily" => Ok(ObsKind::Daily),
            "dt" => Ok(ObsKind::Dt),
            _ => Err(invalid_param(format!("unknown observation kind `{s}`"))),
        }
    }
}

/// A `d`-state HMM; state 0 is Inactive and higher indices are more active after canonicalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HmmModel<T> {
    pub transition: TransitionMatrix<T>,
    pub emissions: Vec<EmissionModel<T>>,
    pub initial: Vec<T>,
    pub obs_kind: ObsKind,
    /// Window length in days (ignored for `Dt`).
    pub delta: usize,
}

impl<T: Real> HmmModel<T> {
    pub fn new(
        transition: TransitionMatrix<T>,
        emissions: Vec<EmissionModel<T>>,
        initial: Vec<T>,
        obs_kind: ObsKind,
        delta: usize,
    ) -> Result<Self> {
        let m = Self { transition, emissions, initial, obs_kind, delta };
        m.validate()?;
        Ok(m)
    }

    /// Two-state model with the initial distribution set to the chain's stationary law.
    pub fn two_state(
        p0: T,
        q0: T,
        inactive: EmissionModel<T>,
        active: EmissionModel<T>,
        obs_kind: ObsKind,
        delta: usize,
    ) -> Result<Self> {
        let transition = TransitionMatrix::two_state(p0, q0)?;
        let initial = transition.stationary();
        Self::new(transition, vec![inactive, active], initial, obs_kind, delta)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.transition.n_states();
        if self.emissions.len() != d || self.initial.len() != d {
            return Err(invalid_param("state count mismatch between transition, emissions and initial"));
        }
        if self.obs_kind.is_windowed() && self.delta == 0 {
            return Err(invalid_param("window length must be at least one day"));
        }
        for e in &self.emissions {
            e.validate()?;
        }
        let family = self.emissions[0].family();
        if self.emissions.iter().any(|e| e.family() != family) {
            return Err(invalid_param("all states must share one emission family"));
        }
        if self.initial.iter().any(|&p| p < T::zero()) {
            return Err(invalid_param("initial probabilities must be non-negative"));
        }
        let s: T = self.initial.iter().copied().sum();
        if (s - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) {
            return Err(invalid_param("initial distribution must sum to 1"));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.transition.n_states()
    }

    /// Per-state `P(M > 0)`.
    pub fn activity_probs(&self) -> Vec<T> {
        self.emissions.iter().map(|e| e.activity_prob()).collect()
    }

    /// Free parameters: transitions plus emission parameters (the initial law is not estimated).
    pub fn n_params(&self) -> usize {
        let d = self.n_states();
        d * (d - 1) + self.emissions.iter().map(|e| e.family().n_params()).sum::<usize>()
    }

    pub fn log_initial(&self) -> Vec<T> {
        self.initial.iter().map(|p| p.ln()).collect()
    }

    /// Reorders states by ascending activity probability; returns the permutation used
    /// (`order[new] = old`).
    pub fn canonicalize(&mut self) -> Vec<usize> {
        let act = self.activity_probs();
        let mut order: Vec<usize> = (0..self.n_states()).collect();
        order.sort_by(|&a, &b| act[a].partial_cmp(&act[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        if order.iter().enumerate().any(|(i, &o)| i != o) {
            self.transition = self.transition.permuted(&order);
            self.emissions = order.iter().map(|&i| self.emissions[i]).collect();
            self.initial = order.iter().map(|&i| self.initial[i]).collect();
        }
        order
    }
}
