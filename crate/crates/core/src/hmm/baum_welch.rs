//! Baum–Welch (EM) estimation with a posterior-weighted ML M-step.

use serde::{Deserialize, Serialize};

use crate::emissions::{fit_ml_weighted, EmissionModel, Family, ZETA_S_MAX};
use crate::error::Result;
use crate::optimize::{nelder_mead_max, NelderMeadOptions};
use crate::scalar::Real;

use super::engine::{forward_backward, ForwardBackward};
use super::model::{HmmModel, ObsKind, TransitionMatrix};
use super::observations::{log_emission_matrix, state_log_density, Observations};

/// States whose total posterior mass falls below this are left untouched and reported.
pub const COLLAPSE_MASS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BaumWelchOptions<T> {
    /// Stop when the relative log-likelihood gain drops below this.
    pub tol: T,
    pub max_iter: usize,
    /// Re-estimate the initial distribution; otherwise it is held at its starting value.
    pub estimate_initial: bool,
}

impl<T: Real> Default for BaumWelchOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-9), max_iter: 500, estimate_initial: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BaumWelchResult<T> {
    pub model: HmmModel<T>,
    /// Log-likelihood of the starting model followed by one entry per iteration.
    pub trace: Vec<T>,
    pub converged: bool,
    /// States (in the final labeling) whose posterior mass collapsed during fitting.
    pub collapsed_states: Vec<usize>,
}

impl<T: Real> BaumWelchResult<T> {
    pub fn log_likelihood(&self) -> T {
        *self.trace.last().expect("trace holds the initial likelihood")
    }

    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

pub fn baum_welch<T: Real>(init: &HmmModel<T>, obs: &Observations, opts: &BaumWelchOptions<T>) -> Result<BaumWelchResult<T>> {
    init.validate()?;
    obs.check_kind(init.obs_kind)?;
    let mut model = init.clone();
    let mut fb = run_fb(&model, obs)?;
    let mut trace = vec![fb.log_likelihood];
    let mut converged = false;
    let mut collapsed = vec![false; model.n_states()];
    for _ in 0..opts.max_iter {
        let (next, newly_collapsed) = m_step(&model, &fb, obs, opts)?;
        for (c, n) in collapsed.iter_mut().zip(newly_collapsed) {
            *c |= n;
        }
        let next_fb = run_fb(&next, obs)?;
        let gain = next_fb.log_likelihood - fb.log_likelihood;
        model = next;
        fb = next_fb;
        trace.push(fb.log_likelihood);
        if gain / fb.log_likelihood.abs().max(T::min_positive_value()) < opts.tol {
            converged = true;
            break;
        }
    }
    let order = model.canonicalize();
    let collapsed_states = order.iter().enumerate().filter(|(_, &old)| collapsed[old]).map(|(new, _)| new).collect();
    Ok(BaumWelchResult { model, trace, converged, collapsed_states })
}

fn run_fb<T: Real>(model: &HmmModel<T>, obs: &Observations) -> Result<ForwardBackward<T>> {
    let emit = log_emission_matrix(model, obs)?;
    forward_backward(&model.log_initial(), &model.transition.log_probs(), &emit)
}

fn m_step<T: Real>(
    model: &HmmModel<T>,
    fb: &ForwardBackward<T>,
    obs: &Observations,
    opts: &BaumWelchOptions<T>,
) -> Result<(HmmModel<T>, Vec<bool>)> {
    let d = model.n_states();
    let mut rows = Vec::with_capacity(d);
    for i in 0..d {
        let total: T = fb.expected_transitions[i].iter().copied().sum();
        if total > T::lit(COLLAPSE_MASS) {
            rows.push(fb.expected_transitions[i].iter().map(|&x| x / total).collect::<Vec<T>>());
        } else {
            rows.push(model.transition.rows()[i].clone());
        }
    }
    let transition = TransitionMatrix::new(normalize_rows(rows))?;
    let mut emissions = Vec::with_capacity(d);
    let mut collapsed = vec![false; d];
    for j in 0..d {
        let w: Vec<T> = fb.posteriors.iter().map(|p| p[j]).collect();
        let mass: T = w.iter().copied().sum();
        if mass < T::lit(COLLAPSE_MASS) {
            collapsed[j] = true;
            emissions.push(model.emissions[j]);
            continue;
        }
        emissions.push(update_emission(&model.emissions[j], model.obs_kind, obs, &w)?);
    }
    let initial = if opts.estimate_initial {
        let p0 = &fb.posteriors[0];
        let s: T = p0.iter().copied().sum();
        p0.iter().map(|&p| p / s).collect()
    } else {
        model.initial.clone()
    };
    let next = HmmModel { transition, emissions, initial, obs_kind: model.obs_kind, delta: model.delta };
    Ok((next, collapsed))
}

fn normalize_rows<T: Real>(rows: Vec<Vec<T>>) -> Vec<Vec<T>> {
    rows.into_iter()
        .map(|r| {
            let s: T = r.iter().copied().sum();
            r.into_iter().map(|x| (x / s).max(T::zero()).min(T::one())).collect()
        })
        .collect()
}

/// Posterior-weighted objective `Σ_n w_n ln f(obs_n)` for one state.
fn weighted_objective<T: Real>(e: &EmissionModel<T>, kind: ObsKind, obs: &Observations, w: &[T]) -> T {
    if e.validate().is_err() {
        return T::neg_infinity();
    }
    match state_log_density(e, kind, obs) {
        Ok(ld) => ld
            .iter()
            .zip(w)
            .map(|(&l, &wi)| if wi == T::zero() { T::zero() } else { wi * l })
            .sum(),
        Err(_) => T::neg_infinity(),
    }
}

fn closed_form_update<T: Real>(e: &EmissionModel<T>, kind: ObsKind, obs: &Observations, w: &[T]) -> Result<Option<EmissionModel<T>>> {
    let sum = |f: &dyn Fn(usize) -> T| -> T { w.iter().enumerate().map(|(n, &wi)| wi * f(n)).sum() };
    match obs {
        Observations::Durations(d) => {
            let gamma = w.iter().copied().sum::<T>() / sum(&|n| T::lit(d[n] as f64));
            Ok(match *e {
                EmissionModel::Geometric { .. } => Some(EmissionModel::Geometric { gamma: clamp_open(gamma) }),
                EmissionModel::HurdleGeometric { mu, .. } => Some(EmissionModel::HurdleGeometric { gamma, mu }),
                EmissionModel::HurdleZeta { s, .. } => Some(EmissionModel::HurdleZeta { gamma, s }),
                _ => None,
            })
        }
        Observations::Windows(win) => {
            let x = |n: usize| T::lit(win[n].x as f64);
            let y = |n: usize| T::lit(win[n].y as f64);
            let len = |n: usize| T::of_usize(win[n].len);
            if kind == ObsKind::Daily {
                let mut data = Vec::new();
                let mut weights = Vec::new();
                for (o, &wi) in win.iter().zip(w) {
                    data.extend_from_slice(&o.counts);
                    weights.extend(std::iter::repeat_n(wi, o.counts.len()));
                }
                return Ok(Some(fit_ml_weighted(e.family(), &data, &weights)?.model));
            }
            let act = sum(&x) / sum(&len);
            Ok(match (*e, kind) {
                (EmissionModel::Geometric { .. }, ObsKind::X) => Some(EmissionModel::Geometric { gamma: clamp_open(act) }),
                (EmissionModel::Geometric { .. }, ObsKind::Y | ObsKind::Xy) => {
                    let gamma = sum(&y) / sum(&|n| len(n) + y(n));
                    Some(EmissionModel::Geometric { gamma: clamp_open(gamma) })
                }
                (EmissionModel::HurdleGeometric { mu, .. }, ObsKind::X) => Some(EmissionModel::HurdleGeometric { gamma: act, mu }),
                (EmissionModel::HurdleGeometric { mu, .. }, ObsKind::Xy) => {
                    let ty = sum(&y);
                    let mu = if ty > T::zero() { sum(&|n| y(n) - x(n)) / ty } else { mu };
                    Some(EmissionModel::HurdleGeometric { gamma: act, mu: clamp_open(mu) })
                }
                (EmissionModel::HurdleZeta { s, .. }, ObsKind::X) => Some(EmissionModel::HurdleZeta { gamma: act, s }),
                _ => None,
            })
        }
    }
}

fn clamp_open<T: Real>(p: T) -> T {
    p.min(T::one() - T::epsilon()).max(T::zero())
}

fn update_emission<T: Real>(e: &EmissionModel<T>, kind: ObsKind, obs: &Observations, w: &[T]) -> Result<EmissionModel<T>> {
    let current = weighted_objective(e, kind, obs, w);
    let candidate = match closed_form_update(e, kind, obs, w)? {
        Some(c) => c,
        None => numeric_update(e, kind, obs, w),
    };
    // generalized EM: only accept a step that does not lower the weighted objective
    if weighted_objective(&candidate, kind, obs, w) >= current {
        Ok(candidate)
    } else {
        Ok(*e)
    }
}

const LOGIT_CLAMP: f64 = 40.0;

fn logit<T: Real>(p: T) -> T {
    let l = (p / (T::one() - p)).ln();
    l.max(T::lit(-LOGIT_CLAMP)).min(T::lit(LOGIT_CLAMP))
}

fn expit<T: Real>(u: T) -> T {
    let u = u.max(T::lit(-LOGIT_CLAMP)).min(T::lit(LOGIT_CLAMP));
    T::one() / (T::one() + (-u).exp())
}

fn safe_ln<T: Real>(x: T) -> T {
    x.max(T::lit(1e-300).max(T::min_positive_value())).ln()
}

pub(crate) fn to_unconstrained<T: Real>(e: &EmissionModel<T>) -> Vec<T> {
    match *e {
        EmissionModel::Poisson { rate } => vec![safe_ln(rate)],
        EmissionModel::ShiftedZeta { s } => vec![safe_ln(s - T::one())],
        EmissionModel::Geometric { gamma } => vec![logit(gamma)],
        EmissionModel::Polya { r, y } => vec![safe_ln(r), logit(y)],
        EmissionModel::HurdleZeta { gamma, s } => vec![logit(gamma), safe_ln(s - T::one())],
        EmissionModel::HurdleGeometric { gamma, mu } => vec![logit(gamma), logit(mu)],
    }
}

pub(crate) fn from_unconstrained<T: Real>(family: Family, u: &[T]) -> EmissionModel<T> {
    let s_of = |v: T| (T::one() + v.min(T::lit(50.0)).exp()).min(T::lit(ZETA_S_MAX));
    match family {
        Family::Poisson => EmissionModel::Poisson { rate: u[0].min(T::lit(700.0)).exp() },
        Family::ShiftedZeta => EmissionModel::ShiftedZeta { s: s_of(u[0]) },
        Family::Geometric => EmissionModel::Geometric { gamma: clamp_open(expit(u[0])) },
        Family::Polya => EmissionModel::Polya { r: u[0].min(T::lit(700.0)).exp(), y: clamp_open(expit(u[1])) },
        Family::HurdleZeta => EmissionModel::HurdleZeta { gamma: expit(u[0]), s: s_of(u[1]) },
        Family::HurdleGeometric => EmissionModel::HurdleGeometric { gamma: expit(u[0]), mu: clamp_open(expit(u[1])) },
    }
}

fn numeric_update<T: Real>(e: &EmissionModel<T>, kind: ObsKind, obs: &Observations, w: &[T]) -> EmissionModel<T> {
    let family = e.family();
    let start = to_unconstrained(e);
    let res = nelder_mead_max(
        |u| weighted_objective(&from_unconstrained(family, u), kind, obs, w),
        &start,
        NelderMeadOptions { max_evals: 300, f_tol: T::lit(1e-10), initial_step: T::lit(0.3) },
    );
    from_unconstrained(family, &res.x)
}
