//! Hidden Markov engine over windowed activity observations.

mod baum_welch;
mod engine;
mod model;
mod observations;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baum_welch::{baum_welch, BaumWelchOptions, BaumWelchResult, COLLAPSE_MASS};
pub use engine::{forward, predictive_state, ForwardBackward};
pub use model::{HmmModel, ObsKind, TransitionMatrix};
pub use observations::{log_emission_matrix, state_log_density, Observations, WindowObs};

use crate::emissions::{fit_ml, EmissionModel, Family, ZETA_S_MAX, ZETA_S_MIN};
use crate::error::{invalid_param, Error, Result};
use crate::scalar::Real;
use crate::series::{interarrivals, EventSeries, InterArrivalSeries};
use crate::special::zeta;

/// Decoded state sequence with per-step posteriors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StatePath<T> {
    pub states: Vec<usize>,
    /// `K × d` smoothed state posteriors.
    pub posteriors: Vec<Vec<T>>,
    /// Log joint probability of the decoded path and the observations.
    pub log_likelihood: T,
    /// Marginal log-likelihood of the observations.
    pub marginal_log_likelihood: T,
}

/// Forward–backward pass of `model` over `obs`.
pub fn forward_backward<T: Real>(model: &HmmModel<T>, obs: &Observations) -> Result<ForwardBackward<T>> {
    model.validate()?;
    obs.check_kind(model.obs_kind)?;
    let emit = log_emission_matrix(model, obs)?;
    engine::forward_backward(&model.log_initial(), &model.transition.log_probs(), &emit)
}

/// Most probable state path; ties go to the lower state index.
pub fn viterbi<T: Real>(model: &HmmModel<T>, obs: &Observations) -> Result<StatePath<T>> {
    model.validate()?;
    obs.check_kind(model.obs_kind)?;
    let emit = log_emission_matrix(model, obs)?;
    let log_init = model.log_initial();
    let log_trans = model.transition.log_probs();
    let fb = engine::forward_backward(&log_init, &log_trans, &emit)?;
    let (states, best) = engine::viterbi(&log_init, &log_trans, &emit)?;
    Ok(StatePath { states, posteriors: fb.posteriors, log_likelihood: best, marginal_log_likelihood: fb.log_likelihood })
}

/// `γ̂ = 1 / mean(ΔT)`.
pub fn rate_estimate<T: Real>(ia: &InterArrivalSeries) -> T {
    let total: u64 = ia.durations().iter().sum();
    T::of_usize(ia.len()) / T::lit(total as f64)
}

/// `f = N_spurt · δ / 𝒩`.
pub fn fractional_activity<T: Real>(n_spurt: usize, delta: usize, days: usize) -> T {
    T::of_usize(n_spurt * delta) / T::of_usize(days)
}

/// Expands a window path to one state per day; days past the last window repeat its state.
pub fn daily_states(window_states: &[usize], delta: usize, days: usize) -> Vec<usize> {
    if window_states.is_empty() {
        return vec![0; days];
    }
    (0..days).map(|i| window_states[(i / delta).min(window_states.len() - 1)]).collect()
}

/// Emission of `family` whose per-day activity probability is `p`, other parameters from `reference`.
pub fn emission_with_activity<T: Real>(family: Family, p: T, reference: Option<&EmissionModel<T>>) -> EmissionModel<T> {
    let p = p.max(T::lit(1e-6)).min(T::one() - T::lit(1e-6));
    let rp = reference.filter(|r| r.family() == family).map(|r| r.params());
    match family {
        Family::Poisson => EmissionModel::Poisson { rate: -(T::one() - p).ln() },
        Family::Geometric => EmissionModel::Geometric { gamma: p },
        Family::HurdleGeometric => EmissionModel::HurdleGeometric { gamma: p, mu: rp.map_or(T::lit(0.3), |v| v[1]) },
        Family::HurdleZeta => EmissionModel::HurdleZeta { gamma: p, s: rp.map_or(T::lit(3.0), |v| v[1]) },
        Family::Polya => {
            let r = rp.map_or(T::one(), |v| v[0]);
            let y = T::one() - (T::one() - p).powf(T::one() / r);
            EmissionModel::Polya { r, y: y.max(T::lit(1e-12)) }
        }
        Family::ShiftedZeta => {
            // P(M > 0) = 1 - 1/ζ(s) is decreasing in s; bisect for the target.
            let target = T::one() / (T::one() - p);
            let (mut lo, mut hi) = (T::lit(ZETA_S_MIN), T::lit(ZETA_S_MAX));
            if zeta(lo) <= target {
                return EmissionModel::ShiftedZeta { s: lo };
            }
            if zeta(hi) >= target {
                return EmissionModel::ShiftedZeta { s: hi };
            }
            for _ in 0..100 {
                let mid = (lo + hi) / T::lit(2.0);
                if zeta(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            EmissionModel::ShiftedZeta { s: (lo + hi) / T::lit(2.0) }
        }
    }
}

/// Deterministic default starting model: activity `γ̂/2` and `2γ̂` with `p₀ = q₀ = 0.1`.
pub fn default_init<T: Real>(series: &EventSeries, delta: usize, family: Family, kind: ObsKind, n_states: usize) -> Result<HmmModel<T>> {
    let ia = interarrivals(series)?;
    let reference = fit_ml::<T>(family, series.counts()).ok().map(|f| f.model);
    init_from_rate(rate_estimate(&ia), family, kind, n_states, delta, reference.as_ref())
}

/// Starting model around the activity rate `rate`: per-state activity spaced geometrically from
/// `rate/2` to `2·rate` (clipped to `[0.001, 0.999]`), sticky transitions, stationary initial law.
pub fn init_from_rate<T: Real>(
    rate: T,
    family: Family,
    kind: ObsKind,
    n_states: usize,
    delta: usize,
    reference: Option<&EmissionModel<T>>,
) -> Result<HmmModel<T>> {
    if n_states < 1 {
        return Err(invalid_param("need at least one state"));
    }
    let lo = T::lit(1e-3);
    let hi = T::lit(0.999);
    let emissions: Vec<EmissionModel<T>> = (0..n_states)
        .map(|j| {
            let factor = if n_states == 1 {
                T::one()
            } else {
                T::lit(0.5) * T::lit(4.0).powf(T::of_usize(j) / T::of_usize(n_states - 1))
            };
            emission_with_activity(family, (rate * factor).max(lo).min(hi), reference)
        })
        .collect();
    let transition = if n_states == 2 {
        TransitionMatrix::two_state(T::lit(0.1), T::lit(0.1))?
    } else {
        TransitionMatrix::sticky(n_states, T::lit(0.9))?
    };
    let initial = transition.stationary();
    HmmModel::new(transition, emissions, initial, kind, delta.max(1))
}

/// Builds the observation sequence matching `kind`.
pub fn observations_for(series: &EventSeries, delta: usize, kind: ObsKind, include_partial: bool) -> Result<Observations> {
    match kind {
        ObsKind::Dt => Observations::durations_of(series),
        _ => Observations::windows(series, delta, include_partial),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ClassifyOptions<T> {
    pub n_states: usize,
    pub baum_welch: BaumWelchOptions<T>,
    pub include_partial: bool,
    /// Extra randomized starts run alongside the default start; the best final likelihood wins.
    pub restarts: usize,
    pub seed: u64,
    /// Overrides the default starting model.
    pub init: Option<HmmModel<T>>,
}

impl<T: Real> Default for ClassifyOptions<T> {
    fn default() -> Self {
        Self { n_states: 2, baum_welch: BaumWelchOptions::default(), include_partial: false, restarts: 0, seed: 0, init: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ClassifySummary<T> {
    pub delta: usize,
    pub family: Family,
    pub obs_kind: ObsKind,
    pub days: usize,
    /// Number of decoded steps (windows, or inter-arrival durations for `dt`).
    pub n_windows: usize,
    pub n_spurt: usize,
    /// `N_spurt·δ/𝒩`; `None` for duration observations.
    pub frac_activity: Option<T>,
    pub activity_probs: Vec<T>,
    pub log_likelihood: T,
    pub aic: T,
    pub n_params: usize,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Classification<T> {
    pub model: HmmModel<T>,
    pub path: StatePath<T>,
    pub summary: ClassifySummary<T>,
    pub trace: Vec<T>,
}

fn jittered_init<T: Real>(base: &HmmModel<T>, family: Family, rng: &mut ChaCha8Rng) -> Result<HmmModel<T>> {
    let d = base.n_states();
    let emissions: Vec<EmissionModel<T>> = base
        .emissions
        .iter()
        .map(|e| {
            let f = T::lit(rng.random_range(-1.0..1.0f64).exp());
            emission_with_activity(family, (e.activity_prob() * f).min(T::lit(0.999)), Some(e))
        })
        .collect();
    let rows: Vec<Vec<T>> = (0..d)
        .map(|i| {
            if d == 1 {
                return vec![T::one()];
            }
            let leave = T::lit(rng.random_range(0.02..0.3f64));
            (0..d).map(|j| if i == j { T::one() - leave } else { leave / T::of_usize(d - 1) }).collect()
        })
        .collect();
    let transition = TransitionMatrix::new(rows)?;
    let initial = transition.stationary();
    HmmModel::new(transition, emissions, initial, base.obs_kind, base.delta)
}

/// Windowize, fit by Baum–Welch, and decode by Viterbi.
pub fn classify<T: Real>(
    series: &EventSeries,
    delta: usize,
    family: Family,
    kind: ObsKind,
    opts: &ClassifyOptions<T>,
) -> Result<Classification<T>> {
    if kind.is_windowed() && delta == 0 {
        return Err(invalid_param("window length must be at least one day"));
    }
    if opts.baum_welch.tol <= T::zero() {
        return Err(invalid_param("tolerance must be positive"));
    }
    let days = series.len();
    if series.total() == 0 {
        return degenerate_classification(series, delta, family, kind, opts);
    }
    let obs = observations_for(series, delta, kind, opts.include_partial)?;
    let base = match &opts.init {
        Some(m) => {
            if m.emissions[0].family() != family || m.obs_kind != kind {
                return Err(invalid_param("initial model does not match family or observation kind"));
            }
            m.clone()
        }
        None => default_init(series, delta, family, kind, opts.n_states)?,
    };
    let mut inits = vec![base.clone()];
    for r in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        inits.push(jittered_init(&base, family, &mut rng)?);
    }
    let fits: Vec<Result<BaumWelchResult<T>>> = inits.par_iter().map(|m| baum_welch(m, &obs, &opts.baum_welch)).collect();
    let mut best: Option<BaumWelchResult<T>> = None;
    let mut first_err = None;
    for f in fits {
        match f {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.log_likelihood() > b.log_likelihood()) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let fit = match (best, first_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one start"),
    };
    let path = viterbi(&fit.model, &obs)?;
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push(format!("Baum-Welch did not converge within {} iterations", opts.baum_welch.max_iter));
    }
    for s in &fit.collapsed_states {
        warnings.push(format!("state {s} collapsed (posterior mass below {COLLAPSE_MASS:e})"));
    }
    let n_spurt = path.states.iter().filter(|&&s| s != 0).count();
    let ll = fit.log_likelihood();
    let n_params = fit.model.n_params();
    let summary = ClassifySummary {
        delta,
        family,
        obs_kind: kind,
        days,
        n_windows: path.states.len(),
        n_spurt,
        frac_activity: kind.is_windowed().then(|| fractional_activity(n_spurt, delta, days)),
        activity_probs: fit.model.activity_probs(),
        log_likelihood: ll,
        aic: crate::emissions::aic(n_params, ll),
        n_params,
        iterations: fit.iterations(),
        converged: fit.converged,
        warnings,
    };
    Ok(Classification { model: fit.model, path, summary, trace: fit.trace })
}

/// All-zero input: a single effective state, no Baum–Welch.
fn degenerate_classification<T: Real>(
    series: &EventSeries,
    delta: usize,
    family: Family,
    kind: ObsKind,
    opts: &ClassifyOptions<T>,
) -> Result<Classification<T>> {
    if kind == ObsKind::Dt {
        return Err(Error::Degenerate("series has no day with activity".into()));
    }
    let obs = Observations::windows(series, delta, opts.include_partial)?;
    let d = opts.n_states.max(1);
    let tiny = T::lit(1e-12);
    let emissions = vec![emission_with_activity(family, tiny, None); d];
    let transition = TransitionMatrix::sticky(d, T::one())?;
    let mut initial = vec![T::zero(); d];
    initial[0] = T::one();
    let model = HmmModel::new(transition, emissions, initial, kind, delta)?;
    let path = viterbi(&model, &obs)?;
    let k = path.states.len();
    let ll = path.marginal_log_likelihood;
    let n_params = model.n_params();
    let summary = ClassifySummary {
        delta,
        family,
        obs_kind: kind,
        days: series.len(),
        n_windows: k,
        n_spurt: 0,
        frac_activity: Some(T::zero()),
        activity_probs: model.activity_probs(),
        log_likelihood: ll,
        aic: crate::emissions::aic(n_params, ll),
        n_params,
        iterations: 0,
        converged: true,
        warnings: vec!["series has no activity; a single state was used".into()],
    };
    Ok(Classification { model, path, summary, trace: vec![ll] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::simulate_windows;
    use approx::assert_relative_eq;

    fn geom(g: f64) -> EmissionModel<f64> {
        EmissionModel::Geometric { gamma: g }
    }

    /// Every path of a two-state chain, with its log joint probability.
    fn enumerate_paths(model: &HmmModel<f64>, obs: &Observations) -> Vec<(Vec<usize>, f64)> {
        let emit = log_emission_matrix(model, obs).unwrap();
        let k = emit.len();
        let lt = model.transition.log_probs();
        let li = model.log_initial();
        (0..1usize << k)
            .map(|mask| {
                let path: Vec<usize> = (0..k).map(|n| (mask >> n) & 1).collect();
                let mut lp = li[path[0]] + emit[0][path[0]];
                for n in 1..k {
                    lp += lt[path[n - 1]][path[n]] + emit[n][path[n]];
                }
                (path, lp)
            })
            .collect()
    }

    #[test]
    fn toy_chain_matches_enumeration() {
        let m = HmmModel::two_state(0.5, 0.5, geom(0.5), geom(0.5), ObsKind::X, 1).unwrap();
        let s = EventSeries::from_counts(vec![1, 0, 1]).unwrap();
        let obs = Observations::windows(&s, 1, false).unwrap();
        let brute = enumerate_paths(&m, &obs);
        let total: f64 = brute.iter().map(|(_, lp)| lp.exp()).sum();
        let fb = forward_backward(&m, &obs).unwrap();
        assert_relative_eq!(fb.log_likelihood, total.ln(), max_relative = 1e-12);
        assert_relative_eq!(fb.log_likelihood, 3.0 * 0.5f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn viterbi_matches_enumeration_on_burst() {
        let m = HmmModel::two_state(0.1, 0.1, geom(0.01), geom(0.9), ObsKind::X, 3).unwrap();
        let s = EventSeries::from_counts(vec![0, 0, 0, 0, 1, 0, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0]).unwrap();
        let obs = Observations::windows(&s, 3, false).unwrap();
        let path = viterbi(&m, &obs).unwrap();
        let (best, lp) = enumerate_paths(&m, &obs)
            .into_iter()
            .fold((vec![], f64::NEG_INFINITY), |acc, (p, lp)| if lp > acc.1 { (p, lp) } else { acc });
        assert_eq!(path.states, best);
        assert_eq!(path.states, vec![0, 0, 1, 1, 0, 0]);
        assert_relative_eq!(path.log_likelihood, lp, max_relative = 1e-12);
        assert!(path.marginal_log_likelihood > path.log_likelihood);
    }

    #[test]
    fn identical_states_decode_to_zero() {
        let m = HmmModel::two_state(0.2, 0.2, geom(0.3), geom(0.3), ObsKind::X, 2).unwrap();
        let s = EventSeries::from_counts(vec![1, 1, 0, 0, 2, 1, 0, 1]).unwrap();
        let path = viterbi(&m, &Observations::windows(&s, 2, false).unwrap()).unwrap();
        assert!(path.states.iter().all(|&x| x == 0));
        for p in &path.posteriors {
            assert_relative_eq!(p[0], 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate_estimate::<f64>(&InterArrivalSeries::from_durations(vec![2, 2, 2]).unwrap()), 0.5);
        assert_eq!(rate_estimate::<f64>(&InterArrivalSeries::from_durations(vec![1]).unwrap()), 1.0);
    }

    #[test]
    fn rate_recovers_geometric_gaps() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // gaps of a Bernoulli(γ) day process are 1 + Geometric failures
        let gaps: Vec<u64> = (0..10_000).map(|_| 1 + EmissionModel::Geometric { gamma: 1.0 - 0.0857 }.sample(&mut rng)).collect();
        let r: f64 = rate_estimate(&InterArrivalSeries::from_durations(gaps).unwrap());
        assert!((r - 0.0857).abs() < 0.003, "{r}");
    }

    #[test]
    fn fractional_activity_formula() {
        let f: f64 = fractional_activity(46, 15, 3286);
        assert!((f - 0.2099).abs() < 1e-4);
    }

    #[test]
    fn daily_broadcast() {
        assert_eq!(daily_states(&[0, 1], 3, 8), vec![0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn all_zero_series() {
        let s = EventSeries::from_counts(vec![0; 60]).unwrap();
        let c = classify::<f64>(&s, 15, Family::Geometric, ObsKind::X, &ClassifyOptions::default()).unwrap();
        assert_eq!(c.summary.n_spurt, 0);
        assert_eq!(c.summary.frac_activity, Some(0.0));
        assert!(c.path.states.iter().all(|&x| x == 0));
        assert!(!c.summary.warnings.is_empty());
    }

    #[test]
    fn em_fixed_point_for_identical_states() {
        let s = EventSeries::from_counts(vec![1, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0]).unwrap();
        let obs = Observations::windows(&s, 3, false).unwrap();
        let mle = 4.0 / 12.0;
        let m = HmmModel::two_state(0.3, 0.3, geom(mle), geom(mle), ObsKind::X, 3).unwrap();
        let r = baum_welch(&m, &obs, &BaumWelchOptions::default()).unwrap();
        for (a, b) in r.model.emissions.iter().zip(&m.emissions) {
            assert_relative_eq!(a.params()[0], b.params()[0], max_relative = 1e-12);
        }
        assert_relative_eq!(r.model.transition.get(0, 1), 0.3, max_relative = 1e-9);
    }

    fn synthetic(seed: u64) -> (EventSeries, Vec<usize>) {
        use rand::SeedableRng;
        let truth = HmmModel::two_state(0.1, 0.1, geom(0.09), geom(0.36), ObsKind::X, 15).unwrap();
        let sim = simulate_windows(&truth, 300, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        (sim.series, sim.states)
    }

    #[test]
    fn classify_recovers_regimes() {
        let (s, truth) = synthetic(21);
        let c = classify::<f64>(&s, 15, Family::Geometric, ObsKind::X, &ClassifyOptions::default()).unwrap();
        let acc = c.path.states.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64;
        assert!(acc >= 0.9, "accuracy {acc}");
        assert!(c.trace.windows(2).all(|w| w[1] >= w[0] - 1e-8));
    }

    #[test]
    fn classify_ignores_initial_labeling() {
        let (s, _) = synthetic(3);
        let base = classify::<f64>(&s, 15, Family::Geometric, ObsKind::X, &ClassifyOptions::default()).unwrap();
        let mut swapped = default_init::<f64>(&s, 15, Family::Geometric, ObsKind::X, 2).unwrap();
        swapped.emissions.swap(0, 1);
        let opts = ClassifyOptions { init: Some(swapped), ..Default::default() };
        let other = classify::<f64>(&s, 15, Family::Geometric, ObsKind::X, &opts).unwrap();
        assert_eq!(base.path.states, other.path.states);
        for (a, b) in base.model.activity_probs().iter().zip(other.model.activity_probs()) {
            assert_relative_eq!(*a, b, max_relative = 1e-6);
        }
    }

    #[test]
    fn restarts_are_deterministic() {
        let (s, _) = synthetic(8);
        let opts = ClassifyOptions { restarts: 4, seed: 99, ..Default::default() };
        let a = classify::<f64>(&s, 15, Family::HurdleGeometric, ObsKind::Xy, &opts).unwrap();
        let b = classify::<f64>(&s, 15, Family::HurdleGeometric, ObsKind::Xy, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn every_family_and_kind_fits() {
        let (s, _) = synthetic(2);
        let s = s.slice(0..600).unwrap();
        for family in Family::ALL {
            for kind in [ObsKind::X, ObsKind::Y, ObsKind::Xy, ObsKind::Daily, ObsKind::Dt] {
                if kind == ObsKind::Xy && !matches!(family, Family::Geometric | Family::HurdleGeometric) {
                    continue;
                }
                let opts = ClassifyOptions { baum_welch: BaumWelchOptions { max_iter: 30, ..Default::default() }, ..Default::default() };
                let c = classify::<f64>(&s, 15, family, kind, &opts).unwrap_or_else(|e| panic!("{family} {kind}: {e}"));
                assert!(c.trace.windows(2).all(|w| w[1] >= w[0] - 1e-8 * w[0].abs()), "{family} {kind}: {:?}", c.trace);
                let act = c.model.activity_probs();
                assert!(act[0] <= act[1]);
            }
        }
    }

    #[test]
    fn single_precision_classify() {
        let (s, _) = synthetic(4);
        let c = classify::<f32>(&s, 15, Family::Geometric, ObsKind::X, &ClassifyOptions::default()).unwrap();
        assert_eq!(c.model.n_states(), 2);
    }
}
