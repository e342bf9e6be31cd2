//! One-step-ahead prediction of the time to the next active day, SMAPE scoring and the
//! HMM/SEHM comparison harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emissions::{fit_ml, Family};
use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::hmm::{
    baum_welch, forward, init_from_rate, log_emission_matrix, predictive_state, BaumWelchOptions, BaumWelchResult, HmmModel,
    ObsKind, Observations,
};
use crate::scalar::Real;
use crate::sehm::{fit_counts, SehmFit, SehmFitOptions, SehmModel};
use crate::series::{interarrivals, EventSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Hmm,
    Sehm,
    Baseline,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Hmm, Estimator::Sehm, Estimator::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Hmm => "hmm",
            Estimator::Sehm => "sehm",
            Estimator::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s.to_ascii_lowercase())
            .ok_or_else(|| invalid_param(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PredictionRun<T> {
    pub estimator: Estimator,
    /// Number of training inter-arrival durations.
    pub horizon: usize,
    pub predictions: Vec<T>,
    pub actuals: Vec<u64>,
    /// Percentage in `[0, 100]`.
    pub smape: T,
}

/// `(100/N) Σ |a - p| / (a + p)`.
pub fn smape<T: Real>(actuals: &[T], predictions: &[T]) -> Result<T> {
    if actuals.len() != predictions.len() {
        return Err(invalid_input(format!("{} actuals but {} predictions", actuals.len(), predictions.len())));
    }
    if actuals.is_empty() {
        return Err(invalid_input("nothing to score"));
    }
    if actuals.iter().chain(predictions).any(|&v| !(v > T::zero())) {
        return Err(invalid_input("SMAPE needs positive values"));
    }
    let sum: T = actuals
        .iter()
        .zip(predictions)
        .map(|(&a, &p)| if p.is_infinite() { T::one() } else { (a - p).abs() / (a + p) })
        .sum();
    Ok(T::lit(100.0) * sum / T::of_usize(actuals.len()))
}

/// Running sample mean of the history.
pub fn predict_baseline<T: Real>(history: &[u64]) -> Result<T> {
    if history.is_empty() {
        return Err(invalid_input("empty history"));
    }
    Ok(T::lit(history.iter().sum::<u64>() as f64) / T::of_usize(history.len()))
}

/// One-step-ahead state probabilities `β` after observing `history`.
pub fn hmm_state_forecast<T: Real>(model: &HmmModel<T>, history: &[u64]) -> Result<Vec<T>> {
    if model.obs_kind != ObsKind::Dt {
        return Err(invalid_param("prediction needs a `dt` model"));
    }
    if history.is_empty() {
        return Err(invalid_input("empty history"));
    }
    let obs = Observations::Durations(history.to_vec());
    let emit = log_emission_matrix(model, &obs)?;
    let (alpha, _) = forward(&model.log_initial(), &model.transition.log_probs(), &emit)?;
    Ok(predictive_state(alpha.last().expect("non-empty"), &model.transition.log_probs()))
}

fn conditional_mean<T: Real>(model: &HmmModel<T>, beta: &[T]) -> T {
    beta.iter().zip(&model.emissions).map(|(&b, e)| b / e.activity_prob()).sum()
}

/// `Σ_i β_i / γ_i`.
pub fn predict_hmm<T: Real>(model: &HmmModel<T>, history: &[u64]) -> Result<T> {
    Ok(conditional_mean(model, &hmm_state_forecast(model, history)?))
}

/// Two-state geometric waiting-time HMM fitted to `durations`.
pub fn fit_duration_hmm<T: Real>(durations: &[u64], opts: &BaumWelchOptions<T>) -> Result<BaumWelchResult<T>> {
    if durations.is_empty() {
        return Err(Error::Degenerate("no durations".into()));
    }
    let rate = T::of_usize(durations.len()) / T::lit(durations.iter().sum::<u64>() as f64);
    let init = init_from_rate(rate, Family::Geometric, ObsKind::Dt, 2, 1, None)?;
    baum_welch(&init, &Observations::Durations(durations.to_vec()), opts)
}

/// AIC of both models on the same daily data (days `1..t_n`).
///
/// Positive counts get the same zeta fit under both models; the HMM describes the activity
/// indicators through its waiting times and the SEHM through its hurdle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ModelComparison<T> {
    pub days: usize,
    pub events: usize,
    pub hmm_log_likelihood: T,
    pub hmm_params: usize,
    pub hmm_aic: T,
    pub sehm_log_likelihood: T,
    pub sehm_params: usize,
    pub sehm_aic: T,
    pub hmm: HmmModel<T>,
    pub sehm: SehmModel<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CompareOptions<T> {
    pub hmm: BaumWelchOptions<T>,
    pub sehm: SehmFitOptions<T>,
}

impl<T: Real> Default for CompareOptions<T> {
    fn default() -> Self {
        Self { hmm: BaumWelchOptions::default(), sehm: SehmFitOptions::default() }
    }
}

struct Fits<T> {
    hmm: BaumWelchResult<T>,
    sehm: SehmFit<T>,
    marks_ll: T,
}

fn fit_both<T: Real>(counts: &[u64], durations: &[u64], opts: &CompareOptions<T>) -> Result<Fits<T>> {
    let hmm = fit_duration_hmm(durations, &opts.hmm)?;
    let sehm = fit_counts(counts, &opts.sehm)?;
    let positives: Vec<u64> = counts.iter().filter(|&&m| m > 0).map(|&m| m - 1).collect();
    let marks_ll = fit_ml::<T>(Family::ShiftedZeta, &positives)?.log_likelihood;
    Ok(Fits { hmm, sehm, marks_ll })
}

fn comparison_of<T: Real>(f: &Fits<T>, days: usize, events: usize) -> ModelComparison<T> {
    // one extra parameter for the shared zeta exponent
    let hmm_params = f.hmm.model.n_params() + 1;
    let hmm_ll = f.hmm.log_likelihood() + f.marks_ll;
    ModelComparison {
        days,
        events,
        hmm_log_likelihood: hmm_ll,
        hmm_params,
        hmm_aic: crate::emissions::aic(hmm_params, hmm_ll),
        sehm_log_likelihood: f.sehm.log_likelihood,
        sehm_params: f.sehm.n_params,
        sehm_aic: f.sehm.aic,
        hmm: f.hmm.model.clone(),
        sehm: f.sehm.model,
    }
}

/// Fits both models to the series up to its last active day and compares AIC.
pub fn compare_models<T: Real>(series: &EventSeries, opts: &CompareOptions<T>) -> Result<ModelComparison<T>> {
    let ia = interarrivals(series)?;
    let last = *ia.t_list().last().expect("non-empty") as usize;
    let counts = &series.counts()[..last];
    let fits = fit_both(counts, ia.durations(), opts)?;
    Ok(comparison_of(&fits, last, ia.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RollingOptions<T> {
    pub estimators: Vec<Estimator>,
    pub compare: CompareOptions<T>,
}

impl<T: Real> Default for RollingOptions<T> {
    fn default() -> Self {
        Self { estimators: Estimator::ALL.to_vec(), compare: CompareOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HorizonResult<T> {
    pub horizon: usize,
    pub runs: Vec<PredictionRun<T>>,
    /// Present when both model-based estimators were requested.
    pub comparison: Option<ModelComparison<T>>,
}

impl<T: Real> HorizonResult<T> {
    pub fn run(&self, e: Estimator) -> Option<&PredictionRun<T>> {
        self.runs.iter().find(|r| r.estimator == e)
    }
}

/// For each horizon `n`: fit on the first `n` durations (days `1..t_n` for the SEHM), hold the
/// parameters fixed, and predict every later duration one step ahead.
pub fn rolling_eval<T: Real>(series: &EventSeries, horizons: &[usize], opts: &RollingOptions<T>) -> Result<Vec<HorizonResult<T>>> {
    let ia = interarrivals(series)?;
    let m = ia.len();
    if let Some(&bad) = horizons.iter().find(|&&n| n == 0 || n >= m) {
        return Err(invalid_param(format!("training horizon {bad} must lie in 1..{m}")));
    }
    if opts.estimators.is_empty() {
        return Err(invalid_param("no estimators requested"));
    }
    horizons.par_iter().map(|&n| horizon_run(series, &ia, n, opts)).collect()
}

fn horizon_run<T: Real>(
    series: &EventSeries,
    ia: &crate::series::InterArrivalSeries,
    n: usize,
    opts: &RollingOptions<T>,
) -> Result<HorizonResult<T>> {
    let durations = ia.durations();
    let t = ia.t_list();
    let actuals: Vec<u64> = durations[n..].to_vec();
    let actual_f: Vec<T> = actuals.iter().map(|&a| T::lit(a as f64)).collect();
    let want = |e| opts.estimators.contains(&e);
    let train_days = t[n - 1] as usize;
    let counts = series.counts();

    let mut hmm_fit = None;
    let mut sehm_fit = None;
    let mut runs = Vec::new();
    for &e in &opts.estimators {
        let predictions: Vec<T> = match e {
            Estimator::Baseline => {
                let mut sum = durations[..n].iter().sum::<u64>();
                let mut preds = Vec::with_capacity(actuals.len());
                for k in n..durations.len() {
                    preds.push(T::lit(sum as f64) / T::of_usize(k));
                    sum += durations[k];
                }
                preds
            }
            Estimator::Hmm => {
                let fit = fit_duration_hmm(&durations[..n], &opts.compare.hmm)?;
                let model = &fit.model;
                let obs = Observations::Durations(durations[..durations.len() - 1].to_vec());
                let emit = log_emission_matrix(model, &obs)?;
                let log_trans = model.transition.log_probs();
                let (alpha, _) = forward(&model.log_initial(), &log_trans, &emit)?;
                let preds = (n..durations.len()).map(|k| conditional_mean(model, &predictive_state(&alpha[k - 1], &log_trans))).collect();
                hmm_fit = Some(fit);
                preds
            }
            Estimator::Sehm => {
                let fit = fit_counts(&counts[..train_days], &opts.compare.sehm)?;
                let model = fit.model;
                let preds = (n..durations.len()).map(|k| model.predict_next(&counts[..t[k - 1] as usize])).collect();
                sehm_fit = Some(fit);
                preds
            }
        };
        let score = smape(&actual_f, &predictions)?;
        runs.push(PredictionRun { estimator: e, horizon: n, predictions, actuals: actuals.clone(), smape: score });
    }
    let comparison = match (hmm_fit, sehm_fit) {
        (Some(hmm), Some(sehm)) if want(Estimator::Hmm) && want(Estimator::Sehm) => {
            let positives: Vec<u64> = counts[..train_days].iter().filter(|&&m| m > 0).map(|&m| m - 1).collect();
            let marks_ll = fit_ml::<T>(Family::ShiftedZeta, &positives)?.log_likelihood;
            Some(comparison_of(&Fits { hmm, sehm, marks_ll }, train_days, n))
        }
        _ => None,
    };
    Ok(HorizonResult { horizon: n, runs, comparison })
}

/// One row per horizon: AIC and SMAPE side by side (blank where not computed).
pub fn write_summary_csv<T: Real, W: std::io::Write>(results: &[HorizonResult<T>], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["n", "aic_sehm", "aic_hmm", "smape_sehm", "smape_hmm", "smape_baseline"])?;
    for r in results {
        let cell = |e| r.run(e).map_or(String::new(), |p| p.smape.to_string());
        let (a_s, a_h) = r.comparison.as_ref().map_or((String::new(), String::new()), |c| (c.sehm_aic.to_string(), c.hmm_aic.to_string()));
        wtr.write_record([r.horizon.to_string(), a_s, a_h, cell(Estimator::Sehm), cell(Estimator::Hmm), cell(Estimator::Baseline)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-prediction trace: `n, estimator, step, actual, predicted`.
pub fn write_trace_csv<T: Real, W: std::io::Write>(results: &[HorizonResult<T>], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["n", "estimator", "step", "actual", "predicted"])?;
    for r in results {
        for run in &r.runs {
            for (i, (a, p)) in run.actuals.iter().zip(&run.predictions).enumerate() {
                wtr.write_record([r.horizon.to_string(), run.estimator.name().to_string(), (r.horizon + i + 1).to_string(), a.to_string(), p.to_string()])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}
