//! Self-exciting hurdle model: daily activity probability `1 - e^{-(B_i + SE_i)}` with an
//! exponentially decaying excitation from past active days and zeta-distributed positive counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zeta};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emissions::{fit_ml, Family, ZETA_S_MAX, ZETA_S_MIN};
use crate::error::{invalid_param, Error, Result};
use crate::optimize::{nelder_mead_max, NelderMeadOptions};
use crate::scalar::Real;
use crate::series::EventSeries;
use crate::special::zeta;

/// Positive rates below this are treated as zero when forming `1 - e^{-λ}`.
const MIN_RATE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SehmModel<T> {
    /// Baseline `B_i = b` (plus `trend·i` when a trend is set).
    pub b: T,
    pub alpha: T,
    pub omega: T,
    pub s: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trend: Option<T>,
}

/// Day-`i` hurdle quantities given the history `M_1..M_{i-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intensity<T> {
    pub baseline: T,
    pub excitation: T,
    /// `P(M_i = 0)`.
    pub p_zero: T,
}

impl<T: Real> SehmModel<T> {
    pub fn new(b: T, alpha: T, omega: T, s: T) -> Result<Self> {
        let m = Self { b, alpha, omega, s, trend: None };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > T::zero() && self.b.is_finite()) {
            return Err(invalid_param(format!("baseline must be positive, got {}", self.b)));
        }
        if !(self.alpha >= T::zero() && self.alpha.is_finite()) {
            return Err(invalid_param(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(self.omega > T::zero() && self.omega.is_finite()) {
            return Err(invalid_param(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.s > T::one() && self.s.is_finite()) {
            return Err(invalid_param(format!("zeta exponent must exceed 1, got {}", self.s)));
        }
        if let Some(c) = self.trend {
            if !c.is_finite() {
                return Err(invalid_param("trend must be finite"));
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        4 + usize::from(self.trend.is_some())
    }

    /// `B_i` for the 1-based day `i`.
    pub fn baseline(&self, i: usize) -> T {
        match self.trend {
            Some(c) => (self.b + c * T::of_usize(i)).max(T::lit(MIN_RATE)),
            None => self.b,
        }
    }

    /// `SE_i` for `i = history.len() + 1`.
    pub fn excitation(&self, history: &[u64]) -> T {
        let decay = (-self.omega).exp();
        history.iter().fold(T::zero(), |se, &m| decay * (se + if m > 0 { self.alpha } else { T::zero() }))
    }

    pub fn intensity(&self, history: &[u64]) -> Result<Intensity<T>> {
        self.validate()?;
        let baseline = self.baseline(history.len() + 1);
        let excitation = self.excitation(history);
        Ok(Intensity { baseline, excitation, p_zero: (-(baseline + excitation)).exp() })
    }

    /// `P(M = r | M > 0) = r^{-s}/ζ(s)` for `r ≥ 1`.
    pub fn positive_ln_pmf(&self, r: u64) -> T {
        debug_assert!(r >= 1);
        -self.s * T::lit(r as f64).ln() - zeta(self.s).ln()
    }

    /// `P(M_i = r)` at the given intensity.
    pub fn pmf(&self, intensity: &Intensity<T>, r: u64) -> T {
        if r == 0 {
            intensity.p_zero
        } else {
            (T::one() - intensity.p_zero) * self.positive_ln_pmf(r).exp()
        }
    }

    /// Ratio of the activity probability with and without excitation at day `history.len() + 1`.
    pub fn excitation_ratio(&self, history: &[u64]) -> T {
        excitation_ratio(self.baseline(history.len() + 1), self.excitation(history))
    }

    /// Expected wait to the next active day with the rate frozen at day `history.len() + 1`.
    pub fn predict_next(&self, history: &[u64]) -> T {
        let rate = self.baseline(history.len() + 1) + self.excitation(history);
        T::one() / (-(-rate).exp_m1()).max(T::min_positive_value())
    }

    /// Exact log-likelihood `Σ log P(M_i | ℋ_{i-1})`, computed day by day.
    pub fn log_likelihood(&self, counts: &[u64]) -> T {
        let decay = (-self.omega).exp();
        let ln_zeta = zeta(self.s).ln();
        let mut se = T::zero();
        let mut ll = T::zero();
        for (i, &m) in counts.iter().enumerate() {
            let rate = self.baseline(i + 1) + se;
            if m == 0 {
                ll = ll - rate;
            } else {
                ll = ll + ln_one_minus_exp_neg(rate) - self.s * T::lit(m as f64).ln() - ln_zeta;
            }
            se = decay * (se + if m > 0 { self.alpha } else { T::zero() });
        }
        ll
    }

    /// Log-likelihood of the activity indicators alone (the zeta factor dropped).
    pub fn indicator_log_likelihood(&self, counts: &[u64]) -> T {
        IndicatorData::new(counts).log_likelihood(self.b, self.alpha, self.omega, self.trend.unwrap_or(T::zero()))
    }

    /// Draws `days` daily counts.
    pub fn simulate<R: Rng + ?Sized>(&self, days: usize, rng: &mut R) -> Result<Vec<u64>> {
        self.validate()?;
        let decay = (-self.omega).exp();
        let zeta_dist = Zeta::new(self.s.as_f64()).map_err(|e| invalid_param(e.to_string()))?;
        let mut se = T::zero();
        let mut out = Vec::with_capacity(days);
        for i in 1..=days {
            let p_active = -(-(self.baseline(i) + se)).exp_m1();
            let m = if rng.random::<f64>() < p_active.as_f64() { zeta_dist.sample(rng) as u64 } else { 0 };
            out.push(m);
            se = decay * (se + if m > 0 { self.alpha } else { T::zero() });
        }
        Ok(out)
    }
}

/// `1 + e^{-B}/(1 - e^{-B}) · (1 - e^{-SE})`.
pub fn excitation_ratio<T: Real>(baseline: T, excitation: T) -> T {
    let eb = (-baseline).exp();
    T::one() + eb / (-(-baseline).exp_m1()) * (-(-excitation).exp_m1())
}

fn ln_one_minus_exp_neg<T: Real>(rate: T) -> T {
    if rate <= T::zero() {
        return T::neg_infinity();
    }
    // accurate for both small and large rates
    if rate < T::lit(std::f64::consts::LN_2) {
        (-(-rate).exp_m1()).ln()
    } else {
        (-(-rate).exp()).ln_1p()
    }
}

/// Sufficient statistics for the indicator likelihood: the day count and the active days.
#[derive(Debug, Clone)]
pub struct IndicatorData {
    days: usize,
    /// 1-based active days.
    active: Vec<usize>,
}

impl IndicatorData {
    pub fn new(counts: &[u64]) -> Self {
        let active = counts.iter().enumerate().filter(|(_, &m)| m > 0).map(|(i, _)| i + 1).collect();
        Self { days: counts.len(), active }
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Indicator log-likelihood in `O(active days)`.
    ///
    /// `Σ_{zero days} λ_i` is the total over all days minus the total over active days, and the
    /// excitation summed over all days has a closed form per active day.
    pub fn log_likelihood<T: Real>(&self, b: T, alpha: T, omega: T, trend: T) -> T {
        let n = T::of_usize(self.days);
        let decay = (-omega).exp();
        let one_minus = -(-omega).exp_m1();
        let base = |i: usize| (b + trend * T::of_usize(i)).max(T::lit(MIN_RATE));
        let mut total_base = b * n + trend * n * (n + T::one()) / T::lit(2.0);
        if trend < T::zero() {
            total_base = (1..=self.days).map(base).sum();
        }
        let mut total_se = T::zero();
        let mut active_rate_sum = T::zero();
        let mut ll_active = T::zero();
        let mut se = T::zero();
        let mut prev: Option<usize> = None;
        for &t in &self.active {
            if let Some(p) = prev {
                se = (se + alpha) * (-omega * T::of_usize(t - p)).exp();
            }
            let rate = base(t) + se;
            active_rate_sum = active_rate_sum + rate;
            ll_active = ll_active + ln_one_minus_exp_neg(rate);
            // Σ_{i>t}^{N} α e^{-ω(i-t)}
            let remaining = T::of_usize(self.days - t);
            total_se = total_se + alpha * decay * (-(-omega * remaining).exp_m1()) / one_minus;
            prev = Some(t);
        }
        let zero_rate_sum = total_base + total_se - active_rate_sum;
        ll_active - zero_rate_sum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SehmFitOptions<T> {
    pub starts: usize,
    pub seed: u64,
    /// Pin `α = 0` (homogeneous hurdle).
    pub no_excitation: bool,
    pub trend: bool,
    pub max_evals: usize,
    pub tol: T,
    /// Bounds on `b`, `α`, `ω`.
    pub b_bounds: (T, T),
    pub alpha_bounds: (T, T),
    pub omega_bounds: (T, T),
}

impl<T: Real> Default for SehmFitOptions<T> {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            no_excitation: false,
            trend: false,
            max_evals: 2000,
            tol: T::lit(1e-10),
            b_bounds: (T::lit(1e-8), T::lit(50.0)),
            alpha_bounds: (T::lit(1e-8), T::lit(50.0)),
            omega_bounds: (T::lit(1e-4), T::lit(50.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SehmFit<T> {
    pub model: SehmModel<T>,
    pub log_likelihood: T,
    /// Activity-indicator part of the log-likelihood.
    pub indicator_log_likelihood: T,
    /// `2·n_params - 2·log_likelihood`.
    pub aic: T,
    pub n_params: usize,
    pub converged: bool,
    /// Names of parameters pinned at a bound.
    pub boundary: Vec<String>,
    /// Indicator log-likelihood at every start, in start order.
    pub start_log_likelihoods: Vec<T>,
}

struct Bounds<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> Bounds<T> {
    fn clamp(&self, u: &[T]) -> Vec<T> {
        u.iter().zip(self.lo.iter().zip(&self.hi)).map(|(&x, (&l, &h))| x.max(l).min(h)).collect()
    }
}

/// ML fit of the four-parameter model (five with a trend).
///
/// The likelihood factorizes: `s` is the zeta ML on positive counts, and `(b, α, ω)` maximize
/// the indicator likelihood by multi-start Nelder–Mead in log coordinates.
pub fn fit<T: Real>(series: &EventSeries, opts: &SehmFitOptions<T>) -> Result<SehmFit<T>> {
    fit_counts(series.counts(), opts)
}

pub fn fit_counts<T: Real>(counts: &[u64], opts: &SehmFitOptions<T>) -> Result<SehmFit<T>> {
    let data = IndicatorData::new(counts);
    if data.n_active() == 0 || data.n_active() == data.days() {
        return Err(Error::Degenerate("need at least one active and one inactive day".into()));
    }
    if opts.starts == 0 {
        return Err(invalid_param("need at least one start"));
    }
    let positives: Vec<u64> = counts.iter().filter(|&&m| m > 0).map(|&m| m - 1).collect();
    let zfit = fit_ml::<T>(Family::ShiftedZeta, &positives)?;
    let s = zfit.model.params()[0];

    let frac_zero = T::of_usize(data.days() - data.n_active()) / T::of_usize(data.days());
    let b_homog = -frac_zero.ln();
    let n = T::of_usize(data.days());

    let ln = |x: T| x.ln();
    let lo_b = ln(opts.b_bounds.0);
    let hi_b = ln(opts.b_bounds.1);
    let (lo_a, hi_a) = (ln(opts.alpha_bounds.0), ln(opts.alpha_bounds.1));
    let (lo_w, hi_w) = (ln(opts.omega_bounds.0), ln(opts.omega_bounds.1));
    // trend is parameterized per 1000 days to keep the simplex well scaled
    let trend_scale = T::lit(1e-3);
    let trend_lim = b_homog.max(T::lit(1e-3)) * T::lit(10.0) / (n * trend_scale);

    let mut lo = vec![lo_b];
    let mut hi = vec![hi_b];
    if !opts.no_excitation {
        lo.extend([lo_a, lo_w]);
        hi.extend([hi_a, hi_w]);
    }
    if opts.trend {
        lo.push(-trend_lim);
        hi.push(trend_lim);
    }
    let bounds = Bounds { lo, hi };

    let unpack = |u: &[T]| -> (T, T, T, T) {
        let b = u[0].exp();
        let (alpha, omega, rest) = if opts.no_excitation { (T::zero(), T::one(), &u[1..]) } else { (u[1].exp(), u[2].exp(), &u[3..]) };
        let trend = if opts.trend { rest[0] * trend_scale } else { T::zero() };
        (b, alpha, omega, trend)
    };
    let objective = |u: &[T]| -> T {
        let u = bounds.clamp(u);
        let (b, alpha, omega, trend) = unpack(&u);
        let ll = data.log_likelihood(b, alpha, omega, trend);
        if ll.is_finite() {
            ll
        } else {
            T::neg_infinity()
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Vec<T>> = Vec::with_capacity(opts.starts);
    for k in 0..opts.starts {
        let mut u = Vec::new();
        if k == 0 {
            // half the homogeneous rate as baseline, moderate excitation
            u.push(ln(b_homog * T::lit(if opts.no_excitation { 1.0 } else { 0.5 })));
            if !opts.no_excitation {
                u.extend([ln(b_homog.max(T::lit(1e-3))), ln(T::lit(0.5))]);
            }
        } else {
            u.push(ln(b_homog) + T::lit(rng.random_range(-2.0..0.5f64)));
            if !opts.no_excitation {
                u.push(T::lit(rng.random_range(-4.0..1.0f64)));
                u.push(T::lit(rng.random_range(-4.0..1.5f64)));
            }
        }
        if opts.trend {
            u.push(T::zero());
        }
        starts.push(bounds.clamp(&u));
    }

    let nm = NelderMeadOptions { max_evals: opts.max_evals, f_tol: opts.tol, initial_step: T::lit(0.5) };
    let runs: Vec<(T, Vec<T>, T, bool)> = starts
        .par_iter()
        .map(|u0| {
            let start_ll = objective(u0);
            // polish with a restart from the first optimum
            let r1 = nelder_mead_max(&objective, u0, nm);
            let r2 = nelder_mead_max(&objective, &bounds.clamp(&r1.x), NelderMeadOptions { initial_step: T::lit(0.1), ..nm });
            let best = if r2.value >= r1.value { r2 } else { r1 };
            (start_ll, bounds.clamp(&best.x), best.value, best.converged)
        })
        .collect();
    let mut best_idx = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.2 > runs[best_idx].2 {
            best_idx = i;
        }
    }
    let (_, u, ind_ll, converged) = runs[best_idx].clone();
    let (b, alpha, omega, trend) = unpack(&u);
    let model = SehmModel { b, alpha, omega, s, trend: opts.trend.then_some(trend) };

    let mut boundary = Vec::new();
    let near = |x: T, l: T, h: T| (x - l).abs() < T::lit(1e-4) || (x - h).abs() < T::lit(1e-4);
    if near(u[0], bounds.lo[0], bounds.hi[0]) {
        boundary.push("b".to_string());
    }
    if !opts.no_excitation {
        if near(u[1], bounds.lo[1], bounds.hi[1]) {
            boundary.push("alpha".to_string());
        }
        if near(u[2], bounds.lo[2], bounds.hi[2]) {
            boundary.push("omega".to_string());
        }
    }
    let s_f = s.as_f64();
    if (s_f - ZETA_S_MIN).abs() < 1e-6 || (s_f - ZETA_S_MAX).abs() < 1e-6 || zfit.boundary {
        boundary.push("s".to_string());
    }
    let n_params = if opts.no_excitation { 2 } else { 4 } + usize::from(opts.trend);
    let log_likelihood = ind_ll + zfit.log_likelihood;
    Ok(SehmFit {
        model,
        log_likelihood,
        indicator_log_likelihood: ind_ll,
        aic: crate::emissions::aic(n_params, log_likelihood),
        n_params,
        converged,
        boundary,
        start_log_likelihoods: runs.iter().map(|r| r.0).collect(),
    })
}
