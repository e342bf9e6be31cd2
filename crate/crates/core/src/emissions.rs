//! Per-day count distributions, their ML fits and the exact window-level densities.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, Zeta};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::optimize::golden_max;
use crate::scalar::Real;
use crate::special::{ln_choose, ln_choose_shifted, ln_factorial, ln_gamma, zeta, zeta_tail_bound};

/// Fitting domain for zeta exponents.
pub const ZETA_S_MIN: f64 = 1.0001;
pub const ZETA_S_MAX: f64 = 50.0;
const POLYA_R_MIN: f64 = 1e-4;
const POLYA_R_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Poisson,
    ShiftedZeta,
    Geometric,
    Polya,
    HurdleZeta,
    HurdleGeometric,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Poisson,
        Family::ShiftedZeta,
        Family::Geometric,
        Family::Polya,
        Family::HurdleZeta,
        Family::HurdleGeometric,
    ];

    pub fn n_params(self) -> usize {
        match self {
            Family::Poisson | Family::ShiftedZeta | Family::Geometric => 1,
            Family::Polya | Family::HurdleZeta | Family::HurdleGeometric => 2,
        }
    }

    /// Short name used on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::ShiftedZeta => "szeta",
            Family::Geometric => "geom",
            Family::Polya => "polya",
            Family::HurdleZeta => "hzeta",
            Family::HurdleGeometric => "hgeom",
        }
    }

    pub fn is_hurdle(self) -> bool {
        matches!(self, Family::HurdleZeta | Family::HurdleGeometric)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.short_name() == s)
            .ok_or_else(|| invalid_param(format!("unknown family `{s}`")))
    }
}

/// A count distribution on `{0, 1, 2, ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EmissionModel<T> {
    Poisson { rate: T },
    /// `P(k) = (k+1)^{-s} / ζ(s)`.
    ShiftedZeta { s: T },
    /// `P(k) = (1-γ) γ^k`.
    Geometric { gamma: T },
    /// Negative binomial with real shape: `P(k) = Γ(k+r)/(Γ(r) k!) y^k (1-y)^r`.
    Polya { r: T, y: T },
    /// `P(0) = 1-γ`, `P(k) = γ k^{-s}/ζ(s)` for `k ≥ 1`.
    HurdleZeta { gamma: T, s: T },
    /// `P(0) = 1-γ`, `P(k) = γ (1-μ) μ^{k-1}` for `k ≥ 1`.
    HurdleGeometric { gamma: T, mu: T },
}

#[inline]
fn xlny<T: Real>(x: T, y: T) -> T {
    if x == T::zero() {
        T::zero()
    } else {
        x * y.ln()
    }
}

fn in_unit<T: Real>(v: T, closed_top: bool) -> bool {
    v >= T::zero() && (v < T::one() || (closed_top && v == T::one()))
}

impl<T: Real> EmissionModel<T> {
    pub fn family(&self) -> Family {
        match self {
            Self::Poisson { .. } => Family::Poisson,
            Self::ShiftedZeta { .. } => Family::ShiftedZeta,
            Self::Geometric { .. } => Family::Geometric,
            Self::Polya { .. } => Family::Polya,
            Self::HurdleZeta { .. } => Family::HurdleZeta,
            Self::HurdleGeometric { .. } => Family::HurdleGeometric,
        }
    }

    pub fn params(&self) -> Vec<T> {
        match *self {
            Self::Poisson { rate } => vec![rate],
            Self::ShiftedZeta { s } => vec![s],
            Self::Geometric { gamma } => vec![gamma],
            Self::Polya { r, y } => vec![r, y],
            Self::HurdleZeta { gamma, s } => vec![gamma, s],
            Self::HurdleGeometric { gamma, mu } => vec![gamma, mu],
        }
    }

    pub fn from_params(family: Family, p: &[T]) -> Result<Self> {
        if p.len() != family.n_params() {
            return Err(invalid_param(format!("{family} takes {} parameter(s)", family.n_params())));
        }
        let m = match family {
            Family::Poisson => Self::Poisson { rate: p[0] },
            Family::ShiftedZeta => Self::ShiftedZeta { s: p[0] },
            Family::Geometric => Self::Geometric { gamma: p[0] },
            Family::Polya => Self::Polya { r: p[0], y: p[1] },
            Family::HurdleZeta => Self::HurdleZeta { gamma: p[0], s: p[1] },
            Family::HurdleGeometric => Self::HurdleGeometric { gamma: p[0], mu: p[1] },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Poisson { rate } => rate >= T::zero() && rate.is_finite(),
            Self::ShiftedZeta { s } => s > T::one() && s.is_finite(),
            Self::Geometric { gamma } => in_unit(gamma, false),
            Self::Polya { r, y } => r > T::zero() && r.is_finite() && in_unit(y, false),
            Self::HurdleZeta { gamma, s } => in_unit(gamma, true) && s > T::one() && s.is_finite(),
            Self::HurdleGeometric { gamma, mu } => in_unit(gamma, true) && in_unit(mu, false),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid_param(format!("parameters out of domain: {self:?}")))
        }
    }

    pub fn ln_pmf(&self, k: u64) -> T {
        let kf = T::lit(k as f64);
        match *self {
            Self::Poisson { rate } => {
                if rate == T::zero() {
                    return if k == 0 { T::zero() } else { T::neg_infinity() };
                }
                kf * rate.ln() - rate - ln_factorial::<T>(k)
            }
            Self::ShiftedZeta { s } => -s * (kf + T::one()).ln() - zeta(s).ln(),
            Self::Geometric { gamma } => (T::one() - gamma).ln() + xlny(kf, gamma),
            Self::Polya { r, y } => {
                if k == 0 {
                    return r * (T::one() - y).ln();
                }
                ln_gamma(kf + r) - ln_gamma(r) - ln_factorial::<T>(k) + xlny(kf, y) + r * (T::one() - y).ln()
            }
            Self::HurdleZeta { gamma, s } => {
                if k == 0 {
                    (T::one() - gamma).ln()
                } else {
                    gamma.ln() - s * kf.ln() - zeta(s).ln()
                }
            }
            Self::HurdleGeometric { gamma, mu } => {
                if k == 0 {
                    (T::one() - gamma).ln()
                } else {
                    gamma.ln() + (T::one() - mu).ln() + xlny(kf - T::one(), mu)
                }
            }
        }
    }

    pub fn pmf(&self, k: u64) -> T {
        self.ln_pmf(k).exp()
    }

    /// `P(M > 0)`, the per-day activity probability.
    pub fn activity_prob(&self) -> T {
        match *self {
            Self::Geometric { gamma } | Self::HurdleGeometric { gamma, .. } | Self::HurdleZeta { gamma, .. } => gamma,
            _ => T::one() - self.pmf(0),
        }
    }

    pub fn mean(&self) -> T {
        match *self {
            Self::Poisson { rate } => rate,
            Self::Geometric { gamma } => gamma / (T::one() - gamma),
            Self::Polya { r, y } => r * y / (T::one() - y),
            Self::HurdleGeometric { gamma, mu } => gamma / (T::one() - mu),
            Self::ShiftedZeta { s } => {
                if s <= T::lit(2.0) {
                    T::infinity()
                } else {
                    zeta(s - T::one()) / zeta(s) - T::one()
                }
            }
            Self::HurdleZeta { gamma, s } => {
                if s <= T::lit(2.0) {
                    T::infinity()
                } else {
                    gamma * zeta(s - T::one()) / zeta(s)
                }
            }
        }
    }

    /// Upper bound on `P(M > k)`.
    pub fn tail_bound(&self, k: u64) -> T {
        let kf = T::lit(k as f64);
        match *self {
            Self::Geometric { gamma } => gamma.powf(kf + T::one()),
            Self::HurdleGeometric { gamma, mu } => gamma * mu.powf(kf),
            Self::ShiftedZeta { s } => zeta_tail_bound(s, k + 1) / zeta(s),
            Self::HurdleZeta { gamma, s } => {
                if k == 0 {
                    gamma
                } else {
                    gamma * zeta_tail_bound(s, k) / zeta(s)
                }
            }
            Self::Poisson { rate } => {
                // ratio p(j+1)/p(j) = λ/(j+1) ≤ λ/(k+2) for j ≥ k+1
                let rho = rate / (kf + T::lit(2.0));
                if rho >= T::one() {
                    T::one()
                } else {
                    (self.pmf(k + 1) / (T::one() - rho)).min(T::one())
                }
            }
            Self::Polya { r, y } => {
                // ratio p(j+1)/p(j) = y (j+r)/(j+1), monotone in j
                let rho = y * T::one().max((kf + T::one() + r) / (kf + T::lit(2.0)));
                if rho >= T::one() {
                    T::one()
                } else {
                    (self.pmf(k + 1) / (T::one() - rho)).min(T::one())
                }
            }
        }
    }

    /// Smallest `k` with `P(M > k) < eps` (capped at `cap`).
    pub fn truncation_point(&self, eps: T, cap: u64) -> u64 {
        let mut hi = 1u64;
        while hi < cap && self.tail_bound(hi) >= eps {
            hi = (hi * 2).min(cap);
        }
        let mut lo = hi / 2;
        if self.tail_bound(lo) < eps {
            return lo;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.tail_bound(mid) < eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Draws one count.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let unit = |rng: &mut R| -> f64 { rng.random::<f64>() };
        match *self {
            Self::Poisson { rate } => {
                let r = rate.as_f64();
                if r <= 0.0 {
                    0
                } else {
                    Poisson::new(r).expect("valid rate").sample(rng) as u64
                }
            }
            Self::Geometric { gamma } => geometric_failures(gamma.as_f64(), unit(rng)),
            Self::HurdleGeometric { gamma, mu } => {
                if unit(rng) >= gamma.as_f64() {
                    0
                } else {
                    1 + geometric_failures(mu.as_f64(), unit(rng))
                }
            }
            Self::ShiftedZeta { s } => Zeta::new(s.as_f64()).expect("s > 1").sample(rng) as u64 - 1,
            Self::HurdleZeta { gamma, s } => {
                if unit(rng) >= gamma.as_f64() {
                    0
                } else {
                    Zeta::new(s.as_f64()).expect("s > 1").sample(rng) as u64
                }
            }
            Self::Polya { r, y } => {
                let y = y.as_f64();
                if y <= 0.0 {
                    return 0;
                }
                let lambda = Gamma::new(r.as_f64(), y / (1.0 - y)).expect("valid gamma").sample(rng);
                if lambda <= 0.0 {
                    0
                } else {
                    Poisson::new(lambda).map(|p| p.sample(rng) as u64).unwrap_or(u64::MAX)
                }
            }
        }
    }
}

/// Number of failures before the first success with `P(failure) = q`.
fn geometric_failures(q: f64, u: f64) -> u64 {
    if q <= 0.0 {
        return 0;
    }
    // P(N ≥ k) = q^k; invert with u ∈ [0,1)
    ((1.0 - u).ln() / q.ln()).floor() as u64
}

/// Weighted histogram of counts, the sufficient statistic for every family fit.
#[derive(Debug, Clone)]
struct WeightedCounts<T> {
    bins: BTreeMap<u64, T>,
    total: T,
}

impl<T: Real> WeightedCounts<T> {
    fn new(data: &[u64], weights: Option<&[T]>) -> Self {
        let mut bins = BTreeMap::new();
        let mut total = T::zero();
        for (i, &k) in data.iter().enumerate() {
            let w = weights.map_or(T::one(), |w| w[i]);
            if w > T::zero() {
                let e = bins.entry(k).or_insert(T::zero());
                *e = *e + w;
                total = total + w;
            }
        }
        Self { bins, total }
    }

    fn positive_total(&self) -> T {
        self.bins.range(1..).map(|(_, &w)| w).sum()
    }

    fn mean(&self) -> T {
        self.bins.iter().map(|(&k, &w)| w * T::lit(k as f64)).sum::<T>() / self.total
    }

    fn positive_mean(&self) -> T {
        let pos = self.positive_total();
        self.bins.range(1..).map(|(&k, &w)| w * T::lit(k as f64)).sum::<T>() / pos
    }

    fn log_likelihood(&self, m: &EmissionModel<T>) -> T {
        self.bins
            .iter()
            .map(|(&k, &w)| {
                let lp = m.ln_pmf(k);
                if lp == T::neg_infinity() {
                    T::neg_infinity()
                } else {
                    w * lp
                }
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub model: EmissionModel<T>,
    pub log_likelihood: T,
    pub aic: T,
    pub n_params: usize,
    /// Set when the optimum sits on the edge of the parameter domain
    /// (e.g. an all-zero sample, or an underdispersed sample for Pólya).
    pub boundary: bool,
}

impl<T: Real> FitResult<T> {
    fn new(model: EmissionModel<T>, log_likelihood: T, boundary: bool) -> Self {
        let n_params = model.family().n_params();
        Self {
            model,
            log_likelihood,
            aic: aic(n_params, log_likelihood),
            n_params,
            boundary,
        }
    }
}

/// `2p - 2ℓ`.
pub fn aic<T: Real>(n_params: usize, log_likelihood: T) -> T {
    T::lit(2.0) * T::of_usize(n_params) - T::lit(2.0) * log_likelihood
}

/// Maximum-likelihood fit of `family` to `data`.
pub fn fit_ml<T: Real>(family: Family, data: &[u64]) -> Result<FitResult<T>> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot fit an empty sample".into()));
    }
    fit_hist(family, &WeightedCounts::new(data, None))
}

/// Weighted ML fit; `weights` are non-negative and aligned with `data`.
pub fn fit_ml_weighted<T: Real>(family: Family, data: &[u64], weights: &[T]) -> Result<FitResult<T>> {
    if data.len() != weights.len() {
        return Err(Error::InvalidInput("data and weights differ in length".into()));
    }
    let h = WeightedCounts::new(data, Some(weights));
    if h.total <= T::zero() {
        return Err(Error::Degenerate("total weight is zero".into()));
    }
    fit_hist(family, &h)
}

fn zeta_exponent_fit<T: Real>(sum_ln: T, weight: T) -> (T, bool) {
    // maximizes -s·Σ w ln(k') - W ln ζ(s), concave in s
    let objective = |s: T| -s * sum_ln - weight * zeta(s).ln();
    let (lo, hi) = (T::lit(ZETA_S_MIN), T::lit(ZETA_S_MAX));
    let (s, _) = bracketed_max(objective, lo, hi, 48, false);
    let boundary = (s - lo).abs() < T::lit(1e-6) || (hi - s).abs() < T::lit(1e-6);
    (s, boundary)
}

/// Grid scan followed by golden-section refinement around the best grid point.
fn bracketed_max<T: Real, F: Fn(T) -> T>(f: F, lo: T, hi: T, grid: usize, log_scale: bool) -> (T, T) {
    let map = |u: T| if log_scale { u.exp() } else { u };
    let (ulo, uhi) = if log_scale { (lo.ln(), hi.ln()) } else { (lo, hi) };
    let step = (uhi - ulo) / T::of_usize(grid);
    let mut best_i = 0;
    let mut best_v = T::neg_infinity();
    for i in 0..=grid {
        let v = f(map(ulo + step * T::of_usize(i)));
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let a = ulo + step * T::of_usize(best_i.saturating_sub(1));
    let b = (ulo + step * T::of_usize(best_i + 1)).min(uhi);
    let tol = T::epsilon().sqrt() * (T::one() + b.abs());
    let (u, v) = golden_max(|u| f(map(u)), a, b, tol, 200);
    (map(u), v)
}

fn fit_hist<T: Real>(family: Family, h: &WeightedCounts<T>) -> Result<FitResult<T>> {
    let zero = T::zero();
    let one = T::one();
    let mean = h.mean();
    let pos = h.positive_total();
    let gamma_hat = pos / h.total;
    let (model, boundary) = match family {
        Family::Poisson => (EmissionModel::Poisson { rate: mean }, mean == zero),
        Family::Geometric => (EmissionModel::Geometric { gamma: mean / (one + mean) }, mean == zero),
        Family::HurdleGeometric => {
            if pos == zero {
                (EmissionModel::HurdleGeometric { gamma: zero, mu: zero }, true)
            } else {
                let mp = h.positive_mean();
                let mu = (mp - one) / mp;
                (EmissionModel::HurdleGeometric { gamma: gamma_hat, mu }, gamma_hat == one)
            }
        }
        Family::ShiftedZeta => {
            let sum_ln: T = h.bins.iter().map(|(&k, &w)| w * T::lit(k as f64 + 1.0).ln()).sum();
            let (s, b) = zeta_exponent_fit(sum_ln, h.total);
            (EmissionModel::ShiftedZeta { s }, b)
        }
        Family::HurdleZeta => {
            if pos == zero {
                (EmissionModel::HurdleZeta { gamma: zero, s: T::lit(ZETA_S_MAX) }, true)
            } else {
                let sum_ln: T = h.bins.range(1..).map(|(&k, &w)| w * T::lit(k as f64).ln()).sum();
                let (s, b) = zeta_exponent_fit(sum_ln, pos);
                (EmissionModel::HurdleZeta { gamma: gamma_hat, s }, b || gamma_hat == one)
            }
        }
        Family::Polya => {
            if mean == zero {
                (EmissionModel::Polya { r: one, y: zero }, true)
            } else {
                let profile = |r: T| {
                    let y = mean / (r + mean);
                    h.log_likelihood(&EmissionModel::Polya { r, y })
                };
                let (lo, hi) = (T::lit(POLYA_R_MIN), T::lit(POLYA_R_MAX));
                let (r, _) = bracketed_max(profile, lo, hi, 80, true);
                let boundary = r <= lo * T::lit(1.0001) || r >= hi * T::lit(0.9999);
                (EmissionModel::Polya { r, y: mean / (r + mean) }, boundary)
            }
        }
    };
    let ll = h.log_likelihood(&model);
    Ok(FitResult::new(model, ll, boundary))
}

// ---------------------------------------------------------------------------
// Window-level densities

/// `P(X = k)` for `X ~ Binomial(δ, γ)`: active days in a window.
pub fn window_pmf_x<T: Real>(gamma: T, delta: u64, k: u64) -> T {
    window_ln_pmf_x(gamma, delta, k).exp()
}

pub fn window_ln_pmf_x<T: Real>(gamma: T, delta: u64, k: u64) -> T {
    if k > delta {
        return T::neg_infinity();
    }
    ln_choose::<T>(delta, k) + xlny(T::lit(k as f64), gamma) + xlny(T::lit((delta - k) as f64), T::one() - gamma)
}

/// Bound on `|Bin(δ,γ)(k) - Poi(δγ)(k)|`: `min(1 - e^{-δγ}, δγ/k)·γ`, first term only at `k = 0`.
pub fn poisson_bound<T: Real>(gamma: T, delta: u64, k: u64) -> T {
    let lam = T::lit(delta as f64) * gamma;
    let a = T::one() - (-lam).exp();
    let m = if k == 0 { a } else { a.min(lam / T::lit(k as f64)) };
    m * gamma
}

/// `P(Y = r)` for the window total under i.i.d. geometric days.
pub fn window_pmf_y_geometric<T: Real>(gamma: T, delta: u64, r: u64) -> T {
    window_ln_pmf_y_geometric(gamma, delta, r).exp()
}

pub fn window_ln_pmf_y_geometric<T: Real>(gamma: T, delta: u64, r: u64) -> T {
    let ln_c = if delta == 0 {
        if r == 0 {
            T::zero()
        } else {
            T::neg_infinity()
        }
    } else {
        ln_choose::<T>(delta + r - 1, r)
    };
    xlny(T::lit(delta as f64), T::one() - gamma) + xlny(T::lit(r as f64), gamma) + ln_c
}

/// Joint `P(X = k, Y = r)` for geometric or hurdle-geometric days.
pub fn window_pmf_joint<T: Real>(model: &EmissionModel<T>, delta: u64, k: u64, r: u64) -> Result<T> {
    Ok(window_ln_pmf_joint(model, delta, k, r)?.exp())
}

pub fn window_ln_pmf_joint<T: Real>(model: &EmissionModel<T>, delta: u64, k: u64, r: u64) -> Result<T> {
    if k > delta || r < k {
        return Ok(T::neg_infinity());
    }
    let base = ln_choose::<T>(delta, k) + ln_choose_shifted::<T>(r, k);
    if base == T::neg_infinity() {
        return Ok(base);
    }
    let (kf, rf, df) = (T::lit(k as f64), T::lit(r as f64), T::lit(delta as f64));
    match *model {
        EmissionModel::Geometric { gamma } => Ok(base + xlny(df, T::one() - gamma) + xlny(rf, gamma)),
        EmissionModel::HurdleGeometric { gamma, mu } => Ok(base
            + xlny(df - kf, T::one() - gamma)
            + xlny(kf, gamma)
            + xlny(kf, T::one() - mu)
            + xlny(rf - kf, mu)),
        _ => Err(Error::Unsupported(format!(
            "closed-form joint window density is defined for geom/hgeom, not {}",
            model.family()
        ))),
    }
}

// ---------------------------------------------------------------------------
// AIC table

/// Buckets used by the histogram table: `0..=4` and `> 4`.
pub const HISTOGRAM_BUCKETS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFit<T> {
    pub fit: FitResult<T>,
    /// Expected day-counts per bucket, rounded so the buckets sum to the number of days.
    pub expected: [u64; HISTOGRAM_BUCKETS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFits<T> {
    pub state: usize,
    pub days: usize,
    pub observed: [u64; HISTOGRAM_BUCKETS],
    pub fits: Vec<FamilyFit<T>>,
}

pub fn observed_histogram(data: &[u64]) -> [u64; HISTOGRAM_BUCKETS] {
    let mut h = [0u64; HISTOGRAM_BUCKETS];
    for &k in data {
        h[(k as usize).min(HISTOGRAM_BUCKETS - 1)] += 1;
    }
    h
}

/// Expected bucket counts under `model` for `n` days, rounded by largest remainder.
pub fn expected_histogram<T: Real>(model: &EmissionModel<T>, n: usize) -> [u64; HISTOGRAM_BUCKETS] {
    let mut probs = [0f64; HISTOGRAM_BUCKETS];
    let mut acc = 0.0;
    for (k, p) in probs.iter_mut().enumerate().take(HISTOGRAM_BUCKETS - 1) {
        *p = model.pmf(k as u64).as_f64();
        acc += *p;
    }
    probs[HISTOGRAM_BUCKETS - 1] = (1.0 - acc).max(0.0);
    let raw: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let mut out = [0u64; HISTOGRAM_BUCKETS];
    for (o, r) in out.iter_mut().zip(&raw) {
        *o = r.floor() as u64;
    }
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..HISTOGRAM_BUCKETS).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take((n as u64).saturating_sub(assigned) as usize) {
        out[i] += 1;
    }
    out
}

/// Fits every family in `families` to each state's daily counts.
pub fn aic_table<T: Real>(
    data_by_state: &BTreeMap<usize, Vec<u64>>,
    families: &[Family],
) -> Result<Vec<StateFits<T>>> {
    data_by_state
        .iter()
        .map(|(&state, data)| {
            let fits = families
                .iter()
                .map(|&f| {
                    let fit = fit_ml::<T>(f, data)?;
                    Ok(FamilyFit { expected: expected_histogram(&fit.model, data.len()), fit })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StateFits { state, days: data.len(), observed: observed_histogram(data), fits })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pmf_closed_forms() {
        let g = EmissionModel::Geometric { gamma: 0.5f64 };
        assert_relative_eq!(g.pmf(0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(g.pmf(2), 0.125, epsilon = 1e-15);
        let h = EmissionModel::HurdleGeometric { gamma: 0.4f64, mu: 0.5 };
        assert_relative_eq!(h.pmf(0), 0.6, epsilon = 1e-15);
        assert_relative_eq!(h.pmf(1), 0.2, epsilon = 1e-15);
        assert_relative_eq!(h.pmf(2), 0.1, epsilon = 1e-15);
        let z = EmissionModel::HurdleZeta { gamma: 1.0f64, s: 2.0 };
        let pi = std::f64::consts::PI;
        assert_relative_eq!(z.pmf(1), 6.0 / (pi * pi), epsilon = 1e-14);
        assert_eq!(z.pmf(0), 0.0);
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(EmissionModel::<f64>::from_params(Family::Geometric, &[1.0]).is_err());
        assert!(EmissionModel::<f64>::from_params(Family::ShiftedZeta, &[1.0]).is_err());
        assert!(EmissionModel::<f64>::from_params(Family::Polya, &[0.0, 0.5]).is_err());
        assert!(EmissionModel::<f64>::from_params(Family::HurdleGeometric, &[1.0, 0.5]).is_ok());
        assert!(EmissionModel::<f64>::from_params(Family::Poisson, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.short_name().parse::<Family>().unwrap(), f);
        }
        assert!("nope".parse::<Family>().is_err());
    }

    #[test]
    fn poisson_fit_is_sample_mean() {
        let fit = fit_ml::<f64>(Family::Poisson, &[0, 0, 2, 2]).unwrap();
        assert_eq!(fit.model, EmissionModel::Poisson { rate: 1.0 });
        assert_relative_eq!(fit.aic, 2.0 - 2.0 * fit.log_likelihood);
    }

    #[test]
    fn hurdle_geometric_fit_matches_grid_oracle() {
        let data = [0u64, 0, 1, 3];
        let fit = fit_ml::<f64>(Family::HurdleGeometric, &data).unwrap();
        // brute-force grid maximization of the likelihood
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 1..1000 {
            for j in 0..1000 {
                let (g, m) = (i as f64 / 1000.0, j as f64 / 1000.0);
                let ll: f64 = data.iter().map(|&k| EmissionModel::HurdleGeometric { gamma: g, mu: m }.ln_pmf(k)).sum();
                if ll > best.0 {
                    best = (ll, g, m);
                }
            }
        }
        assert_relative_eq!(best.1, 0.5, epsilon = 1e-12);
        assert_relative_eq!(best.2, 0.5, epsilon = 1e-12);
        assert_eq!(fit.model, EmissionModel::HurdleGeometric { gamma: 0.5, mu: 0.5 });
        assert!(fit.log_likelihood >= best.0 - 1e-12);
    }

    #[test]
    fn all_zero_sample_flags_boundary() {
        for f in Family::ALL {
            let fit = fit_ml::<f64>(f, &[0, 0, 0]).unwrap();
            assert!(fit.boundary, "{f}");
            assert!(fit.log_likelihood.is_finite(), "{f}");
        }
    }

    #[test]
    fn window_x_examples() {
        assert_eq!(window_pmf_x(0.0f64, 5, 0), 1.0);
        assert_relative_eq!(window_pmf_x(0.5f64, 2, 1), 0.5, epsilon = 1e-15);
        let s: f64 = (0..=15).map(|k| window_pmf_x(0.0924f64, 15, k)).sum();
        assert_relative_eq!(s, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn poisson_bound_examples() {
        for k in 0..5 {
            assert_eq!(poisson_bound(0.0f64, 10, k), 0.0);
        }
        let b = poisson_bound(0.0924f64, 15, 3);
        let expected = (1.386f64 / 3.0).min(1.0 - (-1.386f64).exp()) * 0.0924;
        assert_relative_eq!(b, expected, max_relative = 1e-3);
        assert_relative_eq!(b, 0.0427, epsilon = 1e-4);
    }

    #[test]
    fn window_y_examples() {
        assert_relative_eq!(window_pmf_y_geometric(0.3f64, 4, 0), 0.7f64.powi(4), epsilon = 1e-15);
        assert_relative_eq!(window_pmf_y_geometric(0.5f64, 1, 2), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn window_joint_edge_cases() {
        for m in [EmissionModel::Geometric { gamma: 0.3f64 }, EmissionModel::HurdleGeometric { gamma: 0.3, mu: 0.6 }] {
            assert_relative_eq!(window_pmf_joint(&m, 4, 0, 0).unwrap(), 0.7f64.powi(4), epsilon = 1e-15);
            for r in 1..6 {
                assert_eq!(window_pmf_joint(&m, 4, 0, r).unwrap(), 0.0);
            }
            assert_eq!(window_pmf_joint(&m, 4, 3, 2).unwrap(), 0.0);
        }
        assert!(window_pmf_joint(&EmissionModel::Poisson { rate: 1.0f64 }, 3, 1, 1).is_err());
    }

    #[test]
    fn hurdle_joint_marginal_is_binomial() {
        let m = EmissionModel::HurdleGeometric { gamma: 0.2f64, mu: 0.4 };
        for k in 0..=3 {
            let s: f64 = (0..400).map(|r| window_pmf_joint(&m, 3, k, r).unwrap()).sum();
            assert_relative_eq!(s, window_pmf_x(0.2, 3, k), epsilon = 1e-12);
        }
    }

    #[test]
    fn expected_histogram_sums_to_days() {
        for f in Family::ALL {
            let fit = fit_ml::<f64>(f, &[0, 0, 0, 1, 1, 2, 5, 9, 0, 0, 3]).unwrap();
            for n in [1usize, 11, 2657, 630] {
                assert_eq!(expected_histogram(&fit.model, n).iter().sum::<u64>(), n as u64);
            }
        }
    }

    #[test]
    fn truncation_point_meets_tolerance() {
        let m = EmissionModel::Polya { r: 1.5f64, y: 0.3 };
        let k = m.truncation_point(1e-12, 1 << 40);
        let mass: f64 = (0..=k).map(|j| m.pmf(j)).sum();
        assert!(mass > 1.0 - 1e-12 && mass <= 1.0 + 1e-12);
    }

    #[test]
    fn sampling_means() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let models = [
            EmissionModel::Poisson { rate: 0.7f64 },
            EmissionModel::Geometric { gamma: 0.36 },
            EmissionModel::HurdleGeometric { gamma: 0.4, mu: 0.3 },
            EmissionModel::Polya { r: 1.5, y: 0.28 },
            EmissionModel::HurdleZeta { gamma: 0.4, s: 3.5 },
            EmissionModel::ShiftedZeta { s: 4.0 },
        ];
        for m in models {
            let n = 200_000;
            let mean = (0..n).map(|_| m.sample(&mut rng) as f64).sum::<f64>() / n as f64;
            assert!((mean - m.mean()).abs() < 0.02 + 0.02 * m.mean(), "{m:?}: {mean} vs {}", m.mean());
        }
    }
}
