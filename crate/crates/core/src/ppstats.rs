//! Point-process diagnostics on activity days: Ripley's K, bootstrap bands, the
//! exponential-spacings KS test, Q–Q tables and state-conditional sub-series.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::scalar::Real;
use crate::series::{EventSeries, InterArrivalSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RipleyCurve<T> {
    pub h: Vec<T>,
    pub k_hat: Vec<T>,
    pub ci_lo: Option<Vec<T>>,
    pub ci_hi: Option<Vec<T>>,
    pub corrected: bool,
}

impl<T: Real> RipleyCurve<T> {
    /// The complete-randomness reference `2h`.
    pub fn reference(&self) -> Vec<T> {
        self.h.iter().map(|&h| h + h).collect()
    }

    /// Fraction of the grid where `2h` lies inside the band; `None` without a band.
    pub fn band_coverage(&self) -> Option<T> {
        let (lo, hi) = (self.ci_lo.as_ref()?, self.ci_hi.as_ref()?);
        let inside = self.h.iter().zip(lo.iter().zip(hi)).filter(|(&h, (&l, &u))| l <= h + h && h + h <= u).count();
        Some(T::of_usize(inside) / T::of_usize(self.h.len()))
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["h", "k_hat", "two_h", "ci_lo", "ci_hi"])?;
        for (i, &h) in self.h.iter().enumerate() {
            let band = |b: &Option<Vec<T>>| b.as_ref().map_or(String::new(), |v| v[i].to_string());
            wtr.write_record([h.to_string(), self.k_hat[i].to_string(), (h + h).to_string(), band(&self.ci_lo), band(&self.ci_hi)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Integer grid `step, 2·step, .., ≤ h_max`.
pub fn h_grid<T: Real>(h_max: u64, step: u64) -> Vec<T> {
    (1..).map(|k| k * step.max(1)).take_while(|&h| h <= h_max).map(|h| T::lit(h as f64)).collect()
}

fn check_grid<T: Real>(grid: &[T]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|&h| !(h > T::zero())) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid_param("h grid must be positive and strictly increasing"));
    }
    Ok(())
}

/// Counts ordered pairs `i ≠ j` with `|t_i - t_j| ≤ h` for each `h` (sorted `t`).
fn pair_counts<T: Real>(t: &[u64], grid: &[T]) -> Vec<u64> {
    grid.iter()
        .map(|&h| {
            let h = h.as_f64().floor() as u64;
            let mut j = 0usize;
            let mut pairs = 0u64;
            for i in 0..t.len() {
                while t[i] - t[j] > h {
                    j += 1;
                }
                pairs += (i - j) as u64;
            }
            2 * pairs
        })
        .collect()
}

/// `K̂(h) = (1/(λ̂N)) Σ_i Σ_{j≠i} 1(|t_i - t_j| ≤ h)` with `λ̂ = N/𝒩`.
pub fn ripley_naive<T: Real>(ia: &InterArrivalSeries, span: u64, grid: &[T]) -> Result<RipleyCurve<T>> {
    check_grid(grid)?;
    let t = ia.t_list();
    if t.len() < 2 {
        return Err(Error::Degenerate("Ripley's K needs at least two activity days".into()));
    }
    let n = T::of_usize(t.len());
    let lambda = n / T::lit(span as f64);
    let k_hat = pair_counts(t, grid).into_iter().map(|c| T::lit(c as f64) / (lambda * n)).collect();
    Ok(RipleyCurve { h: grid.to_vec(), k_hat, ci_lo: None, ci_hi: None, corrected: false })
}

/// Ripley's edge weight for the pair at distance `r` around `t_i` on `[t_1, t_N]`.
pub fn edge_weight<T: Real>(t_i: u64, r: u64, t_first: u64, t_last: u64) -> T {
    let (ti, r2, t1, tn) = (t_i as i128, r as i128, t_first as i128, t_last as i128);
    let num = if t1 + r2 <= ti && ti <= tn - r2 {
        return T::one();
    } else if ti > (tn - r2).max(t1 + r2) {
        tn - ti + r2
    } else if ti < (tn - r2).min(t1 + r2) {
        r2 + ti - t1
    } else {
        tn - t1
    };
    T::lit(num as f64) / T::lit(2.0 * r as f64)
}

/// Per-day activity probabilities used to reweight Ripley's K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub enum PHat<T> {
    /// `N/𝒩` of the point set at hand.
    Homogeneous,
    Constant(T),
    /// Indexed by 1-based day `t` at position `t - 1`.
    PerDay(Vec<T>),
}

impl<T: Real> PHat<T> {
    fn values(&self, t: &[u64], span: u64) -> Result<Vec<T>> {
        let v: Vec<T> = match self {
            PHat::Homogeneous => vec![T::of_usize(t.len()) / T::lit(span as f64); t.len()],
            PHat::Constant(p) => vec![*p; t.len()],
            PHat::PerDay(days) => t
                .iter()
                .map(|&ti| days.get(ti as usize - 1).copied().ok_or_else(|| invalid_input(format!("no activity probability for day {ti}"))))
                .collect::<Result<_>>()?,
        };
        if v.iter().any(|&p| !(p > T::zero() && p <= T::one())) {
            return Err(invalid_param("activity probabilities must lie in (0, 1]"));
        }
        Ok(v)
    }
}

/// `K̂(h) = (1/𝒩) Σ_i Σ_{j≠i} 1(|t_i - t_j| ≤ h) / (p̂_i p̂_j w_ij)`.
pub fn ripley_corrected<T: Real>(ia: &InterArrivalSeries, span: u64, grid: &[T], p_hat: &PHat<T>) -> Result<RipleyCurve<T>> {
    check_grid(grid)?;
    let t = ia.t_list();
    if t.len() < 2 {
        return Err(Error::Degenerate("Ripley's K needs at least two activity days".into()));
    }
    let p = p_hat.values(t, span)?;
    let hs: Vec<u64> = grid.iter().map(|h| h.as_f64().floor() as u64).collect();
    let h_max = *hs.last().expect("non-empty grid");
    let (t1, tn) = (t[0], t[t.len() - 1]);
    // contribution of each pair lands in the first grid cell that covers its distance
    let mut cell = vec![T::zero(); grid.len()];
    for i in 0..t.len() {
        for j in 0..t.len() {
            if i == j {
                continue;
            }
            let r = t[i].abs_diff(t[j]);
            if r > h_max {
                continue;
            }
            let w: T = edge_weight(t[i], r, t1, tn);
            let idx = hs.partition_point(|&h| h < r);
            cell[idx] = cell[idx] + T::one() / (p[i] * p[j] * w);
        }
    }
    let norm = T::lit(span as f64);
    let mut acc = T::zero();
    let k_hat = cell
        .into_iter()
        .map(|c| {
            acc = acc + c;
            acc / norm
        })
        .collect();
    Ok(RipleyCurve { h: grid.to_vec(), k_hat, ci_lo: None, ci_hi: None, corrected: true })
}

/// Which estimator a bootstrap band is built around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub enum RipleyEstimator<T> {
    Naive,
    Corrected(PHat<T>),
}

pub fn ripley<T: Real>(est: &RipleyEstimator<T>, ia: &InterArrivalSeries, span: u64, grid: &[T]) -> Result<RipleyCurve<T>> {
    match est {
        RipleyEstimator::Naive => ripley_naive(ia, span, grid),
        RipleyEstimator::Corrected(p) => ripley_corrected(ia, span, grid, p),
    }
}

/// Random stream for the `index`-th unit of work under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Linear-interpolation quantile of sorted data.
fn quantile<T: Real>(sorted: &[T], q: T) -> T {
    let pos = q * T::of_usize(sorted.len() - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(sorted.len() - 1);
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - T::of_usize(lo);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Estimate on the data plus a percentile band from resampled inter-arrival gaps.
///
/// Each resample draws `N` gaps with replacement, rebuilds the activity days, and keeps the
/// original trailing gap after the last day.
pub fn bootstrap_band<T: Real>(
    est: &RipleyEstimator<T>,
    ia: &InterArrivalSeries,
    span: u64,
    grid: &[T],
    resamples: usize,
    level: T,
    seed: u64,
) -> Result<RipleyCurve<T>> {
    if !(level >= T::zero() && level < T::one()) {
        return Err(invalid_param("confidence level must lie in [0, 1)"));
    }
    let mut curve = ripley(est, ia, span, grid)?;
    if resamples == 0 {
        return Ok(curve);
    }
    let last = *ia.t_list().last().expect("non-empty");
    let trailing = span.saturating_sub(last);
    let gaps = ia.durations();
    // per-day probabilities travel with the point that closes each gap
    let point_p = match est {
        RipleyEstimator::Corrected(p @ PHat::PerDay(_)) => Some(p.values(ia.t_list(), span)?),
        _ => None,
    };
    let curves: Vec<Vec<T>> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let picks: Vec<usize> = (0..gaps.len()).map(|_| rng.random_range(0..gaps.len())).collect();
            let resampled: Vec<u64> = picks.iter().map(|&k| gaps[k]).collect();
            let total: u64 = resampled.iter().sum();
            let ia_r = InterArrivalSeries::from_durations(resampled)?;
            let est_r = match &point_p {
                Some(pp) => {
                    let mut days = vec![T::one(); total as usize];
                    for (&t, &k) in ia_r.t_list().iter().zip(&picks) {
                        days[t as usize - 1] = pp[k];
                    }
                    RipleyEstimator::Corrected(PHat::PerDay(days))
                }
                None => est.clone(),
            };
            Ok(ripley(&est_r, &ia_r, total + trailing, grid)?.k_hat)
        })
        .collect::<Result<_>>()?;
    let q_lo = (T::one() - level) / T::lit(2.0);
    let q_hi = (T::one() + level) / T::lit(2.0);
    let mut lo = Vec::with_capacity(grid.len());
    let mut hi = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let mut col: Vec<T> = curves.iter().map(|c| c[g]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite estimates"));
        lo.push(quantile(&col, q_lo));
        hi.push(quantile(&col, q_hi));
    }
    curve.ci_lo = Some(lo);
    curve.ci_hi = Some(hi);
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct KsResult<T> {
    pub n: usize,
    pub statistic: T,
    pub alpha: T,
    pub critical: T,
    pub p_value: T,
}

impl<T: Real> KsResult<T> {
    pub fn reject(&self) -> bool {
        self.statistic > self.critical
    }
}

/// `K_α = sqrt(-0.5·ln(α/2)/n)`.
pub fn ks_critical<T: Real>(n: usize, alpha: T) -> T {
    (-T::lit(0.5) * (alpha / T::lit(2.0)).ln() / T::of_usize(n)).sqrt()
}

/// `p = 2·exp(-2·n·D²)`, clipped to `[0, 1]`.
pub fn ks_p_value<T: Real>(n: usize, statistic: T) -> T {
    (T::lit(2.0) * (-T::lit(2.0) * T::of_usize(n) * statistic * statistic).exp()).min(T::one())
}

/// Normalized partial sums `z_j = Σ_{i≤j} y_i / Σ_{i≤m} y_i` for `j < m`.
pub fn spacings_transform<T: Real>(durations: &[T]) -> Result<Vec<T>> {
    if durations.iter().any(|&d| !(d > T::zero()) || !d.is_finite()) {
        return Err(invalid_input("durations must be positive and finite"));
    }
    let total: T = durations.iter().copied().sum();
    let mut acc = T::zero();
    Ok(durations[..durations.len().saturating_sub(1)]
        .iter()
        .map(|&d| {
            acc = acc + d;
            acc / total
        })
        .collect())
}

/// KS test that the durations are i.i.d. exponential, via the uniform spacings transform.
/// `cap` keeps only durations `≤ cap`.
pub fn ks_exponential<T: Real>(durations: &[T], alpha: T, cap: Option<T>) -> Result<KsResult<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(invalid_param("alpha must lie in (0, 1)"));
    }
    let kept: Vec<T> = match cap {
        Some(c) => durations.iter().copied().filter(|&d| d <= c).collect(),
        None => durations.to_vec(),
    };
    if kept.len() < 2 {
        return Err(Error::Degenerate("KS test needs at least two durations".into()));
    }
    let mut z = spacings_transform(&kept)?;
    // already non-decreasing; sort guards against ties from rounding
    z.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = z.len();
    let nf = T::of_usize(n);
    let mut d = T::zero();
    for (i, &zi) in z.iter().enumerate() {
        let upper = T::of_usize(i + 1) / nf - zi;
        let lower = zi - T::of_usize(i) / nf;
        d = d.max(upper).max(lower);
    }
    Ok(KsResult { n, statistic: d, alpha, critical: ks_critical(n, alpha), p_value: ks_p_value(n, d) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub enum Theoretical<T> {
    Exponential { rate: T },
    Poisson { mean: T },
}

impl<T: Real> Theoretical<T> {
    pub fn quantile(&self, p: T) -> T {
        match *self {
            Theoretical::Exponential { rate } => -(-p).ln_1p() / rate,
            Theoretical::Poisson { mean } => {
                let mut k = 0u64;
                let mut pmf = (-mean).exp();
                let mut cdf = pmf;
                while cdf < p {
                    k += 1;
                    pmf = pmf * mean / T::lit(k as f64);
                    cdf = cdf + pmf;
                    if pmf == T::zero() && T::lit(k as f64) > mean {
                        break;
                    }
                }
                T::lit(k as f64)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct QqPoint<T> {
    pub prob: T,
    pub sample: T,
    pub theoretical: T,
}

/// Sorted sample against theoretical quantiles at plotting positions `(i - 0.5)/n`.
pub fn qq_data<T: Real>(sample: &[T], theoretical: &Theoretical<T>) -> Result<Vec<QqPoint<T>>> {
    if sample.is_empty() {
        return Err(invalid_input("empty sample"));
    }
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).ok_or(()).expect("sample must not contain NaN"));
    let n = T::of_usize(s.len());
    Ok(s.into_iter()
        .enumerate()
        .map(|(i, v)| {
            let prob = (T::of_usize(i) + T::lit(0.5)) / n;
            QqPoint { prob, sample: v, theoretical: theoretical.quantile(prob) }
        })
        .collect())
}

pub fn write_qq_csv<T: Real, W: std::io::Write>(points: &[QqPoint<T>], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["prob", "sample", "theoretical"])?;
    for p in points {
        wtr.write_record([p.prob.to_string(), p.sample.to_string(), p.theoretical.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSeries {
    pub series: EventSeries,
    /// `min(days in state, sub-series length)`.
    pub n_act: usize,
    /// Zero-day gaps inserted between consecutive segments.
    pub gaps: Vec<u64>,
}

/// Concatenates the runs of days labeled `state`, inserting Poisson(`N/𝒩`) zero-day gaps
/// between disjoint runs.
pub fn subseries(series: &EventSeries, daily_states: &[usize], state: usize, seed: u64) -> Result<SubSeries> {
    if daily_states.len() != series.len() {
        return Err(invalid_input(format!("{} state labels for {} days", daily_states.len(), series.len())));
    }
    let counts = series.counts();
    let mut segments: Vec<&[u64]> = Vec::new();
    let mut i = 0;
    while i < counts.len() {
        if daily_states[i] != state {
            i += 1;
            continue;
        }
        let start = i;
        while i < counts.len() && daily_states[i] == state {
            i += 1;
        }
        segments.push(&counts[start..i]);
    }
    if segments.is_empty() {
        return Err(Error::Degenerate(format!("state {state} is never visited")));
    }
    let lambda = series.active_days() as f64 / series.len() as f64;
    let poisson = (lambda > 0.0).then(|| Poisson::new(lambda).expect("positive rate"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut gaps = Vec::new();
    let in_state: usize = segments.iter().map(|s| s.len()).sum();
    for (k, seg) in segments.iter().enumerate() {
        if k > 0 {
            let g = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as u64);
            gaps.push(g);
            out.extend(std::iter::repeat_n(0u64, g as usize));
        }
        out.extend_from_slice(seg);
    }
    let n_act = in_state.min(out.len());
    Ok(SubSeries { series: EventSeries::new(series.start(), out)?, n_act, gaps })
}
