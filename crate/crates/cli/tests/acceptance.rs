//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so the report is always printed.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use activity_hmm::emissions::{poisson_bound, window_pmf_joint, window_pmf_x, window_pmf_y_geometric};
use activity_hmm::hmm::{
    baum_welch, classify, emission_with_activity, forward_backward, fractional_activity, log_emission_matrix, viterbi,
    BaumWelchOptions, ClassifyOptions, Observations, TransitionMatrix, WindowObs,
};
use activity_hmm::ppstats::{bootstrap_band, h_grid, ks_exponential, ks_p_value, PHat, RipleyEstimator};
use activity_hmm::predict::{compare_models, rolling_eval, CompareOptions, Estimator, RollingOptions};
use activity_hmm::robustness::{robustness_sweep, SweepConfig};
use activity_hmm::sehm::{SehmFitOptions, SehmModel};
use activity_hmm::simulate::{simulate_durations, simulate_windows, uniform_days};
use activity_hmm::scalar::log_sum_exp;
use activity_hmm::{EmissionModel, EventRecord, EventSeries, Family, HmmModel, InterArrivalSeries, ObsKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn criterion_1() -> Outcome {
    let p1: f64 = ks_p_value(234, 0.0597);
    let p2: f64 = ks_p_value(192, 0.0492);
    let pass = (0.372..=0.382).contains(&p1) && (0.784..=0.794).contains(&p2);
    outcome(pass, format!("p(234, 0.0597) = {p1:.4}, p(192, 0.0492) = {p2:.4}"))
}

fn criterion_2() -> Outcome {
    let f1: f64 = fractional_activity(46, 15, 3286);
    let f2: f64 = fractional_activity(20, 30, 3286);
    let pass = (f1 - 0.2099).abs() <= 1e-4 && (f2 - 0.1825).abs() <= 1e-4;
    outcome(pass, format!("f = {f1:.5} and {f2:.5}"))
}

fn criterion_3() -> Outcome {
    let mut checked = 0;
    let mut worst = f64::NEG_INFINITY;
    for &g in &[0.01, 0.05, 0.0924, 0.2, 0.4] {
        for &d in &[5u64, 15, 30, 60] {
            let lam = g * d as f64;
            for k in 0..=d {
                let bin: f64 = window_pmf_x(g, d, k);
                let poi = (-lam + k as f64 * lam.ln() - activity_hmm::special::ln_factorial::<f64>(k)).exp();
                let gap = (bin - poi).abs() - poisson_bound::<f64>(g, d, k);
                worst = worst.max(gap);
                checked += 1;
            }
        }
    }
    outcome(worst <= 0.0, format!("{checked} cases, max(|diff| - bound) = {worst:.3e}"))
}

/// Joint (active days, total) law of `delta` i.i.d. days by direct convolution.
fn brute_joint(e: &EmissionModel, delta: usize, r_max: usize) -> Vec<Vec<f64>> {
    let pmf: Vec<f64> = (0..=r_max as u64).map(|c| e.pmf(c)).collect();
    let mut dp = vec![vec![0.0; r_max + 1]; delta + 1];
    dp[0][0] = 1.0;
    for _ in 0..delta {
        let mut next = vec![vec![0.0; r_max + 1]; delta + 1];
        for k in 0..=delta {
            for r in 0..=r_max {
                let v = dp[k][r];
                if v == 0.0 {
                    continue;
                }
                for c in 0..=(r_max - r) {
                    let kk = if c > 0 { k + 1 } else { k };
                    if kk <= delta {
                        next[kk][r + c] += v * pmf[c];
                    }
                }
            }
        }
        dp = next;
    }
    dp
}

fn criterion_4() -> Outcome {
    const R: usize = 40;
    const R_TAIL: usize = 600;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &g in &[0.05, 0.0924, 0.2, 0.36, 0.5] {
        for delta in 1..=5usize {
            let geo = EmissionModel::Geometric { gamma: g };
            let brute = brute_joint(&geo, delta, R);
            for r in 0..=R {
                let y: f64 = window_pmf_y_geometric(g, delta as u64, r as u64);
                let b: f64 = (0..=delta).map(|k| brute[k][r]).sum();
                worst = worst.max((y - b).abs());
                cases += 1;
            }
            for model in [geo, EmissionModel::HurdleGeometric { gamma: g, mu: 0.4 }] {
                let brute = brute_joint(&model, delta, R);
                for k in 0..=delta {
                    for r in 0..=R {
                        let j = window_pmf_joint(&model, delta as u64, k as u64, r as u64).unwrap();
                        worst = worst.max((j - brute[k][r]).abs());
                        cases += 1;
                    }
                    let marginal: f64 =
                        (0..=R_TAIL).map(|r| window_pmf_joint(&model, delta as u64, k as u64, r as u64).unwrap()).sum();
                    worst = worst.max((marginal - window_pmf_x(g, delta as u64, k as u64)).abs());
                    cases += 1;
                }
            }
        }
    }
    outcome(worst <= 1e-10, format!("{cases} comparisons, max abs error {worst:.2e}"))
}

fn random_instance(rng: &mut ChaCha8Rng, k: usize) -> (HmmModel, Observations) {
    let p0 = rng.random_range(0.01..0.99);
    let q0 = rng.random_range(0.01..0.99);
    let transition = TransitionMatrix::two_state(p0, q0).unwrap();
    let pi0: f64 = rng.random_range(0.01..0.99);
    let initial = vec![pi0, 1.0 - pi0];
    let (kind, emissions) = match rng.random_range(0..3) {
        0 => (ObsKind::X, vec![Family::Geometric, Family::Geometric]),
        1 => (ObsKind::Xy, vec![Family::HurdleGeometric, Family::HurdleGeometric]),
        _ => (ObsKind::Dt, vec![Family::Geometric, Family::Geometric]),
    };
    let emissions: Vec<EmissionModel> = emissions
        .into_iter()
        .map(|f| match f {
            Family::HurdleGeometric => {
                EmissionModel::HurdleGeometric { gamma: rng.random_range(0.02..0.9), mu: rng.random_range(0.02..0.9) }
            }
            _ => EmissionModel::Geometric { gamma: rng.random_range(0.02..0.9) },
        })
        .collect();
    let delta = rng.random_range(1..=10usize);
    let obs = match kind {
        ObsKind::Dt => Observations::Durations((0..k).map(|_| rng.random_range(1..=30u64)).collect()),
        _ => Observations::Windows(
            (0..k)
                .map(|_| {
                    let x = rng.random_range(0..=delta as u64);
                    let y = if x == 0 { 0 } else { x + rng.random_range(0..=3 * x) };
                    WindowObs { x, y, len: delta, counts: Vec::new() }
                })
                .collect(),
        ),
    };
    let model = HmmModel::new(transition, emissions, initial, kind, delta).unwrap();
    (model, obs)
}

fn criterion_5() -> Outcome {
    let results: Vec<(Option<String>, bool)> = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(5_000 + i);
            let k = r.random_range(1..=12usize);
            let (model, obs) = random_instance(&mut r, k);
            let emit = log_emission_matrix(&model, &obs).unwrap();
            let li = model.log_initial();
            let lt = model.transition.log_probs();
            let mut scores = Vec::with_capacity(1 << k);
            let mut best = (f64::NEG_INFINITY, 0usize);
            for code in 0..(1usize << k) {
                let s = |n: usize| (code >> n) & 1;
                let mut lp = li[s(0)] + emit[0][s(0)];
                for n in 1..k {
                    lp += lt[s(n - 1)][s(n)] + emit[n][s(n)];
                }
                if lp > best.0 {
                    best = (lp, code);
                }
                scores.push(lp);
            }
            let ll = log_sum_exp(&scores);
            let fb = forward_backward(&model, &obs).unwrap();
            let vp = viterbi(&model, &obs).unwrap();
            let mut bad = Vec::new();
            if (fb.log_likelihood - ll).abs() > 1e-12 * ll.abs().max(1.0) {
                bad.push(format!("likelihood {} vs {}", fb.log_likelihood, ll));
            }
            for n in 0..k {
                let post1: f64 = scores
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| (c >> n) & 1 == 1)
                    .map(|(_, &lp)| (lp - ll).exp())
                    .sum();
                if (fb.posteriors[n][1] - post1).abs() > 1e-12 {
                    bad.push(format!("posterior at {n}"));
                }
            }
            let path: Vec<usize> = (0..k).map(|n| (best.1 >> n) & 1).collect();
            let code: usize = vp.states.iter().enumerate().map(|(n, &s)| s << n).sum();
            let tol = 1e-12 * best.0.abs().max(1.0);
            // paths that reorder the same transitions tie up to rounding; the argmax is then not unique
            let runner_up = scores.iter().enumerate().filter(|&(c, _)| c != best.1).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
            let unique = best.0 - runner_up > 1e-9;
            let path_ok = if unique { vp.states == path } else { (scores[code] - best.0).abs() <= tol };
            if !path_ok || (vp.log_likelihood - best.0).abs() > tol {
                bad.push(format!("viterbi path {:?} ({}) vs {:?} ({})", vp.states, vp.log_likelihood, path, best.0));
            }
            ((!bad.is_empty()).then(|| format!("instance {i}: {}", bad.join(", "))), !unique)
        })
        .collect();
    let ties = results.iter().filter(|r| r.1).count();
    let failures: Vec<String> = results.into_iter().filter_map(|r| r.0).collect();
    let detail = match failures.first() {
        None => format!("200/200 instances match enumeration ({ties} with tied optimal paths)"),
        Some(_) => format!("{} mismatches: {}", failures.len(), failures.join(" | ")),
    };
    outcome(failures.is_empty(), detail)
}

const MONOTONE_FAMILIES: [(Family, ObsKind); 8] = [
    (Family::Geometric, ObsKind::X),
    (Family::Poisson, ObsKind::X),
    (Family::HurdleZeta, ObsKind::X),
    (Family::Geometric, ObsKind::Xy),
    (Family::HurdleGeometric, ObsKind::Xy),
    (Family::Polya, ObsKind::Daily),
    (Family::ShiftedZeta, ObsKind::Daily),
    (Family::Geometric, ObsKind::Dt),
];

fn monotone_instance(i: u64) -> Result<f64, String> {
    let mut r = rng(6_000 + i);
    let delta = r.random_range(3..=20usize);
    let truth = HmmModel::two_state(
        r.random_range(0.02..0.3),
        r.random_range(0.02..0.3),
        EmissionModel::Geometric { gamma: r.random_range(0.02..0.2) },
        EmissionModel::Geometric { gamma: r.random_range(0.25..0.7) },
        ObsKind::X,
        delta,
    )
    .unwrap();
    let sim = simulate_windows(&truth, r.random_range(30..=150), &mut r).unwrap();
    let (family, kind) = MONOTONE_FAMILIES[(i as usize) % MONOTONE_FAMILIES.len()];
    let obs = activity_hmm::hmm::observations_for(&sim.series, delta, kind, false).map_err(|e| e.to_string())?;
    let reference = match family {
        Family::Polya => Some(EmissionModel::Polya { r: 1.5, y: 0.5 }),
        _ => None,
    };
    let emissions = vec![
        emission_with_activity(family, r.random_range(0.02..0.3), reference.as_ref()),
        emission_with_activity(family, r.random_range(0.3..0.8), reference.as_ref()),
    ];
    let init = HmmModel::two_state(r.random_range(0.02..0.5), r.random_range(0.02..0.5), emissions[0], emissions[1], kind, delta)
        .map_err(|e| e.to_string())?;
    let opts = BaumWelchOptions { tol: 1e-12, max_iter: 60, estimate_initial: false };
    let fit = baum_welch(&init, &obs, &opts).map_err(|e| format!("{family:?}/{kind:?}: {e}"))?;
    Ok(fit.trace.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
}

fn recovery_seed(seed: u64) -> (bool, [f64; 4]) {
    let truth = HmmModel::two_state(
        0.1,
        0.1,
        EmissionModel::Geometric { gamma: 0.09 },
        EmissionModel::Geometric { gamma: 0.36 },
        ObsKind::X,
        15,
    )
    .unwrap();
    let sim = simulate_windows(&truth, 2000, &mut rng(60_000 + seed)).unwrap();
    let c = classify::<f64>(&sim.series, 15, Family::Geometric, ObsKind::X, &ClassifyOptions::default()).unwrap();
    let g = c.model.activity_probs();
    let p = c.model.transition.get(0, 1);
    let q = c.model.transition.get(1, 0);
    let ok = (g[0] - 0.09).abs() <= 0.02 && (g[1] - 0.36).abs() <= 0.02 && (p - 0.1).abs() <= 0.05 && (q - 0.1).abs() <= 0.05;
    (ok, [g[0], g[1], p, q])
}

fn criterion_6() -> Outcome {
    let mono: Vec<Result<f64, String>> = (0..100u64).into_par_iter().map(monotone_instance).collect();
    let errors: Vec<&String> = mono.iter().filter_map(|m| m.as_ref().err()).collect();
    let min_step = mono.iter().filter_map(|m| m.as_ref().ok()).copied().fold(f64::INFINITY, f64::min);
    let monotone = errors.is_empty() && min_step >= -1e-8;
    let rec: Vec<(bool, [f64; 4])> = (0..20u64).into_par_iter().map(recovery_seed).collect();
    let hits = rec.iter().filter(|r| r.0).count();
    let worst = rec.iter().find(|r| !r.0).map(|r| format!(", a miss: {:.3?}", r.1)).unwrap_or_default();
    let mut detail = format!("min LL step {min_step:.2e} over 100 fits; recovery {hits}/20{worst}");
    if let Some(e) = errors.first() {
        detail.push_str(&format!("; {} fit errors, first: {e}", errors.len()));
    }
    outcome(monotone && hits >= 18, detail)
}

/// Fraction of `h ∈ [5, 50]` where one CSR realization has `2h` inside its bootstrap band.
fn csr_coverage(seed: u64) -> f64 {
    let days = uniform_days(500, 5000, &mut rng(seed)).unwrap();
    let ia = InterArrivalSeries::from_days(days).unwrap();
    let grid: Vec<f64> = h_grid(50, 1);
    let est = RipleyEstimator::Corrected(PHat::Homogeneous);
    let curve = bootstrap_band(&est, &ia, 5000, &grid, 1000, 0.95, seed).unwrap();
    let (lo, hi) = (curve.ci_lo.as_ref().unwrap(), curve.ci_hi.as_ref().unwrap());
    let idx: Vec<usize> = (0..grid.len()).filter(|&i| grid[i] >= 5.0).collect();
    let inside = idx.iter().filter(|&&i| lo[i] <= 2.0 * grid[i] && 2.0 * grid[i] <= hi[i]).count();
    inside as f64 / idx.len() as f64
}

// A single realization misses with a few percent probability (the band is pointwise and the
// curve is strongly correlated across h), so the property is checked over 20 realizations.
fn criterion_7() -> Outcome {
    let cov: Vec<f64> = (0..20u64).map(|s| csr_coverage(7 + s)).collect();
    let ok = cov.iter().filter(|&&c| c >= 0.9).count();
    let worst = cov.iter().copied().fold(1.0, f64::min);
    outcome(ok >= 18, format!("coverage >= 90% in {ok}/20 realizations (lowest {:.0}%)", 100.0 * worst))
}

fn criterion_8() -> Outcome {
    let rejections = (0..2000u64)
        .into_par_iter()
        .filter(|&t| {
            let mut r = rng(8_000_000 + t);
            let d: Vec<f64> = (0..500).map(|_| -(1.0 - r.random::<f64>()).ln() / 0.2).collect();
            ks_exponential(&d, 0.05, None).unwrap().reject()
        })
        .count();
    let rate = rejections as f64 / 2000.0;
    outcome((0.03..=0.07).contains(&rate), format!("rejection rate {rate:.4}"))
}

fn sehm_truth() -> SehmModel<f64> {
    SehmModel::new(0.05, 0.3, 0.5, 2.5).unwrap()
}

fn duration_truth() -> HmmModel {
    HmmModel::two_state(
        0.05,
        0.05,
        EmissionModel::Geometric { gamma: 0.05 },
        EmissionModel::Geometric { gamma: 0.5 },
        ObsKind::Dt,
        1,
    )
    .unwrap()
}

/// Duration-HMM stream cut to `days` days.
fn hmm_stream(seed: u64, days: usize) -> EventSeries {
    let marks = EmissionModel::ShiftedZeta { s: 2.5 };
    let mut r = rng(seed);
    // mean gap is 11 days, so this overshoots comfortably
    let sim = simulate_durations(&duration_truth(), &marks, days / 4, &mut r).unwrap();
    sim.series.slice(0..days.min(sim.series.len())).unwrap()
}

fn criterion_9() -> Outcome {
    let opts: CompareOptions<f64> = CompareOptions { sehm: SehmFitOptions { starts: 4, ..Default::default() }, ..Default::default() };
    let runs: Vec<(bool, bool)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let counts = sehm_truth().simulate(20_000, &mut rng(90_000 + seed)).unwrap();
            let s = EventSeries::from_counts(counts).unwrap();
            let a = compare_models(&s, &opts).unwrap();
            let h = hmm_stream(91_000 + seed, 20_000);
            let b = compare_models(&h, &opts).unwrap();
            (a.sehm_aic < a.hmm_aic, b.hmm_aic < b.sehm_aic)
        })
        .collect();
    let sehm_wins = runs.iter().filter(|r| r.0).count();
    let hmm_wins = runs.iter().filter(|r| r.1).count();
    outcome(
        sehm_wins >= 15 && hmm_wins >= 15,
        format!("SEHM data: SEHM preferred {sehm_wins}/20; HMM data: HMM preferred {hmm_wins}/20"),
    )
}

fn criterion_10() -> Outcome {
    let opts = RollingOptions { estimators: vec![Estimator::Hmm, Estimator::Baseline], ..Default::default() };
    let horizons = [250, 500, 750];
    let runs: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let marks = EmissionModel::ShiftedZeta { s: 2.5 };
            let sim = simulate_durations(&duration_truth(), &marks, 1001, &mut rng(100_000 + seed)).unwrap();
            let res = rolling_eval(&sim.series, &horizons, &opts).unwrap();
            let last = res.iter().max_by_key(|r| r.horizon).unwrap();
            (last.run(Estimator::Hmm).unwrap().smape, last.run(Estimator::Baseline).unwrap().smape)
        })
        .collect();
    let wins = runs.iter().filter(|(h, b)| h <= b).count();
    let mean = |f: fn(&(f64, f64)) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    outcome(
        wins >= 15,
        format!("HMM <= baseline in {wins}/20 (mean SMAPE {:.1} vs {:.1})", mean(|r| r.0), mean(|r| r.1)),
    )
}

/// Splits a simulated series into a base and withheld records so that the withheld events are
/// `frac` of the base total; with `uniform` the extra events land on uniformly random days instead.
fn augmentation(seed: u64, frac: f64, uniform: bool) -> (EventSeries, Vec<EventRecord>) {
    let truth = HmmModel::two_state(
        0.1,
        0.1,
        EmissionModel::Geometric { gamma: 0.09 },
        EmissionModel::Geometric { gamma: 0.36 },
        ObsKind::X,
        15,
    )
    .unwrap();
    let mut r = rng(110_000 + seed);
    let full = simulate_windows(&truth, 219, &mut r).unwrap().series;
    let total = full.total() as usize;
    let n_extra = (total as f64 * frac / (1.0 + frac)).round() as usize;
    if uniform {
        let days = uniform_days(n_extra, full.len() as u64, &mut r).unwrap();
        let extra = days.iter().map(|&d| EventRecord::new(full.date_of(d as usize - 1), 1)).collect();
        return (full, extra);
    }
    let events: Vec<usize> = full.counts().iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize)).collect();
    let mut counts = full.counts().to_vec();
    let mut withheld = vec![0u64; counts.len()];
    for k in rand::seq::index::sample(&mut r, total, n_extra) {
        counts[events[k]] -= 1;
        withheld[events[k]] += 1;
    }
    let base = EventSeries::new(full.start(), counts).unwrap();
    let extra = withheld.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| EventRecord::new(full.date_of(i), c)).collect();
    (base, extra)
}

fn sweep_final(seed: u64, uniform: bool) -> (f64, f64) {
    let cfg = SweepConfig { delta: 15, family: Family::Geometric, obs_kind: ObsKind::X, classify: ClassifyOptions::default() };
    let (base, extra) = augmentation(seed, 0.05, uniform);
    let curve = robustness_sweep(&base, &extra, 1000, &cfg).unwrap();
    let last = curve.steps.last().unwrap();
    (last.frac_missing, last.frac_changes)
}

// The augmentation is withheld activity of the same process, as with records missing from one
// database and recovered from another.
fn criterion_11() -> Outcome {
    let runs: Vec<(f64, f64)> = (0..20u64).into_par_iter().map(|s| sweep_final(s, false)).collect();
    let ok = runs.iter().filter(|r| r.1 <= 0.02).count();
    let worst = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    let missing = runs.iter().map(|r| r.0).sum::<f64>() / 20.0;
    let uniform_ok = (0..20u64).into_par_iter().filter(|&s| sweep_final(s, true).1 <= 0.02).count();
    outcome(
        ok >= 15,
        format!(
            "changes <= 0.02 in {ok}/20 (mean missing {missing:.3}, worst changes {worst:.4}); \
             uniformly placed extra events: {uniform_ok}/20"
        ),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_activity-hmm")
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).args(args).env("ACTIVITY_HMM_THREADS", "4").output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_12() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |s: &str| -> PathBuf { root.join(s) };
    let setup = || -> Result<(), String> {
        run_cli(&["simulate", "--model", "hmm", "--seed", "3", "--out", p("sim_hmm").to_str().unwrap()])?;
        run_cli(&["simulate", "--model", "dt-hmm", "--seed", "3", "--length", "400", "--out", p("sim_dt").to_str().unwrap()])?;
        let extra = "date,count\n2001-03-04,1\n2002-07-19,2\n2003-11-30,1\n2005-01-02,1\n";
        std::fs::write(p("extra.csv"), extra).map_err(|e| e.to_string())
    };
    if let Err(e) = setup() {
        return outcome(false, format!("setup failed: {e}"));
    }
    let hmm_in = p("sim_hmm").join("series.csv");
    let dt_in = p("sim_dt").join("series.csv");
    let extra = p("extra.csv");
    let (hmm_in, dt_in, extra) = (hmm_in.to_str().unwrap(), dt_in.to_str().unwrap(), extra.to_str().unwrap());
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--model", "sehm", "--days", "2000", "--seed", "9"]),
        ("classify", vec!["classify", "--input", hmm_in, "--delta", "10,15", "--restarts", "2", "--seed", "4"]),
        ("diagnose", vec!["diagnose", "--input", hmm_in, "--resamples", "50", "--seed", "4"]),
        ("compare", vec!["compare", "--input", dt_in, "--horizons", "100,250", "--sehm-starts", "2"]),
        ("robustness", vec!["robustness", "--input", hmm_in, "--extra", extra]),
        ("merge", vec!["merge", "--input", hmm_in, "--extra", extra]),
    ];
    let mut problems = Vec::new();
    for (name, args) in &commands {
        let mut bundles = Vec::new();
        for rep in 0..2 {
            let out = p(&format!("{name}_{rep}"));
            let mut a = args.clone();
            let o = out.to_str().unwrap().to_string();
            a.extend(["--out", o.as_str()]);
            if let Err(e) = run_cli(&a) {
                problems.push(e);
                break;
            }
            bundles.push(dir_bytes(&out));
        }
        if bundles.len() == 2 && bundles[0] != bundles[1] {
            problems.push(format!("{name}: bundles differ"));
        }
    }
    let detail = if problems.is_empty() {
        format!("{} commands rerun byte-identically", commands.len())
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("KS p-value inversion", criterion_1),
        ("fractional-activity arithmetic", criterion_2),
        ("Poisson approximation bound", criterion_3),
        ("window-density oracles", criterion_4),
        ("forward-backward/Viterbi exactness", criterion_5),
        ("Baum-Welch monotonicity and recovery", criterion_6),
        ("Ripley CSR calibration", criterion_7),
        ("KS size calibration", criterion_8),
        ("cross-model identification", criterion_9),
        ("prediction ordering", criterion_10),
        ("robustness to 5% augmentation", criterion_11),
        ("CLI determinism", criterion_12),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let t0 = Instant::now();
        let o = f();
        let el = t0.elapsed();
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {} [{}]", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail, fmt_elapsed(el));
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn fmt_elapsed(d: Duration) -> String {
    if d.as_secs_f64() < 1.0 {
        format!("{:.2} ms", d.as_secs_f64() * 1e3)
    } else {
        format!("{:.1} s", d.as_secs_f64())
    }
}
