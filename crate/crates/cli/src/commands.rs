use std::collections::BTreeMap;

use activity_hmm::emissions::{aic_table, EmissionModel, Family};
use activity_hmm::hmm::{self, daily_states, observations_for, BaumWelchOptions, ClassifyOptions, HmmModel, ObsKind};
use activity_hmm::io;
use activity_hmm::ppstats::{self, bootstrap_band, h_grid, ks_exponential, qq_data, subseries, PHat, RipleyEstimator, Theoretical};
use activity_hmm::predict::{rolling_eval, CompareOptions, Estimator, RollingOptions};
use activity_hmm::robustness::{robustness_sweep, SweepConfig};
use activity_hmm::sehm::{SehmFitOptions, SehmModel};
use activity_hmm::series::{interarrivals, merge_missing, EventSeries};
use activity_hmm::simulate::{simulate_durations, simulate_windows};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bundle::Bundle;
use crate::error::CliError;
use crate::{ClassifyArgs, CompareArgs, DiagnoseArgs, FitArgs, Format, InputArgs, MergeArgs, RobustnessArgs, SimKind, SimulateArgs};

fn load_series(bundle: &mut Bundle, input: &InputArgs) -> Result<EventSeries, CliError> {
    let bytes = bundle.read_input(&input.input)?;
    let span = match (input.start, input.end) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => {
            let records = io::read_records(bytes.as_slice())?;
            let first = records.iter().map(|r| r.date).min();
            let last = records.iter().map(|r| r.date).max();
            match (input.start.or(first), input.end.or(last)) {
                (Some(a), Some(b)) => Some((a, b)),
                _ => return Err(CliError::Data("input has no records".into())),
            }
        }
    };
    Ok(io::read_series(bytes.as_slice(), span)?)
}

fn check_fit(fit: &FitArgs) -> Result<(), CliError> {
    if fit.delta.is_empty() || fit.delta.contains(&0) {
        return Err(CliError::Config("--delta needs positive window lengths".into()));
    }
    if fit.states == 0 {
        return Err(CliError::Config("--states must be at least 1".into()));
    }
    if !(fit.tol > 0.0) {
        return Err(CliError::Config("--tol must be positive".into()));
    }
    Ok(())
}

fn classify_options(fit: &FitArgs) -> ClassifyOptions<f64> {
    ClassifyOptions {
        n_states: fit.states,
        baum_welch: BaumWelchOptions { tol: fit.tol, max_iter: fit.max_iter, estimate_initial: false },
        include_partial: fit.include_partial,
        restarts: fit.restarts,
        seed: fit.seed,
        init: None,
    }
}

fn join<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

#[derive(Serialize)]
struct SummaryRow {
    delta: usize,
    family: Family,
    obs: ObsKind,
    /// Per-state emission parameters.
    params: Vec<Vec<f64>>,
    activity: Vec<f64>,
    transition: Vec<Vec<f64>>,
    n_windows: usize,
    n_spurt: usize,
    frac_activity: Option<f64>,
    log_likelihood: f64,
    aic: f64,
    iterations: usize,
    converged: bool,
    warnings: Vec<String>,
}

fn write_summary(bundle: &mut Bundle, rows: &[SummaryRow], format: Format) -> Result<(), CliError> {
    match format {
        Format::Json => bundle.write_json("summary.json", &rows),
        Format::Csv => bundle.write_with("summary.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record([
                "delta", "family", "obs", "params", "activity", "transition", "n_windows", "n_spurt", "f", "log_likelihood", "aic",
                "iterations", "converged", "warnings",
            ])?;
            for r in rows {
                let params: Vec<String> = r.params.iter().map(|p| join(p, ";")).collect();
                let trans: Vec<String> = r.transition.iter().map(|p| join(p, ";")).collect();
                w.write_record([
                    r.delta.to_string(),
                    r.family.short_name().to_string(),
                    r.obs.short_name().to_string(),
                    params.join("|"),
                    join(&r.activity, "|"),
                    trans.join("|"),
                    r.n_windows.to_string(),
                    r.n_spurt.to_string(),
                    r.frac_activity.map_or(String::new(), |f| f.to_string()),
                    r.log_likelihood.to_string(),
                    r.aic.to_string(),
                    r.iterations.to_string(),
                    r.converged.to_string(),
                    r.warnings.join("; "),
                ])?;
            }
            w.flush()?;
            Ok(())
        }),
    }
}

pub fn classify(a: &ClassifyArgs) -> Result<(), CliError> {
    check_fit(&a.fit)?;
    let mut bundle = Bundle::create(&a.out.out)?;
    let series = load_series(&mut bundle, &a.input)?;
    let opts = classify_options(&a.fit);
    let mut rows = Vec::new();
    let mut unconverged = Vec::new();
    for &delta in &a.fit.delta {
        let c = hmm::classify(&series, delta, a.fit.family, a.fit.obs, &opts)?;
        let obs = observations_for(&series, delta, a.fit.obs, a.fit.include_partial)?;
        bundle.write_json(&format!("model_d{delta}.json"), &c.model)?;
        bundle.write_with(&format!("states_d{delta}.csv"), |buf| io::write_state_path(&series, &obs, delta, &c.path, buf))?;
        if !c.summary.converged {
            unconverged.push(delta);
        }
        for w in &c.summary.warnings {
            eprintln!("activity-hmm: delta {delta}: {w}");
        }
        rows.push(SummaryRow {
            delta,
            family: a.fit.family,
            obs: a.fit.obs,
            params: c.model.emissions.iter().map(|e| e.params()).collect(),
            activity: c.summary.activity_probs.clone(),
            transition: c.model.transition.rows().to_vec(),
            n_windows: c.summary.n_windows,
            n_spurt: c.summary.n_spurt,
            frac_activity: c.summary.frac_activity,
            log_likelihood: c.summary.log_likelihood,
            aic: c.summary.aic,
            iterations: c.summary.iterations,
            converged: c.summary.converged,
            warnings: c.summary.warnings.clone(),
        });
    }
    write_summary(&mut bundle, &rows, a.out.format)?;
    bundle.finish("classify", Some(a.fit.seed), a)?;
    if unconverged.is_empty() {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!("Baum-Welch hit --max-iter for delta {}", join(&unconverged, ","))))
    }
}

#[derive(Serialize)]
struct KsRow {
    subset: String,
    cap: Option<f64>,
    #[serde(flatten)]
    result: ppstats::KsResult<f64>,
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<(), CliError> {
    check_fit(&a.fit)?;
    if a.fit.obs == ObsKind::Dt {
        return Err(CliError::Config("diagnose needs a windowed --obs".into()));
    }
    if !(a.alpha > 0.0 && a.alpha < 1.0) || !(0.0..1.0).contains(&a.level) || a.h_max == 0 {
        return Err(CliError::Config("need 0 < alpha < 1, 0 <= level < 1 and h-max >= 1".into()));
    }
    let mut bundle = Bundle::create(&a.out.out)?;
    let series = load_series(&mut bundle, &a.input)?;
    let delta = a.fit.delta[0];
    let c = hmm::classify(&series, delta, a.fit.family, a.fit.obs, &classify_options(&a.fit))?;
    let days = daily_states(&c.path.states, delta, series.len());
    let activity = c.model.activity_probs();
    let grid = h_grid::<f64>(a.h_max, 1);
    let span = series.len() as u64;

    let ia = interarrivals(&series)?;
    let p_day: Vec<f64> = days.iter().map(|&s| activity[s].max(f64::MIN_POSITIVE)).collect();
    let full = bootstrap_band(&RipleyEstimator::Corrected(PHat::PerDay(p_day)), &ia, span, &grid, a.resamples, a.level, a.fit.seed)?;
    bundle.write_with("ripley_full.csv", |buf| full.write_csv(buf))?;
    let naive = bootstrap_band(&RipleyEstimator::Naive, &ia, span, &grid, a.resamples, a.level, a.fit.seed)?;
    bundle.write_with("ripley_full_naive.csv", |buf| naive.write_csv(buf))?;

    let gaps: Vec<f64> = ia.durations().iter().map(|&d| d as f64).collect();
    let rate = hmm::rate_estimate::<f64>(&ia);
    let qq = qq_data(&gaps, &Theoretical::Exponential { rate })?;
    bundle.write_with("qq_full.csv", |buf| ppstats::write_qq_csv(&qq, buf))?;

    let mut ks_rows = Vec::new();
    if gaps.len() >= 2 {
        ks_rows.push(KsRow { subset: "full".into(), cap: None, result: ks_exponential(&gaps, a.alpha, None)? });
    }
    let mut by_state: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for (&s, &m) in days.iter().zip(series.counts()) {
        by_state.entry(s).or_default().push(m);
    }
    for state in 0..c.model.n_states() {
        let sub = match subseries(&series, &days, state, a.fit.seed.wrapping_add(state as u64)) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("activity-hmm: state {state}: {e}");
                continue;
            }
        };
        let Ok(sub_ia) = interarrivals(&sub.series) else { continue };
        if sub_ia.len() >= 2 {
            let curve = bootstrap_band(
                &RipleyEstimator::Corrected(PHat::Homogeneous),
                &sub_ia,
                sub.n_act as u64,
                &grid,
                a.resamples,
                a.level,
                a.fit.seed.wrapping_add(state as u64 + 1),
            )?;
            bundle.write_with(&format!("ripley_state{state}.csv"), |buf| curve.write_csv(buf))?;
            let d: Vec<f64> = sub_ia.durations().iter().map(|&x| x as f64).collect();
            let cap = a.ks_cap.get(state).copied();
            match ks_exponential(&d, a.alpha, cap) {
                Ok(result) => ks_rows.push(KsRow { subset: format!("state{state}"), cap, result }),
                Err(e) => eprintln!("activity-hmm: state {state}: {e}"),
            }
            let qq = qq_data(&d, &Theoretical::Exponential { rate: hmm::rate_estimate::<f64>(&sub_ia) })?;
            bundle.write_with(&format!("qq_state{state}.csv"), |buf| ppstats::write_qq_csv(&qq, buf))?;
        }
    }
    bundle.write_json("ks.json", &ks_rows)?;
    let table = aic_table::<f64>(&by_state, &Family::ALL)?;
    match a.out.format {
        Format::Csv => bundle.write_with("aic_table.csv", |buf| io::write_aic_table(&table, buf))?,
        Format::Json => bundle.write_json("aic_table.json", &table)?,
    }
    bundle.write_json("model.json", &c.model)?;
    bundle.finish("diagnose", Some(a.fit.seed), a)
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let estimators = a
        .estimators
        .iter()
        .map(|s| s.parse::<Estimator>())
        .collect::<activity_hmm::Result<Vec<_>>>()?;
    if !(a.tol > 0.0) || a.sehm_starts == 0 {
        return Err(CliError::Config("--tol and --sehm-starts must be positive".into()));
    }
    let mut bundle = Bundle::create(&a.out.out)?;
    let series = load_series(&mut bundle, &a.input)?;
    let opts = RollingOptions {
        estimators,
        compare: CompareOptions {
            hmm: BaumWelchOptions { tol: a.tol, max_iter: a.max_iter, estimate_initial: false },
            sehm: SehmFitOptions { seed: a.seed, starts: a.sehm_starts, ..Default::default() },
        },
    };
    let results = rolling_eval::<f64>(&series, &a.horizons, &opts)?;
    match a.out.format {
        Format::Csv => bundle.write_with("comparison.csv", |buf| activity_hmm::predict::write_summary_csv(&results, buf))?,
        Format::Json => bundle.write_json("comparison.json", &results)?,
    }
    bundle.write_with("trace.csv", |buf| activity_hmm::predict::write_trace_csv(&results, buf))?;
    let fits: Vec<_> = results.iter().filter_map(|r| r.comparison.as_ref().map(|c| (r.horizon, c))).collect();
    bundle.write_json("fits.json", &fits)?;
    bundle.finish("compare", Some(a.seed), a)
}

#[derive(Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
enum Generator {
    Hmm { hmm: HmmModel<f64>, windows: usize, seed: u64 },
    DtHmm { hmm: HmmModel<f64>, marks: EmissionModel<f64>, events: usize, seed: u64 },
    Sehm { sehm: SehmModel<f64>, days: usize, seed: u64 },
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut bundle = Bundle::create(&a.out.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let geom = |g: f64| EmissionModel::Geometric { gamma: g };
    let (counts, states, generator) = match a.model {
        SimKind::Hmm => {
            let m = HmmModel::two_state(a.p0, a.q0, geom(a.gamma0), geom(a.gamma1), ObsKind::X, a.delta)?;
            let sim = simulate_windows(&m, a.length, &mut rng)?;
            (sim.series.counts().to_vec(), Some(sim.states), Generator::Hmm { hmm: m, windows: a.length, seed: a.seed })
        }
        SimKind::DtHmm => {
            let m = HmmModel::two_state(a.p0, a.q0, geom(a.gamma0), geom(a.gamma1), ObsKind::Dt, 1)?;
            let marks = geom(a.marks);
            let sim = simulate_durations(&m, &marks, a.length, &mut rng)?;
            (sim.series.counts().to_vec(), Some(sim.states), Generator::DtHmm { hmm: m, marks, events: a.length, seed: a.seed })
        }
        SimKind::Sehm => {
            let m = SehmModel::new(a.b, a.excitation, a.omega, a.s)?;
            let counts = m.simulate(a.days, &mut rng)?;
            (counts, None, Generator::Sehm { sehm: m, days: a.days, seed: a.seed })
        }
    };
    let series = EventSeries::new(a.start, counts)?;
    bundle.write_with("series.csv", |buf| io::write_series(&series, buf))?;
    if let Some(states) = states {
        let mut out = String::from("index,state\n");
        for (i, s) in states.iter().enumerate() {
            out.push_str(&format!("{},{s}\n", i + 1));
        }
        bundle.write("states.csv", out.as_bytes())?;
    }
    bundle.write_json("generator.json", &generator)?;
    bundle.finish("simulate", Some(a.seed), a)
}

pub fn robustness(a: &RobustnessArgs) -> Result<(), CliError> {
    check_fit(&a.fit)?;
    if a.fit.obs == ObsKind::Dt {
        return Err(CliError::Config("robustness needs a windowed --obs".into()));
    }
    let mut bundle = Bundle::create(&a.out.out)?;
    let series = load_series(&mut bundle, &a.input)?;
    let extra = io::read_records(bundle.read_input(&a.extra)?.as_slice())?;
    let cfg = SweepConfig { delta: a.fit.delta[0], family: a.fit.family, obs_kind: a.fit.obs, classify: classify_options(&a.fit) };
    let curve = robustness_sweep(&series, &extra, a.steps, &cfg)?;
    match a.out.format {
        Format::Csv => bundle.write_with("robustness.csv", |buf| curve.write_csv(buf))?,
        Format::Json => bundle.write_json("robustness.json", &curve)?,
    }
    bundle.finish("robustness", Some(a.fit.seed), a)
}

pub fn merge(a: &MergeArgs) -> Result<(), CliError> {
    let mut bundle = Bundle::create(&a.out.out)?;
    let series = load_series(&mut bundle, &a.input)?;
    let extra = io::read_records(bundle.read_input(&a.extra)?.as_slice())?;
    let merged = merge_missing(&series, &extra, a.steps)?;
    for (j, s) in merged.iter().enumerate() {
        bundle.write_with(&format!("merged_step{}.csv", j + 1), |buf| io::write_series(s, buf))?;
    }
    bundle.finish("merge", None, a)
}
