use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_activity-hmm")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulated(dir: &Path) -> std::path::PathBuf {
    ok(&["simulate", "--seed", "11", "--out", s(&dir.join("sim"))]);
    dir.join("sim").join("series.csv")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_series_states_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let series = simulated(tmp.path());
    let text = std::fs::read_to_string(&series).unwrap();
    assert!(text.starts_with("date,count\n"));
    assert_eq!(text.lines().count(), 219 * 15 + 1);
    let m = manifest(&tmp.path().join("sim"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 11);
    assert!(m["artifacts"].as_object().unwrap().contains_key("series.csv"));
}

#[test]
fn classify_with_two_window_lengths_gives_two_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let series = simulated(tmp.path());
    let out = tmp.path().join("c");
    ok(&["classify", "--input", s(&series), "--delta", "10,15", "--out", s(&out)]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("10,") && rows[2].starts_with("15,"));
    for d in [10, 15] {
        assert!(out.join(format!("states_d{d}.csv")).exists());
        assert!(out.join(format!("model_d{d}.json")).exists());
    }
}

#[test]
fn json_summary_is_parseable() {
    let tmp = tempfile::tempdir().unwrap();
    let series = simulated(tmp.path());
    let out = tmp.path().join("c");
    ok(&["classify", "--input", s(&series), "--format", "json", "--out", s(&out)]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
}

#[test]
fn all_zero_series_has_no_spurts_and_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("zeros.csv");
    std::fs::write(&input, "date,count\n2001-01-01,0\n2001-03-01,0\n").unwrap();
    let out = tmp.path().join("c");
    ok(&["classify", "--input", s(&input), "--out", s(&out)]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(summary.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let field = |name: &str| row.get(headers.iter().position(|h| h == name).unwrap()).unwrap().to_string();
    assert_eq!(field("n_spurt"), "0");
    assert!(!field("warnings").is_empty());
}

#[test]
fn diagnose_compare_robustness_and_merge_produce_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    let series = simulated(tmp.path());
    let extra = tmp.path().join("extra.csv");
    std::fs::write(&extra, "date,count\n2001-05-05,1\n2002-05-05,1\n2002-08-01,2\n").unwrap();

    let d = tmp.path().join("d");
    ok(&["diagnose", "--input", s(&series), "--resamples", "20", "--out", s(&d)]);
    for f in ["ripley_full.csv", "ripley_state0.csv", "ripley_state1.csv", "ks.json", "aic_table.csv", "qq_full.csv"] {
        assert!(d.join(f).exists(), "missing {f}");
    }
    let ripley = std::fs::read_to_string(d.join("ripley_full.csv")).unwrap();
    assert!(ripley.starts_with("h,k_hat,two_h,ci_lo,ci_hi"));

    ok(&["simulate", "--model", "dt-hmm", "--length", "300", "--seed", "2", "--out", s(&tmp.path().join("dt"))]);
    let c = tmp.path().join("cmp");
    let dt = tmp.path().join("dt").join("series.csv");
    ok(&["compare", "--input", s(&dt), "--horizons", "100,200", "--sehm-starts", "2", "--out", s(&c)]);
    let cmp = std::fs::read_to_string(c.join("comparison.csv")).unwrap();
    assert!(cmp.starts_with("n,aic_sehm,aic_hmm,smape_sehm,smape_hmm,smape_baseline"));
    assert_eq!(cmp.lines().count(), 3);

    let r = tmp.path().join("rob");
    ok(&["robustness", "--input", s(&series), "--extra", s(&extra), "--out", s(&r)]);
    let rob = std::fs::read_to_string(r.join("robustness.csv")).unwrap();
    assert!(rob.starts_with("step,frac_missing,frac_changes"));

    let m = tmp.path().join("merge");
    ok(&["merge", "--input", s(&series), "--extra", s(&extra), "--out", s(&m)]);
    assert!(m.join("merged_step1.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let series = simulated(tmp.path());
    let mut dirs = Vec::new();
    for rep in 0..2 {
        let out = tmp.path().join(format!("run{rep}"));
        ok(&["classify", "--input", s(&series), "--delta", "15", "--restarts", "3", "--seed", "5", "--out", s(&out)]);
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        dirs.push(files);
    }
    assert_eq!(dirs[0], dirs[1]);
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let series = simulated(tmp.path());
    let out = tmp.path().join("x");

    let bad_family = run(&["classify", "--input", s(&series), "--family", "nope", "--out", s(&out)]);
    assert_eq!(bad_family.status.code(), Some(2));

    let missing = run(&["classify", "--input", s(&tmp.path().join("absent.csv")), "--out", s(&out)]);
    assert_eq!(missing.status.code(), Some(3));

    let starved = run(&["classify", "--input", s(&series), "--max-iter", "1", "--tol", "1e-300", "--out", s(&out)]);
    assert_eq!(starved.status.code(), Some(4));
    assert!(out.join("summary.csv").exists(), "outputs are still written before reporting non-convergence");
}
