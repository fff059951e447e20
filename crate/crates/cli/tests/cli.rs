use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn funcut(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_funcut"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_slice(&fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Three days of 5-minute readings per subject; `every` thins the sampling.
fn series_rows(out: &mut String, id: &str, level: f64, every: usize) {
    for i in (0..3 * 288).step_by(every) {
        let (d, m) = (1 + i / 288, (i % 288) * 5);
        let g = level + 20.0 * ((i as f64) / 12.0).sin();
        writeln!(out, "{id},2024-03-{d:02}T{:02}:{:02}:00Z,{g:.1}", m / 60, m % 60).unwrap();
    }
}

fn write_cohort(dir: &Path, subjects: &[(&str, f64, usize, Option<bool>)]) -> (PathBuf, PathBuf) {
    let mut series = String::from("subject_id,timestamp,glucose\n");
    let mut labels = String::from("subject_id,label\n");
    for &(id, level, every, label) in subjects {
        series_rows(&mut series, id, level, every);
        if let Some(z) = label {
            writeln!(labels, "{id},{}", u8::from(z)).unwrap();
        }
    }
    let (s, l) = (dir.join("series.csv"), dir.join("labels.csv"));
    fs::write(&s, series).unwrap();
    fs::write(&l, labels).unwrap();
    (s, l)
}

/// Curves on the k/(m+1) grid: cases sit well above controls.
fn write_curves(dir: &Path, name: &str, m: usize, labels: &[bool]) -> (PathBuf, PathBuf) {
    let grid: Vec<f64> = (1..=m).map(|k| k as f64 / (m + 1) as f64).collect();
    let mut csv = String::from("subject_id");
    for k in 1..=m {
        write!(csv, ",rho_{k}").unwrap();
    }
    csv.push('\n');
    let mut lab = String::from("subject_id,label\n");
    for (i, &z) in labels.iter().enumerate() {
        let base = if z { 200.0 } else { 100.0 } + (i % 7) as f64 * 3.0;
        write!(csv, "s{i:02}").unwrap();
        for &r in &grid {
            write!(csv, ",{}", base + 60.0 * r + (i % 3) as f64 * r * r).unwrap();
        }
        csv.push('\n');
        writeln!(lab, "s{i:02},{}", u8::from(z)).unwrap();
    }
    let curves = dir.join(format!("{name}.csv"));
    fs::write(&curves, csv).unwrap();
    fs::write(dir.join(format!("{name}.grid.json")), serde_json::json!({ "points": grid }).to_string()).unwrap();
    let lp = dir.join(format!("{name}_labels.csv"));
    fs::write(&lp, lab).unwrap();
    (curves, lp)
}

fn alternating(n: usize) -> Vec<bool> {
    (0..n).map(|i| i % 2 == 0).collect()
}

#[test]
fn ingest_writes_one_row_per_subject() {
    let dir = tempfile::tempdir().unwrap();
    let (s, l) = write_cohort(dir.path(), &[("a", 110.0, 1, Some(false)), ("b", 190.0, 1, Some(true))]);
    let out = dir.path().join("out");
    ok(&funcut(&out, &["ingest", "--series", p(&s), "--labels", p(&l), "--grid-size", "20"]));
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    let lines: Vec<&str> = curves.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("subject_id,rho_1,"));
    assert_eq!(lines[0].split(',').count(), 21);
    assert_eq!(json(out.join("curves.grid.json"))["points"].as_array().unwrap().len(), 20);
    let manifest = json(out.join("ingest.manifest.json"));
    assert_eq!(manifest["command"], "ingest");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
    assert!(manifest["inputs"].as_object().unwrap().values().all(|d| d.as_str().unwrap().len() == 64));
}

#[test]
fn ingest_reports_excluded_subject() {
    let dir = tempfile::tempdir().unwrap();
    let (s, l) = write_cohort(
        dir.path(),
        &[("a", 110.0, 1, Some(false)), ("b", 190.0, 1, Some(true)), ("gappy", 150.0, 36, Some(true))],
    );
    let out = dir.path().join("out");
    ok(&funcut(&out, &["ingest", "--series", p(&s), "--labels", p(&l)]));
    let report = json(out.join("ingest_report.json"));
    assert_eq!(report["excluded"], serde_json::json!(["gappy"]));
    assert_eq!(report["subjects"]["gappy"]["excluded"], true);
    assert_eq!(fs::read_to_string(out.join("curves.csv")).unwrap().lines().count(), 3);

    // A single 180-minute gap is tolerated only when gaps are not accumulated.
    ok(&funcut(&out, &["ingest", "--series", p(&s), "--labels", p(&l), "--gap-mode", "single", "--max-gap", "200"]));
    assert_eq!(json(out.join("ingest_report.json"))["excluded"], serde_json::json!([]));
}

#[test]
fn missing_labels_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = write_cohort(dir.path(), &[("a", 110.0, 1, Some(false))]);
    let missing = dir.path().join("nope.csv");
    let o = funcut(&dir.path().join("out"), &["ingest", "--series", p(&s), "--labels", p(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.csv"), "{}", stderr(&o));
}

#[test]
fn bad_flags_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (c, l) = write_curves(dir.path(), "curves", 10, &alternating(10));
    let out = dir.path().join("out");
    let o = funcut(&out, &["fit", "--curves", p(&c), "--labels", p(&l), "--criterion", "best"]);
    assert_eq!(o.status.code(), Some(2));
    let o = funcut(&out, &["fit", "--curves", p(&c), "--labels", p(&l), "--range", "1:x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_separated_fixture_is_perfect_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (c, l) = write_curves(dir.path(), "curves", 25, &alternating(30));
    let (o1, o2) = (dir.path().join("r1"), dir.path().join("r2"));
    ok(&funcut(&o1, &["fit", "--curves", p(&c), "--labels", p(&l), "--smooth"]));
    ok(&funcut(&o2, &["fit", "--curves", p(&c), "--labels", p(&l), "--smooth"]));
    let fit = json(o1.join("fit.json"));
    assert_eq!(fit["youden"], 1.0);
    assert_eq!(fit["auc"], 1.0);
    for f in ["fit.json", "frozen_cutoff.json", "sweep.csv", "roc.csv", "cutoff_curve.csv", "cutoff_smoothed.csv"] {
        assert_eq!(fs::read(o1.join(f)).unwrap(), fs::read(o2.join(f)).unwrap(), "{f}");
    }
    let frozen = json(o1.join("frozen_cutoff.json"));
    assert_eq!(frozen["smoothed_curve"].as_array().unwrap().len(), 25);
    assert_eq!(fs::read_to_string(o1.join("sweep.csv")).unwrap().lines().next(), Some("c,sensitivity,specificity,youden"));
}

#[test]
fn fit_max_sensitivity_reports_full_sensitivity() {
    let dir = tempfile::tempdir().unwrap();
    let mut labels = alternating(30);
    labels[4] = false;
    labels[7] = true;
    let (c, l) = write_curves(dir.path(), "curves", 12, &labels);
    // Blur the classes: move one case well below the controls.
    let text = fs::read_to_string(&c).unwrap();
    let mut rows: Vec<String> = text.lines().map(String::from).collect();
    let row = rows.iter_mut().find(|r| r.starts_with("s07,")).unwrap();
    let vals: Vec<String> = row
        .split(',')
        .skip(1)
        .map(|v| (v.parse::<f64>().unwrap() - 150.0).to_string())
        .collect();
    *row = format!("s07,{}", vals.join(","));
    fs::write(&c, rows.join("\n") + "\n").unwrap();
    let out = dir.path().join("out");
    ok(&funcut(&out, &["fit", "--curves", p(&c), "--labels", p(&l), "--criterion", "max_sensitivity"]));
    let fit = json(out.join("fit.json"));
    assert_eq!(fit["sensitivity"], 1.0);
    assert!(fit["specificity"].as_f64().unwrap() < 1.0);
}

#[test]
fn bootstrap_is_reproducible_and_nested() {
    let dir = tempfile::tempdir().unwrap();
    let mut labels = alternating(40);
    labels.swap(3, 4);
    let (c, l) = write_curves(dir.path(), "curves", 15, &labels);
    let run = |name: &str, alpha: &str, threads: &str| {
        let out = dir.path().join(name);
        ok(&funcut(
            &out,
            &[
                "--seed", "17", "--threads", threads, "bootstrap", "--curves", p(&c), "--labels", p(&l), "-B", "50",
                "--alpha", alpha, "--scale", "pointwise-sd",
            ],
        ));
        out
    };
    let a = run("a", "0.05", "1");
    let b = run("b", "0.05", "3");
    for f in ["bootstrap_summary.json", "curve_band.csv", "sweep_band.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let wide = json(a.join("bootstrap_summary.json"));
    let narrow = json(run("c", "0.5", "2").join("bootstrap_summary.json"));
    assert_eq!(wide["B"], 50);
    let (wl, wu) = (wide["ci"]["lower"].as_f64().unwrap(), wide["ci"]["upper"].as_f64().unwrap());
    let (nl, nu) = (narrow["ci"]["lower"].as_f64().unwrap(), narrow["ci"]["upper"].as_f64().unwrap());
    assert!(wl <= nl && nu <= wu, "[{nl}, {nu}] not inside [{wl}, {wu}]");
    assert_eq!(
        fs::read_to_string(a.join("sweep_band.csv")).unwrap().lines().next(),
        Some("c,sens_lo,sens_hi,spec_lo,spec_hi")
    );
}

#[test]
fn bootstrap_single_class_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let (c, l) = write_curves(dir.path(), "curves", 8, &[true; 12]);
    let o = funcut(&dir.path().join("out"), &["bootstrap", "--curves", p(&c), "--labels", p(&l), "-B", "20"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bootstrap infeasible"), "{}", stderr(&o));
}

#[test]
fn classify_applies_frozen_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let (c, l) = write_curves(dir.path(), "curves", 10, &alternating(20));
    let out = dir.path().join("out");
    ok(&funcut(&out, &["fit", "--curves", p(&c), "--labels", p(&l)]));

    // c = 0 against the cohort's own μ: positive exactly when the margin is nonnegative.
    let mut frozen = json(out.join("frozen_cutoff.json"));
    frozen["c_hat"] = serde_json::json!(0.0);
    let zero = dir.path().join("zero.json");
    fs::write(&zero, frozen.to_string()).unwrap();
    ok(&funcut(&out, &["classify", "--cutoff", p(&zero), "--curves", p(&c)]));
    let preds = fs::read_to_string(out.join("predictions.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("subject_id,margin,predicted"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[2] == "1", f[1].parse::<f64>().unwrap() >= 0.0, "{line}");
    }

    ok(&funcut(&out, &["classify", "--cutoff", p(&out.join("frozen_cutoff.json")), "--curves", p(&c), "--labels", p(&l)]));
    let m = json(out.join("classify_metrics.json"));
    assert_eq!((m["sensitivity"].as_f64(), m["specificity"].as_f64()), (Some(1.0), Some(1.0)));
    assert_eq!(m["youden"], 1.0);
}

#[test]
fn classify_rejects_other_grid() {
    let dir = tempfile::tempdir().unwrap();
    let (c, l) = write_curves(dir.path(), "curves", 10, &alternating(20));
    let (other, _) = write_curves(dir.path(), "other", 12, &alternating(20));
    let out = dir.path().join("out");
    ok(&funcut(&out, &["fit", "--curves", p(&c), "--labels", p(&l)]));
    let o = funcut(&out, &["classify", "--cutoff", p(&out.join("frozen_cutoff.json")), "--curves", p(&other)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid mismatch"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_r_rows_per_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&funcut(&out, &["--seed", "3", "simulate", "--a", "5", "--b", "0", "--n", "200", "-R", "20", "--grid-size", "30"]));
    let study = fs::read_to_string(out.join("study.csv")).unwrap();
    let mut lines = study.lines();
    assert_eq!(lines.next(), Some("a,b,n,criterion,replicate,sensitivity,specificity"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 60);
    for crit in ["youden", "max_sensitivity", "max_specificity"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(3) == Some(crit)).count(), 20, "{crit}");
    }
    assert_eq!(fs::read_to_string(out.join("study_summary.csv")).unwrap().lines().count(), 4);
}

#[test]
fn roc_on_perfect_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (c, l) = write_curves(dir.path(), "curves", 10, &alternating(16));
    let out = dir.path().join("out");
    ok(&funcut(&out, &["roc", "--curves", p(&c), "--labels", p(&l)]));
    assert_eq!(json(out.join("roc.json"))["auc"], 1.0);
    assert_eq!(fs::read_to_string(out.join("roc.csv")).unwrap().lines().next(), Some("fpr,tpr"));
}

#[test]
fn indices_constant_series_and_scalar_cutpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut series = String::from("subject_id,timestamp,glucose\n");
    for i in 0..48 {
        writeln!(series, "flat,2024-03-01T{:02}:{:02}:00Z,100", i / 12, (i % 12) * 5).unwrap();
    }
    let s = dir.path().join("flat.csv");
    fs::write(&s, series).unwrap();
    let out = dir.path().join("out");
    ok(&funcut(&out, &["indices", "--series", p(&s)]));
    let csv = fs::read_to_string(out.join("indices.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let get = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!((get("mg"), get("sd"), get("cv"), get("mage"), get("conga")), ("100", "0", "0", "0", "0"));
    assert_eq!(json(out.join("indices_meta.json"))["convention"], "classic");

    let (s2, l2) = write_cohort(
        dir.path(),
        &[("a", 100.0, 1, Some(false)), ("b", 110.0, 1, Some(false)), ("c", 200.0, 1, Some(true)), ("d", 210.0, 1, Some(true))],
    );
    ok(&funcut(&out, &["indices", "--series", p(&s2), "--labels", p(&l2)]));
    let cuts = json(out.join("indices_cutpoints.json"));
    let mg = cuts.as_array().unwrap().iter().find(|c| c["index"] == "mg").unwrap();
    assert_eq!(mg["youden"], 1.0);
}
