use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use funcut::bootstrap::{bootstrap_cutpoint, BootstrapConfig};
use funcut::cgm::{filter_days, parse_cohort, read_labels_file, read_series, CohortLabels, DayFilter};
use funcut::cutpoint::{optimize, CutpointResult, ScoredSample, SearchSpace};
use funcut::indices::{basic_indices, conga, mage, GlucoseTrace, IndexConfig, IndexVector, CONVENTION};
use funcut::io;
use funcut::quantile::{empirical_quantile, LabeledSample, ProbabilityGrid};
use funcut::simulation::{run_study, Cell, StudyConfig};
use funcut::smooth::{monotone_smooth, SmoothConfig};
use funcut::threshold::{fit_functional, FitConfig, FrozenCutoff, SplitSpec};
use funcut::{Centrality, Criterion, ScaleMode};

use crate::manifest::Recorder;
use crate::{
    BootstrapArgs, ClassifyArgs, Cli, Command, FilterArgs, FitArgs, IndicesArgs, IngestArgs, ModelArgs, RocArgs,
    SimulateArgs,
};

/// Malformed flag values; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn run(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::Ingest(a) => ingest(cli, a),
        Command::Fit(a) => fit(cli, a),
        Command::Bootstrap(a) => bootstrap(cli, a),
        Command::Classify(a) => classify(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Indices(a) => indices(cli, a),
        Command::Roc(a) => roc(cli, a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

fn day_filter(f: &FilterArgs) -> Result<DayFilter> {
    if !(f.max_gap >= 0.0) || !(f.interval > 0.0) {
        return Err(usage("--max-gap must be nonnegative and --interval positive"));
    }
    Ok(DayFilter {
        max_gap_minutes: f.max_gap,
        mode: f.gap_mode,
        min_days: f.min_days,
        ..DayFilter::default()
    })
}

fn ingest(cli: &Cli, a: &IngestArgs) -> Result<()> {
    let mut rec = Recorder::new("ingest", cli.seed);
    rec.input(&a.labels)?;
    rec.input(&a.series)?;
    let filter = day_filter(&a.filter)?;
    let cohort = parse_cohort(&a.series, &a.labels, &filter, a.filter.interval)?;
    let grid = Arc::new(ProbabilityGrid::uniform(a.grid_size)?);
    let curves = cohort
        .series
        .iter()
        .map(|s| empirical_quantile(&s.subject_id, &s.glucose(), &grid))
        .collect::<funcut::Result<Vec<_>>>()?;
    let curves_path = rec.output(&cli.out.join("curves.csv"));
    io::write_curves(&curves_path, &grid, &curves)?;
    rec.output(&io::grid_sidecar_path(&curves_path));
    io::write_json(&rec.output(&cli.out.join("ingest_report.json")), &cohort.report)?;
    eprintln!(
        "ingest: {} curves written, {} excluded, {} unlabeled",
        curves.len(),
        cohort.report.excluded.len(),
        cohort.report.unlabeled.len()
    );
    rec.finish(&cli.out)
}

fn parse_bounds(s: &str, parts: usize, flag: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("{flag} expects {parts} colon-separated numbers, got `{s}`")))?;
    if v.len() != parts || v.iter().any(|x| !x.is_finite()) {
        return Err(usage(format!("{flag} expects {parts} colon-separated numbers, got `{s}`")));
    }
    Ok(v)
}

fn search_space(m: &ModelArgs) -> Result<SearchSpace<f64>> {
    if let Some(r) = &m.range {
        let v = parse_bounds(r, 2, "--range")?;
        return Ok(SearchSpace::Range { lower: v[0], upper: v[1] });
    }
    if let Some(g) = &m.grid {
        let v = parse_bounds(g, 3, "--grid")?;
        if v[2] < 1.0 || v[2].fract() != 0.0 {
            return Err(usage("--grid point count must be a positive integer"));
        }
        return Ok(SearchSpace::Grid {
            lower: v[0],
            upper: v[1],
            points: v[2] as usize,
        });
    }
    Ok(SearchSpace::Exact)
}

fn fit_config(cli: &Cli, m: &ModelArgs) -> Result<FitConfig<f64>> {
    let mut cfg = FitConfig::new(m.criterion);
    cfg.centrality = m.centrality;
    cfg.scale = m.scale;
    cfg.search = search_space(m)?;
    cfg.split = m.split_fraction.map(|fraction| SplitSpec { fraction, seed: cli.seed });
    Ok(cfg)
}

/// Reads curves plus labels; subjects without a label are left out.
fn load_sample(rec: &mut Recorder, curves: &Path, labels: &Path) -> Result<(LabeledSample<f64>, Vec<String>)> {
    rec.input(curves)?;
    rec.input(&io::grid_sidecar_path(curves))?;
    rec.input(labels)?;
    let (grid, curves) = io::read_curves::<f64>(curves)?;
    let labels = read_labels_file(labels)?;
    let (sample, unlabeled) = io::label_curves(grid, curves, &labels)?;
    if !unlabeled.is_empty() {
        eprintln!("warning: {} curves have no label and were skipped", unlabeled.len());
    }
    Ok((sample, unlabeled))
}

#[derive(Serialize)]
struct SmoothingReport {
    window: usize,
    max_abs_change: f64,
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    result: &'a CutpointResult<f64>,
    centrality: Centrality,
    scale: ScaleMode,
    n_subjects: usize,
    n_scored: usize,
    unlabeled: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothing: Option<SmoothingReport>,
}

fn fit(cli: &Cli, a: &FitArgs) -> Result<()> {
    let mut rec = Recorder::new("fit", cli.seed);
    let cfg = fit_config(cli, &a.model)?;
    let (sample, unlabeled) = load_sample(&mut rec, &a.model.curves, &a.model.labels)?;
    let smooth_cfg = a
        .smooth
        .map(SmoothConfig::new)
        .transpose()
        .map_err(|e| usage(e.to_string()))?;
    let fit = fit_functional(&sample, &cfg)?;
    let rho = sample.grid().points();
    let curve = funcut::cutoff_curve(&fit.family, fit.result.c_hat);
    let mut frozen = FrozenCutoff::from_family(&fit.family, fit.result.c_hat, cfg.criterion);
    io::write_profile_csv(&rec.output(&cli.out.join("cutoff_curve.csv")), rho, &curve)?;
    let smoothing = match smooth_cfg {
        Some(sc) => {
            let s = monotone_smooth(&curve, sc);
            io::write_profile_csv(&rec.output(&cli.out.join("cutoff_smoothed.csv")), rho, &s.values)?;
            frozen.smoothed_curve = Some(s.values);
            Some(SmoothingReport {
                window: sc.window(),
                max_abs_change: s.max_abs_change,
            })
        }
        None => None,
    };
    let report = FitReport {
        result: &fit.result,
        centrality: cfg.centrality,
        scale: cfg.scale,
        n_subjects: sample.len(),
        n_scored: fit.scored.len(),
        unlabeled,
        split_fraction: cfg.split.map(|s| s.fraction),
        smoothing,
    };
    io::write_json(&rec.output(&cli.out.join("fit.json")), &report)?;
    io::write_json(&rec.output(&cli.out.join("frozen_cutoff.json")), &frozen)?;
    io::write_sweep_csv(&rec.output(&cli.out.join("sweep.csv")), &fit.result.sweep)?;
    io::write_roc_csv(&rec.output(&cli.out.join("roc.csv")), &fit.result.roc)?;
    eprintln!(
        "fit: c_hat {} sensitivity {} specificity {} auc {}",
        fit.result.c_hat, fit.result.sensitivity, fit.result.specificity, fit.result.auc
    );
    rec.finish(&cli.out)
}

fn bootstrap(cli: &Cli, a: &BootstrapArgs) -> Result<()> {
    let mut rec = Recorder::new("bootstrap", cli.seed);
    let fit_cfg = fit_config(cli, &a.model)?;
    let cfg = BootstrapConfig {
        replicates: a.replicates,
        alpha: a.alpha,
        seed: cli.seed,
        max_redraws: a.max_redraws,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (sample, _) = load_sample(&mut rec, &a.model.curves, &a.model.labels)?;
    let summary = bootstrap_cutpoint(&sample, &fit_cfg, &cfg)?;
    io::write_json(&rec.output(&cli.out.join("bootstrap_summary.json")), &summary)?;
    if let Some(band) = &summary.curve_band {
        io::write_curve_band_csv(&rec.output(&cli.out.join("curve_band.csv")), band)?;
    }
    io::write_sweep_band_csv(&rec.output(&cli.out.join("sweep_band.csv")), &summary.sweep_band)?;
    eprintln!(
        "bootstrap: c_hat {} CI [{}, {}], {} redraws",
        summary.c_hat, summary.ci.lower, summary.ci.upper, summary.redraws
    );
    rec.finish(&cli.out)
}

#[derive(Serialize)]
struct ClassifyMetrics {
    criterion: Criterion,
    c_hat: f64,
    n_cases: usize,
    n_controls: usize,
    unlabeled: usize,
    sensitivity: f64,
    specificity: f64,
    youden: f64,
}

fn classify(cli: &Cli, a: &ClassifyArgs) -> Result<()> {
    let mut rec = Recorder::new("classify", cli.seed);
    rec.input(&a.cutoff)?;
    rec.input(&a.curves)?;
    rec.input(&io::grid_sidecar_path(&a.curves))?;
    let frozen: FrozenCutoff<f64> = io::read_json(&a.cutoff)?;
    let labels = match &a.labels {
        Some(p) => {
            rec.input(p)?;
            Some(read_labels_file(p)?)
        }
        None => None,
    };
    let (grid, curves) = io::read_curves::<f64>(&a.curves)?;
    frozen.check_grid(&grid)?;
    let (margins, predicted) = frozen.apply(&curves)?;

    let path = rec.output(&cli.out.join("predictions.csv"));
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["subject_id", "margin", "predicted"];
    if labels.is_some() {
        header.push("label");
    }
    w.write_record(&header)?;
    let (mut tp, mut tn, mut cases, mut controls, mut unlabeled) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for ((id, &m), &p) in margins.ids.iter().zip(&margins.margins).zip(&predicted) {
        let mut row = vec![id.clone(), m.to_string(), u8::from(p).to_string()];
        if let Some(l) = &labels {
            match l.get(id) {
                Some(z) => {
                    row.push(u8::from(z).to_string());
                    if z {
                        cases += 1;
                        tp += usize::from(p);
                    } else {
                        controls += 1;
                        tn += usize::from(!p);
                    }
                }
                None => {
                    row.push(String::new());
                    unlabeled += 1;
                }
            }
        }
        w.write_record(&row)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;

    if labels.is_some() {
        if cases == 0 || controls == 0 {
            return Err(funcut::Error::DegenerateSample { cases, controls }.into());
        }
        let sensitivity = tp as f64 / cases as f64;
        let specificity = tn as f64 / controls as f64;
        let metrics = ClassifyMetrics {
            criterion: frozen.criterion,
            c_hat: frozen.c_hat,
            n_cases: cases,
            n_controls: controls,
            unlabeled,
            sensitivity,
            specificity,
            youden: sensitivity + specificity - 1.0,
        };
        io::write_json(&rec.output(&cli.out.join("classify_metrics.json")), &metrics)?;
        eprintln!("classify: sensitivity {sensitivity} specificity {specificity}");
    }
    rec.finish(&cli.out)
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    regenerations: usize,
    u2_mode: funcut::simulation::U2Mode,
    v: f64,
    grid_size: usize,
    cells: &'a [funcut::simulation::CellSummary<f64>],
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let rec = Recorder::new("simulate", cli.seed);
    let mut cells = Vec::new();
    for &av in &a.a {
        for &bv in &a.b {
            for &n in &a.n {
                cells.push(Cell { a: av, b: bv, n });
            }
        }
    }
    if a.criteria.is_empty() {
        bail!(usage("--criteria must name at least one criterion"));
    }
    let mut cfg = StudyConfig::new(cells, a.replicates, cli.seed);
    cfg.criteria = a.criteria.clone();
    cfg.v = a.v;
    cfg.grid_size = a.grid_size;
    cfg.u2_mode = a.u2_mode;
    cfg.centrality = a.centrality;
    let res = run_study(&cfg).map_err(|e| match e {
        funcut::Error::InvalidArgument(m) => usage(m),
        other => other.into(),
    })?;
    let mut rec = rec;
    io::write_study_csv(&rec.output(&cli.out.join("study.csv")), &res.rows)?;
    io::write_study_summary_csv(&rec.output(&cli.out.join("study_summary.csv")), &res.summaries)?;
    io::write_json(
        &rec.output(&cli.out.join("study_summary.json")),
        &SimulateSummary {
            regenerations: res.regenerations,
            u2_mode: cfg.u2_mode,
            v: cfg.v,
            grid_size: cfg.grid_size,
            cells: &res.summaries,
        },
    )?;
    eprintln!("simulate: {} rows, {} regenerated cohorts", res.rows.len(), res.regenerations);
    rec.finish(&cli.out)
}

#[derive(Serialize)]
struct Skipped {
    subject_id: String,
    reason: String,
}

#[derive(Serialize)]
struct IndicesMeta {
    convention: &'static str,
    conga_hours: f64,
    tar_inclusive: bool,
    subjects: usize,
    skipped: Vec<Skipped>,
    /// Per-subject index failures reported as NaN in the CSV.
    undefined: Vec<Skipped>,
}

#[derive(Serialize)]
struct IndexCutpoint {
    index: &'static str,
    criterion: Criterion,
    c_hat: f64,
    sensitivity: f64,
    specificity: f64,
    youden: f64,
    auc: f64,
    n_cases: usize,
    n_controls: usize,
}

fn indices(cli: &Cli, a: &IndicesArgs) -> Result<()> {
    let mut rec = Recorder::new("indices", cli.seed);
    rec.input(&a.series)?;
    let filter = day_filter(&a.filter)?;
    let file = File::open(&a.series).map_err(|e| funcut::Error::Io {
        path: a.series.clone(),
        source: e,
    })?;
    let parsed = read_series(file, &a.series.display().to_string(), a.filter.interval)?;
    let labels: Option<CohortLabels> = match &a.labels {
        Some(p) => {
            rec.input(p)?;
            Some(read_labels_file(p)?)
        }
        None => None,
    };
    let cfg = IndexConfig {
        conga_horizon_hours: a.conga_hours,
        ..IndexConfig::default()
    };
    let mut rows = Vec::new();
    let mut meta = IndicesMeta {
        convention: CONVENTION,
        conga_hours: a.conga_hours,
        tar_inclusive: cfg.tar_inclusive,
        subjects: 0,
        skipped: Vec::new(),
        undefined: Vec::new(),
    };
    for series in &parsed.series {
        let series = if a.filter_days {
            let (s, outcome) = filter_days(series, &filter);
            if outcome.excluded {
                meta.skipped.push(Skipped {
                    subject_id: series.subject_id.clone(),
                    reason: "excluded by the day filter".into(),
                });
                continue;
            }
            s
        } else {
            series.clone()
        };
        let trace = GlucoseTrace::<f64>::from_series(&series);
        let basic = match basic_indices(&trace, &cfg) {
            Ok(b) => b,
            Err(e) => {
                meta.skipped.push(Skipped {
                    subject_id: series.subject_id.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let mut undefined = |name: &str, r: funcut::Result<f64>| {
            r.unwrap_or_else(|e| {
                meta.undefined.push(Skipped {
                    subject_id: series.subject_id.clone(),
                    reason: format!("{name}: {e}"),
                });
                f64::NAN
            })
        };
        let mage_v = undefined("mage", mage(&trace));
        let conga_v = undefined("conga", conga(&trace, cfg.conga_horizon_hours));
        rows.push(IndexVector {
            subject_id: series.subject_id.clone(),
            mg: basic.mg,
            sd: basic.sd,
            cv: basic.cv,
            iqr: basic.iqr,
            mage: mage_v,
            conga: conga_v,
            auc_index: basic.auc_index,
            tar140: basic.tar140,
            tar180: basic.tar180,
        });
    }
    meta.subjects = rows.len();
    io::write_indices_csv(&rec.output(&cli.out.join("indices.csv")), &rows)?;
    io::write_json(&rec.output(&cli.out.join("indices_meta.json")), &meta)?;

    if let Some(labels) = labels {
        let mut cutpoints = Vec::new();
        for (k, &name) in IndexVector::<f64>::NAMES.iter().enumerate() {
            let (scores, z): (Vec<f64>, Vec<bool>) = rows
                .iter()
                .filter_map(|r| {
                    let v = r.values()[k];
                    labels.get(&r.subject_id).filter(|_| v.is_finite()).map(|z| (v, z))
                })
                .unzip();
            let sample = ScoredSample::new(scores, z)?;
            match optimize(&sample, a.criterion, &SearchSpace::Exact) {
                Ok(r) => cutpoints.push(IndexCutpoint {
                    index: name,
                    criterion: a.criterion,
                    c_hat: r.c_hat,
                    sensitivity: r.sensitivity,
                    specificity: r.specificity,
                    youden: r.youden,
                    auc: r.auc,
                    n_cases: r.n_cases,
                    n_controls: r.n_controls,
                }),
                Err(funcut::Error::DegenerateSample { .. }) => {
                    eprintln!("warning: index {name} has a single labelled class; no cut-point");
                }
                Err(e) => return Err(e.into()),
            }
        }
        io::write_json(&rec.output(&cli.out.join("indices_cutpoints.json")), &cutpoints)?;
    }
    eprintln!("indices: {} subjects, {} skipped", meta.subjects, meta.skipped.len());
    rec.finish(&cli.out)
}

#[derive(Serialize)]
struct RocReport {
    auc: f64,
    n_cases: usize,
    n_controls: usize,
    centrality: Centrality,
    scale: ScaleMode,
}

fn roc(cli: &Cli, a: &RocArgs) -> Result<()> {
    let mut rec = Recorder::new("roc", cli.seed);
    let (sample, _) = load_sample(&mut rec, &a.curves, &a.labels)?;
    let mut cfg = FitConfig::new(Criterion::Youden);
    cfg.centrality = a.centrality;
    cfg.scale = a.scale;
    let fit = fit_functional(&sample, &cfg)?;
    io::write_roc_csv(&rec.output(&cli.out.join("roc.csv")), &fit.result.roc)?;
    io::write_json(
        &rec.output(&cli.out.join("roc.json")),
        &RocReport {
            auc: fit.result.auc,
            n_cases: fit.result.n_cases,
            n_controls: fit.result.n_controls,
            centrality: cfg.centrality,
            scale: cfg.scale,
        },
    )?;
    eprintln!("roc: auc {}", fit.result.auc);
    rec.finish(&cli.out)
}
