//! File formats for pipeline artifacts.
//!
//! Curves are stored wide (`subject_id,rho_1,…,rho_m`) with the probability
//! grid in a `<stem>.grid.json` sidecar. Numbers are written with the
//! shortest representation that round-trips.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{CurveBand, SweepBand};
use crate::cgm::CohortLabels;
use crate::cutpoint::{RocPoint, SweepRow};
use crate::error::{Error, Result};
use crate::indices::IndexVector;
use crate::quantile::{LabeledSample, ProbabilityGrid, QuantileCurve};
use crate::scalar::Scalar;
use crate::simulation::{CellSummary, StudyRow};

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct GridSidecar<T> {
    points: Vec<T>,
}

/// `curves.csv` → `curves.grid.json`.
pub fn grid_sidecar_path(curves: &Path) -> PathBuf {
    curves.with_extension("grid.json")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn num<T: Scalar>(x: T) -> String {
    x.to_string()
}

fn parse_num<T: Scalar>(s: &str, file: &Path, line: u64, field: &str) -> Result<T> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(T::lit)
        .ok_or_else(|| Error::Parse {
            file: file.display().to_string(),
            line,
            field: field.to_string(),
            message: format!("`{s}` is not a finite number"),
        })
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_curves<T: Scalar>(path: &Path, grid: &ProbabilityGrid<T>, curves: &[QuantileCurve<T>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["subject_id".to_string()];
    header.extend((1..=grid.len()).map(|k| format!("rho_{k}")));
    w.write_record(&header)?;
    for c in curves {
        let mut row = vec![c.subject_id().to_string()];
        row.extend(c.values().iter().map(|&v| num(v)));
        w.write_record(&row)?;
    }
    finish(w, path)?;
    write_json(
        &grid_sidecar_path(path),
        &GridSidecar {
            points: grid.points().to_vec(),
        },
    )
}

pub fn read_grid<T: Scalar>(curves_path: &Path) -> Result<Arc<ProbabilityGrid<T>>> {
    let sidecar: GridSidecar<T> = read_json(&grid_sidecar_path(curves_path))?;
    Ok(Arc::new(ProbabilityGrid::new(sidecar.points)?))
}

pub fn read_curves<T: Scalar>(path: &Path) -> Result<(Arc<ProbabilityGrid<T>>, Vec<QuantileCurve<T>>)> {
    let grid = read_grid(path)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers()?.clone();
    if header.len() != grid.len() + 1 || &header[0] != "subject_id" {
        return Err(Error::GridMismatch(format!(
            "{} has {} value columns but its grid has {} points",
            path.display(),
            header.len().saturating_sub(1),
            grid.len()
        )));
    }
    let mut curves = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let values = (1..row.len())
            .map(|k| parse_num(&row[k], path, line, &header[k]))
            .collect::<Result<Vec<T>>>()?;
        curves.push(QuantileCurve::new(&row[0], Arc::clone(&grid), values)?);
    }
    Ok((grid, curves))
}

/// Pairs curves with labels; returns the ids of curves without a label.
pub fn label_curves<T: Scalar>(
    grid: Arc<ProbabilityGrid<T>>,
    curves: Vec<QuantileCurve<T>>,
    labels: &CohortLabels,
) -> Result<(LabeledSample<T>, Vec<String>)> {
    let mut kept = Vec::with_capacity(curves.len());
    let mut z = Vec::with_capacity(curves.len());
    let mut unlabeled = Vec::new();
    for c in curves {
        match labels.get(c.subject_id()) {
            Some(label) => {
                z.push(label);
                kept.push(c);
            }
            None => unlabeled.push(c.subject_id().to_string()),
        }
    }
    Ok((LabeledSample::new(grid, kept, z)?, unlabeled))
}

pub fn write_sweep_csv<T: Scalar>(path: &Path, rows: &[SweepRow<T>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["c", "sensitivity", "specificity", "youden"])?;
    for r in rows {
        w.write_record([num(r.c), num(r.sensitivity), num(r.specificity), num(r.youden)])?;
    }
    finish(w, path)
}

pub fn write_roc_csv<T: Scalar>(path: &Path, roc: &[RocPoint<T>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["fpr", "tpr"])?;
    for p in roc {
        w.write_record([num(p.fpr), num(p.tpr)])?;
    }
    finish(w, path)
}

pub fn write_curve_band_csv<T: Scalar>(path: &Path, band: &CurveBand<T>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["rho", "lower", "upper"])?;
    for k in 0..band.rho.len() {
        w.write_record([num(band.rho[k]), num(band.lower[k]), num(band.upper[k])])?;
    }
    finish(w, path)
}

pub fn write_sweep_band_csv<T: Scalar>(path: &Path, band: &SweepBand<T>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["c", "sens_lo", "sens_hi", "spec_lo", "spec_hi"])?;
    for k in 0..band.c.len() {
        w.write_record([
            num(band.c[k]),
            num(band.sens_lo[k]),
            num(band.sens_hi[k]),
            num(band.spec_lo[k]),
            num(band.spec_hi[k]),
        ])?;
    }
    finish(w, path)
}

/// `rho,value` profile, used for cut-off curves before and after smoothing.
pub fn write_profile_csv<T: Scalar>(path: &Path, rho: &[T], values: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["rho", "value"])?;
    for (&r, &v) in rho.iter().zip(values) {
        w.write_record([num(r), num(v)])?;
    }
    finish(w, path)
}

pub fn read_profile_csv<T: Scalar>(path: &Path) -> Result<(Vec<T>, Vec<T>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers()?;
    if header.len() != 2 || &header[0] != "rho" || &header[1] != "value" {
        return Err(Error::Header {
            file: path.display().to_string(),
            expected: "rho,value".into(),
        });
    }
    let mut rho = Vec::new();
    let mut values = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        rho.push(parse_num(&row[0], path, line, "rho")?);
        values.push(parse_num(&row[1], path, line, "value")?);
    }
    Ok((rho, values))
}

pub fn write_study_csv<T: Scalar>(path: &Path, rows: &[StudyRow<T>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["a", "b", "n", "criterion", "replicate", "sensitivity", "specificity"])?;
    for r in rows {
        w.write_record([
            num(r.a),
            num(r.b),
            r.n.to_string(),
            r.criterion.to_string(),
            r.replicate.to_string(),
            num(r.sensitivity),
            num(r.specificity),
        ])?;
    }
    finish(w, path)
}

pub fn write_study_summary_csv<T: Scalar>(path: &Path, summaries: &[CellSummary<T>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["a", "b", "n", "criterion", "replicates", "mean_youden"].map(String::from).to_vec();
    for metric in ["sens", "spec"] {
        for stat in ["mean", "var", "q025", "q25", "median", "q75", "q975"] {
            header.push(format!("{metric}_{stat}"));
        }
    }
    w.write_record(&header)?;
    for s in summaries {
        let mut row = vec![
            num(s.a),
            num(s.b),
            s.n.to_string(),
            s.criterion.to_string(),
            s.replicates.to_string(),
            num(s.mean_youden),
        ];
        for m in [&s.sensitivity, &s.specificity] {
            row.extend([m.mean, m.variance, m.q025, m.q25, m.median, m.q75, m.q975].map(num));
        }
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn write_indices_csv<T: Scalar>(path: &Path, rows: &[IndexVector<T>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["subject_id"];
    header.extend(IndexVector::<T>::NAMES);
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.subject_id.clone()];
        row.extend(r.values().map(num));
        w.write_record(&row)?;
    }
    finish(w, path)
}
