//! The threshold family `h_c(ρ) = μ(ρ) + c·σ(ρ)` and the reduction of a
//! functional classification to a scalar margin per subject.
//!
//! A curve `Y` lies on or above `h_c` at every grid point exactly when
//! `c ≤ min_k (Y(ρ_k) − μ(ρ_k)) / σ(ρ_k)`, so the margin `c*` carries all the
//! information the cut-point search needs.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cutpoint::{optimize, Criterion, CutpointResult, ScoredSample, SearchSpace};
use crate::error::{Error, Result};
use crate::quantile::{LabeledSample, ProbabilityGrid, QuantileCurve};
use crate::scalar::{sort_scalars, Scalar};

/// Lower bound applied to an estimated scale curve.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Centrality {
    /// Mean over every subject (cases and controls).
    PooledMean,
    /// Mean over one diagnostic group; `true` selects cases.
    GroupMean(bool),
    /// Pointwise median; lower middle value for an even count.
    PointwiseMedian,
}

impl fmt::Display for Centrality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Centrality::PooledMean => "pooled-mean",
            Centrality::GroupMean(true) => "group-mean-cases",
            Centrality::GroupMean(false) => "group-mean-controls",
            Centrality::PointwiseMedian => "pointwise-median",
        })
    }
}

impl FromStr for Centrality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled-mean" | "pooled" => Ok(Centrality::PooledMean),
            "group-mean-cases" | "cases" => Ok(Centrality::GroupMean(true)),
            "group-mean-controls" | "controls" => Ok(Centrality::GroupMean(false)),
            "pointwise-median" | "median" => Ok(Centrality::PointwiseMedian),
            other => Err(Error::InvalidArgument(format!("unknown centrality `{other}`"))),
        }
    }
}

impl From<Centrality> for String {
    fn from(c: Centrality) -> Self {
        c.to_string()
    }
}

impl TryFrom<String> for Centrality {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    /// `σ ≡ 1`.
    #[default]
    Unit,
    /// Pointwise sample standard deviation of the pooled curves, floored at [`SIGMA_FLOOR`].
    PointwiseSd,
}

impl FromStr for ScaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(ScaleMode::Unit),
            "pointwise-sd" | "sd" => Ok(ScaleMode::PointwiseSd),
            other => Err(Error::InvalidArgument(format!("unknown scale mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdFamily<T> {
    grid: Arc<ProbabilityGrid<T>>,
    mu: Vec<T>,
    sigma: Vec<T>,
}

impl<T: Scalar> ThresholdFamily<T> {
    pub fn new(grid: Arc<ProbabilityGrid<T>>, mu: Vec<T>, sigma: Vec<T>) -> Result<Self> {
        for v in [&mu, &sigma] {
            if v.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    found: v.len(),
                });
            }
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("mu must be finite".into()));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > T::zero())) {
            return Err(Error::InvalidArgument("sigma must be finite and positive".into()));
        }
        Ok(Self { grid, mu, sigma })
    }

    /// Family with `σ ≡ 1`.
    pub fn unit_scale(grid: Arc<ProbabilityGrid<T>>, mu: Vec<T>) -> Result<Self> {
        let sigma = vec![T::one(); mu.len()];
        Self::new(grid, mu, sigma)
    }

    pub fn grid(&self) -> &Arc<ProbabilityGrid<T>> {
        &self.grid
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    /// Replaces `μ` by `μ + k`.
    pub fn shifted(&self, k: T) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            mu: self.mu.iter().map(|&m| m + k).collect(),
            sigma: self.sigma.clone(),
        }
    }
}

/// Estimates `μ` (and `σ`) from raw value rows sharing one grid.
pub fn family_from_rows<T: Scalar>(
    grid: &Arc<ProbabilityGrid<T>>,
    rows: &[&[T]],
    labels: &[bool],
    centrality: Centrality,
    scale: ScaleMode,
) -> Result<ThresholdFamily<T>> {
    let m = grid.len();
    if rows.is_empty() {
        return Err(Error::InsufficientData("cannot estimate a centrality curve from zero curves".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::GridMismatch(format!("row of length {} on a grid of {m} points", r.len())));
    }
    let mu = match centrality {
        Centrality::PooledMean => pointwise_mean(rows.iter().copied(), m),
        Centrality::GroupMean(group) => {
            if labels.len() != rows.len() {
                return Err(Error::LengthMismatch {
                    expected: rows.len(),
                    found: labels.len(),
                });
            }
            let selected: Vec<&[T]> = rows
                .iter()
                .zip(labels)
                .filter(|(_, &z)| z == group)
                .map(|(r, _)| *r)
                .collect();
            if selected.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "no {} to estimate the group mean",
                    if group { "cases" } else { "controls" }
                )));
            }
            pointwise_mean(selected.into_iter(), m)
        }
        Centrality::PointwiseMedian => {
            let mut column = Vec::with_capacity(rows.len());
            (0..m)
                .map(|k| {
                    column.clear();
                    column.extend(rows.iter().map(|r| r[k]));
                    sort_scalars(&mut column);
                    column[(column.len() - 1) / 2]
                })
                .collect()
        }
    };
    let sigma = match scale {
        ScaleMode::Unit => vec![T::one(); m],
        ScaleMode::PointwiseSd => pointwise_sd(rows, m),
    };
    ThresholdFamily::new(Arc::clone(grid), mu, sigma)
}

fn pointwise_mean<'a, T: Scalar>(rows: impl Iterator<Item = &'a [T]>, m: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); m];
    let mut n = 0usize;
    for r in rows {
        acc.iter_mut().zip(r).for_each(|(a, &v)| *a += v);
        n += 1;
    }
    let nf = T::from_count(n);
    acc.iter_mut().for_each(|a| *a /= nf);
    acc
}

fn pointwise_sd<T: Scalar>(rows: &[&[T]], m: usize) -> Vec<T> {
    let floor = T::lit(SIGMA_FLOOR);
    if rows.len() < 2 {
        return vec![floor; m];
    }
    let mean = pointwise_mean(rows.iter().copied(), m);
    let denom = T::from_count(rows.len() - 1);
    (0..m)
        .map(|k| {
            let ss: T = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum();
            (ss / denom).sqrt().max(floor)
        })
        .collect()
}

/// Estimates the threshold family from a labelled sample.
pub fn estimate_family<T: Scalar>(
    sample: &LabeledSample<T>,
    centrality: Centrality,
    scale: ScaleMode,
) -> Result<ThresholdFamily<T>> {
    let rows: Vec<&[T]> = sample.curves().iter().map(|c| c.values()).collect();
    family_from_rows(sample.grid(), &rows, sample.labels(), centrality, scale)
}

/// `min_k (Y(ρ_k) − μ(ρ_k)) / σ(ρ_k)`: the largest `c` for which the curve is
/// on or above `h_c` at every grid point.
pub fn margin_of_values<T: Scalar>(values: &[T], family: &ThresholdFamily<T>) -> T {
    values
        .iter()
        .zip(&family.mu)
        .zip(&family.sigma)
        .map(|((&y, &m), &s)| (y - m) / s)
        .fold(T::infinity(), T::min)
}

pub fn margin<T: Scalar>(curve: &QuantileCurve<T>, family: &ThresholdFamily<T>) -> Result<T> {
    if **curve.grid() != *family.grid {
        return Err(Error::GridMismatch(format!(
            "curve {} is not on the family grid",
            curve.subject_id()
        )));
    }
    Ok(margin_of_values(curve.values(), family))
}

/// Per-subject margins in input order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct MarginVector<T> {
    pub ids: Vec<String>,
    pub margins: Vec<T>,
}

impl<T: Scalar> MarginVector<T> {
    pub fn from_curves(curves: &[QuantileCurve<T>], family: &ThresholdFamily<T>) -> Result<Self> {
        let margins = curves.iter().map(|c| margin(c, family)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ids: curves.iter().map(|c| c.subject_id().to_string()).collect(),
            margins,
        })
    }

    pub fn len(&self) -> usize {
        self.margins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.margins.is_empty()
    }
}

/// Predicted-positive iff `margin ≥ c`.
pub fn predict<T: Scalar>(margin: T, c: T) -> bool {
    margin >= c
}

pub fn classify<T: Scalar>(margins: &MarginVector<T>, c: T) -> Vec<bool> {
    margins.margins.iter().map(|&m| predict(m, c)).collect()
}

/// `h_c(ρ) = μ(ρ) + c·σ(ρ)` on the family grid.
pub fn cutoff_curve<T: Scalar>(family: &ThresholdFamily<T>, c: T) -> Vec<T> {
    family.mu.iter().zip(&family.sigma).map(|(&m, &s)| m + c * s).collect()
}

/// Holds out part of the sample for estimating the family, scoring the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of subjects used to estimate `μ`/`σ`, in `(0, 1)`.
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig<T> {
    pub criterion: Criterion,
    pub centrality: Centrality,
    pub scale: ScaleMode,
    pub search: SearchSpace<T>,
    pub split: Option<SplitSpec>,
}

impl<T: Scalar> FitConfig<T> {
    pub fn new(criterion: Criterion) -> Self {
        Self {
            criterion,
            centrality: Centrality::PooledMean,
            scale: ScaleMode::Unit,
            search: SearchSpace::Exact,
            split: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FunctionalFit<T> {
    pub family: ThresholdFamily<T>,
    pub margins: MarginVector<T>,
    pub result: CutpointResult<T>,
    /// Indices of the subjects the cut-point was optimised over.
    pub scored: Vec<usize>,
}

/// Estimates the family, computes margins and optimises the cut-point.
pub fn fit_functional<T: Scalar>(sample: &LabeledSample<T>, cfg: &FitConfig<T>) -> Result<FunctionalFit<T>> {
    let n = sample.len();
    let (estimation, scored): (Vec<usize>, Vec<usize>) = match cfg.split {
        None => ((0..n).collect(), (0..n).collect()),
        Some(split) => split_indices(n, split)?,
    };
    let rows: Vec<&[T]> = estimation.iter().map(|&i| sample.curves()[i].values()).collect();
    let labels: Vec<bool> = estimation.iter().map(|&i| sample.labels()[i]).collect();
    let family = family_from_rows(sample.grid(), &rows, &labels, cfg.centrality, cfg.scale)?;
    let margins = MarginVector::from_curves(sample.curves(), &family)?;
    let scores = ScoredSample::new(
        scored.iter().map(|&i| margins.margins[i]).collect(),
        scored.iter().map(|&i| sample.labels()[i]).collect(),
    )?;
    let result = optimize(&scores, cfg.criterion, &cfg.search)?;
    Ok(FunctionalFit {
        family,
        margins,
        result,
        scored,
    })
}

fn split_indices(n: usize, split: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(split.fraction > 0.0 && split.fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {} outside (0, 1)",
            split.fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split.seed));
    let cut = ((split.fraction * n as f64).ceil() as usize).clamp(1, n);
    if cut == n {
        return Err(Error::InsufficientData("split leaves no subjects to score".into()));
    }
    let scored = idx.split_off(cut);
    Ok((idx, scored))
}

/// Everything needed to apply a fitted cut-off to a new cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FrozenCutoff<T> {
    pub grid: Vec<T>,
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
    pub c_hat: T,
    pub criterion: Criterion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothed_curve: Option<Vec<T>>,
}

impl<T: Scalar> FrozenCutoff<T> {
    pub fn from_family(family: &ThresholdFamily<T>, c_hat: T, criterion: Criterion) -> Self {
        Self {
            grid: family.grid.points().to_vec(),
            mu: family.mu.clone(),
            sigma: family.sigma.clone(),
            c_hat,
            criterion,
            smoothed_curve: None,
        }
    }

    pub fn family(&self) -> Result<ThresholdFamily<T>> {
        let grid = Arc::new(ProbabilityGrid::new(self.grid.clone())?);
        ThresholdFamily::new(grid, self.mu.clone(), self.sigma.clone())
    }

    /// Errors unless `grid` matches the frozen grid point for point.
    pub fn check_grid(&self, grid: &ProbabilityGrid<T>) -> Result<()> {
        let tol = T::lit(1e-12);
        let same = grid.len() == self.grid.len()
            && grid.points().iter().zip(&self.grid).all(|(&a, &b)| (a - b).abs() <= tol);
        if same {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "cut-off uses {} grid points, curves use {}",
                self.grid.len(),
                grid.len()
            )))
        }
    }

    /// Margins of `curves` against the frozen family and predictions at `c_hat`.
    pub fn apply(&self, curves: &[QuantileCurve<T>]) -> Result<(MarginVector<T>, Vec<bool>)> {
        let family = self.family()?;
        if let Some(c) = curves.first() {
            self.check_grid(c.grid())?;
        }
        let rebased: Vec<QuantileCurve<T>> = curves
            .iter()
            .map(|c| QuantileCurve::new(c.subject_id(), Arc::clone(family.grid()), c.values().to_vec()))
            .collect::<Result<_>>()?;
        let margins = MarginVector::from_curves(&rebased, &family)?;
        let preds = classify(&margins, self.c_hat);
        Ok((margins, preds))
    }
}
