//! Percentile bootstrap for optimal cut-points.
//!
//! Each replicate resamples subjects with replacement, re-estimates the
//! threshold family on the resample (functional path), re-optimises the
//! criterion and records `ĉ_b` with its metrics. Confidence limits are
//! empirical quantiles of the replicate values. Replicate `b` draws from
//! stream `b` of the configured seed, so the summary is identical for any
//! thread count.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutpoint::{optimize, ClassCounter, Criterion, ScoredSample, SearchSpace};
use crate::error::{Error, Result};
use crate::quantile::{LabeledSample, QuantileCurve};
use crate::rng::substream;
use crate::scalar::{sort_scalars, Scalar};
use crate::threshold::{cutoff_curve, fit_functional, FitConfig};

/// Points of the fixed c-grid on which replicate sweep curves are compared.
pub const SWEEP_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Consecutive single-class resamples tolerated within one replicate.
    pub max_redraws: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            alpha: 0.05,
            seed: 0,
            max_redraws: 100,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("bootstrap needs at least one replicate".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Empirical `p`-quantile with linear interpolation between order statistics
/// at 1-based position `1 + (B − 1)·p`. NaN for empty input.
pub fn percentile<T: Scalar>(values: &[T], p: T) -> T {
    let mut sorted = values.to_vec();
    sort_scalars(&mut sorted);
    percentile_sorted(&sorted, p)
}

pub fn percentile_sorted<T: Scalar>(sorted: &[T], p: T) -> T {
    if sorted.is_empty() {
        return T::nan();
    }
    let p = p.max(T::zero()).min(T::one());
    let h = T::from_count(sorted.len() - 1) * p;
    let lo = h.floor().to_usize().unwrap_or(0).min(sorted.len() - 1);
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - T::from_count(lo);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Interval<T> {
    fn from_values(values: &[T], alpha: T) -> Self {
        let mut sorted = values.to_vec();
        sort_scalars(&mut sorted);
        let half = alpha / T::lit(2.0);
        Self {
            lower: percentile_sorted(&sorted, half),
            upper: percentile_sorted(&sorted, T::one() - half),
        }
    }

    pub fn contains(&self, x: T) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricCis<T> {
    pub sensitivity: Interval<T>,
    pub specificity: Interval<T>,
    pub youden: Interval<T>,
    pub auc: Interval<T>,
}

/// Pointwise band for the cut-off curve `μ*_b + ĉ_b·σ*_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CurveBand<T> {
    pub rho: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

/// Pointwise-in-c bands for the replicate sensitivity and specificity curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SweepBand<T> {
    pub c: Vec<T>,
    pub sens_lo: Vec<T>,
    pub sens_hi: Vec<T>,
    pub spec_lo: Vec<T>,
    pub spec_hi: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BootstrapSummary<T> {
    pub criterion: Criterion,
    /// Point estimate on the original sample.
    pub c_hat: T,
    pub ci: Interval<T>,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub redraws: usize,
    pub metric_cis: MetricCis<T>,
    pub c_hats: Vec<T>,
    #[serde(skip)]
    pub curve_band: Option<CurveBand<T>>,
    #[serde(skip)]
    pub sweep_band: SweepBand<T>,
}

struct Replicate<T> {
    c_hat: T,
    sensitivity: T,
    specificity: T,
    youden: T,
    auc: T,
    curve: Option<Vec<T>>,
    sweep_sens: Vec<T>,
    sweep_spec: Vec<T>,
    redraws: usize,
}

fn reference_grid<T: Scalar>(scores: &[T]) -> Vec<T> {
    let lo = scores.iter().copied().fold(T::infinity(), T::min);
    let hi = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let step = (hi - lo) / T::from_count(SWEEP_GRID_POINTS - 1);
    (0..SWEEP_GRID_POINTS).map(|i| lo + step * T::from_count(i)).collect()
}

fn require_both_classes(labels: &[bool]) -> Result<()> {
    let cases = labels.iter().filter(|&&z| z).count();
    if cases == 0 || cases == labels.len() {
        return Err(Error::BootstrapInfeasible(format!(
            "sample has {cases} cases and {} controls",
            labels.len() - cases
        )));
    }
    Ok(())
}

/// Draws `n` indices with replacement until both classes are present.
fn resample_indices(labels: &[bool], seed: u64, b: usize, max_redraws: usize) -> Result<(Vec<usize>, usize)> {
    let n = labels.len();
    let mut rng = substream(seed, b as u64);
    let mut redraws = 0;
    loop {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let cases = idx.iter().filter(|&&i| labels[i]).count();
        if cases > 0 && cases < n {
            return Ok((idx, redraws));
        }
        redraws += 1;
        if redraws > max_redraws {
            return Err(Error::BootstrapInfeasible(format!(
                "class too rare ({redraws} consecutive single-class resamples)"
            )));
        }
    }
}

fn sweep_on_grid<T: Scalar>(scored: &ScoredSample<T>, grid: &[T]) -> (Vec<T>, Vec<T>) {
    let counter = ClassCounter::new(scored);
    grid.iter()
        .map(|&c| {
            let m = counter.confusion(c);
            (m.sensitivity, m.specificity)
        })
        .unzip()
}

fn summarise<T: Scalar>(
    criterion: Criterion,
    c_hat: T,
    cfg: &BootstrapConfig,
    grid: Vec<T>,
    rho: Option<&[T]>,
    reps: Vec<Replicate<T>>,
) -> BootstrapSummary<T> {
    let alpha = T::lit(cfg.alpha);
    let column = |f: &dyn Fn(&Replicate<T>) -> T| -> Vec<T> { reps.iter().map(f).collect() };
    let c_hats = column(&|r| r.c_hat);
    let metric_cis = MetricCis {
        sensitivity: Interval::from_values(&column(&|r| r.sensitivity), alpha),
        specificity: Interval::from_values(&column(&|r| r.specificity), alpha),
        youden: Interval::from_values(&column(&|r| r.youden), alpha),
        auc: Interval::from_values(&column(&|r| r.auc), alpha),
    };
    let pointwise = |k: usize, f: &dyn Fn(&Replicate<T>, usize) -> T| -> Interval<T> {
        let v: Vec<T> = reps.iter().map(|r| f(r, k)).collect();
        Interval::from_values(&v, alpha)
    };
    let curve_band = rho.map(|rho| {
        let (lower, upper) = (0..rho.len())
            .map(|k| {
                let iv = pointwise(k, &|r, k| r.curve.as_ref().expect("functional replicate")[k]);
                (iv.lower, iv.upper)
            })
            .unzip();
        CurveBand {
            rho: rho.to_vec(),
            lower,
            upper,
        }
    });
    let mut sweep_band = SweepBand {
        c: Vec::with_capacity(grid.len()),
        sens_lo: Vec::with_capacity(grid.len()),
        sens_hi: Vec::with_capacity(grid.len()),
        spec_lo: Vec::with_capacity(grid.len()),
        spec_hi: Vec::with_capacity(grid.len()),
    };
    for (k, &c) in grid.iter().enumerate() {
        let sens = pointwise(k, &|r, k| r.sweep_sens[k]);
        let spec = pointwise(k, &|r, k| r.sweep_spec[k]);
        sweep_band.c.push(c);
        sweep_band.sens_lo.push(sens.lower);
        sweep_band.sens_hi.push(sens.upper);
        sweep_band.spec_lo.push(spec.lower);
        sweep_band.spec_hi.push(spec.upper);
    }
    BootstrapSummary {
        criterion,
        c_hat,
        ci: Interval::from_values(&c_hats, alpha),
        replicates: cfg.replicates,
        alpha: cfg.alpha,
        seed: cfg.seed,
        redraws: reps.iter().map(|r| r.redraws).sum(),
        metric_cis,
        c_hats,
        curve_band,
        sweep_band,
    }
}

/// Bootstrap over labelled quantile curves, re-estimating the threshold
/// family inside every replicate.
pub fn bootstrap_cutpoint<T: Scalar>(
    sample: &LabeledSample<T>,
    fit: &FitConfig<T>,
    cfg: &BootstrapConfig,
) -> Result<BootstrapSummary<T>> {
    cfg.validate()?;
    require_both_classes(sample.labels())?;
    let point = fit_functional(sample, fit)?;
    let grid = reference_grid(&point.margins.margins);
    let reps: Vec<Replicate<T>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let (idx, redraws) = resample_indices(sample.labels(), cfg.seed, b, cfg.max_redraws)?;
            let curves: Vec<QuantileCurve<T>> = idx.iter().map(|&i| sample.curves()[i].clone()).collect();
            let labels: Vec<bool> = idx.iter().map(|&i| sample.labels()[i]).collect();
            let resample = LabeledSample::new(Arc::clone(sample.grid()), curves, labels)?;
            let rep = fit_functional(&resample, fit)?;
            let scored = ScoredSample::new(rep.margins.margins.clone(), resample.labels().to_vec())?;
            let (sweep_sens, sweep_spec) = sweep_on_grid(&scored, &grid);
            Ok(Replicate {
                c_hat: rep.result.c_hat,
                sensitivity: rep.result.sensitivity,
                specificity: rep.result.specificity,
                youden: rep.result.youden,
                auc: rep.result.auc,
                curve: Some(cutoff_curve(&rep.family, rep.result.c_hat)),
                sweep_sens,
                sweep_spec,
                redraws,
            })
        })
        .collect::<Result<_>>()?;
    Ok(summarise(
        fit.criterion,
        point.result.c_hat,
        cfg,
        grid,
        Some(sample.grid().points()),
        reps,
    ))
}

/// Bootstrap over fixed per-subject scores.
pub fn bootstrap_scalar<T: Scalar>(
    sample: &ScoredSample<T>,
    criterion: Criterion,
    search: &SearchSpace<T>,
    cfg: &BootstrapConfig,
) -> Result<BootstrapSummary<T>> {
    cfg.validate()?;
    require_both_classes(sample.labels())?;
    let point = optimize(sample, criterion, search)?;
    let grid = reference_grid(sample.scores());
    let reps: Vec<Replicate<T>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let (idx, redraws) = resample_indices(sample.labels(), cfg.seed, b, cfg.max_redraws)?;
            let resample = sample.select(&idx);
            let r = optimize(&resample, criterion, search)?;
            let (sweep_sens, sweep_spec) = sweep_on_grid(&resample, &grid);
            Ok(Replicate {
                c_hat: r.c_hat,
                sensitivity: r.sensitivity,
                specificity: r.specificity,
                youden: r.youden,
                auc: r.auc,
                curve: None,
                sweep_sens,
                sweep_spec,
                redraws,
            })
        })
        .collect::<Result<_>>()?;
    Ok(summarise(criterion, point.c_hat, cfg, grid, None, reps))
}
