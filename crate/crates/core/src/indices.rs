//! Conventional CGM summary indices (MG, SD, CV, IQR, MAGE, CONGA, AUC, TAR).
//!
//! MAGE and CONGA follow the classic conventions: MAGE averages ascending and
//! descending swings between alternating interior extrema that exceed one
//! sample SD; CONGA is the sample SD of `G(t) − G(t − horizon)` with the lagged
//! sample matched within half the nominal sampling interval.

use serde::{Deserialize, Serialize};

use crate::cgm::SubjectSeries;
use crate::error::{Error, Result};
use crate::quantile::quantile_sorted;
use crate::scalar::{sort_scalars, Scalar};

/// Label written alongside index outputs.
pub const CONVENTION: &str = "classic";

/// Time-stamped glucose values for one subject, times in minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct GlucoseTrace<T> {
    pub minutes: Vec<T>,
    pub glucose: Vec<T>,
    pub nominal_interval: T,
    /// Gaps longer than this split the trace into separate segments for the AUC.
    pub segment_break: T,
}

impl<T: Scalar> GlucoseTrace<T> {
    pub fn new(minutes: Vec<T>, glucose: Vec<T>, nominal_interval: T) -> Result<Self> {
        if minutes.len() != glucose.len() {
            return Err(Error::LengthMismatch {
                expected: minutes.len(),
                found: glucose.len(),
            });
        }
        if minutes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("trace times must be strictly increasing".into()));
        }
        Ok(Self {
            minutes,
            glucose,
            nominal_interval,
            segment_break: T::lit(120.0),
        })
    }

    /// Evenly spaced trace starting at minute zero.
    pub fn regular(glucose: Vec<T>, interval_minutes: T) -> Self {
        let minutes = (0..glucose.len()).map(|i| T::from_count(i) * interval_minutes).collect();
        Self {
            minutes,
            glucose,
            nominal_interval: interval_minutes,
            segment_break: T::lit(120.0),
        }
    }

    pub fn from_series(series: &SubjectSeries) -> Self {
        let (minutes, glucose) = series.minutes_and_values();
        Self {
            minutes,
            glucose,
            nominal_interval: T::lit(series.nominal_interval_minutes),
            segment_break: T::lit(120.0),
        }
    }

    pub fn len(&self) -> usize {
        self.glucose.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glucose.is_empty()
    }

    pub fn shifted(&self, k: T) -> Self {
        Self {
            glucose: self.glucose.iter().map(|&g| g + k).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexConfig<T> {
    /// TAR counts `x ≥ θ` when true, `x > θ` otherwise.
    pub tar_inclusive: bool,
    pub conga_horizon_hours: T,
}

impl<T: Scalar> Default for IndexConfig<T> {
    fn default() -> Self {
        Self {
            tar_inclusive: true,
            conga_horizon_hours: T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BasicIndices<T> {
    pub mg: T,
    pub sd: T,
    pub cv: T,
    pub iqr: T,
    pub tar140: T,
    pub tar180: T,
    pub auc_index: T,
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::from_count(xs.len())
}

/// Sample standard deviation (`n − 1`); needs at least two values.
fn sample_sd<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    let ss: T = xs.iter().map(|&x| (x - m).powi(2)).sum();
    (ss / T::from_count(xs.len() - 1)).sqrt()
}

/// Trapezoidal time-weighted mean over segments split at long gaps.
fn time_weighted_mean<T: Scalar>(trace: &GlucoseTrace<T>) -> T {
    let half = T::lit(0.5);
    let (mut area, mut duration) = (T::zero(), T::zero());
    for i in 1..trace.len() {
        let dt = trace.minutes[i] - trace.minutes[i - 1];
        if dt > trace.segment_break {
            continue;
        }
        area += (trace.glucose[i] + trace.glucose[i - 1]) * half * dt;
        duration += dt;
    }
    if duration > T::zero() {
        area / duration
    } else {
        mean(&trace.glucose)
    }
}

pub fn basic_indices<T: Scalar>(trace: &GlucoseTrace<T>, cfg: &IndexConfig<T>) -> Result<BasicIndices<T>> {
    if trace.len() < 2 {
        return Err(Error::InsufficientData(format!("{} records, need at least 2", trace.len())));
    }
    let g = &trace.glucose;
    let mg = mean(g);
    let sd = sample_sd(g);
    let cv = if mg > T::zero() { T::lit(100.0) * sd / mg } else { T::nan() };
    let mut sorted = g.clone();
    sort_scalars(&mut sorted);
    let iqr = quantile_sorted(&sorted, T::lit(0.75)) - quantile_sorted(&sorted, T::lit(0.25));
    let tar = |theta: f64| {
        let theta = T::lit(theta);
        let hits = g
            .iter()
            .filter(|&&x| if cfg.tar_inclusive { x >= theta } else { x > theta })
            .count();
        T::from_count(hits) / T::from_count(g.len())
    };
    Ok(BasicIndices {
        mg,
        sd,
        cv,
        iqr,
        tar140: tar(140.0),
        tar180: tar(180.0),
        auc_index: time_weighted_mean(trace),
    })
}

/// Mean amplitude of glycaemic excursions.
pub fn mage<T: Scalar>(trace: &GlucoseTrace<T>) -> Result<T> {
    let g = &trace.glucose;
    if g.len() < 3 {
        return Err(Error::InsufficientData(format!("MAGE needs at least 3 records, got {}", g.len())));
    }
    let sd = sample_sd(g);
    let mut levels = g.clone();
    levels.dedup();
    let extrema: Vec<T> = levels
        .windows(3)
        .filter(|w| (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2]))
        .map(|w| w[1])
        .collect();
    let swings: Vec<T> = extrema
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .filter(|&a| a > sd)
        .collect();
    Ok(if swings.is_empty() { T::zero() } else { mean(&swings) })
}

/// Continuous overall net glycaemic action at the given horizon.
pub fn conga<T: Scalar>(trace: &GlucoseTrace<T>, horizon_hours: T) -> Result<T> {
    let horizon = horizon_hours * T::lit(60.0);
    let tol = trace.nominal_interval * T::lit(0.5);
    let t = &trace.minutes;
    let mut diffs = Vec::new();
    for i in 0..t.len() {
        let target = t[i] - horizon;
        let j = t.partition_point(|&x| x < target);
        let nearest = [j.checked_sub(1), (j < t.len()).then_some(j)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                (t[a] - target)
                    .abs()
                    .partial_cmp(&(t[b] - target).abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        if let Some(j) = nearest {
            if j != i && (t[j] - target).abs() <= tol {
                diffs.push(trace.glucose[i] - trace.glucose[j]);
            }
        }
    }
    match diffs.len() {
        0 => Err(Error::InsufficientData("CONGA: no valid pairs".into())),
        1 => Err(Error::InsufficientData("CONGA: only one valid pair, SD undefined".into())),
        _ => Ok(sample_sd(&diffs)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct IndexVector<T> {
    pub subject_id: String,
    pub mg: T,
    pub sd: T,
    pub cv: T,
    pub iqr: T,
    pub mage: T,
    pub conga: T,
    pub auc_index: T,
    pub tar140: T,
    pub tar180: T,
}

impl<T: Scalar> IndexVector<T> {
    pub const NAMES: [&'static str; 9] = ["mg", "sd", "cv", "iqr", "mage", "conga", "auc_index", "tar140", "tar180"];

    pub fn compute(subject_id: &str, trace: &GlucoseTrace<T>, cfg: &IndexConfig<T>) -> Result<Self> {
        let b = basic_indices(trace, cfg)?;
        Ok(Self {
            subject_id: subject_id.to_string(),
            mg: b.mg,
            sd: b.sd,
            cv: b.cv,
            iqr: b.iqr,
            mage: mage(trace)?,
            conga: conga(trace, cfg.conga_horizon_hours)?,
            auc_index: b.auc_index,
            tar140: b.tar140,
            tar180: b.tar180,
        })
    }

    /// Values in [`Self::NAMES`] order.
    pub fn values(&self) -> [T; 9] {
        [
            self.mg,
            self.sd,
            self.cv,
            self.iqr,
            self.mage,
            self.conga,
            self.auc_index,
            self.tar140,
            self.tar180,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> IndexConfig<f64> {
        IndexConfig::default()
    }

    #[test]
    fn constant_series() {
        let t = GlucoseTrace::regular(vec![100.0; 30], 5.0);
        let b = basic_indices(&t, &cfg()).unwrap();
        assert_eq!((b.mg, b.sd, b.cv, b.iqr, b.tar140, b.auc_index), (100.0, 0.0, 0.0, 0.0, 0.0, 100.0));
        assert_eq!(mage(&t).unwrap(), 0.0);
        assert_eq!(conga(&t, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn two_point_series() {
        let t = GlucoseTrace::regular(vec![100.0, 200.0], 5.0);
        let b = basic_indices(&t, &cfg()).unwrap();
        assert_eq!((b.mg, b.tar180, b.auc_index), (150.0, 0.5, 150.0));
        let hypo = GlucoseTrace::regular(vec![54.0, 54.0], 5.0);
        assert_eq!(basic_indices(&hypo, &cfg()).unwrap().tar140, 0.0);
    }

    #[test]
    fn tar_inclusivity() {
        let t = GlucoseTrace::regular(vec![180.0, 100.0], 5.0);
        assert_eq!(basic_indices(&t, &cfg()).unwrap().tar180, 0.5);
        let strict = IndexConfig { tar_inclusive: false, ..cfg() };
        assert_eq!(basic_indices(&t, &strict).unwrap().tar180, 0.0);
    }

    #[test]
    fn auc_skips_long_gaps() {
        let t = GlucoseTrace::new(vec![0.0, 5.0, 500.0, 505.0], vec![100.0, 100.0, 300.0, 300.0], 5.0).unwrap();
        assert_eq!(basic_indices(&t, &cfg()).unwrap().auc_index, 200.0);
    }

    #[test]
    fn mage_oscillation() {
        let t = GlucoseTrace::<f64>::regular(vec![100.0, 160.0, 100.0, 160.0, 100.0], 5.0);
        assert!((sample_sd(&t.glucose) - 32.863_353_450_309_97).abs() < 1e-9);
        assert_eq!(mage(&t).unwrap(), 60.0);
    }

    #[test]
    fn mage_monotone_and_plateaus() {
        let t = GlucoseTrace::regular((0..10).map(|i| 80.0 + 10.0 * i as f64).collect(), 5.0);
        assert_eq!(mage(&t).unwrap(), 0.0);
        let p = GlucoseTrace::regular(vec![100.0, 160.0, 160.0, 100.0, 100.0, 160.0, 100.0], 5.0);
        assert_eq!(mage(&p).unwrap(), 60.0);
        assert!(mage(&GlucoseTrace::regular(vec![1.0, 2.0], 5.0)).is_err());
    }

    #[test]
    fn conga_pairs_at_horizon() {
        let alt = GlucoseTrace::regular((0..20).map(|i| if i % 2 == 0 { 100.0 } else { 120.0 }).collect(), 30.0);
        assert_eq!(conga(&alt, 1.0).unwrap(), 0.0);
        let ramp = GlucoseTrace::regular((0..20).map(|i| 100.0 + 10.0 * i as f64).collect(), 30.0);
        assert_eq!(conga(&ramp, 1.0).unwrap(), 0.0);
        let short = GlucoseTrace::regular(vec![100.0, 110.0, 120.0], 5.0);
        assert!(conga(&short, 1.0).is_err());
    }

    #[test]
    fn conga_tolerates_jitter() {
        let minutes = vec![0.0, 31.0, 59.0, 92.0, 121.0];
        let t = GlucoseTrace::new(minutes, vec![100.0, 110.0, 120.0, 130.0, 140.0], 30.0).unwrap();
        // Pairs: 59↔0, 92↔31, 121↔59, each a rise of 20.
        assert_eq!(conga(&t, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn too_short_for_basic() {
        assert!(basic_indices(&GlucoseTrace::regular(vec![1.0], 5.0), &cfg()).is_err());
    }
}
