//! Distributional representation of a subject's observations: empirical CDF,
//! left-continuous empirical quantile function on a shared probability grid,
//! and time-in-range fractions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sort_scalars, Scalar};

/// Device reporting range in mg/dL.
pub const GLUCOSE_MIN: f64 = 40.0;
pub const GLUCOSE_MAX: f64 = 400.0;

/// Strictly increasing probabilities in `(0, 1]`, shared by every curve of a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProbabilityGrid<T> {
    points: Vec<T>,
}

impl<T: Scalar> ProbabilityGrid<T> {
    pub fn new(points: Vec<T>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("grid has no points".into()));
        }
        for (k, &p) in points.iter().enumerate() {
            if !(p > T::zero() && p <= T::one()) {
                return Err(Error::InvalidGrid(format!("point {k} = {p} outside (0, 1]")));
            }
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("points not strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// Interior equispaced grid `ρ_k = k / (m + 1)`, `k = 1..=m`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidGrid("grid size must be positive".into()));
        }
        let denom = T::from_count(m + 1);
        Self::new((1..=m).map(|k| T::from_count(k) / denom).collect())
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A subject's empirical quantile function sampled on a [`ProbabilityGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCurve<T> {
    subject_id: String,
    grid: Arc<ProbabilityGrid<T>>,
    values: Vec<T>,
}

impl<T: Scalar> QuantileCurve<T> {
    /// Builds a curve, rejecting non-finite or decreasing values.
    pub fn new(subject_id: impl Into<String>, grid: Arc<ProbabilityGrid<T>>, values: Vec<T>) -> Result<Self> {
        let subject_id = subject_id.into();
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::NotMonotone(subject_id));
        }
        Ok(Self {
            subject_id,
            grid,
            values,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn grid(&self) -> &Arc<ProbabilityGrid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Adds `k` to every value.
    pub fn shifted(&self, k: T) -> Self {
        Self {
            subject_id: self.subject_id.clone(),
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| v + k).collect(),
        }
    }
}

/// Fraction of `sorted` observations `≤ t`.
pub fn ecdf<T: Scalar>(sorted: &[T], t: T) -> T {
    let count = sorted.partition_point(|&x| x <= t);
    T::from_count(count) / T::from_count(sorted.len())
}

/// Left-continuous inverse of the empirical CDF of already sorted data:
/// the smallest observation `t` with `#{x ≤ t} / n ≥ ρ`.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], rho: T) -> T {
    let n = sorted.len();
    debug_assert!(n > 0);
    let nf = T::from_count(n);
    // k = ceil(ρ n), then nudged so that k/n ≥ ρ holds in the scalar's own arithmetic.
    let mut k = (rho * nf).ceil().to_usize().unwrap_or(1).clamp(1, n);
    while k > 1 && T::from_count(k - 1) / nf >= rho {
        k -= 1;
    }
    while k < n && T::from_count(k) / nf < rho {
        k += 1;
    }
    sorted[k - 1]
}

/// Empirical quantile function of `observations` evaluated on `grid`.
pub fn empirical_quantile<T: Scalar>(
    subject_id: &str,
    observations: &[T],
    grid: &Arc<ProbabilityGrid<T>>,
) -> Result<QuantileCurve<T>> {
    if observations.is_empty() {
        return Err(Error::NoData(subject_id.to_string()));
    }
    if observations.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite observation for subject {subject_id}")));
    }
    let mut sorted = observations.to_vec();
    sort_scalars(&mut sorted);
    let values = grid.points().iter().map(|&rho| quantile_sorted(&sorted, rho)).collect();
    QuantileCurve::new(subject_id, Arc::clone(grid), values)
}

/// Fraction of samples with `lo ≤ x < hi`.
pub fn time_in_range<T: Scalar>(observations: &[T], lo: T, hi: T) -> Result<T> {
    if lo >= hi {
        return Err(Error::InvalidArgument(format!("empty range [{lo}, {hi})")));
    }
    fraction(observations, |x| x >= lo && x < hi)
}

/// Fraction of samples below `threshold`; `inclusive` switches `<` to `≤`
/// (the hypoglycaemia variant counts `x ≤ 54`).
pub fn time_below<T: Scalar>(observations: &[T], threshold: T, inclusive: bool) -> Result<T> {
    fraction(observations, |x| if inclusive { x <= threshold } else { x < threshold })
}

/// Fraction of samples above `threshold`; `inclusive` switches `>` to `≥`.
pub fn time_above<T: Scalar>(observations: &[T], threshold: T, inclusive: bool) -> Result<T> {
    fraction(observations, |x| if inclusive { x >= threshold } else { x > threshold })
}

fn fraction<T: Scalar>(observations: &[T], pred: impl Fn(T) -> bool) -> Result<T> {
    if observations.is_empty() {
        return Err(Error::InsufficientData("no observations".into()));
    }
    let hits = observations.iter().filter(|&&x| pred(x)).count();
    Ok(T::from_count(hits) / T::from_count(observations.len()))
}

/// Sampled glucose density for plotting.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct DensityPlot<T> {
    pub glucose: Vec<T>,
    pub density: Vec<T>,
}

/// Gaussian kernel density of a quantile curve over the device range,
/// evaluated at 361 points (1 mg/dL spacing) and normalised so its
/// trapezoid integral is one. Treats the curve values as an equally
/// weighted sample.
pub fn density_plot_data<T: Scalar>(curve: &QuantileCurve<T>, bandwidth: T) -> Result<DensityPlot<T>> {
    if !(bandwidth > T::zero()) {
        return Err(Error::InvalidArgument("bandwidth must be positive".into()));
    }
    const POINTS: usize = 361;
    let lo = T::lit(GLUCOSE_MIN);
    let step = (T::lit(GLUCOSE_MAX) - lo) / T::from_count(POINTS - 1);
    let glucose: Vec<T> = (0..POINTS).map(|i| lo + step * T::from_count(i)).collect();
    let norm = T::one() / (T::lit((2.0 * std::f64::consts::PI).sqrt()) * bandwidth);
    let half = T::lit(0.5);
    let mut density: Vec<T> = glucose
        .iter()
        .map(|&x| {
            let s: T = curve
                .values()
                .iter()
                .map(|&v| {
                    let z = (x - v) / bandwidth;
                    (-half * z * z).exp()
                })
                .sum();
            s * norm / T::from_count(curve.values().len())
        })
        .collect();
    let area = trapezoid(&density, step);
    if area > T::zero() {
        density.iter_mut().for_each(|d| *d /= area);
    }
    Ok(DensityPlot { glucose, density })
}

pub(crate) fn trapezoid<T: Scalar>(ys: &[T], step: T) -> T {
    if ys.len() < 2 {
        return T::zero();
    }
    let half = T::lit(0.5);
    ys.windows(2).map(|w| (w[0] + w[1]) * half * step).sum()
}

/// Quantile curves with binary disease labels (`true` = case) on one grid.
#[derive(Debug, Clone)]
pub struct LabeledSample<T> {
    grid: Arc<ProbabilityGrid<T>>,
    curves: Vec<QuantileCurve<T>>,
    labels: Vec<bool>,
}

impl<T: Scalar> LabeledSample<T> {
    pub fn new(grid: Arc<ProbabilityGrid<T>>, curves: Vec<QuantileCurve<T>>, labels: Vec<bool>) -> Result<Self> {
        if curves.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: curves.len(),
                found: labels.len(),
            });
        }
        if let Some(c) = curves.iter().find(|c| **c.grid() != *grid) {
            return Err(Error::GridMismatch(format!("curve {} uses a different grid", c.subject_id())));
        }
        Ok(Self { grid, curves, labels })
    }

    pub fn grid(&self) -> &Arc<ProbabilityGrid<T>> {
        &self.grid
    }

    pub fn curves(&self) -> &[QuantileCurve<T>] {
        &self.curves
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn n_cases(&self) -> usize {
        self.labels.iter().filter(|&&z| z).count()
    }
}
