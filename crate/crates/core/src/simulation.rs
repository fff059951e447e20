//! Synthetic distributional data and the replicate study built on it.
//!
//! Subject curves follow
//! `Q(ρ) = a·Z + U₁ + U₂·v + (5 + b)·Z·U₃·Q₀(ρ)` with `Z ~ Ber(0.5)`,
//! `U₁, U₂ ~ U(−1, 1)`, `U₃ ~ U(0.8, 1.2)` and `Q₀` the quantile function of a
//! truncated normal. Control curves (`Z = 0`) are constant under this formula.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::percentile;
use crate::cutpoint::{optimize, Criterion, ScoredSample, SearchSpace};
use crate::error::{Error, Result};
use crate::quantile::{LabeledSample, ProbabilityGrid, QuantileCurve};
use crate::rng::{cell_stream, substream, StreamRng};
use crate::scalar::Scalar;
use crate::special::{norm_cdf, norm_inv};
use crate::threshold::{family_from_rows, margin_of_values, Centrality, ScaleMode};

/// Inverse standard normal CDF.
pub fn norm_quantile<T: Scalar>(p: T) -> Result<T> {
    norm_inv(p.as_f64()).map(T::lit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TruncNormal<T> {
    pub mean: T,
    pub sd: T,
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Default for TruncNormal<T> {
    fn default() -> Self {
        Self {
            mean: T::one(),
            sd: T::one(),
            lower: T::lit(-5.0),
            upper: T::lit(5.0),
        }
    }
}

impl<T: Scalar> TruncNormal<T> {
    pub fn new(mean: T, sd: T, lower: T, upper: T) -> Result<Self> {
        if !(sd > T::zero()) || !(lower < upper) {
            return Err(Error::InvalidArgument(format!(
                "truncated normal needs sd > 0 and lower < upper (sd={sd}, [{lower}, {upper}])"
            )));
        }
        Ok(Self { mean, sd, lower, upper })
    }

    fn standard_bounds(&self) -> (f64, f64) {
        let (m, s) = (self.mean.as_f64(), self.sd.as_f64());
        ((self.lower.as_f64() - m) / s, (self.upper.as_f64() - m) / s)
    }

    pub fn cdf(&self, x: T) -> T {
        if x <= self.lower {
            return T::zero();
        }
        if x >= self.upper {
            return T::one();
        }
        let (alpha, beta) = self.standard_bounds();
        let z = (x.as_f64() - self.mean.as_f64()) / self.sd.as_f64();
        let (fa, fb) = (norm_cdf(alpha), norm_cdf(beta));
        T::lit((norm_cdf(z) - fa) / (fb - fa))
    }

    /// `μ + σ·Φ⁻¹(Φ(α) + p·(Φ(β) − Φ(α)))`; the endpoints map to the bounds.
    pub fn quantile(&self, p: T) -> Result<T> {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
        if p == T::zero() {
            return Ok(self.lower);
        }
        if p == T::one() {
            return Ok(self.upper);
        }
        let (alpha, beta) = self.standard_bounds();
        let (fa, fb) = (norm_cdf(alpha), norm_cdf(beta));
        let target = fa + p.as_f64() * (fb - fa);
        let x = self.mean.as_f64() + self.sd.as_f64() * norm_inv(target)?;
        Ok(T::lit(x).max(self.lower).min(self.upper))
    }
}

/// How `U₂·v` enters the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum U2Mode {
    /// Constant offset `U₂·v`, as written in the generating formula.
    #[default]
    Literal,
    /// `U₂·v·ρ`, giving control curves a slope.
    RhoScaled,
}

impl std::str::FromStr for U2Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(U2Mode::Literal),
            "rho-scaled" => Ok(U2Mode::RhoScaled),
            other => Err(Error::InvalidArgument(format!("unknown u2 mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DgpParams<T> {
    pub a: T,
    pub b: T,
    pub v: T,
    pub n: usize,
    pub grid: Arc<ProbabilityGrid<T>>,
    pub seed: u64,
    pub u2_mode: U2Mode,
    pub base: TruncNormal<T>,
}

impl<T: Scalar> DgpParams<T> {
    pub fn new(a: T, b: T, n: usize, grid: Arc<ProbabilityGrid<T>>, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("sample size must be at least 2, got {n}")));
        }
        if !(a >= T::zero() && b >= T::zero()) {
            return Err(Error::InvalidArgument("separations a and b must be nonnegative".into()));
        }
        Ok(Self {
            a,
            b,
            v: T::lit(2.0),
            n,
            grid,
            seed,
            u2_mode: U2Mode::Literal,
            base: TruncNormal::default(),
        })
    }

    /// `Q₀` on the grid.
    pub fn base_quantiles(&self) -> Result<Vec<T>> {
        self.grid.points().iter().map(|&p| self.base.quantile(p)).collect()
    }
}

/// One subject's latent draws, taken in this order from the stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectDraw<T> {
    pub z: bool,
    pub u1: T,
    pub u2: T,
    pub u3: T,
}

impl<T: Scalar> SubjectDraw<T> {
    pub fn sample(rng: &mut StreamRng) -> Self {
        let z = rng.gen::<f64>() < 0.5;
        let u1 = -1.0 + 2.0 * rng.gen::<f64>();
        let u2 = -1.0 + 2.0 * rng.gen::<f64>();
        let u3 = 0.8 + 0.4 * rng.gen::<f64>();
        Self {
            z,
            u1: T::lit(u1),
            u2: T::lit(u2),
            u3: T::lit(u3),
        }
    }
}

/// Curve values for one draw given `Q₀` on the grid.
pub fn curve_values<T: Scalar>(params: &DgpParams<T>, q0: &[T], d: &SubjectDraw<T>) -> Vec<T> {
    let z = if d.z { T::one() } else { T::zero() };
    let scale = (T::lit(5.0) + params.b) * z * d.u3;
    params
        .grid
        .points()
        .iter()
        .zip(q0)
        .map(|(&rho, &q)| {
            let u2_term = match params.u2_mode {
                U2Mode::Literal => d.u2 * params.v,
                U2Mode::RhoScaled => d.u2 * params.v * rho,
            };
            params.a * z + d.u1 + u2_term + scale * q
        })
        .collect()
}

/// Draws one cohort from `rng`; the cohort may contain a single class.
pub fn generate_with_rng<T: Scalar>(params: &DgpParams<T>, q0: &[T], rng: &mut StreamRng) -> Result<LabeledSample<T>> {
    let mut curves = Vec::with_capacity(params.n);
    let mut labels = Vec::with_capacity(params.n);
    for i in 0..params.n {
        let draw = SubjectDraw::sample(rng);
        curves.push(QuantileCurve::new(
            format!("sim{i}"),
            Arc::clone(&params.grid),
            curve_values(params, q0, &draw),
        )?);
        labels.push(draw.z);
    }
    LabeledSample::new(Arc::clone(&params.grid), curves, labels)
}

/// Cohort drawn from stream 0 of `params.seed`.
pub fn generate<T: Scalar>(params: &DgpParams<T>) -> Result<LabeledSample<T>> {
    let q0 = params.base_quantiles()?;
    generate_with_rng(params, &q0, &mut substream(params.seed, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Cell<T> {
    pub a: T,
    pub b: T,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct StudyConfig<T> {
    pub cells: Vec<Cell<T>>,
    pub criteria: Vec<Criterion>,
    pub replicates: usize,
    pub seed: u64,
    pub v: T,
    pub grid_size: usize,
    pub u2_mode: U2Mode,
    pub centrality: Centrality,
    /// Consecutive single-class cohorts tolerated before giving up.
    pub max_regenerations: usize,
}

impl<T: Scalar> StudyConfig<T> {
    pub fn new(cells: Vec<Cell<T>>, replicates: usize, seed: u64) -> Self {
        Self {
            cells,
            criteria: Criterion::ALL.to_vec(),
            replicates,
            seed,
            v: T::lit(2.0),
            grid_size: 100,
            u2_mode: U2Mode::Literal,
            centrality: Centrality::PooledMean,
            max_regenerations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StudyRow<T> {
    pub a: T,
    pub b: T,
    pub n: usize,
    pub criterion: Criterion,
    pub replicate: usize,
    pub sensitivity: T,
    pub specificity: T,
}

/// Distribution summary of one metric across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricSummary<T> {
    pub mean: T,
    pub variance: T,
    pub q025: T,
    pub q25: T,
    pub median: T,
    pub q75: T,
    pub q975: T,
}

impl<T: Scalar> MetricSummary<T> {
    pub fn from_values(values: &[T]) -> Self {
        let n = T::from_count(values.len());
        let mean = values.iter().copied().sum::<T>() / n;
        let variance = if values.len() > 1 {
            values.iter().map(|&x| (x - mean).powi(2)).sum::<T>() / (n - T::one())
        } else {
            T::zero()
        };
        let q = |p: f64| percentile(values, T::lit(p));
        Self {
            mean,
            variance,
            q025: q(0.025),
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            q975: q(0.975),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CellSummary<T> {
    pub a: T,
    pub b: T,
    pub n: usize,
    pub criterion: Criterion,
    pub replicates: usize,
    pub sensitivity: MetricSummary<T>,
    pub specificity: MetricSummary<T>,
    pub mean_youden: T,
}

#[derive(Debug, Clone)]
pub struct StudyResults<T> {
    pub rows: Vec<StudyRow<T>>,
    pub summaries: Vec<CellSummary<T>>,
    pub regenerations: usize,
}

impl<T: Scalar> StudyResults<T> {
    pub fn summary(&self, cell: &Cell<T>, criterion: Criterion) -> Option<&CellSummary<T>> {
        self.summaries
            .iter()
            .find(|s| s.a == cell.a && s.b == cell.b && s.n == cell.n && s.criterion == criterion)
    }
}

struct ReplicateOutcome<T> {
    metrics: Vec<(T, T)>,
    regenerations: usize,
}

fn run_replicate<T: Scalar>(
    cfg: &StudyConfig<T>,
    params: &DgpParams<T>,
    q0: &[T],
    stream: u64,
) -> Result<ReplicateOutcome<T>> {
    let mut rng = substream(cfg.seed, stream);
    let mut regenerations = 0;
    let sample = loop {
        let s = generate_with_rng(params, q0, &mut rng)?;
        let cases = s.n_cases();
        if cases > 0 && cases < s.len() {
            break s;
        }
        regenerations += 1;
        if regenerations > cfg.max_regenerations {
            return Err(Error::DegenerateSample {
                cases,
                controls: s.len() - cases,
            });
        }
    };
    let rows: Vec<&[T]> = sample.curves().iter().map(|c| c.values()).collect();
    let family = family_from_rows(sample.grid(), &rows, sample.labels(), cfg.centrality, ScaleMode::Unit)?;
    let margins = rows.iter().map(|r| margin_of_values(r, &family)).collect();
    let scored = ScoredSample::new(margins, sample.labels().to_vec())?;
    let metrics = cfg
        .criteria
        .iter()
        .map(|&c| optimize(&scored, c, &SearchSpace::Exact).map(|r| (r.sensitivity, r.specificity)))
        .collect::<Result<_>>()?;
    Ok(ReplicateOutcome { metrics, regenerations })
}

/// Runs every cell for `replicates` replicates and fits each criterion on the
/// same cohort. Replicate `r` of cell `k` uses stream `(k << 32) | r`.
pub fn run_study<T: Scalar>(cfg: &StudyConfig<T>) -> Result<StudyResults<T>> {
    if cfg.replicates == 0 {
        return Err(Error::InvalidArgument("replicate count must be at least 1".into()));
    }
    if cfg.criteria.is_empty() {
        return Err(Error::InvalidArgument("no criteria requested".into()));
    }
    let grid = Arc::new(ProbabilityGrid::uniform(cfg.grid_size)?);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut regenerations = 0;
    for (k, cell) in cfg.cells.iter().enumerate() {
        let mut params = DgpParams::new(cell.a, cell.b, cell.n, Arc::clone(&grid), cfg.seed)?;
        params.v = cfg.v;
        params.u2_mode = cfg.u2_mode;
        let q0 = params.base_quantiles()?;
        let outcomes: Vec<ReplicateOutcome<T>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &params, &q0, cell_stream(k, r)))
            .collect::<Result<_>>()?;
        regenerations += outcomes.iter().map(|o| o.regenerations).sum::<usize>();
        for (ci, &criterion) in cfg.criteria.iter().enumerate() {
            let sens: Vec<T> = outcomes.iter().map(|o| o.metrics[ci].0).collect();
            let spec: Vec<T> = outcomes.iter().map(|o| o.metrics[ci].1).collect();
            for (r, o) in outcomes.iter().enumerate() {
                rows.push(StudyRow {
                    a: cell.a,
                    b: cell.b,
                    n: cell.n,
                    criterion,
                    replicate: r,
                    sensitivity: o.metrics[ci].0,
                    specificity: o.metrics[ci].1,
                });
            }
            let mean_youden =
                sens.iter().zip(&spec).map(|(&s, &p)| s + p - T::one()).sum::<T>() / T::from_count(sens.len());
            summaries.push(CellSummary {
                a: cell.a,
                b: cell.b,
                n: cell.n,
                criterion,
                replicates: cfg.replicates,
                sensitivity: MetricSummary::from_values(&sens),
                specificity: MetricSummary::from_values(&spec),
                mean_youden,
            });
        }
    }
    Ok(StudyResults {
        rows,
        summaries,
        regenerations,
    })
}
