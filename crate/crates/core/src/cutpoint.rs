//! Exact cut-point optimisation over scalar scores.
//!
//! Scores are either functional margins or raw scalar biomarkers. A subject
//! is predicted positive iff `score ≥ c`. Sensitivity and specificity are
//! step functions of `c` that change only at observed scores, so scanning the
//! distinct scores plus one sentinel above the maximum is an exact search.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sort_scalars, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Youden,
    MaxSensitivity,
    MaxSpecificity,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Youden, Criterion::MaxSensitivity, Criterion::MaxSpecificity];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Youden => "youden",
            Criterion::MaxSensitivity => "max_sensitivity",
            Criterion::MaxSpecificity => "max_specificity",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "youden" => Ok(Criterion::Youden),
            "max_sensitivity" | "sensitivity" => Ok(Criterion::MaxSensitivity),
            "max_specificity" | "specificity" => Ok(Criterion::MaxSpecificity),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

/// Which side of the cut-point indicates disease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    HigherIsPositive,
    LowerIsPositive,
}

/// Finite scores with binary labels (`true` = case).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample<T> {
    scores: Vec<T>,
    labels: Vec<bool>,
    direction: Direction,
}

impl<T: Scalar> ScoredSample<T> {
    pub fn new(scores: Vec<T>, labels: Vec<bool>) -> Result<Self> {
        Self::oriented(scores, labels, Direction::HigherIsPositive)
    }

    /// With `LowerIsPositive` the scores are negated internally so that the
    /// `score ≥ c` rule still applies; see [`CutpointResult::decision_threshold`].
    pub fn oriented(scores: Vec<T>, labels: Vec<bool>, direction: Direction) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: scores.len(),
                found: labels.len(),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("scores must be finite".into()));
        }
        let scores = match direction {
            Direction::HigherIsPositive => scores,
            Direction::LowerIsPositive => scores.into_iter().map(|s| -s).collect(),
        };
        Ok(Self {
            scores,
            labels,
            direction,
        })
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_cases(&self) -> usize {
        self.labels.iter().filter(|&&z| z).count()
    }

    pub fn n_controls(&self) -> usize {
        self.len() - self.n_cases()
    }

    /// Subsample by index, with repetition allowed.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            direction: self.direction,
        }
    }

    fn require_both_classes(&self) -> Result<()> {
        let (cases, controls) = (self.n_cases(), self.n_controls());
        if cases == 0 || controls == 0 {
            Err(Error::DegenerateSample { cases, controls })
        } else {
            Ok(())
        }
    }
}

/// Sorted per-class scores answering count queries in `O(log n)`.
#[derive(Debug, Clone)]
pub struct ClassCounter<T> {
    cases: Vec<T>,
    controls: Vec<T>,
}

impl<T: Scalar> ClassCounter<T> {
    pub fn new(sample: &ScoredSample<T>) -> Self {
        let mut cases = Vec::with_capacity(sample.len());
        let mut controls = Vec::with_capacity(sample.len());
        for (&s, &z) in sample.scores.iter().zip(&sample.labels) {
            if z {
                cases.push(s);
            } else {
                controls.push(s);
            }
        }
        sort_scalars(&mut cases);
        sort_scalars(&mut controls);
        Self { cases, controls }
    }

    pub fn n_cases(&self) -> usize {
        self.cases.len()
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    /// `(#cases with score ≥ c, #controls with score < c)`.
    pub fn counts(&self, c: T) -> (usize, usize) {
        let tp = self.cases.len() - self.cases.partition_point(|&s| s < c);
        let tn = self.controls.partition_point(|&s| s < c);
        (tp, tn)
    }

    pub fn confusion(&self, c: T) -> Confusion<T> {
        let (tp, tn) = self.counts(c);
        Confusion::from_counts(tp, tn, self.cases.len(), self.controls.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Confusion<T> {
    pub sensitivity: T,
    pub specificity: T,
    pub youden: T,
}

impl<T: Scalar> Confusion<T> {
    fn from_counts(tp: usize, tn: usize, cases: usize, controls: usize) -> Self {
        let sensitivity = T::from_count(tp) / T::from_count(cases);
        let specificity = T::from_count(tn) / T::from_count(controls);
        Self {
            sensitivity,
            specificity,
            youden: sensitivity + specificity - T::one(),
        }
    }
}

pub fn confusion_at<T: Scalar>(sample: &ScoredSample<T>, c: T) -> Result<Confusion<T>> {
    sample.require_both_classes()?;
    Ok(ClassCounter::new(sample).confusion(c))
}

/// A value strictly above `max` at which nobody is predicted positive.
pub fn sentinel_above<T: Scalar>(max: T) -> T {
    max + T::one().max(max.abs() * T::lit(1e-6))
}

/// Distinct scores in increasing order followed by a sentinel above the maximum.
pub fn candidate_set<T: Scalar>(sample: &ScoredSample<T>) -> Vec<T> {
    let mut c = sample.scores.clone();
    sort_scalars(&mut c);
    c.dedup();
    if let Some(&max) = c.last() {
        c.push(sentinel_above(max));
    }
    c
}

/// Where the optimiser looks for `c`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SearchSpace<T> {
    /// Every distinct score plus the sentinel.
    #[default]
    Exact,
    /// Exact candidates restricted to `[lower, upper]`.
    Range { lower: T, upper: T },
    /// `points` equispaced values over `[lower, upper]`.
    Grid { lower: T, upper: T, points: usize },
}

impl<T: Scalar> SearchSpace<T> {
    fn candidates(&self, sample: &ScoredSample<T>) -> Result<Vec<T>> {
        match *self {
            SearchSpace::Exact => Ok(candidate_set(sample)),
            SearchSpace::Range { lower, upper } => {
                let c: Vec<T> = candidate_set(sample)
                    .into_iter()
                    .filter(|&c| c >= lower && c <= upper)
                    .collect();
                if c.is_empty() {
                    Err(Error::EmptyCandidateRange {
                        lower: lower.as_f64(),
                        upper: upper.as_f64(),
                    })
                } else {
                    Ok(c)
                }
            }
            SearchSpace::Grid { lower, upper, points } => {
                if points == 0 || !(lower <= upper) {
                    return Err(Error::EmptyCandidateRange {
                        lower: lower.as_f64(),
                        upper: upper.as_f64(),
                    });
                }
                if points == 1 {
                    return Ok(vec![lower]);
                }
                let step = (upper - lower) / T::from_count(points - 1);
                let mut g: Vec<T> = (0..points).map(|i| lower + step * T::from_count(i)).collect();
                g.dedup();
                Ok(g)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SweepRow<T> {
    pub c: T,
    pub sensitivity: T,
    pub specificity: T,
    pub youden: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RocPoint<T> {
    pub fpr: T,
    pub tpr: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CutpointResult<T> {
    pub criterion: Criterion,
    pub direction: Direction,
    pub c_hat: T,
    pub sensitivity: T,
    pub specificity: T,
    pub youden: T,
    pub n_cases: usize,
    pub n_controls: usize,
    pub auc: T,
    pub sweep: Vec<SweepRow<T>>,
    pub roc: Vec<RocPoint<T>>,
}

impl<T: Scalar> CutpointResult<T> {
    /// `c_hat` expressed on the original score scale, together with the rule
    /// direction (`score ≥ t` or `score ≤ t`).
    pub fn decision_threshold(&self) -> T {
        match self.direction {
            Direction::HigherIsPositive => self.c_hat,
            Direction::LowerIsPositive => -self.c_hat,
        }
    }
}

/// Integer comparison key for a criterion; larger is better. Youden is
/// compared as `tp·N + tn·P`, which orders exactly like `tp/P + tn/N`.
fn criterion_key(criterion: Criterion, tp: usize, tn: usize, cases: usize, controls: usize) -> (u128, u128) {
    let (tp, tn, p, n) = (tp as u128, tn as u128, cases as u128, controls as u128);
    match criterion {
        Criterion::Youden => (tp * n + tn * p, 0),
        Criterion::MaxSensitivity => (tp, tn),
        Criterion::MaxSpecificity => (tn, tp),
    }
}

/// Maximises `criterion`; ties go to the secondary metric, then to the smallest `c`.
pub fn optimize<T: Scalar>(sample: &ScoredSample<T>, criterion: Criterion, search: &SearchSpace<T>) -> Result<CutpointResult<T>> {
    sample.require_both_classes()?;
    let counter = ClassCounter::new(sample);
    let (p, n) = (counter.n_cases(), counter.n_controls());
    let candidates = search.candidates(sample)?;

    let mut best: Option<(usize, (u128, u128))> = None;
    let mut sweep = Vec::with_capacity(candidates.len());
    for (i, &c) in candidates.iter().enumerate() {
        let (tp, tn) = counter.counts(c);
        let key = criterion_key(criterion, tp, tn, p, n);
        // Candidates ascend, so keeping the first maximum selects the smallest c.
        if best.is_none_or(|(_, k)| key.cmp(&k) == Ordering::Greater) {
            best = Some((i, key));
        }
        let m = Confusion::from_counts(tp, tn, p, n);
        sweep.push(SweepRow {
            c,
            sensitivity: m.sensitivity,
            specificity: m.specificity,
            youden: m.youden,
        });
    }
    let (best_idx, _) = best.expect("candidate set is nonempty");
    let at = sweep[best_idx];
    let roc = roc_curve(&counter, &candidate_set(sample));
    let auc = trapezoid_auc(&roc);
    Ok(CutpointResult {
        criterion,
        direction: sample.direction,
        c_hat: at.c,
        sensitivity: at.sensitivity,
        specificity: at.specificity,
        youden: at.youden,
        n_cases: p,
        n_controls: n,
        auc,
        sweep,
        roc,
    })
}

fn roc_curve<T: Scalar>(counter: &ClassCounter<T>, candidates: &[T]) -> Vec<RocPoint<T>> {
    let (p, n) = (T::from_count(counter.n_cases()), T::from_count(counter.n_controls()));
    let mut roc: Vec<RocPoint<T>> = candidates
        .iter()
        .rev()
        .map(|&c| {
            let (tp, tn) = counter.counts(c);
            RocPoint {
                fpr: T::one() - T::from_count(tn) / n,
                tpr: T::from_count(tp) / p,
            }
        })
        .collect();
    roc.sort_by(|a, b| a.fpr.partial_cmp(&b.fpr).unwrap().then(a.tpr.partial_cmp(&b.tpr).unwrap()));
    roc
}

fn trapezoid_auc<T: Scalar>(roc: &[RocPoint<T>]) -> T {
    let half = T::lit(0.5);
    roc.windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) * half)
        .sum()
}

/// Area under the ROC traced over the full candidate sweep.
pub fn auc<T: Scalar>(sample: &ScoredSample<T>) -> Result<T> {
    sample.require_both_classes()?;
    let counter = ClassCounter::new(sample);
    Ok(trapezoid_auc(&roc_curve(&counter, &candidate_set(sample))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(cases: &[f64], controls: &[f64]) -> ScoredSample<f64> {
        let scores = cases.iter().chain(controls).copied().collect();
        let labels = cases.iter().map(|_| true).chain(controls.iter().map(|_| false)).collect();
        ScoredSample::new(scores, labels).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let s = sample(&[2.0, 0.0], &[-1.0, 1.0]);
        let m = confusion_at(&s, 0.5).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.youden), (0.5, 0.5, 0.0));
        let low = confusion_at(&s, -10.0).unwrap();
        assert_eq!((low.sensitivity, low.specificity), (1.0, 0.0));
        let high = confusion_at(&s, 10.0).unwrap();
        assert_eq!((high.sensitivity, high.specificity), (0.0, 1.0));
    }

    #[test]
    fn degenerate_sample_rejected() {
        let s = sample(&[1.0, 2.0], &[]);
        let err = confusion_at(&s, 0.0).unwrap_err();
        assert!(err.to_string().contains("degenerate sample"));
        assert!(optimize(&s, Criterion::Youden, &SearchSpace::Exact).is_err());
        assert!(auc(&s).is_err());
    }

    #[test]
    fn candidate_set_examples() {
        let s = sample(&[1.0, 1.0], &[2.0]);
        let c = candidate_set(&s);
        assert_eq!(&c[..2], &[1.0, 2.0]);
        assert_eq!(c.len(), 3);
        assert!(c[2] > 2.0);
        let single = sample(&[4.0], &[4.0]);
        assert_eq!(candidate_set(&single).len(), 2);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sentinel_survives_large_magnitudes() {
        assert!(sentinel_above(1e20) > 1e20);
        assert!(sentinel_above(-1e20) > -1e20);
        assert_eq!(sentinel_above(2.0), 3.0);
    }

    #[test]
    fn perfect_separation() {
        let s = sample(&[2.0, 3.0], &[0.0, 1.0]);
        let r = optimize(&s, Criterion::Youden, &SearchSpace::Exact).unwrap();
        assert_eq!((r.c_hat, r.sensitivity, r.specificity, r.youden), (2.0, 1.0, 1.0, 1.0));
        assert_eq!(r.auc, 1.0);
    }

    #[test]
    fn all_equal_scores_pick_smallest_c() {
        let s = sample(&[5.0, 5.0], &[5.0]);
        let r = optimize(&s, Criterion::Youden, &SearchSpace::Exact).unwrap();
        assert_eq!(r.c_hat, 5.0);
        assert_eq!(r.youden, 0.0);
        assert!(r.sweep.iter().all(|row| row.youden == 0.0));
    }

    #[test]
    fn interleaved_scores() {
        // cases {0,2}, controls {1,3}: candidates 0,1,2,3,s give youden 0,-.5,0,-.5,0.
        let s = sample(&[0.0, 2.0], &[1.0, 3.0]);
        let r = optimize(&s, Criterion::Youden, &SearchSpace::Exact).unwrap();
        assert_eq!(r.c_hat, 0.0);
        assert_eq!(r.youden, 0.0);
        assert_eq!(auc(&s).unwrap(), 0.25);
    }

    #[test]
    fn max_sensitivity_prefers_specificity_on_ties() {
        let s = sample(&[3.0, 4.0], &[1.0, 2.0, 5.0]);
        let r = optimize(&s, Criterion::MaxSensitivity, &SearchSpace::Exact).unwrap();
        assert_eq!(r.c_hat, 3.0);
        assert_eq!((r.sensitivity, r.specificity), (1.0, 2.0 / 3.0));
        let r = optimize(&s, Criterion::MaxSpecificity, &SearchSpace::Exact).unwrap();
        assert_eq!(r.specificity, 1.0);
        assert_eq!(r.sensitivity, 0.0);
    }

    #[test]
    fn range_restriction() {
        let s = sample(&[2.0, 3.0], &[0.0, 1.0]);
        let r = optimize(&s, Criterion::Youden, &SearchSpace::Range { lower: 2.5, upper: 10.0 }).unwrap();
        assert_eq!(r.c_hat, 3.0);
        let err = optimize(&s, Criterion::Youden, &SearchSpace::Range { lower: 10.0, upper: 11.0 }).unwrap_err();
        assert!(matches!(err, Error::EmptyCandidateRange { .. }));
    }

    #[test]
    fn grid_search() {
        let s = sample(&[2.0, 3.0], &[0.0, 1.0]);
        let r = optimize(&s, Criterion::Youden, &SearchSpace::Grid { lower: 0.0, upper: 4.0, points: 9 }).unwrap();
        assert_eq!(r.youden, 1.0);
        assert_eq!(r.c_hat, 1.5);
        assert_eq!(r.sweep.len(), 9);
    }

    #[test]
    fn lower_is_positive_orientation() {
        let s = ScoredSample::oriented(vec![1.0, 2.0, 8.0, 9.0], vec![true, true, false, false], Direction::LowerIsPositive).unwrap();
        let r = optimize(&s, Criterion::Youden, &SearchSpace::Exact).unwrap();
        assert_eq!(r.youden, 1.0);
        assert_eq!(r.decision_threshold(), 2.0);
    }

    #[test]
    fn roc_sorted_and_anchored() {
        let s = sample(&[0.3, 0.9, 0.5], &[0.1, 0.5, 0.2]);
        let r = optimize(&s, Criterion::Youden, &SearchSpace::Exact).unwrap();
        assert_eq!(r.roc.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(r.roc.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        assert!(r.roc.windows(2).all(|w| w[0].fpr <= w[1].fpr));
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!("max-sensitivity".parse::<Criterion>().unwrap(), Criterion::MaxSensitivity);
        assert_eq!("youden".parse::<Criterion>().unwrap(), Criterion::Youden);
        assert!("cost".parse::<Criterion>().is_err());
        assert_eq!(serde_json::to_string(&Criterion::MaxSpecificity).unwrap(), "\"max_specificity\"");
    }

    #[test]
    fn single_precision_path() {
        let s = ScoredSample::<f32>::new(vec![2.0, 3.0, 0.0, 1.0], vec![true, true, false, false]).unwrap();
        let r = optimize(&s, Criterion::Youden, &SearchSpace::Exact).unwrap();
        assert_eq!(r.c_hat, 2.0f32);
        assert_eq!(r.auc, 1.0f32);
    }
}
