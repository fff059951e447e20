//! Monotone post-processing of cut-off curves.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothConfig {
    /// Width of the centred moving average applied before the monotone fit; 1 disables it.
    window: usize,
}

impl SmoothConfig {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 || window.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("smoothing window must be odd and ≥ 1, got {window}")));
        }
        Ok(Self { window })
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

impl Default for SmoothConfig {
    fn default() -> Self {
        Self { window: 1 }
    }
}

/// Weighted least-squares nondecreasing fit (pool adjacent violators).
pub fn pava<T: Scalar>(values: &[T], weights: &[T]) -> Result<Vec<T>> {
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w > T::zero() && w.is_finite())) {
        return Err(Error::InvalidArgument("weights must be positive and finite".into()));
    }
    // Each block: (weighted mean, total weight, length).
    let mut blocks: Vec<(T, T, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let wt = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / wt, wt, n1 + n2));
        }
    }
    Ok(blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect())
}

/// Centred moving average; the window shrinks symmetrically at the ends.
pub fn moving_average<T: Scalar>(values: &[T], window: usize) -> Vec<T> {
    let half = window / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let span = &values[i - h..=i + h];
            span.iter().copied().sum::<T>() / T::from_count(span.len())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed<T> {
    pub values: Vec<T>,
    /// `max |output − input|`.
    pub max_abs_change: T,
}

/// Optional moving average followed by an unweighted monotone fit.
pub fn monotone_smooth<T: Scalar>(values: &[T], cfg: SmoothConfig) -> Smoothed<T> {
    let pre = if cfg.window > 1 {
        moving_average(values, cfg.window)
    } else {
        values.to_vec()
    };
    let ones = vec![T::one(); pre.len()];
    let out = pava(&pre, &ones).expect("unit weights are valid");
    let max_abs_change = out
        .iter()
        .zip(values)
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), T::max);
    Smoothed {
        values: out,
        max_abs_change,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pava_examples() {
        assert_eq!(pava(&[1.0, 3.0, 2.0], &[1.0; 3]).unwrap(), vec![1.0, 2.5, 2.5]);
        assert_eq!(pava(&[3.0, 2.0, 1.0], &[1.0; 3]).unwrap(), vec![2.0, 2.0, 2.0]);
        assert_eq!(pava(&[1.0, 2.0, 2.0, 5.0], &[1.0; 4]).unwrap(), vec![1.0, 2.0, 2.0, 5.0]);
    }

    #[test]
    fn pava_weights() {
        // Pooled block mean (3·1 + 1·3) / 4 = 1.5.
        assert_eq!(pava(&[3.0, 1.0], &[1.0, 3.0]).unwrap(), vec![1.5, 1.5]);
    }

    #[test]
    fn pava_errors() {
        assert!(matches!(pava(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
        assert!(pava(&[1.0], &[0.0]).is_err());
        assert_eq!(pava::<f64>(&[], &[]).unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn window_validation() {
        assert!(SmoothConfig::new(0).is_err());
        assert!(SmoothConfig::new(4).is_err());
        assert_eq!(SmoothConfig::new(5).unwrap().window(), 5);
    }

    #[test]
    fn monotone_input_identity() {
        let v = [1.0, 1.5, 4.0, 9.0];
        let s = monotone_smooth(&v, SmoothConfig::default());
        assert_eq!(s.values, v);
        assert_eq!(s.max_abs_change, 0.0);
    }

    #[test]
    fn constant_stays_constant_with_window() {
        let v = [7.0; 9];
        let s = monotone_smooth(&v, SmoothConfig::new(3).unwrap());
        assert_eq!(s.values, v);
    }

    #[test]
    fn moving_average_edges() {
        let v = [0.0, 3.0, 6.0, 0.0];
        assert_eq!(moving_average(&v, 3), vec![0.0, 3.0, 3.0, 0.0]);
    }

    #[test]
    fn reports_max_change() {
        let s = monotone_smooth(&[1.0, 3.0, 2.0], SmoothConfig::default());
        assert_eq!(s.max_abs_change, 0.5);
    }
}
