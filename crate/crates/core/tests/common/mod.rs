//! Brute-force reference implementations shared by the integration suites.
#![allow(dead_code)]

use funcut::Criterion;

/// Direct functional rule: positive iff `y_k ≥ μ_k + c·σ_k` at every grid point.
pub fn direct_classify(y: &[f64], mu: &[f64], sigma: &[f64], c: f64) -> bool {
    (0..y.len()).all(|k| y[k] >= mu[k] + c * sigma[k])
}

/// `(tp, tn)` at threshold `c` by counting every subject.
pub fn count(scores: &[f64], labels: &[bool], c: f64) -> (usize, usize) {
    let mut tp = 0;
    let mut tn = 0;
    for (&s, &z) in scores.iter().zip(labels) {
        if z && s >= c {
            tp += 1;
        }
        if !z && s < c {
            tn += 1;
        }
    }
    (tp, tn)
}

/// Exhaustive maximiser over every distinct score plus a point above all
/// scores. Returns `(c, tp, tn)`; ties are broken by the criterion's
/// secondary metric and then by the smallest `c`.
pub fn brute_force_optimum(scores: &[f64], labels: &[bool], criterion: Criterion, above: f64) -> (f64, usize, usize) {
    let p = labels.iter().filter(|&&z| z).count() as u128;
    let n = labels.len() as u128 - p;
    let mut cands: Vec<f64> = scores.to_vec();
    cands.push(above);
    let mut best: Option<(f64, usize, usize, (u128, u128))> = None;
    for &c in &cands {
        let (tp, tn) = count(scores, labels, c);
        let key = match criterion {
            Criterion::Youden => (tp as u128 * n + tn as u128 * p, 0),
            Criterion::MaxSensitivity => (tp as u128, tn as u128),
            Criterion::MaxSpecificity => (tn as u128, tp as u128),
        };
        let better = match best {
            None => true,
            Some((bc, _, _, bk)) => key > bk || (key == bk && c < bc),
        };
        if better {
            best = Some((c, tp, tn, key));
        }
    }
    let (c, tp, tn, _) = best.unwrap();
    (c, tp, tn)
}

/// Best criterion key reachable at any real threshold, probing below, between
/// and above all scores.
pub fn best_key_anywhere(scores: &[f64], labels: &[bool], criterion: Criterion) -> (u128, u128) {
    let p = labels.iter().filter(|&&z| z).count() as u128;
    let n = labels.len() as u128 - p;
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let mut probes = vec![s[0] - 1.0, s[s.len() - 1] + 1.0];
    probes.extend(s.iter().copied());
    probes.extend(s.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    probes
        .iter()
        .map(|&c| {
            let (tp, tn) = count(scores, labels, c);
            match criterion {
                Criterion::Youden => (tp as u128 * n + tn as u128 * p, 0),
                Criterion::MaxSensitivity => (tp as u128, tn as u128),
                Criterion::MaxSpecificity => (tn as u128, tp as u128),
            }
        })
        .max()
        .unwrap()
}

/// Mann–Whitney concordance with ties counted as one half.
pub fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let cases: Vec<f64> = scores.iter().zip(labels).filter(|(_, &z)| z).map(|(&s, _)| s).collect();
    let controls: Vec<f64> = scores.iter().zip(labels).filter(|(_, &z)| !z).map(|(&s, _)| s).collect();
    let mut wins = 0.0;
    for &x in &cases {
        for &y in &controls {
            if x > y {
                wins += 1.0;
            } else if x == y {
                wins += 0.5;
            }
        }
    }
    wins / (cases.len() * controls.len()) as f64
}

/// Weighted least-squares nondecreasing fit found by trying every partition
/// of the indices into contiguous blocks and keeping the feasible partition
/// (block means nondecreasing) with the smallest weighted error.
pub fn brute_force_isotonic(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        let mut means = Vec::new();
        for i in 0..n {
            let cut = i == n - 1 || mask & (1 << i) != 0;
            if cut {
                let w: f64 = weights[start..=i].iter().sum();
                let m = (start..=i).map(|j| weights[j] * values[j]).sum::<f64>() / w;
                means.push(m);
                fit.extend(std::iter::repeat(m).take(i + 1 - start));
                start = i + 1;
            }
        }
        if means.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let sse: f64 = (0..n).map(|j| weights[j] * (values[j] - fit[j]).powi(2)).sum();
        if best.as_ref().map_or(true, |(b, _)| sse < *b) {
            best = Some((sse, fit));
        }
    }
    best.unwrap().1
}

/// Standard normal CDF via the complementary error function.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Truncated normal quantile by bisection on the CDF.
pub fn tn_quantile_bisect(p: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let (fa, fb) = (phi((lo - mean) / sd), phi((hi - mean) / sd));
    let cdf = |x: f64| (phi((x - mean) / sd) - fa) / (fb - fa);
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if cdf(m) < p {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
