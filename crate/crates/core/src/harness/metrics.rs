use serde::{Deserialize, Serialize};

use crate::proposal::{proposal_mean, ProposalParams};

/// Euclidean distance between `theta_star` and the proposal mean.
pub fn rmse(psi: &ProposalParams, theta_star: &[f64]) -> f64 {
    proposal_mean(psi)
        .iter()
        .zip(theta_star)
        .map(|(m, t)| (m - t).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance between two parameter vectors.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Counts over `bins` equal-width bins on `[-1, 1]`; values outside the
/// range land in the edge bins.
pub fn histogram(samples: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for &x in samples {
        let pos = ((x + 1.0) / 2.0 * bins as f64).floor();
        let idx = if pos.is_nan() { 0 } else { pos.clamp(0.0, (bins - 1) as f64) as usize };
        counts[idx] += 1;
    }
    counts
}

/// Total-variation distance between normalised histograms of two counts.
pub fn tv_distance(p: &[u64], q: &[u64]) -> f64 {
    let (np, nq) = (p.iter().sum::<u64>() as f64, q.iter().sum::<u64>() as f64);
    0.5 * p.iter().zip(q).map(|(&a, &b)| (a as f64 / np - b as f64 / nq).abs()).sum::<f64>()
}

/// Total-variation distance between the `bins`-bin histograms of two
/// sample sets on `[-1, 1]`.
pub fn histogram_distance(real: &[f64], generated: &[f64], bins: usize) -> f64 {
    assert!(!real.is_empty() && !generated.is_empty(), "histogram_distance needs samples");
    tv_distance(&histogram(real, bins), &histogram(generated, bins))
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Box-plot summary; outliers lie beyond 1.5 IQR from the quartiles and
/// `min`/`max` are the extreme non-outliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = v.iter().copied().filter(|x| *x >= lo && *x <= hi).collect();
        Some(Self {
            min: inside.first().copied().unwrap_or(q1),
            q1,
            median: quantile_sorted(&v, 0.5),
            q3,
            max: inside.last().copied().unwrap_or(q3),
            outliers: v.into_iter().filter(|x| *x < lo || *x > hi).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use crate::simulators::weinberg_forward;

    #[test]
    fn rmse_examples() {
        let psi = ProposalParams::new(vec![3.0, 4.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(rmse(&psi, &[0.0, 0.0]), 5.0);
        assert_eq!(rmse(&psi, &[3.0, 4.0]), 0.0);
        let wide = ProposalParams::new(vec![3.0, 4.0], vec![2.0, -3.0]).unwrap();
        assert_eq!(rmse(&wide, &[0.0, 0.0]), 5.0);
    }

    #[test]
    fn histogram_distance_extremes() {
        let a: Vec<f64> = (0..100).map(|i| -0.99 + 0.0198 * i as f64).collect();
        assert_eq!(histogram_distance(&a, &a, 50), 0.0);
        let left = vec![-0.9; 10];
        let right = vec![0.9; 7];
        assert!((histogram_distance(&left, &right, 50) - 1.0).abs() < 1e-15);
        assert_eq!(histogram(&[-1.0, 1.0, 2.0, -5.0], 4), vec![2, 0, 0, 2]);
    }

    #[test]
    fn same_theta_noise_floor() {
        let mut worst = 0.0f64;
        for seed in 0..10 {
            let theta = [40.0 + seed as f64, 0.5 + 0.1 * seed as f64];
            let a = weinberg_forward(theta, 10_000, &mut RandomSource::new(2 * seed)).unwrap();
            let b = weinberg_forward(theta, 10_000, &mut RandomSource::new(2 * seed + 1)).unwrap();
            worst = worst.max(histogram_distance(&a, &b, 50));
        }
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn box_stats() {
        let v = [1.0, 2.0, 3.0, 4.0, 100.0];
        let b = BoxStats::from_values(&v).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!((b.min, b.max), (1.0, 4.0));
        assert_eq!(b.outliers, vec![100.0]);
        assert!(BoxStats::from_values(&[]).is_none());
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 2f64.sqrt()));
    }
}
