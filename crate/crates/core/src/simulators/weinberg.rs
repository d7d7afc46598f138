//! Simplified `e+ e- -> mu+ mu-` angular distribution.
//!
//! With beam energy `E` and Fermi-constant scale `G`, the density of
//! `x = cos(A)` on `[-1, 1]` is
//!
//! ```text
//! p(x) = max(0, 1 + x^2 + a x) / (8/3),
//! a(E, G) = 2 tanh(10 (2E - M_Z) / M_Z) G,   M_Z = 90
//! ```
//!
//! For `|a| <= 2` the density is non-negative and integrates to one exactly;
//! outside that range the negative lobe is cut and rejection sampling
//! renormalises implicitly. Inside the prior box `|a|` reaches about 2.4.

use crate::error::{Error, Result};
use crate::rng::RandomSource;

const Z_MASS: f64 = 90.0;
const NORM: f64 = 8.0 / 3.0;

/// Forward-backward asymmetry coefficient `a(E, G)`.
pub fn weinberg_asymmetry(theta: [f64; 2]) -> f64 {
    let energy_term = (10.0 * (2.0 * theta[0] - Z_MASS) / Z_MASS).tanh();
    2.0 * energy_term * theta[1]
}

/// Unnormalised-when-clipped density of `cos(A)`.
pub fn weinberg_density(x: f64, theta: [f64; 2]) -> f64 {
    if !(-1.0..=1.0).contains(&x) {
        return 0.0;
    }
    let a = weinberg_asymmetry(theta);
    (1.0 + x * x + a * x).max(0.0) / NORM
}

/// `m` draws of `cos(A)` by rejection against a uniform envelope.
pub fn weinberg_forward(theta: [f64; 2], m: usize, rng: &mut RandomSource) -> Result<Vec<f64>> {
    if !theta[0].is_finite() || !theta[1].is_finite() {
        return Err(Error::OutOfRange(format!("non-finite Weinberg parameters {theta:?}")));
    }
    let a = weinberg_asymmetry(theta);
    let envelope = (2.0 + a.abs()) / NORM;
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let x = -1.0 + 2.0 * rng.uniform();
        let u = rng.uniform() * envelope;
        if u < weinberg_density(x, theta) {
            out.push(x);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_are_cosines() {
        let s = weinberg_forward([47.0, 1.3], 10_000, &mut RandomSource::new(1)).unwrap();
        assert!(s.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn seeds_control_streams() {
        let a = weinberg_forward([45.0, 1.0], 100, &mut RandomSource::new(2)).unwrap();
        let b = weinberg_forward([45.0, 1.0], 100, &mut RandomSource::new(2)).unwrap();
        let c = weinberg_forward([45.0, 1.0], 100, &mut RandomSource::new(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let theta = [45.0, 1.0];
        let n = 100_000;
        let s = weinberg_forward(theta, n, &mut RandomSource::new(4)).unwrap();
        let bins = 50;
        let width = 2.0 / bins as f64;
        let mut counts = vec![0usize; bins];
        for x in &s {
            counts[(((x + 1.0) / width) as usize).min(bins - 1)] += 1;
        }
        // empirical density times bin width, summed
        let integral: f64 = counts.iter().map(|&c| c as f64 / (n as f64 * width) * width).sum();
        assert!((integral - 1.0).abs() < 0.01);
        // the empirical density tracks the analytic one bin by bin
        for (i, &c) in counts.iter().enumerate() {
            let mid = -1.0 + (i as f64 + 0.5) * width;
            let emp = c as f64 / (n as f64 * width);
            assert!((emp - weinberg_density(mid, theta)).abs() < 0.08, "bin {i}");
        }
    }

    #[test]
    fn analytic_density_is_normalised_in_valid_range() {
        for theta in [[45.0, 1.0], [41.0, 0.6], [49.0, 0.9]] {
            assert!(weinberg_asymmetry(theta).abs() <= 2.0);
            let n = 20_000;
            let h = 2.0 / n as f64;
            let integral: f64 = (0..n).map(|i| weinberg_density(-1.0 + (i as f64 + 0.5) * h, theta) * h).sum();
            assert!((integral - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_tracks_asymmetry() {
        // E[x] = a/4 when the density is unclipped
        let theta = [47.0, 0.8];
        let a = weinberg_asymmetry(theta);
        let n = 100_000;
        let s = weinberg_forward(theta, n, &mut RandomSource::new(5)).unwrap();
        let m = s.iter().sum::<f64>() / n as f64;
        assert!((m - a / 4.0).abs() < 3.0 * (0.5 / n as f64).sqrt());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(weinberg_forward([f64::NAN, 1.0], 1, &mut RandomSource::new(0)).is_err());
    }
}
