use crate::dist::poisson;
use crate::rng::RandomSource;

/// `m` i.i.d. Poisson counts with rate `exp(theta)`.
pub fn poisson_forward(theta: f64, m: usize, rng: &mut RandomSource) -> Vec<f64> {
    let rate = theta.exp();
    (0..m).map(|_| poisson(rate, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn unit_rate_mean() {
        let n = 100_000;
        let s = poisson_forward(0.0, n, &mut RandomSource::new(1));
        let (m, _) = moments(&s);
        assert!((m - 1.0).abs() < 3.0 * (1.0 / n as f64).sqrt());
    }

    #[test]
    fn variance_equals_rate() {
        let n = 100_000;
        let s = poisson_forward(4f64.ln(), n, &mut RandomSource::new(2));
        let (m, v) = moments(&s);
        assert!((m - 4.0).abs() < 3.0 * (4.0 / n as f64).sqrt());
        // Var of the sample variance: (mu4 - sigma^4 (n-3)/(n-1)) / n, mu4 = l(1+3l)
        let var_se = ((4.0 * 13.0 - 16.0) / n as f64).sqrt();
        assert!((v - 4.0).abs() < 3.0 * var_se, "variance {v}");
    }

    #[test]
    fn prior_edge_support() {
        let s = poisson_forward(7.0, 10_000, &mut RandomSource::new(3));
        assert!(s.iter().all(|&x| x >= 0.0 && x.fract() == 0.0));
    }
}
