//! Scalar distributions used by the simulators and the proposal.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Above this rate Poisson draws switch from inversion to a
/// continuity-corrected normal approximation.
pub const POISSON_INVERSION_MAX: f64 = 30.0;

#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    StandardNormal,
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Poisson { rate: f64 },
    Exponential { rate: f64 },
    /// Components as `(weight, mean, std)`; weights must sum to one.
    GaussianMixture(Vec<(f64, f64, f64)>),
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ParameterDomain(m));
        match self {
            Distribution::StandardNormal => Ok(()),
            Distribution::Normal { mean, std } => {
                if !mean.is_finite() || !(*std > 0.0) || !std.is_finite() {
                    return bad(format!("normal requires finite mean and std > 0, got ({mean}, {std})"));
                }
                Ok(())
            }
            Distribution::Uniform { low, high } => {
                if !(low < high) || !low.is_finite() || !high.is_finite() {
                    return bad(format!("uniform requires low < high, got [{low}, {high}]"));
                }
                Ok(())
            }
            Distribution::Poisson { rate } => {
                if !(*rate > 0.0) || !rate.is_finite() {
                    return bad(format!("poisson requires rate > 0, got {rate}"));
                }
                Ok(())
            }
            Distribution::Exponential { rate } => {
                if !(*rate > 0.0) || !rate.is_finite() {
                    return bad(format!("exponential requires rate > 0, got {rate}"));
                }
                Ok(())
            }
            Distribution::GaussianMixture(components) => {
                if components.is_empty() {
                    return bad("mixture needs at least one component".into());
                }
                let mut total = 0.0;
                for &(w, m, s) in components {
                    if !(w >= 0.0) || !(s > 0.0) || !m.is_finite() {
                        return bad(format!("bad mixture component ({w}, {m}, {s})"));
                    }
                    total += w;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("mixture weights sum to {total}, not 1"));
                }
                Ok(())
            }
        }
    }

    /// One draw. Parameters are assumed valid.
    pub fn draw(&self, rng: &mut RandomSource) -> f64 {
        match self {
            Distribution::StandardNormal => standard_normal(rng),
            Distribution::Normal { mean, std } => mean + std * standard_normal(rng),
            Distribution::Uniform { low, high } => low + (high - low) * rng.uniform(),
            Distribution::Poisson { rate } => poisson(*rate, rng),
            Distribution::Exponential { rate } => {
                let e: f64 = rng.sample(Exp1);
                e / rate
            }
            Distribution::GaussianMixture(components) => {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut chosen = components[components.len() - 1];
                for &c in components {
                    acc += c.0;
                    if u < acc {
                        chosen = c;
                        break;
                    }
                }
                chosen.1 + chosen.2 * standard_normal(rng)
            }
        }
    }

    /// `n` i.i.d. draws.
    pub fn sample(&self, n: usize, rng: &mut RandomSource) -> Result<Vec<f64>> {
        self.validate()?;
        Ok((0..n).map(|_| self.draw(rng)).collect())
    }

    /// Analytic mean, where one exists in closed form.
    pub fn mean(&self) -> f64 {
        match self {
            Distribution::StandardNormal => 0.0,
            Distribution::Normal { mean, .. } => *mean,
            Distribution::Uniform { low, high } => 0.5 * (low + high),
            Distribution::Poisson { rate } => *rate,
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::GaussianMixture(c) => c.iter().map(|&(w, m, _)| w * m).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Distribution::StandardNormal => 1.0,
            Distribution::Normal { std, .. } => std * std,
            Distribution::Uniform { low, high } => (high - low).powi(2) / 12.0,
            Distribution::Poisson { rate } => *rate,
            Distribution::Exponential { rate } => 1.0 / (rate * rate),
            Distribution::GaussianMixture(c) => {
                let mean = self.mean();
                c.iter().map(|&(w, m, s)| w * (s * s + (m - mean).powi(2))).sum()
            }
        }
    }

    /// Cumulative distribution function (continuous families only).
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Distribution::StandardNormal => normal_cdf(x),
            Distribution::Normal { mean, std } => normal_cdf((x - mean) / std),
            Distribution::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            Distribution::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-rate * x).exp()
                }
            }
            Distribution::GaussianMixture(c) => c.iter().map(|&(w, m, s)| w * normal_cdf((x - m) / s)).sum(),
            Distribution::Poisson { rate } => {
                if x < 0.0 {
                    return 0.0;
                }
                let k = x.floor() as u64;
                let mut term = (-rate).exp();
                let mut acc = term;
                for i in 1..=k {
                    term *= rate / i as f64;
                    acc += term;
                }
                acc.min(1.0)
            }
        }
    }
}

pub fn standard_normal(rng: &mut RandomSource) -> f64 {
    rng.sample(StandardNormal)
}

/// Poisson draw: sequential-search inversion for small rates, continuity
/// corrected normal approximation for large ones.
pub fn poisson(rate: f64, rng: &mut RandomSource) -> f64 {
    if rate <= POISSON_INVERSION_MAX {
        let u = rng.uniform();
        let mut k = 0u64;
        let mut p = (-rate).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= rate / k as f64;
            cdf += p;
            // guards against round-off leaving cdf just below u forever
            if p < 1e-300 && k as f64 > rate {
                break;
            }
        }
        k as f64
    } else {
        let z = standard_normal(rng);
        (rate + rate.sqrt() * z + 0.5).floor().max(0.0)
    }
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Complementary error function, Numerical Recipes `erfcc` refined
/// (fractional error below 1.2e-7), adequate for KS tests.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Log density of N(mean, std^2).
pub fn normal_log_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}
