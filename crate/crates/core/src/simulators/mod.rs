//! Stochastic forward simulators with box-uniform parameter priors and,
//! where the likelihood is tractable, maximum-likelihood oracles.

mod linreg;
mod mle;
mod multivariate;
mod poisson;
mod weinberg;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use linreg::linreg_forward;
pub use mle::{mle_oracle, nelder_mead, NelderMeadOptions};
pub use multivariate::{generate_r_matrix, multivariate_forward, RMatrix, R_MATRIX_SEED};
pub use poisson::poisson_forward;
pub use weinberg::{weinberg_density, weinberg_forward, weinberg_asymmetry};

use crate::error::{Error, Result};
use crate::nn::InputScaling;
use crate::rng::RandomSource;

/// Axis-aligned uniform prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPrior {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BoxPrior {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() || low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::Configuration(format!("invalid prior box {low:?} .. {high:?}")));
        }
        Ok(Self { low, high })
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    /// One draw; each coordinate lies in `[low, high)`.
    pub fn sample_one(&self, rng: &mut RandomSource) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| l + (h - l) * rng.uniform())
            .collect()
    }

    pub fn sample(&self, n: usize, rng: &mut RandomSource) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(t, (l, h))| (l..=h).contains(&t))
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn half_width(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h - l)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulatorKind {
    Poisson,
    LinearRegression,
    Multivariate,
    Weinberg,
}

impl SimulatorKind {
    pub const ALL: [SimulatorKind; 4] = [
        SimulatorKind::Poisson,
        SimulatorKind::LinearRegression,
        SimulatorKind::Multivariate,
        SimulatorKind::Weinberg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimulatorKind::Poisson => "poisson",
            SimulatorKind::LinearRegression => "linreg",
            SimulatorKind::Multivariate => "multivariate",
            SimulatorKind::Weinberg => "weinberg",
        }
    }
}

impl fmt::Display for SimulatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimulatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" => Ok(SimulatorKind::Poisson),
            "linreg" | "linear_regression" | "linear-regression" => Ok(SimulatorKind::LinearRegression),
            "multivariate" => Ok(SimulatorKind::Multivariate),
            "weinberg" => Ok(SimulatorKind::Weinberg),
            other => Err(Error::Usage(format!(
                "unknown simulator '{other}' (expected poisson, linreg, multivariate or weinberg)"
            ))),
        }
    }
}

/// A set of `len` observations of dimension `dim`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Observations {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!("{} values do not split into rows of {dim}", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Values of column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

/// One simulator: prior, forward process, optional likelihood oracle and
/// the fixed transform that turns raw observations into network inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatorSpec {
    pub kind: SimulatorKind,
    pub prior: BoxPrior,
    /// Mixing matrix of the multivariate simulator.
    pub r_matrix: Option<RMatrix>,
    /// `R^-1`, used to decorrelate multivariate features; `None` if `R` is singular.
    pub r_inverse: Option<RMatrix>,
    /// Linear-regression noise switch; only unit tests turn it off.
    pub linreg_noise: bool,
}

impl SimulatorSpec {
    pub fn poisson() -> Self {
        Self::plain(SimulatorKind::Poisson, vec![0.2], vec![7.0])
    }

    pub fn linear_regression() -> Self {
        Self::plain(SimulatorKind::LinearRegression, vec![0.0, -1.0], vec![std::f64::consts::FRAC_PI_2, 1.0])
    }

    /// Multivariate simulator with the committed mixing matrix.
    pub fn multivariate() -> Self {
        Self::multivariate_with(RMatrix::committed())
    }

    pub fn multivariate_with(r: RMatrix) -> Self {
        Self {
            r_inverse: r.inverse().ok(),
            r_matrix: Some(r),
            ..Self::plain(SimulatorKind::Multivariate, vec![-3.0; 3], vec![3.0; 3])
        }
    }

    pub fn weinberg() -> Self {
        Self::plain(SimulatorKind::Weinberg, vec![40.0, 0.5], vec![50.0, 1.5])
    }

    fn plain(kind: SimulatorKind, low: Vec<f64>, high: Vec<f64>) -> Self {
        Self {
            kind,
            prior: BoxPrior::new(low, high).expect("static prior"),
            r_matrix: None,
            r_inverse: None,
            linreg_noise: true,
        }
    }

    pub fn from_kind(kind: SimulatorKind) -> Self {
        match kind {
            SimulatorKind::Poisson => Self::poisson(),
            SimulatorKind::LinearRegression => Self::linear_regression(),
            SimulatorKind::Multivariate => Self::multivariate(),
            SimulatorKind::Weinberg => Self::weinberg(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::from_kind(name.parse()?))
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn param_dim(&self) -> usize {
        self.prior.dim()
    }

    /// Raw observation dimension.
    pub fn obs_dim(&self) -> usize {
        match self.kind {
            SimulatorKind::Poisson | SimulatorKind::Weinberg => 1,
            SimulatorKind::LinearRegression => 3,
            SimulatorKind::Multivariate => 5,
        }
    }

    /// Dimension of the network-facing feature vector.
    pub fn feature_dim(&self) -> usize {
        match self.kind {
            SimulatorKind::Multivariate => 2 * self.obs_dim(),
            _ => self.obs_dim(),
        }
    }

    pub fn has_mle(&self) -> bool {
        self.kind != SimulatorKind::Weinberg
    }

    pub fn simulate(&self, theta: &[f64], m: usize, rng: &mut RandomSource) -> Result<Observations> {
        if theta.len() != self.param_dim() {
            return Err(Error::Dimension(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                self.param_dim(),
                theta.len()
            )));
        }
        if m == 0 {
            return Err(Error::EmptyInput("simulate: M must be positive"));
        }
        let data = match self.kind {
            SimulatorKind::Poisson => poisson_forward(theta[0], m, rng),
            SimulatorKind::LinearRegression => {
                linreg_forward([theta[0], theta[1]], m, rng, self.linreg_noise)?.concat()
            }
            SimulatorKind::Multivariate => {
                let r = self
                    .r_matrix
                    .as_ref()
                    .ok_or_else(|| Error::Configuration("multivariate simulator without R".into()))?;
                multivariate_forward([theta[0], theta[1], theta[2]], m, r, rng)?.concat()
            }
            SimulatorKind::Weinberg => weinberg_forward([theta[0], theta[1]], m, rng)?,
        };
        Observations::new(self.obs_dim(), data)
    }

    /// Fixed per-simulator transform of one observation into network input.
    /// Compresses heavy-tailed coordinates so every feature is O(1).
    pub fn featurize_into(&self, obs: &[f64], out: &mut Vec<f64>) {
        match self.kind {
            SimulatorKind::Poisson => out.push(obs[0].ln_1p() / 4.0),
            SimulatorKind::LinearRegression => out.extend_from_slice(&[obs[0], obs[1], obs[2].asinh() / 2.0]),
            SimulatorKind::Multivariate => {
                let x = [obs[0], obs[1], obs[2], obs[3], obs[4]];
                let z = self.r_inverse.as_ref().map_or(x, |inv| inv.apply(&x));
                out.extend(z.iter().map(|v| v / 5.0));
                out.extend(z.iter().map(|v| (v / 5.0).powi(2)));
            }
            SimulatorKind::Weinberg => out.push(obs[0]),
        }
    }

    /// Feature matrix of a whole observation set, row-major.
    pub fn features(&self, obs: &Observations) -> Vec<f64> {
        let mut out = Vec::with_capacity(obs.len() * self.feature_dim());
        for row in obs.rows() {
            self.featurize_into(row, &mut out);
        }
        out
    }

    /// Maps the proposal mean onto roughly `[-1, 1]` over the prior box;
    /// log-std passes through unchanged.
    pub fn psi_scaling(&self) -> InputScaling {
        let d = self.param_dim();
        let mut shift = self.prior.center();
        shift.extend(std::iter::repeat_n(0.0, d));
        let mut gain: Vec<f64> = self.prior.half_width().iter().map(|w| 1.0 / w).collect();
        gain.extend(std::iter::repeat_n(1.0, d));
        InputScaling { shift, gain }
    }

    pub fn sample_prior(&self, n: usize, rng: &mut RandomSource) -> Vec<Vec<f64>> {
        self.prior.sample(n, rng)
    }

    pub fn mle(&self, obs: &Observations) -> Result<Vec<f64>> {
        mle_oracle(self, obs)
    }
}

/// `n` box-uniform parameter vectors from the simulator's prior.
pub fn sample_prior(sim: &SimulatorSpec, n: usize, rng: &mut RandomSource) -> Vec<Vec<f64>> {
    sim.sample_prior(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_bounds_per_simulator() {
        let mut rng = RandomSource::new(1);
        let p = SimulatorSpec::poisson();
        let draws = sample_prior(&p, 10_000, &mut rng);
        assert!(draws.iter().all(|t| (0.2..=7.0).contains(&t[0])));
        let mean = draws.iter().map(|t| t[0]).sum::<f64>() / 1e4;
        // uniform [0.2, 7]: mean 3.6, std 6.8/sqrt(12)
        assert!((mean - 3.6).abs() < 3.0 * 6.8 / 12f64.sqrt() / 100.0);

        let w = SimulatorSpec::weinberg();
        for t in sample_prior(&w, 5000, &mut rng) {
            assert!((40.0..=50.0).contains(&t[0]) && (0.5..=1.5).contains(&t[1]));
        }
        let m = SimulatorSpec::multivariate();
        for t in sample_prior(&m, 5000, &mut rng) {
            assert!(t.iter().all(|v| (-3.0..=3.0).contains(v)));
        }
        let l = SimulatorSpec::linear_regression();
        for t in sample_prior(&l, 5000, &mut rng) {
            assert!(t[0] >= 0.0 && t[0] < std::f64::consts::FRAC_PI_2);
            assert!((-1.0..=1.0).contains(&t[1]));
        }
    }

    #[test]
    fn names_round_trip() {
        for k in SimulatorKind::ALL {
            assert_eq!(k.name().parse::<SimulatorKind>().unwrap(), k);
            assert_eq!(SimulatorSpec::from_kind(k).kind, k);
        }
        assert!("gauss".parse::<SimulatorKind>().is_err());
    }

    #[test]
    fn forward_is_deterministic_per_seed() {
        for k in SimulatorKind::ALL {
            let sim = SimulatorSpec::from_kind(k);
            let theta = sim.prior.center();
            let a = sim.simulate(&theta, 50, &mut RandomSource::new(3)).unwrap();
            let b = sim.simulate(&theta, 50, &mut RandomSource::new(3)).unwrap();
            let c = sim.simulate(&theta, 50, &mut RandomSource::new(4)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
            assert_eq!(a.len(), 50);
            assert_eq!(sim.features(&a).len(), 50 * sim.feature_dim());
        }
    }

    #[test]
    fn simulate_checks_dimensions() {
        let sim = SimulatorSpec::poisson();
        assert!(sim.simulate(&[1.0, 2.0], 5, &mut RandomSource::new(0)).is_err());
        assert!(sim.simulate(&[1.0], 0, &mut RandomSource::new(0)).is_err());
    }

    #[test]
    fn psi_scaling_maps_box_to_unit() {
        let sim = SimulatorSpec::weinberg();
        let s = sim.psi_scaling();
        let lo = (40.0 - s.shift[0]) * s.gain[0];
        let hi = (1.5 - s.shift[1]) * s.gain[1];
        assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert_eq!(&s.gain[2..], &[1.0, 1.0]);
    }
}
