//! Diagonal Gaussian proposal over simulator parameters.
//!
//! Parameters are stored as mean `mu` and log standard deviation `rho`, so
//! `sigma = exp(rho)` is positive by construction and updates act on an
//! unconstrained space. The flattened vector is `[mu, rho]`, length `2d`.

use serde::{Deserialize, Serialize};

use crate::dist::standard_normal;
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::simulators::BoxPrior;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Log standard deviation every proposal starts from.
pub const INITIAL_LOG_STD: f64 = 0.5;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalParams {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl ProposalParams {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() || mean.is_empty() {
            return Err(Error::Dimension(format!(
                "mean has {} entries, log-std {}",
                mean.len(),
                log_std.len()
            )));
        }
        Ok(Self { mean, log_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|r| r.exp()).collect()
    }

    /// `[mu, rho]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.mean.clone();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(2) || flat.is_empty() {
            return Err(Error::Dimension(format!("flat proposal of odd length {}", flat.len())));
        }
        let d = flat.len() / 2;
        Self::new(flat[..d].to_vec(), flat[d..].to_vec())
    }
}

/// Initial proposal: mean drawn from the parameter prior, log-std fixed at
/// [`INITIAL_LOG_STD`].
pub fn init_proposal(prior: &BoxPrior, rng: &mut RandomSource) -> ProposalParams {
    let mean = prior.sample_one(rng);
    let log_std = vec![INITIAL_LOG_STD; mean.len()];
    ProposalParams { mean, log_std }
}

/// `count` draws `theta = mu + sigma * eps`. Plain values, never on a tape.
pub fn sample_proposal(psi: &ProposalParams, count: usize, rng: &mut RandomSource) -> Vec<Vec<f64>> {
    let std = psi.std();
    (0..count)
        .map(|_| {
            psi.mean
                .iter()
                .zip(&std)
                .map(|(m, s)| m + s * standard_normal(rng))
                .collect()
        })
        .collect()
}

/// `log q(theta | psi)` evaluated directly.
pub fn log_density_value(theta: &[f64], psi: &ProposalParams) -> f64 {
    theta
        .iter()
        .zip(&psi.mean)
        .zip(&psi.log_std)
        .map(|((t, m), r)| {
            let z = (t - m) * (-r).exp();
            -r - HALF_LN_2PI - 0.5 * z * z
        })
        .sum()
}

/// Differentiable `log q(theta | psi)` for `psi: (1, 2d)` on a tape.
pub fn log_density(tape: &mut Tape, theta: &[f64], psi: Var) -> Result<Var> {
    let d = theta.len();
    if tape.value(psi).len() != 2 * d {
        return Err(Error::shape("log_density", tape.shape(psi), &[1, 2 * d]));
    }
    let mean = tape.slice(psi, 0, d)?;
    let log_std = tape.slice(psi, d, 2 * d)?;
    let target = tape.constant(Tensor::new(tape.shape(mean).to_vec(), theta.to_vec())?);
    let diff = tape.sub(target, mean)?;
    let sq = tape.square(diff);
    let scaled_rho = tape.scale(log_std, -2.0);
    let inv_var = tape.exp(scaled_rho);
    let quad = tape.mul(sq, inv_var)?;
    let quad = tape.scale(quad, -0.5);
    let neg_rho = tape.neg(log_std);
    let per_dim = tape.add(quad, neg_rho)?;
    let total = tape.sum(per_dim);
    Ok(tape.add_scalar(total, -(d as f64) * HALF_LN_2PI))
}

/// Closed-form `grad_psi log q(theta | psi)` laid out as `[d/dmu, d/drho]`.
pub fn score(theta: &[f64], psi: &ProposalParams) -> Vec<f64> {
    let d = psi.dim();
    let mut out = vec![0.0; 2 * d];
    for j in 0..d {
        let inv_var = (-2.0 * psi.log_std[j]).exp();
        let diff = theta[j] - psi.mean[j];
        out[j] = diff * inv_var;
        out[d + j] = diff * diff * inv_var - 1.0;
    }
    out
}

/// Expected value of the proposal.
pub fn proposal_mean(psi: &ProposalParams) -> Vec<f64> {
    psi.mean.clone()
}
