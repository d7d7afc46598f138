use super::config::{LossKind, Weighting};
use crate::error::{Error, Result};
use crate::proposal::{log_density, log_density_value, ProposalParams};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Weight of step `t` (1-based) out of `T`. For the exponential scheme,
/// `x = t / T`; `beta = 0` takes the analytic limit `x`.
pub fn step_weight(t: usize, total: usize, scheme: Weighting, beta: f64) -> f64 {
    debug_assert!(t >= 1 && t <= total);
    match scheme {
        Weighting::Final => {
            if t == total {
                1.0
            } else {
                0.0
            }
        }
        Weighting::Uniform => 1.0,
        Weighting::Exponential => {
            let x = t as f64 / total as f64;
            if t == total {
                1.0
            } else if beta.abs() < 1e-12 {
                x
            } else {
                (beta * x).exp_m1() / beta.exp_m1()
            }
        }
    }
}

/// Differentiable per-step loss of `psi: (1, 2d)` against `theta_star`.
pub fn partial_loss(tape: &mut Tape, psi: Var, theta_star: &[f64], kind: LossKind) -> Result<Var> {
    let d = theta_star.len();
    if tape.value(psi).len() != 2 * d {
        return Err(Error::shape("partial_loss", tape.shape(psi), &[1, 2 * d]));
    }
    match kind {
        LossKind::Nll => {
            let lp = log_density(tape, theta_star, psi)?;
            Ok(tape.neg(lp))
        }
        LossKind::Mse => {
            let mean = tape.slice(psi, 0, d)?;
            let target = tape.constant(Tensor::row(theta_star));
            let diff = tape.sub(mean, target)?;
            let sq = tape.square(diff);
            Ok(tape.sum(sq))
        }
    }
}

pub fn partial_loss_value(psi: &ProposalParams, theta_star: &[f64], kind: LossKind) -> f64 {
    match kind {
        LossKind::Nll => -log_density_value(theta_star, psi),
        LossKind::Mse => psi.mean.iter().zip(theta_star).map(|(m, t)| (m - t).powi(2)).sum(),
    }
}

/// `sum_t w_t * loss(psi_t, theta_star)` over a proposal trajectory.
pub fn total_loss(psis: &[ProposalParams], theta_star: &[f64], scheme: Weighting, beta: f64, kind: LossKind) -> f64 {
    let total = psis.len();
    psis.iter()
        .enumerate()
        .map(|(i, p)| step_weight(i + 1, total, scheme, beta) * partial_loss_value(p, theta_star, kind))
        .sum()
}
