//! Maximum-likelihood oracles for the tractable simulators.

use super::{Observations, SimulatorKind, SimulatorSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub max_iterations: usize,
    /// Stop when the spread of simplex values drops below this.
    pub f_tolerance: f64,
    /// ... and the simplex diameter below this.
    pub x_tolerance: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.5,
            max_iterations: 5000,
            f_tolerance: 1e-12,
            x_tolerance: 1e-10,
        }
    }
}

/// Minimises `f` from `start` with the Nelder-Mead simplex method. `f` may
/// return `+inf` to mark infeasible points. Returns `(argmin, min)`.
pub fn nelder_mead<F>(f: F, start: &[f64], opts: NelderMeadOptions) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += opts.initial_step;
        let mut v = eval(&x);
        if !v.is_finite() {
            x[i] = start[i] - opts.initial_step;
            v = eval(&x);
        }
        simplex.push((x, v));
    }

    for _ in 0..opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if worst.is_finite() && (worst - best).abs() <= opts.f_tolerance && diameter <= opts.x_tolerance {
            break;
        }
        if diameter <= opts.x_tolerance * 1e-3 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let reflected = along(-1.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < simplex[n].1 {
            let c = along(-0.5);
            let v = eval(&c);
            (c, v)
        } else {
            let c = along(0.5);
            let v = eval(&c);
            (c, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (contracted, fc);
            continue;
        }
        let best_x = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best_x) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *v = eval(x);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    (x, v)
}

/// Maximum-likelihood estimate of the simulator parameters from `obs`.
pub fn mle_oracle(sim: &SimulatorSpec, obs: &Observations) -> Result<Vec<f64>> {
    if obs.is_empty() {
        return Err(Error::EmptyInput("mle_oracle"));
    }
    if obs.dim != sim.obs_dim() {
        return Err(Error::Dimension(format!(
            "{} observations have dimension {}, got {}",
            sim.name(),
            sim.obs_dim(),
            obs.dim
        )));
    }
    match sim.kind {
        SimulatorKind::Poisson => poisson_mle(obs),
        SimulatorKind::LinearRegression => linreg_mle(obs),
        SimulatorKind::Multivariate => multivariate_mle(sim, obs),
        SimulatorKind::Weinberg => Err(Error::UndefinedMle("the Weinberg simulator has no likelihood oracle".into())),
    }
}

fn poisson_mle(obs: &Observations) -> Result<Vec<f64>> {
    let mean = obs.data.iter().sum::<f64>() / obs.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::UndefinedMle("all Poisson counts are zero".into()));
    }
    Ok(vec![mean.ln()])
}

fn linreg_mle(obs: &Observations) -> Result<Vec<f64>> {
    let n = obs.len() as f64;
    let (xs, ys) = (obs.column(0), obs.column(2));
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::UndefinedMle("regressor has zero variance".into()));
    }
    let slope = sxy / sxx;
    Ok(vec![slope.atan(), my - slope * mx])
}

fn multivariate_mle(sim: &SimulatorSpec, obs: &Observations) -> Result<Vec<f64>> {
    let r = sim
        .r_matrix
        .as_ref()
        .ok_or_else(|| Error::Configuration("multivariate simulator without R".into()))?;
    let inv = r.inverse()?;
    let latent: Vec<[f64; 5]> = obs
        .rows()
        .map(|x| inv.apply(&[x[0], x[1], x[2], x[3], x[4]]))
        .collect();
    let m = latent.len() as f64;
    let max_z3 = latent.iter().map(|z| z[3]).fold(f64::NEG_INFINITY, f64::max);
    let mean_z0 = latent.iter().map(|z| z[0]).sum::<f64>() / m;
    let var_z0 = latent.iter().map(|z| (z[0] - mean_z0).powi(2)).sum::<f64>() / m;
    let ss_z1 = latent.iter().map(|z| (z[1] - 3.0).powi(2)).sum::<f64>();
    let (low, high) = (&sim.prior.low, &sim.prior.high);

    // Only the z0, z1 and z3 terms depend on theta; sufficient statistics
    // keep each evaluation O(1).
    let nll = |t: &[f64]| -> f64 {
        if t.iter().zip(low.iter().zip(high)).any(|(v, (l, h))| v < l || v > h) {
            return f64::INFINITY;
        }
        if t[2] < max_z3 {
            return f64::INFINITY;
        }
        let log_s = t[1] / 3.0;
        let z0_term = 0.5 * m * (var_z0 + (mean_z0 - t[0]).powi(2));
        let z1_term = 0.5 * ss_z1 * (-2.0 * log_s).exp();
        m * log_s + m * (t[2] + 5.0).ln() + z0_term + z1_term
    };

    if max_z3 > high[2] {
        return Err(Error::UndefinedMle(format!(
            "largest latent uniform draw {max_z3} exceeds the prior bound {}",
            high[2]
        )));
    }
    let theta2_start = 0.5 * (max_z3.max(low[2]) + high[2]);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &a in &[-1.5, 0.0, 1.5] {
        for &b in &[-1.5, 0.0, 1.5] {
            let (x, v) = nelder_mead(nll, &[a, b, theta2_start], NelderMeadOptions::default());
            if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                best = Some((x, v));
            }
        }
    }
    let (x, v) = best.expect("at least one start");
    if !v.is_finite() {
        return Err(Error::UndefinedMle("no feasible point in the prior box".into()));
    }
    Ok(x)
}
