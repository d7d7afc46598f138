use std::f64::consts::PI;

use crate::dist::standard_normal;
use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Noise variance of the response.
pub const NOISE_VARIANCE: f64 = 0.1;

/// Observations `[x, 1, y]` with `x ~ U(-1, 1)` and
/// `y = tan(theta_0) x + theta_1 + n`, `n ~ N(0, 0.1)` (variance).
pub fn linreg_forward(theta: [f64; 2], m: usize, rng: &mut RandomSource, noise: bool) -> Result<Vec<Vec<f64>>> {
    // distance to the nearest pole of tan
    let offset = (theta[0] - PI / 2.0).rem_euclid(PI);
    if offset.min(PI - offset) < 1e-9 || !theta[0].is_finite() || !theta[1].is_finite() {
        return Err(Error::SingularParameter(format!("slope angle {} is at a tan pole", theta[0])));
    }
    let slope = theta[0].tan();
    let sd = NOISE_VARIANCE.sqrt();
    Ok((0..m)
        .map(|_| {
            let x = -1.0 + 2.0 * rng.uniform();
            let n = if noise { sd * standard_normal(rng) } else { 0.0 };
            vec![x, 1.0, slope * x + theta[1] + n]
        })
        .collect())
}
