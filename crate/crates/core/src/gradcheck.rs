//! Central-difference gradient checking.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the tape gradient of a scalar function against central
/// differences. `f` receives a tape and the input variable and returns the
/// scalar output.
///
/// Relative error per coordinate is `|a - n| / (|n| + 1e-8)`.
pub fn grad_check<F>(f: F, at: &Tensor, step: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {step}")));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(at.clone());
    let y = f(&mut tape, x)?;
    tape.backward(y)?;
    let analytic = tape
        .grad(x)
        .map(|g| g.data().to_vec())
        .unwrap_or_else(|| vec![0.0; at.len()]);

    let eval = |point: Tensor| -> Result<f64> {
        let mut t = Tape::no_grad();
        let v = t.leaf(point);
        let out = f(&mut t, v)?;
        Ok(t.value(out).item())
    };
    let numeric = finite_differences(eval, at, step)?;

    let (mut max_rel_error, mut worst) = (0.0, 0);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = (a - n).abs() / (n.abs() + 1e-8);
        if e > max_rel_error || e.is_nan() {
            max_rel_error = e;
            worst = i;
        }
    }
    Ok(GradCheck {
        max_rel_error,
        worst,
        analytic,
        numeric,
    })
}

/// Central-difference gradient of a plain scalar function.
pub fn finite_differences<F>(f: F, at: &Tensor, step: f64) -> Result<Vec<f64>>
where
    F: Fn(Tensor) -> Result<f64>,
{
    let mut out = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let mut plus = at.clone();
        plus.data_mut()[i] += step;
        let mut minus = at.clone();
        minus.data_mut()[i] -= step;
        let (fp, fm) = (f(plus)?, f(minus)?);
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric {
                message: format!("function not finite at perturbed point ({fp}, {fm})"),
                coordinate: Some(i),
            });
        }
        out.push((fp - fm) / (2.0 * step));
    }
    Ok(out)
}
