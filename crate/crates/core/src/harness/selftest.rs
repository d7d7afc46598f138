use std::time::Instant;

use serde::Serialize;

use super::metrics::median;
use crate::dist::Distribution;
use crate::error::Result;
use crate::gradcheck::{finite_differences, grad_check};
use crate::nn::{dense_forward, gru_step, DenseLayer, GruCell};
use crate::proposal::{log_density_value, score, ProposalParams};
use crate::rng::RandomSource;
use crate::simulators::{weinberg_asymmetry, SimulatorSpec};
use crate::tape::{Activation, Tape, Var};
use crate::tensor::Tensor;

/// Outcome of one oracle suite.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    /// Failed checks, or a one-line summary when everything passed.
    pub detail: Vec<String>,
    pub seconds: f64,
}

pub const GRAD_TOLERANCE: f64 = 1e-5;
pub const SCORE_TOLERANCE: f64 = 1e-6;
pub const GRAD_INSTANCES: usize = 50;
pub const MOMENT_SAMPLES: usize = 100_000;

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut RandomSource) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| lo + (hi - lo) * rng.uniform()).collect()).expect("shape")
}

/// Values with magnitude in `[gap, 1]` and random sign, away from kinks at 0.
fn away_from_zero(shape: &[usize], gap: f64, rng: &mut RandomSource) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = gap + (1.0 - gap) * rng.uniform();
            if rng.uniform() < 0.5 {
                -v
            } else {
                v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

type OpFn = Box<dyn Fn(&mut Tape, Var, &[Tensor]) -> Result<Var>>;

struct OpCase {
    name: &'static str,
    input: Box<dyn Fn(&mut RandomSource) -> Tensor>,
    constants: Box<dyn Fn(&mut RandomSource) -> Vec<Tensor>>,
    op: OpFn,
}

fn case(
    name: &'static str,
    input: impl Fn(&mut RandomSource) -> Tensor + 'static,
    constants: impl Fn(&mut RandomSource) -> Vec<Tensor> + 'static,
    op: impl Fn(&mut Tape, Var, &[Tensor]) -> Result<Var> + 'static,
) -> OpCase {
    OpCase {
        name,
        input: Box::new(input),
        constants: Box::new(constants),
        op: Box::new(op),
    }
}

fn op_cases() -> Vec<OpCase> {
    let u = |shape: &'static [usize]| move |r: &mut RandomSource| uniform(shape, -1.0, 1.0, r);
    let none = |_: &mut RandomSource| Vec::new();
    let one = |shape: &'static [usize]| move |r: &mut RandomSource| vec![uniform(shape, -1.0, 1.0, r)];
    vec![
        case("matmul.lhs", u(&[3, 4]), one(&[4, 2]), |t, x, c| {
            let b = t.constant(c[0].clone());
            t.matmul(x, b)
        }),
        case("matmul.rhs", u(&[4, 2]), one(&[3, 4]), |t, x, c| {
            let a = t.constant(c[0].clone());
            t.matmul(a, x)
        }),
        case(
            "affine.input",
            u(&[5, 3]),
            |r| vec![uniform(&[4, 3], -1.0, 1.0, r), uniform(&[4], -1.0, 1.0, r)],
            |t, x, c| {
                let (w, b) = (t.constant(c[0].clone()), t.constant(c[1].clone()));
                t.affine(x, w, b)
            },
        ),
        case(
            "affine.weight",
            u(&[4, 3]),
            |r| vec![uniform(&[5, 3], -1.0, 1.0, r), uniform(&[4], -1.0, 1.0, r)],
            |t, w, c| {
                let (x, b) = (t.constant(c[0].clone()), t.constant(c[1].clone()));
                t.affine(x, w, b)
            },
        ),
        case("add", u(&[3, 3]), one(&[3, 3]), |t, x, c| {
            let y = t.constant(c[0].clone());
            t.add(x, y)
        }),
        case("sub", u(&[3, 3]), one(&[3, 3]), |t, x, c| {
            let y = t.constant(c[0].clone());
            t.sub(y, x)
        }),
        case("mul", u(&[3, 3]), one(&[3, 3]), |t, x, c| {
            let y = t.constant(c[0].clone());
            t.mul(x, y)
        }),
        case("mul.self", u(&[2, 3]), none, |t, x, _| t.mul(x, x)),
        case("scale", u(&[2, 3]), none, |t, x, _| Ok(t.scale(x, -1.7))),
        case("add_scalar", u(&[2, 3]), none, |t, x, _| Ok(t.add_scalar(x, 0.3))),
        case("neg", u(&[2, 3]), none, |t, x, _| Ok(t.neg(x))),
        case("sigmoid", u(&[2, 4]), none, |t, x, _| Ok(t.sigmoid(x))),
        case("tanh", u(&[2, 4]), none, |t, x, _| Ok(t.tanh(x))),
        case("relu", |r| away_from_zero(&[2, 4], 0.05, r), none, |t, x, _| Ok(t.relu(x))),
        case("exp", u(&[2, 4]), none, |t, x, _| Ok(t.exp(x))),
        case("log", |r| uniform(&[2, 4], 0.5, 2.0, r), none, |t, x, _| Ok(t.log(x))),
        case("square", u(&[2, 4]), none, |t, x, _| Ok(t.square(x))),
        case("concat", u(&[2, 3]), one(&[2, 2]), |t, x, c| {
            let y = t.constant(c[0].clone());
            t.concat(&[y, x, x])
        }),
        case("mean_axis.0", u(&[4, 3]), none, |t, x, _| t.mean_axis(x, 0)),
        case("mean_axis.1", u(&[4, 3]), none, |t, x, _| t.mean_axis(x, 1)),
        case("sum", u(&[3, 2]), none, |t, x, _| Ok(t.sum(x))),
        case("mean", u(&[3, 2]), none, |t, x, _| Ok(t.mean(x))),
        case("group_mean_rows", u(&[6, 3]), none, |t, x, _| t.group_mean_rows(x, 2)),
        case("repeat_rows", u(&[1, 3]), none, |t, x, _| t.repeat_rows(x, 4)),
        case("slice", u(&[2, 5]), none, |t, x, _| t.slice(x, 1, 4)),
        case(
            "clamp",
            |r| uniform(&[3, 4], -1.0, 1.0, r).map(|v| if (v.abs() - 0.5).abs() < 0.01 { v * 0.9 } else { v }),
            none,
            |t, x, _| t.clamp(x, -0.5, 0.5),
        ),
        case("dense", u(&[3, 4]), |r| {
            let l = DenseLayer::new(4, 5, Activation::Tanh, r);
            vec![l.weight, l.bias]
        }, |t, x, c| {
            let l = DenseLayer::from_parts(c[0].clone(), c[1].clone(), Activation::Tanh)?.bind(t);
            dense_forward(t, &l, x)
        }),
        case("gru.state", u(&[1, 4]), |r| {
            let g = GruCell::new(3, 4, r);
            let mut v: Vec<Tensor> = g.parameters().into_iter().cloned().collect();
            v.push(uniform(&[1, 3], -1.0, 1.0, r));
            v
        }, |t, h, c| {
            let g = gru_from(&c[..9])?.bind(t);
            let x = t.constant(c[9].clone());
            gru_step(t, &g, x, h)
        }),
        case("gru.input", u(&[1, 3]), |r| {
            let g = GruCell::new(3, 4, r);
            let mut v: Vec<Tensor> = g.parameters().into_iter().cloned().collect();
            v.push(uniform(&[1, 4], -1.0, 1.0, r));
            v
        }, |t, x, c| {
            let g = gru_from(&c[..9])?.bind(t);
            let h = t.constant(c[9].clone());
            gru_step(t, &g, x, h)
        }),
    ]
}

fn gru_from(p: &[Tensor]) -> Result<GruCell> {
    let g = GruCell {
        w_update: p[0].clone(),
        u_update: p[1].clone(),
        b_update: p[2].clone(),
        w_reset: p[3].clone(),
        u_reset: p[4].clone(),
        b_reset: p[5].clone(),
        w_candidate: p[6].clone(),
        u_candidate: p[7].clone(),
        b_candidate: p[8].clone(),
    };
    g.validate()?;
    Ok(g)
}

/// Tape gradients of every op against central differences, each reduced to
/// a scalar through a random projection.
pub fn autodiff_suite(seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut detail = Vec::new();
    let mut checks = 0;
    let mut worst = 0.0f64;
    for (k, c) in op_cases().iter().enumerate() {
        for i in 0..GRAD_INSTANCES {
            let mut rng = RandomSource::new(seed).derive(&[k as u64, i as u64]);
            let x = (c.input)(&mut rng);
            let consts = (c.constants)(&mut rng);
            let out_shape = {
                let mut t = Tape::no_grad();
                let v = t.leaf(x.clone());
                match (c.op)(&mut t, v, &consts) {
                    Ok(y) => t.shape(y).to_vec(),
                    Err(e) => {
                        detail.push(format!("{}: {e}", c.name));
                        break;
                    }
                }
            };
            let proj = uniform(&out_shape, 0.5, 1.5, &mut rng);
            let result = grad_check(
                |t, v| {
                    let y = (c.op)(t, v, &consts)?;
                    let p = t.constant(proj.clone());
                    let prod = t.mul(y, p)?;
                    Ok(t.sum(prod))
                },
                &x,
                1e-6,
            );
            checks += 1;
            match result {
                Ok(r) => {
                    worst = worst.max(r.max_rel_error);
                    if !(r.max_rel_error < GRAD_TOLERANCE) {
                        detail.push(format!("{} instance {i}: relative error {:.3e}", c.name, r.max_rel_error));
                    }
                }
                Err(e) => detail.push(format!("{} instance {i}: {e}", c.name)),
            }
        }
    }
    let passed = detail.is_empty();
    if passed {
        detail.push(format!("{checks} checks over {} ops, worst relative error {worst:.2e}", op_cases().len()));
    }
    SuiteResult {
        name: "autodiff",
        passed,
        checks,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Closed-form proposal score against central differences of the log-density.
pub fn score_suite(seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut detail = Vec::new();
    let mut worst = 0.0f64;
    let trials = 200;
    for i in 0..trials {
        let mut rng = RandomSource::new(seed).child(i);
        let d = 1 + rng.below(3);
        let mean: Vec<f64> = (0..d).map(|_| rng.uniform() * 4.0 - 2.0).collect();
        let log_std: Vec<f64> = (0..d).map(|_| rng.uniform() * 2.0 - 1.0).collect();
        let theta: Vec<f64> = (0..d).map(|_| rng.uniform() * 4.0 - 2.0).collect();
        let psi = ProposalParams::new(mean, log_std).expect("valid");
        let analytic = score(&theta, &psi);
        let numeric = finite_differences(
            |p| Ok(log_density_value(&theta, &ProposalParams::from_flat(p.data())?)),
            &Tensor::vector(&psi.to_flat()),
            1e-5,
        );
        match numeric {
            Ok(n) => {
                for (a, b) in analytic.iter().zip(&n) {
                    let e = (a - b).abs() / (b.abs() + 1e-8);
                    worst = worst.max(e);
                    if !(e < SCORE_TOLERANCE) && (a - b).abs() > 1e-9 {
                        detail.push(format!("trial {i}: analytic {a} vs numeric {b}"));
                    }
                }
            }
            Err(e) => detail.push(format!("trial {i}: {e}")),
        }
    }
    let passed = detail.is_empty();
    if passed {
        detail.push(format!("{trials} random proposals, worst relative error {worst:.2e}"));
    }
    SuiteResult {
        name: "proposal score",
        passed,
        checks: trials as usize,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Sample mean and variance within three Monte Carlo standard errors.
fn moment_check(name: &str, samples: &[f64], mean: f64, var: f64, detail: &mut Vec<String>) {
    let n = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / n;
    let dev2: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
    let s2 = dev2.iter().sum::<f64>() / n;
    let sd_dev2 = (dev2.iter().map(|v| (v - s2).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if (m - mean).abs() > 3.0 * (var / n).sqrt() {
        detail.push(format!("{name}: mean {m} vs {mean}"));
    }
    if (s2 - var).abs() > 3.0 * sd_dev2 / n.sqrt() {
        detail.push(format!("{name}: variance {s2} vs {var}"));
    }
}

pub fn sampler_suite(seed: u64) -> SuiteResult {
    let start = Instant::now();
    let mut detail = Vec::new();
    let dists = [
        ("standard normal", Distribution::StandardNormal),
        ("normal", Distribution::Normal { mean: 3.0, std: 0.5 }),
        ("uniform", Distribution::Uniform { low: -5.0, high: 2.0 }),
        ("poisson small", Distribution::Poisson { rate: 3.7 }),
        ("poisson mid", Distribution::Poisson { rate: 29.0 }),
        ("poisson large", Distribution::Poisson { rate: 400.0 }),
        ("exponential", Distribution::Exponential { rate: 2.0 }),
        (
            "gaussian mixture",
            Distribution::GaussianMixture(vec![(0.5, -2.0, 1.0), (0.5, 2.0, 0.5)]),
        ),
    ];
    let mut checks = 0;
    for (k, (name, d)) in dists.iter().enumerate() {
        let mut rng = RandomSource::new(seed).child(k as u64);
        match d.sample(MOMENT_SAMPLES, &mut rng) {
            Ok(s) => moment_check(name, &s, d.mean(), d.variance(), &mut detail),
            Err(e) => detail.push(format!("{name}: {e}")),
        }
        checks += 2;
    }
    // Weinberg: E[x] = a/4 and E[x^2] = 2/5 for the normalised density.
    let theta = [45.0, 1.2];
    let a = weinberg_asymmetry(theta);
    let sim = SimulatorSpec::weinberg();
    match sim.simulate(&theta, MOMENT_SAMPLES, &mut RandomSource::new(seed).child_named("weinberg")) {
        Ok(obs) => moment_check("weinberg", &obs.data, a / 4.0, 0.4 - a * a / 16.0, &mut detail),
        Err(e) => detail.push(format!("weinberg: {e}")),
    }
    checks += 2;
    let passed = detail.is_empty();
    if passed {
        detail.push(format!("{checks} moment checks at n = {MOMENT_SAMPLES}"));
    }
    SuiteResult {
        name: "samplers",
        passed,
        checks,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Median MLE error over `trials` problems at each sample size.
pub fn mle_median_errors(sim: &SimulatorSpec, sizes: &[usize], trials: usize, seed: u64) -> Vec<f64> {
    sizes
        .iter()
        .map(|&m| {
            let errs: Vec<f64> = (0..trials)
                .filter_map(|i| {
                    let mut rng = RandomSource::new(seed).derive(&[m as u64, i as u64]);
                    let theta = sim.prior.sample_one(&mut rng);
                    let obs = sim.simulate(&theta, m, &mut rng).ok()?;
                    let est = sim.mle(&obs).ok()?;
                    Some(super::metrics::distance(&est, &theta))
                })
                .collect();
            median(&errs)
        })
        .collect()
}

pub fn mle_suite(seed: u64) -> SuiteResult {
    let start = Instant::now();
    let sizes = [100, 1_000, 10_000];
    let mut detail = Vec::new();
    let mut summary = Vec::new();
    for sim in [SimulatorSpec::poisson(), SimulatorSpec::linear_regression(), SimulatorSpec::multivariate()] {
        let med = mle_median_errors(&sim, &sizes, 50, seed);
        let shrinking = med.windows(2).all(|w| w[1] < w[0]);
        let line = format!(
            "{}: median error {}",
            sim.name(),
            med.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" > ")
        );
        if shrinking {
            summary.push(line);
        } else {
            detail.push(line + " (not shrinking)");
        }
    }
    let passed = detail.is_empty();
    SuiteResult {
        name: "mle consistency",
        passed,
        checks: 3,
        detail: if passed { summary } else { detail },
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Every oracle suite in turn.
pub fn run_selftest(seed: u64) -> Vec<SuiteResult> {
    vec![autodiff_suite(seed), score_suite(seed), sampler_suite(seed), mle_suite(seed)]
}
