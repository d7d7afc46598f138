use serde::{Deserialize, Serialize};

use super::config::{LossKind, TrainConfig, Weighting};
use super::loss::{partial_loss, step_weight};
use crate::error::{Error, Result};
use crate::nn::{encode_sets, updater_forward, BoundUpdater, RecurrentUpdater};
use crate::proposal::{init_proposal, sample_proposal, score, ProposalParams};
use crate::rng::{labels, RandomSource};
use crate::simulators::{Observations, SimulatorSpec};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// One inference problem: a true parameter and the observations it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaProblem {
    pub theta_star: Vec<f64>,
    pub real: Observations,
    pub simulator: String,
    pub seed: u64,
}

impl MetaProblem {
    /// Draws `theta*` from the prior and `m_real` observations at it, both
    /// from streams derived from `seed`.
    pub fn generate(sim: &SimulatorSpec, seed: u64, m_real: usize) -> Result<Self> {
        let root = RandomSource::new(seed);
        let theta_star = sim.prior.sample_one(&mut root.child(labels::INIT));
        let real = Self::real_observations(sim, &theta_star, seed, m_real)?;
        Ok(Self {
            theta_star,
            real,
            simulator: sim.name().to_string(),
            seed,
        })
    }

    /// Problem with a given `theta*`, observations drawn from `seed`.
    pub fn at(sim: &SimulatorSpec, theta_star: Vec<f64>, seed: u64, m_real: usize) -> Result<Self> {
        let real = Self::real_observations(sim, &theta_star, seed, m_real)?;
        Ok(Self {
            theta_star,
            real,
            simulator: sim.name().to_string(),
            seed,
        })
    }

    /// The observation set of `(sim, theta_star, seed)`.
    pub fn real_observations(sim: &SimulatorSpec, theta_star: &[f64], seed: u64, m_real: usize) -> Result<Observations> {
        sim.simulate(theta_star, m_real, &mut RandomSource::new(seed).child(labels::REAL))
    }
}

/// `n` problems with `theta*` from the prior; problem `i` is seeded from
/// `rng.child(i)`.
pub fn make_meta_dataset(sim: &SimulatorSpec, n: usize, m_real: usize, rng: &RandomSource) -> Result<Vec<MetaProblem>> {
    if n == 0 {
        return Err(Error::Configuration("meta-dataset size must be positive".into()));
    }
    (0..n)
        .map(|i| MetaProblem::generate(sim, rng.child(i as u64).key(), m_real))
        .collect()
}

/// The rollout-relevant part of a [`TrainConfig`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutSpec {
    pub iterations: usize,
    pub theta_batch: usize,
    pub x_batch: usize,
    pub weighting: Weighting,
    pub beta: f64,
    pub loss: LossKind,
}

impl RolloutSpec {
    pub fn with_iterations(self, iterations: usize) -> Self {
        Self { iterations, ..self }
    }
}

impl From<&TrainConfig> for RolloutSpec {
    fn from(c: &TrainConfig) -> Self {
        Self {
            iterations: c.iterations,
            theta_batch: c.theta_batch,
            x_batch: c.x_batch,
            weighting: c.weighting,
            beta: c.beta,
            loss: c.loss,
        }
    }
}

/// Everything random that one update step consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Candidates that simulated successfully.
    pub candidates: Vec<Vec<f64>>,
    /// Network features of the generated sets, `candidates.len() * M` rows.
    pub features: Vec<f64>,
    /// Raw proposal scores at each candidate.
    pub scores: Vec<Vec<f64>>,
}

/// A completed rollout.
#[derive(Clone, Debug)]
pub struct Rollout {
    /// `psi_1 .. psi_T`.
    pub psis: Vec<ProposalParams>,
    /// Hidden state after each update, `s_2 .. s_T`.
    pub states: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    pub total_loss: f64,
    pub steps: Vec<StepRecord>,
    /// Candidates dropped after a failed resample.
    pub skipped_candidates: usize,
}

impl Rollout {
    pub fn final_psi(&self) -> &ProposalParams {
        self.psis.last().expect("rollouts have at least one proposal")
    }
}

/// Signed log compression of score features.
pub fn compress_score(s: f64) -> f64 {
    s.signum() * s.abs().ln_1p()
}

enum Source<'a> {
    Live(&'a RandomSource),
    Replay(&'a [StepRecord]),
}

struct Graph {
    psis: Vec<Var>,
    states: Vec<Var>,
    losses: Vec<Var>,
    total: Var,
    steps: Vec<StepRecord>,
    skipped: usize,
}

fn psi_of(tape: &Tape, v: Var) -> Result<ProposalParams> {
    let flat = tape.value(v).data();
    if let Some(i) = flat.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numeric {
            message: "proposal parameters became non-finite".into(),
            coordinate: Some(i),
        });
    }
    ProposalParams::from_flat(flat)
}

/// Simulates the step's candidates, resampling a failed candidate once and
/// dropping it if the retry fails too.
fn live_step(
    sim: &SimulatorSpec,
    psi: &ProposalParams,
    spec: &RolloutSpec,
    step_rng: &RandomSource,
) -> Result<(StepRecord, usize)> {
    let draws = sample_proposal(psi, spec.theta_batch, &mut step_rng.child(labels::CANDIDATES));
    let mut record = StepRecord {
        candidates: Vec::with_capacity(draws.len()),
        features: Vec::with_capacity(draws.len() * spec.x_batch * sim.feature_dim()),
        scores: Vec::with_capacity(draws.len()),
    };
    let mut skipped = 0;
    for (i, theta) in draws.into_iter().enumerate() {
        let first = sim.simulate(&theta, spec.x_batch, &mut step_rng.derive(&[i as u64, 0]));
        let accepted = match first {
            Ok(obs) => Some((theta, obs)),
            Err(e) => {
                log::debug!("candidate {theta:?} failed ({e}); resampling");
                let retry_rng = step_rng.derive(&[i as u64, 1]);
                let theta = sample_proposal(psi, 1, &mut retry_rng.child(labels::CANDIDATES)).remove(0);
                sim.simulate(&theta, spec.x_batch, &mut retry_rng.clone()).ok().map(|obs| (theta, obs))
            }
        };
        match accepted {
            Some((theta, obs)) => {
                for row in obs.rows() {
                    sim.featurize_into(row, &mut record.features);
                }
                record.scores.push(score(&theta, psi));
                record.candidates.push(theta);
            }
            None => skipped += 1,
        }
    }
    if record.candidates.is_empty() {
        return Err(Error::Numeric {
            message: "every candidate of the step failed to simulate".into(),
            coordinate: None,
        });
    }
    Ok((record, skipped))
}

fn build(
    tape: &mut Tape,
    f: &BoundUpdater,
    sim: &SimulatorSpec,
    prob: &MetaProblem,
    spec: &RolloutSpec,
    psi1: &ProposalParams,
    source: Source<'_>,
) -> Result<Graph> {
    if spec.iterations == 0 || spec.theta_batch == 0 || spec.x_batch == 0 {
        return Err(Error::Configuration("iterations, theta_batch and x_batch must be positive".into()));
    }
    if psi1.dim() != sim.param_dim() || prob.theta_star.len() != sim.param_dim() {
        return Err(Error::Dimension(format!(
            "{} has {} parameters; proposal has {}, theta* has {}",
            sim.name(),
            sim.param_dim(),
            psi1.dim(),
            prob.theta_star.len()
        )));
    }
    if let Source::Replay(steps) = &source {
        if steps.len() + 1 < spec.iterations {
            return Err(Error::Contract(format!(
                "replay holds {} steps, {} needed",
                steps.len(),
                spec.iterations - 1
            )));
        }
    }
    let fdim = sim.feature_dim();
    let real_features = Tensor::new(vec![prob.real.len(), fdim], sim.features(&prob.real))?;
    let real_x = tape.constant(real_features);
    let real_code = encode_sets(tape, &f.encoder, real_x, prob.real.len())?;

    let mut psi = tape.constant(Tensor::row(&psi1.to_flat()));
    let mut state = f.initial_state(tape);
    let mut graph = Graph {
        psis: vec![psi],
        states: Vec::new(),
        losses: Vec::new(),
        total: psi,
        steps: Vec::new(),
        skipped: 0,
    };

    for t in 1..spec.iterations {
        let current = psi_of(tape, psi)?;
        let record = match &source {
            Source::Live(rng) => {
                let (r, skipped) = live_step(sim, &current, spec, &rng.derive(&[labels::STEP, t as u64]))?;
                graph.skipped += skipped;
                r
            }
            Source::Replay(steps) => steps[t - 1].clone(),
        };
        let b = record.candidates.len();
        if record.features.len() % (b * fdim) != 0 {
            return Err(Error::Contract("step record features do not split into candidate sets".into()));
        }
        let m = record.features.len() / (b * fdim);
        let gen_x = tape.constant(Tensor::new(vec![b * m, fdim], record.features.clone())?);
        let gen_codes = encode_sets(tape, &f.encoder, gen_x, m)?;
        let score_rows: Vec<Vec<f64>> = record
            .scores
            .iter()
            .map(|s| s.iter().map(|&v| compress_score(v)).collect())
            .collect();
        let scores = tape.constant(Tensor::from_rows(&score_rows)?);
        let (delta, next_state) = updater_forward(tape, f, psi, state, real_code, gen_codes, scores)?;
        psi = tape.add(psi, delta)?;
        state = next_state;
        graph.psis.push(psi);
        graph.states.push(state);
        graph.steps.push(record);
    }

    let total_steps = graph.psis.len();
    let mut terms = Vec::with_capacity(total_steps);
    for (i, &p) in graph.psis.iter().enumerate() {
        let l = partial_loss(tape, p, &prob.theta_star, spec.loss)?;
        graph.losses.push(l);
        let w = step_weight(i + 1, total_steps, spec.weighting, spec.beta);
        terms.push(tape.scale(l, w));
    }
    let mut total = terms[0];
    for &term in &terms[1..] {
        total = tape.add(total, term)?;
    }
    graph.total = total;
    Ok(graph)
}

fn finish(tape: &Tape, g: Graph) -> Result<Rollout> {
    let psis = g.psis.iter().map(|&v| psi_of(tape, v)).collect::<Result<Vec<_>>>()?;
    Ok(Rollout {
        psis,
        states: g.states.iter().map(|&v| tape.value(v).data().to_vec()).collect(),
        losses: g.losses.iter().map(|&v| tape.value(v).item()).collect(),
        total_loss: tape.value(g.total).item(),
        steps: g.steps,
        skipped_candidates: g.skipped,
    })
}

fn gradient_of(tape: &mut Tape, f: &BoundUpdater, total: Var) -> Result<Vec<f64>> {
    tape.backward(total)?;
    let mut out = Vec::new();
    for v in f.vars() {
        match tape.grad(v) {
            Some(g) => out.extend_from_slice(g.data()),
            None => out.extend(std::iter::repeat_n(0.0, tape.value(v).len())),
        }
    }
    Ok(out)
}

fn check_model(f: &RecurrentUpdater, sim: &SimulatorSpec) -> Result<()> {
    if f.obs_dim() != sim.feature_dim() || f.param_dim != sim.param_dim() {
        return Err(Error::Dimension(format!(
            "updater built for {} features / {} parameters, {} needs {} / {}",
            f.obs_dim(),
            f.param_dim,
            sim.name(),
            sim.feature_dim(),
            sim.param_dim()
        )));
    }
    Ok(())
}

/// Initial proposal of a rollout driven by `rng`.
pub fn initial_proposal(sim: &SimulatorSpec, rng: &RandomSource) -> ProposalParams {
    init_proposal(&sim.prior, &mut rng.child(labels::INIT))
}

/// Runs a rollout without recording gradients. All randomness comes from
/// streams derived from `rng` by step index, so a shorter rollout is an
/// exact prefix of a longer one.
pub fn rollout(f: &RecurrentUpdater, sim: &SimulatorSpec, prob: &MetaProblem, spec: &RolloutSpec, rng: &RandomSource) -> Result<Rollout> {
    check_model(f, sim)?;
    let mut tape = Tape::no_grad();
    let bound = f.bind(&mut tape);
    let psi1 = initial_proposal(sim, rng);
    let g = build(&mut tape, &bound, sim, prob, spec, &psi1, Source::Live(rng))?;
    finish(&tape, g)
}

/// Rollout plus the gradient of its total loss with respect to every
/// updater weight, flattened in [`RecurrentUpdater::parameters`] order.
pub fn rollout_gradient(
    f: &RecurrentUpdater,
    sim: &SimulatorSpec,
    prob: &MetaProblem,
    spec: &RolloutSpec,
    rng: &RandomSource,
) -> Result<(Rollout, Vec<f64>)> {
    check_model(f, sim)?;
    let mut tape = Tape::new();
    let bound = f.bind(&mut tape);
    let psi1 = initial_proposal(sim, rng);
    let g = build(&mut tape, &bound, sim, prob, spec, &psi1, Source::Live(rng))?;
    let total = g.total;
    let grad = gradient_of(&mut tape, &bound, total)?;
    Ok((finish(&tape, g)?, grad))
}

/// Re-runs a rollout with its candidates, simulated sets and scores frozen
/// to `steps`. Used to check gradients against finite differences.
pub fn replay(
    f: &RecurrentUpdater,
    sim: &SimulatorSpec,
    prob: &MetaProblem,
    spec: &RolloutSpec,
    psi1: &ProposalParams,
    steps: &[StepRecord],
) -> Result<Rollout> {
    check_model(f, sim)?;
    let mut tape = Tape::no_grad();
    let bound = f.bind(&mut tape);
    let g = build(&mut tape, &bound, sim, prob, spec, psi1, Source::Replay(steps))?;
    finish(&tape, g)
}

pub fn replay_gradient(
    f: &RecurrentUpdater,
    sim: &SimulatorSpec,
    prob: &MetaProblem,
    spec: &RolloutSpec,
    psi1: &ProposalParams,
    steps: &[StepRecord],
) -> Result<(f64, Vec<f64>)> {
    check_model(f, sim)?;
    let mut tape = Tape::new();
    let bound = f.bind(&mut tape);
    let g = build(&mut tape, &bound, sim, prob, spec, psi1, Source::Replay(steps))?;
    let total = g.total;
    let value = tape.value(total).item();
    Ok((value, gradient_of(&mut tape, &bound, total)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::loss::total_loss;
    use crate::nn::NetworkConfig;

    fn small_net() -> NetworkConfig {
        NetworkConfig {
            encoder_hidden: vec![6],
            code: 4,
            combiner_hidden: vec![8],
            pre: 6,
            gru_hidden: 5,
        }
    }

    fn spec(iterations: usize) -> RolloutSpec {
        RolloutSpec {
            iterations,
            theta_batch: 4,
            x_batch: 6,
            weighting: Weighting::Exponential,
            beta: 4.0,
            loss: LossKind::Nll,
        }
    }

    fn model(sim: &SimulatorSpec, clip: f64, seed: u64, randomize_post: bool) -> RecurrentUpdater {
        let mut rng = RandomSource::new(seed);
        let mut f = RecurrentUpdater::new(sim.feature_dim(), sim.param_dim(), &small_net(), clip, sim.psi_scaling(), &mut rng).unwrap();
        if randomize_post {
            for v in f.post.weight.data_mut() {
                *v = rng.uniform() * 2.0 - 1.0;
            }
            for v in f.post.bias.data_mut() {
                *v = rng.uniform() - 0.5;
            }
        }
        f
    }

    #[test]
    fn dataset_is_deterministic_and_reproducible() {
        let sim = SimulatorSpec::poisson();
        let rng = RandomSource::new(3);
        let a = make_meta_dataset(&sim, 20, 10, &rng).unwrap();
        let b = make_meta_dataset(&sim, 20, 10, &rng).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!(sim.prior.contains(&p.theta_star));
            assert_eq!(MetaProblem::real_observations(&sim, &p.theta_star, p.seed, 10).unwrap(), p.real);
        }
        assert!(make_meta_dataset(&sim, 0, 10, &rng).is_err());
    }

    #[test]
    fn zero_post_layer_leaves_proposal_fixed() {
        let sim = SimulatorSpec::linear_regression();
        let f = model(&sim, 0.3, 1, false);
        let prob = MetaProblem::generate(&sim, 9, 6).unwrap();
        let r = rollout(&f, &sim, &prob, &spec(5), &RandomSource::new(2)).unwrap();
        assert_eq!(r.psis.len(), 5);
        assert_eq!(r.psis[4], r.psis[0]);
        assert_eq!(r.steps.len(), 4);
        assert!(r.steps.iter().all(|s| s.candidates.len() == 4));
    }

    #[test]
    fn steps_are_clipped() {
        for sim in [SimulatorSpec::poisson(), SimulatorSpec::multivariate(), SimulatorSpec::weinberg()] {
            let clip = 0.2;
            let f = model(&sim, clip, 4, true);
            let prob = MetaProblem::generate(&sim, 5, 6).unwrap();
            let r = rollout(&f, &sim, &prob, &spec(8), &RandomSource::new(6)).unwrap();
            let (first, last) = (r.psis[0].to_flat(), r.final_psi().to_flat());
            for w in r.psis.windows(2) {
                let step = w[1].to_flat().iter().zip(w[0].to_flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(step <= clip + 1e-12);
            }
            let span = first.iter().zip(&last).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(span <= 7.0 * clip + 1e-12);
            assert!(span > 0.0);
        }
    }

    #[test]
    fn shorter_rollout_is_a_prefix() {
        let sim = SimulatorSpec::poisson();
        let f = model(&sim, 0.5, 7, true);
        let prob = MetaProblem::generate(&sim, 1, 6).unwrap();
        let rng = RandomSource::new(8);
        let short = rollout(&f, &sim, &prob, &spec(4), &rng).unwrap();
        let long = rollout(&f, &sim, &prob, &spec(9), &rng).unwrap();
        assert_eq!(short.psis[..], long.psis[..4]);
    }

    #[test]
    fn live_and_replay_agree() {
        let sim = SimulatorSpec::multivariate();
        let f = model(&sim, 0.2, 10, true);
        let prob = MetaProblem::generate(&sim, 11, 6).unwrap();
        let rng = RandomSource::new(12);
        let (live, grad) = rollout_gradient(&f, &sim, &prob, &spec(4), &rng).unwrap();
        let psi1 = initial_proposal(&sim, &rng);
        let (value, replay_grad) = replay_gradient(&f, &sim, &prob, &spec(4), &psi1, &live.steps).unwrap();
        assert_eq!(value, live.total_loss);
        assert_eq!(grad, replay_grad);
        let plain = rollout(&f, &sim, &prob, &spec(4), &rng).unwrap();
        assert_eq!(plain.total_loss, live.total_loss);
        let oracle = total_loss(&live.psis, &prob.theta_star, Weighting::Exponential, 4.0, LossKind::Nll);
        assert!((oracle - live.total_loss).abs() < 1e-12);
    }

    #[test]
    fn gradient_reaches_every_block() {
        let sim = SimulatorSpec::poisson();
        let f = model(&sim, 0.5, 13, true);
        let prob = MetaProblem::generate(&sim, 14, 6).unwrap();
        let (_, grad) = rollout_gradient(&f, &sim, &prob, &spec(4), &RandomSource::new(15)).unwrap();
        let mut offset = 0;
        for (name, t) in f.parameters() {
            let block = &grad[offset..offset + t.len()];
            offset += t.len();
            assert!(block.iter().any(|g| *g != 0.0), "{name} has zero gradient");
        }
    }

    #[test]
    fn frozen_rollout_gradient_matches_finite_differences() {
        let sim = SimulatorSpec::poisson();
        let f = model(&sim, 0.5, 16, true);
        let prob = MetaProblem::generate(&sim, 17, 4).unwrap();
        let spec = RolloutSpec { theta_batch: 2, x_batch: 4, ..spec(3) };
        let rng = RandomSource::new(18);
        let (live, grad) = rollout_gradient(&f, &sim, &prob, &spec, &rng).unwrap();
        let psi1 = initial_proposal(&sim, &rng);
        let base = f.flat_parameters();
        let h = 1e-6;
        let n = base.len();
        let mut worst = 0.0f64;
        for idx in (0..n).rev().take(40) {
            let eval = |delta: f64| {
                let mut g = f.clone();
                let mut w = base.clone();
                w[idx] += delta;
                g.set_flat_parameters(&w).unwrap();
                replay(&g, &sim, &prob, &spec, &psi1, &live.steps).unwrap().total_loss
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let err = (grad[idx] - numeric).abs() / (numeric.abs() + 1e-8);
            if numeric.abs() > 1e-6 {
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let f = model(&SimulatorSpec::poisson(), 0.5, 1, false);
        let sim = SimulatorSpec::weinberg();
        let prob = MetaProblem::generate(&sim, 1, 4).unwrap();
        assert!(matches!(
            rollout(&f, &sim, &prob, &spec(3), &RandomSource::new(1)),
            Err(Error::Dimension(_))
        ));
    }
}
