use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::TrainConfig;
use super::rollout::{make_meta_dataset, rollout, rollout_gradient, MetaProblem, RolloutSpec};
use crate::error::{Error, Result};
use crate::harness::rmse;
use crate::nn::RecurrentUpdater;
use crate::par;
use crate::rng::{labels, RandomSource};
use crate::simulators::SimulatorSpec;

/// Consecutive non-finite meta-batches tolerated before training aborts.
pub const DIVERGENCE_PATIENCE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if par::is_parallel() {
            Self::Parallel
        } else {
            Self::Sequential
        }
    }
}

fn map_with<T: Send, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Parallel => par::map_indexed(n, f),
        Execution::Sequential => par::map_indexed_sequential(n, f),
    }
}

/// Mean loss and mean gradient over a meta-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradient {
    pub mean_loss: f64,
    pub gradient: Vec<f64>,
    pub skipped_candidates: usize,
}

/// Runs one rollout per problem (problem `k` uses `rngs[k]`) and averages
/// losses and gradients in problem order. A rollout that fails numerically
/// contributes a NaN loss.
pub fn batch_gradient(
    f: &RecurrentUpdater,
    sim: &SimulatorSpec,
    spec: &RolloutSpec,
    problems: &[&MetaProblem],
    rngs: &[RandomSource],
    exec: Execution,
) -> Result<BatchGradient> {
    if problems.is_empty() || problems.len() != rngs.len() {
        return Err(Error::Contract("meta-batch needs one stream per problem".into()));
    }
    let results = map_with(exec, problems.len(), |k| rollout_gradient(f, sim, problems[k], spec, &rngs[k]));
    let n = problems.len() as f64;
    let mut out = BatchGradient {
        mean_loss: 0.0,
        gradient: vec![0.0; f.num_parameters()],
        skipped_candidates: 0,
    };
    for r in results {
        match r {
            Ok((roll, grad)) => {
                out.mean_loss += roll.total_loss;
                out.skipped_candidates += roll.skipped_candidates;
                for (a, g) in out.gradient.iter_mut().zip(&grad) {
                    *a += g;
                }
            }
            Err(Error::Numeric { message, .. }) => {
                log::warn!("rollout failed: {message}");
                out.mean_loss = f64::NAN;
            }
            Err(e) => return Err(e),
        }
    }
    out.mean_loss /= n;
    out.gradient.iter_mut().for_each(|g| *g /= n);
    Ok(out)
}

/// Mean final-proposal RMSE of single rollouts over `problems`.
pub fn validation_rmse(
    f: &RecurrentUpdater,
    sim: &SimulatorSpec,
    spec: &RolloutSpec,
    problems: &[MetaProblem],
    rng: &RandomSource,
    exec: Execution,
) -> Result<f64> {
    let errs = map_with(exec, problems.len(), |i| {
        rollout(f, sim, &problems[i], spec, &rng.child(i as u64)).map(|r| rmse(r.final_psi(), &problems[i].theta_star))
    });
    let mut sum = 0.0;
    for e in errs {
        sum += e?;
    }
    Ok(sum / problems.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_rmse: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,val_rmse,wall_time\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{},{},{:.3}\n", r.epoch, r.mean_loss, r.val_rmse, r.wall_time));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights with the best validation RMSE.
    pub model: RecurrentUpdater,
    /// Weights after the last epoch.
    pub last: RecurrentUpdater,
    pub log: TrainLog,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
}

/// Fresh updater for `sim` with weights drawn from the config seed.
pub fn init_model(sim: &SimulatorSpec, cfg: &TrainConfig) -> Result<RecurrentUpdater> {
    let mut rng = RandomSource::new(cfg.seed).child(labels::WEIGHTS);
    RecurrentUpdater::new(sim.feature_dim(), sim.param_dim(), &cfg.network, cfg.clip, sim.psi_scaling(), &mut rng)
}

pub fn train(sim: &SimulatorSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(sim, cfg, Execution::default())
}

/// Meta-trains an updater: shuffled meta-batches, one Adam step per batch,
/// validation after every epoch, best-validation weights kept.
pub fn train_with(sim: &SimulatorSpec, cfg: &TrainConfig, exec: Execution) -> Result<TrainOutcome> {
    train_from(sim, cfg, init_model(sim, cfg)?, exec)
}

/// Like [`train_with`], but starts from existing weights. The model must
/// match the simulator, `cfg.clip` and `cfg.network`.
pub fn train_from(sim: &SimulatorSpec, cfg: &TrainConfig, initial: RecurrentUpdater, exec: Execution) -> Result<TrainOutcome> {
    cfg.validate()?;
    if initial.obs_dim() != sim.feature_dim() || initial.param_dim != sim.param_dim() {
        return Err(Error::Dimension(format!("initial model does not fit the {} simulator", sim.name())));
    }
    if initial.clip != cfg.clip || initial.network_config() != cfg.network {
        return Err(Error::Configuration(
            "initial model's clip or network layout differs from the training config".into(),
        ));
    }
    let start = Instant::now();
    let root = RandomSource::new(cfg.seed);
    let mut model = initial;
    let spec = RolloutSpec::from(cfg);
    let problems = make_meta_dataset(sim, cfg.meta_dataset_size, cfg.x_batch, &root.child(labels::TRAIN))?;
    let validation = if cfg.validation_size > 0 {
        make_meta_dataset(sim, cfg.validation_size, cfg.x_batch, &root.child(labels::VALIDATION))?
    } else {
        Vec::new()
    };
    let val_rng = root.child(labels::VALIDATION).child_named("rollout");
    let rollout_rng = root.child_named("train-rollout");

    let mut weights = model.flat_parameters();
    let mut adam = Adam::new(weights.len(), cfg.learning_rate);
    let mut log = TrainLog::default();
    let mut best = (model.clone(), 0usize, f64::INFINITY);
    let mut bad_batches = 0;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..problems.len()).collect();
        root.child(labels::SHUFFLE).child(epoch as u64).shuffle(&mut order);
        let (mut loss_sum, mut loss_count) = (0.0, 0usize);
        for batch in order.chunks(cfg.meta_batch_size) {
            let probs: Vec<&MetaProblem> = batch.iter().map(|&i| &problems[i]).collect();
            let rngs: Vec<RandomSource> = batch.iter().map(|&i| rollout_rng.derive(&[epoch as u64, i as u64])).collect();
            let g = batch_gradient(&model, sim, &spec, &probs, &rngs, exec)?;
            if !g.mean_loss.is_finite() {
                bad_batches += 1;
                log::warn!("epoch {epoch}: non-finite meta-batch loss ({bad_batches} in a row)");
                if bad_batches >= DIVERGENCE_PATIENCE {
                    return Err(Error::Divergence(format!(
                        "mean loss non-finite for {bad_batches} consecutive meta-batches in epoch {epoch}"
                    )));
                }
                continue;
            }
            bad_batches = 0;
            loss_sum += g.mean_loss;
            loss_count += 1;
            if adam.update(&mut weights, &g.gradient) {
                model.set_flat_parameters(&weights)?;
            }
        }
        let mean_loss = if loss_count > 0 { loss_sum / loss_count as f64 } else { f64::NAN };
        let val_rmse = if validation.is_empty() {
            f64::NAN
        } else {
            validation_rmse(&model, sim, &spec, &validation, &val_rng, exec)?
        };
        let record = EpochRecord {
            epoch,
            mean_loss,
            val_rmse,
            wall_time: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "{} epoch {epoch}/{}: loss {mean_loss:.5} val rmse {val_rmse:.5} ({:.1}s)",
            sim.name(),
            cfg.epochs,
            record.wall_time
        );
        log.epochs.push(record);
        if validation.is_empty() || val_rmse < best.2 {
            best = (model.clone(), epoch, val_rmse);
        }
    }
    let (best_model, best_epoch, best_val_rmse) = best;
    Ok(TrainOutcome {
        model: best_model,
        last: model,
        log,
        best_epoch,
        best_val_rmse,
    })
}
