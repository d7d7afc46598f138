use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{distance, histogram, mean_std, median, rmse, tv_distance, BoxStats};
use crate::error::{Error, Result};
use crate::meta::{make_meta_dataset, rollout, MetaProblem, RolloutSpec, TrainConfig};
use crate::nn::RecurrentUpdater;
use crate::par;
use crate::proposal::{proposal_mean, ProposalParams};
use crate::rng::{labels, RandomSource};
use crate::simulators::{SimulatorKind, SimulatorSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub problems: usize,
    pub t_test: usize,
    /// Random initial proposals averaged per problem.
    pub n_init: usize,
    pub seed: u64,
    /// Draws per histogram on the Weinberg simulator.
    pub histogram_draws: usize,
    pub bins: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            problems: 100,
            t_test: 30,
            n_init: 500,
            seed: 0,
            histogram_draws: 10_000,
            bins: 50,
        }
    }
}

/// Runs `n_init` rollouts from independent initial proposals (rollout `j`
/// driven by `rng.child(j)`) and averages `psi_t` componentwise at every step.
pub fn marginalized_trajectory(
    f: &RecurrentUpdater,
    sim: &SimulatorSpec,
    prob: &MetaProblem,
    spec: &RolloutSpec,
    n_init: usize,
    rng: &RandomSource,
) -> Result<Vec<ProposalParams>> {
    if n_init == 0 {
        return Err(Error::Configuration("n_init must be positive".into()));
    }
    let runs = par::map_indexed(n_init, |j| rollout(f, sim, prob, spec, &rng.child(j as u64)));
    let mut sums: Vec<Vec<f64>> = vec![vec![0.0; 2 * sim.param_dim()]; spec.iterations];
    for r in runs {
        let r = r?;
        for (acc, psi) in sums.iter_mut().zip(&r.psis) {
            for (a, v) in acc.iter_mut().zip(psi.to_flat()) {
                *a += v;
            }
        }
    }
    sums.into_iter()
        .map(|s| ProposalParams::from_flat(&s.iter().map(|v| v / n_init as f64).collect::<Vec<_>>()))
        .collect()
}

/// Marginalised final proposal `psi_T`.
pub fn marginalized_estimate(
    f: &RecurrentUpdater,
    sim: &SimulatorSpec,
    prob: &MetaProblem,
    spec: &RolloutSpec,
    n_init: usize,
    rng: &RandomSource,
) -> Result<ProposalParams> {
    Ok(marginalized_trajectory(f, sim, prob, spec, n_init, rng)?.pop().expect("T >= 1"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramData {
    pub real: Vec<u64>,
    pub generated: Vec<u64>,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemEval {
    pub id: usize,
    pub theta_star: Vec<f64>,
    /// Marginalised proposal mean at the last step.
    pub estimate: Vec<f64>,
    pub alfi_rmse: f64,
    /// RMSE of the marginalised proposal at steps `1..=T_test`.
    pub step_rmse: Vec<f64>,
    /// Mean proposal standard deviation at each step.
    pub step_sigma: Vec<f64>,
    pub mle: Option<Vec<f64>>,
    pub mle_rmse: Option<f64>,
    /// The MLE oracle failed on this problem.
    pub mle_flagged: bool,
    pub histogram: Option<HistogramData>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub simulator: String,
    pub t_train: usize,
    pub t_test: usize,
    pub n_init: usize,
    pub config: TrainConfig,
    pub options: EvalOptions,
    pub rmse_mean: Vec<f64>,
    pub rmse_std: Vec<f64>,
    pub sigma_mean: Vec<f64>,
    pub problems: Vec<ProblemEval>,
    pub mle_failures: usize,
    /// Final ALFI RMSE over the problems in the paired table.
    pub alfi_summary: Option<BoxStats>,
    pub mle_summary: Option<BoxStats>,
}

impl EvalReport {
    /// Problems with a usable MLE, or all problems when the simulator has none.
    pub fn paired(&self) -> impl Iterator<Item = &ProblemEval> {
        self.problems.iter().filter(|p| !p.mle_flagged)
    }

    pub fn has_mle(&self) -> bool {
        self.problems.iter().any(|p| p.mle_rmse.is_some())
    }

    /// Per-problem RMSE at 1-based step `t`, paired problems only.
    pub fn rmse_at(&self, t: usize) -> Vec<f64> {
        self.paired().map(|p| p.step_rmse[t - 1]).collect()
    }

    pub fn mle_rmses(&self) -> Vec<f64> {
        self.paired().filter_map(|p| p.mle_rmse).collect()
    }

    pub fn median_alfi_at(&self, t: usize) -> f64 {
        median(&self.rmse_at(t))
    }

    pub fn median_mle(&self) -> Option<f64> {
        let v = self.mle_rmses();
        (!v.is_empty()).then(|| median(&v))
    }

    pub fn rmse_per_step_csv(&self) -> String {
        let mut s = String::from("step,mean,std\n");
        for (t, (m, sd)) in self.rmse_mean.iter().zip(&self.rmse_std).enumerate() {
            s.push_str(&format!("{},{m},{sd}\n", t + 1));
        }
        s
    }

    pub fn final_rmse_csv(&self) -> String {
        let d = self.problems.first().map_or(0, |p| p.theta_star.len());
        let mut header: Vec<String> = vec!["problem_id".into()];
        header.extend((0..d).map(|j| format!("theta_star_{j}")));
        header.push("alfi_rmse".into());
        let with_mle = self.has_mle();
        if with_mle {
            header.push("mle_rmse".into());
        }
        let mut s = header.join(",") + "\n";
        for p in self.paired() {
            let mut row: Vec<String> = vec![p.id.to_string()];
            row.extend(p.theta_star.iter().map(|v| v.to_string()));
            row.push(p.alfi_rmse.to_string());
            if with_mle {
                row.push(p.mle_rmse.map_or(String::new(), |v| v.to_string()));
            }
            s.push_str(&(row.join(",") + "\n"));
        }
        s
    }

    /// Writes `rmse_per_step.csv`, `final_rmse.csv` and `report.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("rmse_per_step.csv", self.rmse_per_step_csv()),
            ("final_rmse.csv", self.final_rmse_csv()),
            ("report.json", serde_json::to_string_pretty(self).expect("report serialises")),
        ];
        let mut out = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            out.push(path);
        }
        Ok(out)
    }

    /// Reads `report.json` from `dir` (or from `dir` itself if it is a file).
    pub fn read(dir: &Path) -> Result<Self> {
        let path = if dir.is_dir() { dir.join("report.json") } else { dir.to_path_buf() };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Configuration(format!("{}: invalid report: {e}", path.display())))
    }
}

/// Evaluates `f` on fresh test problems drawn from the prior.
pub fn evaluate(f: &RecurrentUpdater, sim: &SimulatorSpec, cfg: &TrainConfig, opts: &EvalOptions) -> Result<EvalReport> {
    if opts.problems == 0 || opts.t_test == 0 || opts.bins == 0 {
        return Err(Error::Configuration("problems, t_test and bins must be positive".into()));
    }
    let root = RandomSource::new(opts.seed).child(labels::TEST);
    let problems = make_meta_dataset(sim, opts.problems, cfg.x_batch, &root)?;
    let spec = RolloutSpec::from(cfg).with_iterations(opts.t_test);
    let rollout_root = root.child_named("rollouts");

    let evals = par::map_indexed(problems.len(), |i| -> Result<ProblemEval> {
        let prob = &problems[i];
        let prob_rng = rollout_root.child(i as u64);
        let traj = marginalized_trajectory(f, sim, prob, &spec, opts.n_init, &prob_rng)?;
        let step_rmse: Vec<f64> = traj.iter().map(|p| rmse(p, &prob.theta_star)).collect();
        let step_sigma: Vec<f64> = traj
            .iter()
            .map(|p| p.std().iter().sum::<f64>() / p.dim() as f64)
            .collect();
        let last = traj.last().expect("T >= 1");
        let estimate = proposal_mean(last);
        let (mle, mle_rmse, mle_flagged) = if sim.has_mle() {
            match sim.mle(&prob.real) {
                Ok(m) => {
                    let e = distance(&m, &prob.theta_star);
                    (Some(m), Some(e), false)
                }
                Err(e) => {
                    log::warn!("problem {i}: MLE oracle failed ({e}); excluded from the paired table");
                    (None, None, true)
                }
            }
        } else {
            (None, None, false)
        };
        let histogram = if sim.kind == SimulatorKind::Weinberg {
            let real = sim.simulate(&prob.theta_star, opts.histogram_draws, &mut prob_rng.child_named("hist-real"))?;
            let gen = sim.simulate(&estimate, opts.histogram_draws, &mut prob_rng.child_named("hist-generated"))?;
            let (hr, hg) = (histogram(&real.data, opts.bins), histogram(&gen.data, opts.bins));
            let d = tv_distance(&hr, &hg);
            Some(HistogramData {
                real: hr,
                generated: hg,
                distance: d,
            })
        } else {
            None
        };
        Ok(ProblemEval {
            id: i,
            theta_star: prob.theta_star.clone(),
            alfi_rmse: *step_rmse.last().expect("T >= 1"),
            estimate,
            step_rmse,
            step_sigma,
            mle,
            mle_rmse,
            mle_flagged,
            histogram,
        })
    });
    let problems: Vec<ProblemEval> = evals.into_iter().collect::<Result<_>>()?;

    let mut rmse_mean = Vec::with_capacity(opts.t_test);
    let mut rmse_std = Vec::with_capacity(opts.t_test);
    let mut sigma_mean = Vec::with_capacity(opts.t_test);
    for t in 0..opts.t_test {
        let (m, s) = mean_std(&problems.iter().map(|p| p.step_rmse[t]).collect::<Vec<_>>());
        rmse_mean.push(m);
        rmse_std.push(s);
        sigma_mean.push(problems.iter().map(|p| p.step_sigma[t]).sum::<f64>() / problems.len() as f64);
    }
    let mle_failures = problems.iter().filter(|p| p.mle_flagged).count();
    let mut report = EvalReport {
        simulator: sim.name().to_string(),
        t_train: cfg.iterations,
        t_test: opts.t_test,
        n_init: opts.n_init,
        config: cfg.clone(),
        options: *opts,
        rmse_mean,
        rmse_std,
        sigma_mean,
        problems,
        mle_failures,
        alfi_summary: None,
        mle_summary: None,
    };
    report.alfi_summary = BoxStats::from_values(&report.paired().map(|p| p.alfi_rmse).collect::<Vec<_>>());
    report.mle_summary = BoxStats::from_values(&report.mle_rmses());
    Ok(report)
}
