use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NetworkConfig;
use crate::simulators::SimulatorKind;

/// How per-step losses are weighted in the total loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Final,
    Uniform,
    Exponential,
}

/// Per-step loss on the proposal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Nll,
    Mse,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final" => Ok(Self::Final),
            "uniform" => Ok(Self::Uniform),
            "exponential" => Ok(Self::Exponential),
            other => Err(Error::Configuration(format!("unknown weighting scheme {other:?}"))),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nll" => Ok(Self::Nll),
            "mse" => Ok(Self::Mse),
            other => Err(Error::Configuration(format!("unknown loss {other:?}"))),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Final => "final",
            Self::Uniform => "uniform",
            Self::Exponential => "exponential",
        })
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nll => "nll",
            Self::Mse => "mse",
        })
    }
}

fn default_validation_size() -> usize {
    32
}

/// Meta-training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Number of proposals per rollout, `T`.
    pub iterations: usize,
    pub meta_dataset_size: usize,
    pub meta_batch_size: usize,
    /// Candidates per step, `B`.
    pub theta_batch: usize,
    /// Observations per candidate, `M`. Also the size of each real set.
    pub x_batch: usize,
    pub learning_rate: f64,
    pub clip: f64,
    pub weighting: Weighting,
    pub beta: f64,
    pub loss: LossKind,
    pub seed: u64,
    #[serde(default = "default_validation_size")]
    pub validation_size: usize,
    #[serde(default)]
    pub network: NetworkConfig,
}

impl TrainConfig {
    pub fn defaults_for(kind: SimulatorKind) -> Self {
        let base = Self {
            epochs: 300,
            iterations: 15,
            meta_dataset_size: 10_000,
            meta_batch_size: 16,
            theta_batch: 20,
            x_batch: 20,
            learning_rate: 1e-3,
            clip: 0.5,
            weighting: Weighting::Exponential,
            beta: 4.0,
            loss: LossKind::Nll,
            seed: 0,
            validation_size: default_validation_size(),
            network: NetworkConfig::default(),
        };
        match kind {
            SimulatorKind::Poisson => base,
            SimulatorKind::LinearRegression => Self { clip: 0.25, ..base },
            SimulatorKind::Multivariate => Self { clip: 0.2, ..base },
            SimulatorKind::Weinberg => Self {
                epochs: 130,
                meta_dataset_size: 1000,
                theta_batch: 8,
                x_batch: 64,
                learning_rate: 2e-4,
                clip: 0.2,
                ..base
            },
        }
    }

    /// Parses TOML on top of the simulator defaults; keys not present keep
    /// their default value, unknown keys are rejected.
    pub fn from_toml(text: &str, kind: SimulatorKind) -> Result<Self> {
        let overlay: toml::Table =
            toml::from_str(text).map_err(|e| Error::Configuration(format!("invalid TOML: {e}")))?;
        let mut merged = toml::Table::try_from(Self::defaults_for(kind))
            .map_err(|e| Error::Configuration(e.to_string()))?;
        for (k, v) in overlay {
            if k == "network" {
                if let (Some(toml::Value::Table(base)), toml::Value::Table(over)) = (merged.get_mut("network"), &v) {
                    for (nk, nv) in over {
                        base.insert(nk.clone(), nv.clone());
                    }
                    continue;
                }
            }
            merged.insert(k, v);
        }
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Configuration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("iterations", self.iterations),
            ("meta_dataset_size", self.meta_dataset_size),
            ("meta_batch_size", self.meta_batch_size),
            ("theta_batch", self.theta_batch),
            ("x_batch", self.x_batch),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Configuration(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Configuration(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(Error::Configuration(format!("clip must be positive, got {}", self.clip)));
        }
        if !self.beta.is_finite() {
            return Err(Error::Configuration("beta must be finite".into()));
        }
        self.network.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_and_weinberg_defaults() {
        let p = TrainConfig::defaults_for(SimulatorKind::Poisson);
        assert_eq!(
            (p.epochs, p.iterations, p.meta_dataset_size, p.meta_batch_size, p.theta_batch, p.x_batch),
            (300, 15, 10_000, 16, 20, 20)
        );
        assert_eq!((p.learning_rate, p.clip), (1e-3, 0.5));
        let w = TrainConfig::defaults_for(SimulatorKind::Weinberg);
        assert_eq!((w.epochs, w.meta_dataset_size, w.theta_batch, w.x_batch), (130, 1000, 8, 64));
        assert_eq!((w.learning_rate, w.clip), (2e-4, 0.2));
        assert_eq!(TrainConfig::defaults_for(SimulatorKind::LinearRegression).clip, 0.25);
        assert_eq!(TrainConfig::defaults_for(SimulatorKind::Multivariate).clip, 0.2);
        assert_eq!((p.weighting, p.loss, p.beta), (Weighting::Exponential, LossKind::Nll, 4.0));
    }

    #[test]
    fn toml_overlay_and_round_trip() {
        let cfg = TrainConfig::from_toml(
            "epochs = 5\nmeta_dataset_size = 200\nweighting = \"uniform\"\n[network]\ncode = 4\n",
            SimulatorKind::Poisson,
        )
        .unwrap();
        assert_eq!((cfg.epochs, cfg.meta_dataset_size, cfg.weighting), (5, 200, Weighting::Uniform));
        assert_eq!(cfg.network.code, 4);
        assert_eq!(cfg.network.gru_hidden, NetworkConfig::default().gru_hidden);
        assert_eq!(cfg.theta_batch, 20);
        let back = TrainConfig::from_toml(&cfg.to_toml(), SimulatorKind::Weinberg).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(TrainConfig::from_toml("epoch = 3", SimulatorKind::Poisson).is_err());
        assert!(TrainConfig::from_toml("loss = \"l1\"", SimulatorKind::Poisson).is_err());
        assert!(TrainConfig::from_toml("theta_batch = 0", SimulatorKind::Poisson).is_err());
        assert!(TrainConfig::from_toml("clip = -1.0", SimulatorKind::Poisson).is_err());
    }
}
