use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::{InputScaling, NetworkConfig, RecurrentUpdater};
use crate::rng::RandomSource;
use crate::simulators::SimulatorSpec;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ALFICKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained updater with the simulator and config it was trained for.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: RecurrentUpdater,
    pub simulator: String,
    pub config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    simulator: String,
    config: TrainConfig,
    network: NetworkConfig,
    obs_dim: usize,
    param_dim: usize,
    clip: f64,
    psi_scaling: InputScaling,
    entries: Vec<Entry>,
}

impl Checkpoint {
    /// Errors unless the stored updater fits `sim`.
    pub fn check_simulator(&self, sim: &SimulatorSpec) -> Result<()> {
        if self.simulator != sim.name() || self.model.obs_dim() != sim.feature_dim() || self.model.param_dim != sim.param_dim() {
            return Err(Error::Dimension(format!(
                "checkpoint was trained for {} ({} features, {} parameters), not {} ({}, {})",
                self.simulator,
                self.model.obs_dim(),
                self.model.param_dim,
                sim.name(),
                sim.feature_dim(),
                sim.param_dim()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.model.parameters();
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            simulator: self.simulator.clone(),
            config: self.config.clone(),
            network: self.model.network_config(),
            obs_dim: self.model.obs_dim(),
            param_dim: self.model.param_dim,
            clip: self.model.clip,
            psi_scaling: self.model.psi_scaling.clone(),
            entries: params
                .iter()
                .map(|(name, t)| Entry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serialises");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.model.num_parameters());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in params {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
        if bytes.len() < 20 {
            return Err(corrupt("file too short for a header"));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if found != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                expected: CHECKPOINT_VERSION,
                found,
            });
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < len {
            return Err(corrupt("truncated manifest"));
        }
        let manifest: Manifest =
            serde_json::from_slice(&body[..len]).map_err(|e| corrupt(&format!("manifest: {e}")))?;
        if manifest.version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                expected: CHECKPOINT_VERSION,
                found: manifest.version,
            });
        }
        let mut model = RecurrentUpdater::new(
            manifest.obs_dim,
            manifest.param_dim,
            &manifest.network,
            manifest.clip,
            manifest.psi_scaling,
            &mut RandomSource::new(0),
        )
        .map_err(|e| corrupt(&format!("manifest describes an invalid updater: {e}")))?;
        let expected: Vec<(String, Vec<usize>)> =
            model.parameters().iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
        if expected.len() != manifest.entries.len()
            || expected.iter().zip(&manifest.entries).any(|((n, s), e)| *n != e.name || *s != e.shape)
        {
            return Err(corrupt("weight entries do not match the network layout"));
        }
        let values = &body[len..];
        let count = model.num_parameters();
        if values.len() != 8 * count {
            return Err(corrupt(&format!("expected {} weight bytes, found {}", 8 * count, values.len())));
        }
        let flat: Vec<f64> = values
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        model.set_flat_parameters(&flat)?;
        Ok(Self {
            model,
            simulator: manifest.simulator,
            config: manifest.config,
        })
    }
}

pub fn save_model(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
