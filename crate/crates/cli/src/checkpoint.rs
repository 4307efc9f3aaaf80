//! Checkpoint files: schedule constants, layer shapes, and parameter arrays
//! in row-major order, as one JSON document per trained policy.

use std::path::Path;

use contract_design::diffusion::{CriticNet, DenoiserNet, NoiseSchedule, TIME_EMBED_DIM};
use contract_design::econ::MarketState;
use contract_design::nn::{Mlp, MlpSpec};
use contract_design::ppo::{GaussianPolicyNet, ValueNet};
use serde::{Deserialize, Serialize};

use crate::manifest::sha256_hex;
use crate::{CliError, CliResult};

pub const GDM_FORMAT: &str = "contract-design/gdm-checkpoint-v1";
pub const PPO_FORMAT: &str = "contract-design/ppo-checkpoint-v1";

/// Hash of the held-out evaluation states a policy was scored against;
/// reports refuse to mix artifacts with different hashes.
pub fn eval_state_hash(states: &[MarketState]) -> String {
    let canonical = serde_json::to_string(states).expect("states serialize");
    sha256_hex(canonical.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdmCheckpoint {
    pub format: String,
    pub n: usize,
    pub seed: u64,
    pub eval_state_hash: String,
    pub schedule: NoiseSchedule,
    pub denoiser: MlpSpec,
    pub critic: MlpSpec,
}

impl GdmCheckpoint {
    pub fn new(
        n: usize,
        seed: u64,
        eval_hash: &str,
        schedule: &NoiseSchedule,
        denoiser: &DenoiserNet,
        critic: &CriticNet,
    ) -> Self {
        Self {
            format: GDM_FORMAT.to_string(),
            n,
            seed,
            eval_state_hash: eval_hash.to_string(),
            schedule: schedule.clone(),
            denoiser: denoiser.mlp.to_spec(),
            critic: critic.mlp.to_spec(),
        }
    }

    pub fn denoiser_net(&self) -> CliResult<DenoiserNet> {
        Ok(DenoiserNet {
            mlp: Mlp::from_spec(&self.denoiser)?,
            action_dim: 2 * self.n,
            state_dim: 2 * self.n,
            time_dim: TIME_EMBED_DIM,
        })
    }

    pub fn critic_net(&self) -> CliResult<CriticNet> {
        Ok(CriticNet {
            mlp: Mlp::from_spec(&self.critic)?,
            action_dim: 2 * self.n,
            state_dim: 2 * self.n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoCheckpoint {
    pub format: String,
    pub n: usize,
    pub seed: u64,
    pub eval_state_hash: String,
    pub trunk: MlpSpec,
    pub log_std: Vec<f64>,
    pub value: MlpSpec,
}

impl PpoCheckpoint {
    pub fn new(
        n: usize,
        seed: u64,
        eval_hash: &str,
        policy: &GaussianPolicyNet,
        value: &ValueNet,
    ) -> Self {
        Self {
            format: PPO_FORMAT.to_string(),
            n,
            seed,
            eval_state_hash: eval_hash.to_string(),
            trunk: policy.trunk.to_spec(),
            log_std: policy.log_std.to_vec(),
            value: value.mlp.to_spec(),
        }
    }

    pub fn policy_net(&self) -> CliResult<GaussianPolicyNet> {
        Ok(GaussianPolicyNet {
            trunk: Mlp::from_spec(&self.trunk)?,
            log_std: ndarray::Array1::from_vec(self.log_std.clone()),
            action_dim: 2 * self.n,
        })
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("missing {what}: cannot read {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("corrupt {what} at {}: {e}", path.display())))
}
