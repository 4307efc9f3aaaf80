//! Experiment configuration: a flat TOML file whose sections and field names
//! mirror the library's config types one to one.

use std::path::{Path, PathBuf};

use contract_design::diffusion::DiffusionPolicyConfig;
use contract_design::econ::EconParams;
use contract_design::env::{Environment, RewardConfig, SamplerConfig};
use contract_design::ppo::PpoConfig;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub sampler: SamplerConfig,
    pub econ: EconParams,
    pub reward: RewardConfig,
    pub gdm: DiffusionPolicyConfig,
    pub ppo: PpoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            seeds: vec![0, 1, 2],
            sampler: SamplerConfig::default(),
            econ: EconParams::default(),
            reward: RewardConfig::default(),
            gdm: DiffusionPolicyConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

/// Learning-rate profile applied on top of the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Desk-scale rates (1e-4) that converge within the configured epochs.
    Fast,
    /// The recorded reference rates (2e-7).
    Paper,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Fast => "fast",
            Profile::Paper => "paper",
        }
    }

    fn rate(&self) -> f64 {
        match self {
            Profile::Fast => 1e-4,
            Profile::Paper => 2e-7,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves the effective config: file (or defaults), then profile, then
    /// seed override, then output-dir override.
    pub fn resolve(
        path: Option<&Path>,
        profile: Option<Profile>,
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(profile) = profile {
            cfg.apply_profile(profile);
        }
        if let Some(seed) = seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = out {
            cfg.output_dir = out.to_path_buf();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_profile(&mut self, profile: Profile) {
        let rate = profile.rate();
        self.gdm.actor_lr = rate;
        self.gdm.critic_lr = rate;
        self.ppo.policy_lr = rate;
        self.ppo.value_lr = rate;
    }

    /// The config specialized to one seed: the sampler and both trainers
    /// share it so held-out sets and training draws line up.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.sampler.seed = seed;
        cfg.gdm.seed = seed;
        cfg.ppo.seed = seed;
        cfg.seeds = vec![seed];
        cfg
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Usage("seeds must not be empty".into()));
        }
        self.sampler.validate()?;
        self.econ.validate()?;
        self.reward.validate()?;
        self.gdm.validate()?;
        self.ppo.validate()?;
        if self.gdm.eval_states != self.ppo.eval_states {
            return Err(CliError::Usage(
                "gdm.eval_states and ppo.eval_states must match for comparable traces".into(),
            ));
        }
        Ok(())
    }

    pub fn environment(&self) -> CliResult<Environment> {
        Ok(Environment::new(self.sampler.clone(), self.econ.clone(), self.reward.clone())?)
    }
}
