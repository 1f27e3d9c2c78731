//! Experiment configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simfs::AllocatorKind;
use crate::workloads::WorkloadSpec;
use crate::DeviceProfile;

/// A built-in profile by name (`"hdd"`, `"ssd"`) or explicit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named(String),
    Custom(DeviceProfile),
}

impl ProfileSpec {
    pub fn resolve(&self) -> Result<DeviceProfile> {
        let p = match self {
            ProfileSpec::Named(n) => DeviceProfile::named(n)?,
            ProfileSpec::Custom(p) => p.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::Named("hdd".into())
    }
}

/// One experiment: a workload replayed in lockstep on a small ("full") and a
/// large ("empty") device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub workload: WorkloadSpec,
    pub allocator: AllocatorKind,
    #[serde(default)]
    pub device_profile: ProfileSpec,
    pub device_blocks_full: u64,
    pub device_blocks_empty: u64,
    #[serde(default = "one")]
    pub checkpoint_every: u64,
    #[serde(default = "yes")]
    pub compute_unaged: bool,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.checkpoint_every == 0 {
            return cfg("checkpoint_every must be >= 1".into());
        }
        if self.device_blocks_empty < self.device_blocks_full {
            return cfg(format!(
                "device_blocks_empty ({}) must be >= device_blocks_full ({})",
                self.device_blocks_empty, self.device_blocks_full
            ));
        }
        let profile = self
            .device_profile
            .resolve()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.allocator
            .validate(profile.block_size)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn profile(&self) -> Result<DeviceProfile> {
        self.device_profile.resolve()
    }
}
