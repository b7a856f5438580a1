//! Run configuration files.
//!
//! ```toml
//! setting = "U_2"
//! seed = 7
//!
//! [train]
//! passes = 30
//!
//! [eval]
//! samples = 100000
//! ```
//!
//! `setting` and `seed` are required; every section is optional and falls
//! back to the library defaults key by key.

use std::path::Path;

use jointlab_core::evaluation::Setting;
use jointlab_core::training::{RegretConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub setting: String,
    pub seed: u64,
    #[serde(default)]
    pub reserve: f64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Revenue samples.
    pub samples: usize,
    /// Samples on which regret is estimated (a prefix of the revenue set).
    pub regret_samples: usize,
    pub regret: RegretConfig,
    /// Samples per parallel work unit; fixed so results ignore the worker count.
    pub chunk: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: 100_000, regret_samples: 1_000, regret: RegretConfig::default(), chunk: 1_024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct OutputConfig {
    /// Write an intermediate checkpoint every this many passes; 0 disables.
    pub checkpoint_every: usize,
}


/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub setting: Option<String>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

impl RunConfig {
    pub fn new(setting: &str, seed: u64) -> Self {
        Self {
            setting: setting.to_string(),
            seed,
            reserve: 0.0,
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    /// Applies overrides; `samples` sets the evaluation sample count.
    pub fn apply(mut self, o: &Overrides) -> Result<Self, Error> {
        if let Some(s) = &o.setting {
            self.setting = s.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(n) = o.samples {
            self.eval.samples = n;
            self.eval.regret_samples = self.eval.regret_samples.min(n);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), Error> {
        Setting::parse(&self.setting)?;
        self.train.validate()?;
        if self.eval.chunk == 0 {
            return Err(Error::Config("eval.chunk must be positive".into()));
        }
        if !self.reserve.is_finite() {
            return Err(Error::Config("reserve must be finite".into()));
        }
        Ok(())
    }

    pub fn setting(&self) -> Setting {
        Setting::parse(&self.setting).expect("validated setting")
    }

    /// Training configuration with the run seed folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = RunConfig::from_toml("setting = \"U_2\"\nseed = 3\n[train]\npasses = 4\n").unwrap();
        assert_eq!(cfg.train.passes, 4);
        assert_eq!(cfg.train.batch_size, 128);
        assert_eq!(cfg.eval, EvalConfig::default());
        assert_eq!(cfg.train_config().seed, 3);
    }

    #[test]
    fn missing_or_unknown_keys_fail() {
        assert!(matches!(RunConfig::from_toml("setting = \"U_2\"\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("seed = 1\n"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("setting = \"U_2\"\nseed = 1\nbogus = 2\n").is_err());
        assert!(RunConfig::from_toml("setting = \"Q_2\"\nseed = 1\n").is_err());
        assert!(RunConfig::from_toml("setting = \"U_2\"\nseed = 1\n[train]\nlr = -1.0\n").is_err());
    }

    #[test]
    fn round_trip_and_hash() {
        let cfg = RunConfig::new("U_5x5", 11);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let other = cfg.clone().apply(&Overrides { seed: Some(12), ..Overrides::default() }).unwrap();
        assert_ne!(other.hash(), cfg.hash());
    }
}
