//! Experiment configuration: one TOML file drives the whole pipeline
//! (synth -> train -> predict -> evaluate). The file's SHA-256 is echoed
//! into every output for provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use driftblend::dataio::{SplitSpec, SynthSpec};
use driftblend::dynamics::DrifterParams;
use driftblend::learn::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    /// Dataset directory: drifters.csv plus fields/current.json and
    /// optionally fields/wind.json.
    pub dataset_dir: PathBuf,
    /// Run directory: split manifest, model, predictions, reports.
    pub run_dir: PathBuf,
}

/// Nondimensional drifter groups as written in configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsConfig {
    pub r: f64,
    pub eps: f64,
    pub delta_p: f64,
    pub delta_a: f64,
    #[serde(default)]
    pub nu_a_alpha: f64,
    pub length_scale_m: f64,
    pub velocity_scale_mps: f64,
}

impl ParamsConfig {
    pub fn to_params(&self) -> Result<DrifterParams, CliError> {
        DrifterParams::from_groups(
            self.r,
            self.eps * self.r,
            self.delta_p,
            self.delta_a,
            self.nu_a_alpha,
            self.length_scale_m,
            self.velocity_scale_mps,
        )
        .map_err(|e| CliError::Config(format!("bad [params]: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub count: usize,
    pub radius_m: f64,
    pub rng_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            count: 16,
            radius_m: 5000.0,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastConfig {
    /// Forecast horizon in steps; 0 means the full length of each real track.
    #[serde(default)]
    pub steps: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig { steps: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub rmse_hist_bins: usize,
    /// Upper histogram edge for nondimensional zonal RMSE; 0 = automatic.
    pub rmse_hist_max: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            rmse_hist_bins: 20,
            rmse_hist_max: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub paths: PathsConfig,
    pub params: ParamsConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    pub synth: Option<SynthSpec>,
}

/// A loaded config plus everything commands need for provenance and
/// determinism control.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub serial: bool,
}

impl RunContext {
    /// Load a config file, apply the optional seed override (it replaces
    /// every rng seed in the file) and hash the resulting effective config.
    pub fn from_file(path: impl AsRef<Path>, seed: Option<u64>, serial: bool) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(seed) = seed {
            config.train.rng_seed = seed;
            config.split.rng_seed = seed;
            config.ensemble.rng_seed = seed;
            if let Some(synth) = config.synth.as_mut() {
                synth.seed = seed;
            }
        }
        // Hash the effective config (after overrides), not the raw file, so
        // outputs from different --seed runs are distinguishable.
        let canonical = toml::to_string(&config)
            .map_err(|e| CliError::Config(format!("cannot canonicalize config: {e}")))?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let config_hash = hex_string(&hasher.finalize()[..8]);
        Ok(RunContext {
            config,
            config_hash,
            serial,
        })
    }

    pub fn provenance(&self) -> String {
        format!(
            "config_hash={} split_seed={} train_seed={} ensemble_seed={}",
            self.config_hash,
            self.config.split.rng_seed,
            self.config.train.rng_seed,
            self.config.ensemble.rng_seed
        )
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
