//! The JSON run description shared by every subcommand.

use dre_core::distributions::Source;
use dre_core::estimation::{GridSpec, Integrator};
use dre_core::interpolants::InterpolantConfig;
use dre_core::training::{default_weighting, LossKind, NetworkConfig, TrainConfig, Weighting};
use dre_core::transport::SinkhornOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

fn default_samples() -> usize {
    1000
}

/// Every section except the two sources has defaults, so a minimal config is
/// `{"source0": ..., "source1": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub source0: Source,
    pub source1: Source,
    #[serde(default)]
    pub interpolant: InterpolantConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub integrator: Integrator,
    /// Where time scores come from for `estimate`, `mi` and `density-grid`.
    #[serde(default)]
    pub score: ScoreSource,
    /// Sample count for `gen-data` and `mi`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub sinkhorn: SinkhornSection,
    #[serde(default)]
    pub nfe: NfeSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    /// A trained checkpoint.
    #[default]
    Model,
    /// The closed-form marginal time score; both sources must be Gaussian.
    Oracle,
}

fn default_iterations() -> usize {
    1000
}

fn default_batch() -> usize {
    512
}

fn default_lr() -> f64 {
    1e-3
}

fn default_boundary() -> f64 {
    1.0
}

fn default_loss() -> LossKind {
    LossKind::L3
}

/// Optimizer and network settings; the interpolant and seed come from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Defaults to the bridge weighting, or `0.5 t (1 - t)` for DI where the bridge weighting vanishes.
    #[serde(default)]
    pub weighting: Option<Weighting>,
    #[serde(default = "default_boundary")]
    pub boundary_weight: f64,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub sinkhorn: SinkhornOptions,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            loss: default_loss(),
            iterations: default_iterations(),
            batch_size: default_batch(),
            lr: default_lr(),
            weighting: None,
            boundary_weight: default_boundary(),
            network: NetworkConfig::default(),
            sinkhorn: SinkhornOptions::default(),
        }
    }
}

fn default_paths() -> usize {
    16
}

fn default_times() -> usize {
    51
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_times")]
    pub times: usize,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { paths: default_paths(), times: default_times() }
    }
}

fn default_report_batch() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkhornSection {
    #[serde(default = "default_report_batch")]
    pub batch: usize,
    #[serde(default)]
    pub options: SinkhornOptions,
}

impl Default for SinkhornSection {
    fn default() -> Self {
        Self { batch: default_report_batch(), options: SinkhornOptions::default() }
    }
}

fn default_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NfeSection {
    /// Evaluation points, drawn half from each source.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "Integrator::rk45")]
    pub integrator: Integrator,
}

impl Default for NfeSection {
    fn default() -> Self {
        Self { points: default_points(), integrator: Integrator::rk45() }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.source0.validate()?;
        self.source1.validate()?;
        if self.source0.dim() != self.source1.dim() {
            return Err(CliError::Config(format!(
                "source dimensions differ: {} vs {}",
                self.source0.dim(),
                self.source1.dim()
            )));
        }
        self.interpolant.validate()?;
        self.integrator.validate()?;
        self.nfe.integrator.validate()?;
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if self.samples == 0 || self.paths.paths == 0 || self.paths.times < 2 || self.sinkhorn.batch == 0 || self.nfe.points == 0
        {
            return Err(CliError::Config("sample, path, batch and point counts must be positive (times >= 2)".into()));
        }
        self.train_config(&self.interpolant)?.validate()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.source0.dim()
    }

    /// The core training config for `interpolant` (which may differ from the run's, as in `nfe-report`).
    pub fn train_config(&self, interpolant: &InterpolantConfig) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        let cfg = TrainConfig {
            loss: t.loss,
            interpolant: interpolant.clone(),
            batch_size: t.batch_size,
            iterations: t.iterations,
            lr: t.lr,
            weighting: t.weighting.unwrap_or_else(|| default_weighting(interpolant.kind)),
            boundary_weight: t.boundary_weight,
            seed: self.seed,
            network: t.network.clone(),
            sinkhorn: t.sinkhorn,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical serialization used for hashing and for the copy stored next to the artifacts.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
