//! Flat key-value run configuration. Unknown keys are rejected; every
//! command writes the fully resolved configuration next to its outputs so a
//! run can be reproduced bit-identically from that file and the seed.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use unimatch_core::eval::{SynthBase, SynthParams};
use unimatch_core::losses::{LossWeights, MatchMode};
use unimatch_core::model_train::TrainingConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: String,
    pub seed: u64,

    // collection: explicit mesh files, or the synthetic generator when
    // synthetic_count >= 2
    pub mesh_paths: Vec<String>,
    pub gt_paths: Vec<String>,
    pub index_base: usize,
    pub synthetic_count: usize,
    pub synthetic_base: String,
    pub synthetic_subdivisions: usize,
    pub synthetic_displacement: f64,
    pub synthetic_bend: f64,
    /// In partial mode with a synthetic collection, every shape after the
    /// first is cut down by this fraction.
    pub partial_kind: String,
    pub partial_fraction: f64,

    // pipeline
    pub mode: String,
    pub k: usize,
    pub spectral_coords: usize,
    pub universe_size: usize,
    pub shot_radius_frac: f64,
    pub sinkhorn_tau: f64,
    pub sinkhorn_iters: usize,
    pub resolvent_gamma: f64,
    // mode-dependent defaults resolve to concrete values
    pub solver_lambda: Option<f64>,
    pub w_bij: Option<f64>,
    pub w_orth: Option<f64>,
    pub w_lap: Option<f64>,
    pub lambda_cls: Option<f64>,
    pub smoothing: Option<f64>,

    // training
    pub learning_rate: f64,
    pub total_iters: usize,
    pub detach_iters: usize,
    pub checkpoint_every: usize,
    pub batch_pairs: usize,
    pub fine_tune_passes: usize,

    // evaluation
    pub pck_thresholds: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: "runs/out".into(),
            seed: 0,
            mesh_paths: Vec::new(),
            gt_paths: Vec::new(),
            index_base: 0,
            synthetic_count: 0,
            synthetic_base: "bumpy-sphere".into(),
            synthetic_subdivisions: 3,
            synthetic_displacement: 0.02,
            synthetic_bend: 0.05,
            partial_kind: "cut".into(),
            partial_fraction: 0.4,
            mode: "complete".into(),
            k: 30,
            spectral_coords: 16,
            universe_size: 0,
            shot_radius_frac: 0.10,
            sinkhorn_tau: 0.2,
            sinkhorn_iters: 10,
            resolvent_gamma: 0.5,
            solver_lambda: None,
            w_bij: None,
            w_orth: None,
            w_lap: None,
            lambda_cls: None,
            smoothing: None,
            learning_rate: 1e-3,
            total_iters: 20000,
            detach_iters: 4000,
            checkpoint_every: 1000,
            batch_pairs: 1,
            fine_tune_passes: 5,
            pck_thresholds: vec![0.01, 0.025, 0.05, 0.075, 0.10, 0.15, 0.20, 0.25],
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config i/o error: {e}"),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn match_mode(&self) -> Result<MatchMode, ConfigError> {
        match self.mode.as_str() {
            "complete" => Ok(MatchMode::Complete),
            "partial" => Ok(MatchMode::Partial),
            other => Err(ConfigError::Invalid(format!(
                "mode must be `complete` or `partial`, got `{other}`"
            ))),
        }
    }

    pub fn synth_base(&self) -> Result<SynthBase, ConfigError> {
        match self.synthetic_base.as_str() {
            "icosphere" => Ok(SynthBase::Icosphere),
            "bumpy-sphere" => Ok(SynthBase::BumpySphere),
            other => Err(ConfigError::Invalid(format!(
                "synthetic_base must be `icosphere` or `bumpy-sphere`, got `{other}`"
            ))),
        }
    }

    pub fn synth_params(&self) -> SynthParams {
        SynthParams {
            subdivisions: self.synthetic_subdivisions,
            displacement: self.synthetic_displacement,
            bend: self.synthetic_bend,
        }
    }

    /// Fills mode-dependent defaults so the serialized config is concrete.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        let mode = self.match_mode()?;
        let _ = self.synth_base()?;
        if !matches!(self.partial_kind.as_str(), "cut" | "holes") {
            return Err(ConfigError::Invalid(format!(
                "partial_kind must be `cut` or `holes`, got `{}`",
                self.partial_kind
            )));
        }
        let (lam, w_lap, l_cls) = match mode {
            MatchMode::Complete => (0.0, 1e-3, 0.01),
            MatchMode::Partial => (100.0, 0.0, 1.0),
        };
        self.solver_lambda.get_or_insert(lam);
        self.w_bij.get_or_insert(1.0);
        self.w_orth.get_or_insert(1.0);
        self.w_lap.get_or_insert(w_lap);
        self.lambda_cls.get_or_insert(l_cls);
        self.smoothing.get_or_insert(0.1);

        if self.synthetic_count == 0 && self.mesh_paths.is_empty() {
            return Err(ConfigError::Invalid(
                "empty collection: set mesh_paths or synthetic_count >= 2".into(),
            ));
        }
        if self.synthetic_count == 1 {
            return Err(ConfigError::Invalid("synthetic_count must be 0 or >= 2".into()));
        }
        Ok(())
    }

    pub fn training(&self) -> Result<TrainingConfig<f64>, ConfigError> {
        let cfg = TrainingConfig {
            mode: self.match_mode()?,
            k: self.k,
            spectral_coords: self.spectral_coords,
            shot_radius_frac: self.shot_radius_frac,
            universe_size: if self.universe_size == 0 { None } else { Some(self.universe_size) },
            sinkhorn_tau: self.sinkhorn_tau,
            sinkhorn_iters: self.sinkhorn_iters,
            solver_lambda: self.solver_lambda.expect("resolved"),
            resolvent_gamma: self.resolvent_gamma,
            weights: LossWeights {
                w_bij: self.w_bij.expect("resolved"),
                w_orth: self.w_orth.expect("resolved"),
                w_lap: self.w_lap.expect("resolved"),
                lambda_cls: self.lambda_cls.expect("resolved"),
                smoothing: self.smoothing.expect("resolved"),
            },
            learning_rate: self.learning_rate,
            total_iters: self.total_iters,
            detach_iters: self.detach_iters,
            checkpoint_every: self.checkpoint_every,
            batch_pairs: self.batch_pairs,
            seed: self.seed,
        };
        cfg.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out_dir)
    }

    /// Writes the resolved configuration next to the run outputs.
    pub fn write_resolved(&self) -> Result<PathBuf, ConfigError> {
        let dir = self.out_dir();
        std::fs::create_dir_all(&dir).map_err(ConfigError::Io)?;
        let path = dir.join("resolved-config.toml");
        let text = toml::to_string_pretty(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        std::fs::write(&path, text).map_err(ConfigError::Io)?;
        Ok(path)
    }
}
