//! Versioned JSON run configuration. All randomness in a run flows from the
//! single `seed` field, so identical configs give identical outputs.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use dppkit::samplers::Method;
use dppkit::synth::{SyntheticFeatures, SyntheticRegression};
use dppkit::training::{KernelRecipe, LossKind, TrainConfig};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub kernel: KernelCfg,
    pub ground_set: GroundSetCfg,
    #[serde(default)]
    pub model: Option<ModelCfg>,
    #[serde(default)]
    pub train: Option<TrainCfg>,
    #[serde(default)]
    pub sample: Option<SampleCfg>,
    #[serde(default)]
    pub eval: Option<EvalCfg>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCfg {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl KernelCfg {
    pub fn recipe(&self) -> Result<KernelRecipe, CliError> {
        match self.kind.as_str() {
            "exp-quadratic" => {
                let beta = self
                    .beta
                    .ok_or_else(|| CliError::config("kernel.beta is required for exp-quadratic"))?;
                if !(beta > 0.0) {
                    return Err(CliError::config("kernel.beta must be positive"));
                }
                Ok(KernelRecipe::ExpQuadratic { beta })
            }
            "linear" => Ok(KernelRecipe::Linear),
            other => Err(CliError::config(format!(
                "kernel.type must be exp-quadratic or linear, got {other:?}"
            ))),
        }
    }
}

/// Ground set: a unit-square grid, an external feature CSV, or a seeded
/// synthetic generator (the varying-ground-set experiments).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundSetCfg {
    #[serde(default)]
    pub grid_m: Option<usize>,
    #[serde(default)]
    pub features_path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticGroundSet>,
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct SyntheticGroundSet {
    pub n: usize,
    pub dim: usize,
    pub cluster_sizes: Vec<usize>,
    pub center_scale: f64,
    pub spread: f64,
    /// How many feature matrices the training pool holds.
    pub train_matrices: usize,
    /// How many held-out matrices evaluation uses.
    pub eval_matrices: usize,
}

impl SyntheticGroundSet {
    pub fn generator(&self) -> SyntheticFeatures {
        SyntheticFeatures {
            n: self.n,
            dim: self.dim,
            cluster_sizes: self.cluster_sizes.clone(),
            center_scale: self.center_scale,
            spread: self.spread,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCfg {
    pub mode: String,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub attention: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCfg {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_loss")]
    pub loss: String,
    pub n_paths: usize,
    pub k: usize,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    32
}
fn default_loss() -> String {
    "squared-l2".into()
}

impl TrainCfg {
    pub fn to_train_config(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let loss = LossKind::parse(&self.loss).map_err(CliError::from_config_error)?;
        let cfg = TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            loss,
        };
        cfg.validate().map_err(CliError::from_config_error)?;
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCfg {
    pub method: String,
    pub k: usize,
    #[serde(default)]
    pub condition: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalCfg {
    #[serde(default)]
    pub nll: Option<NllSuiteCfg>,
    #[serde(default)]
    pub nystrom: Option<NystromSuiteCfg>,
    #[serde(default)]
    pub timing: Option<TimingSuiteCfg>,
    #[serde(default)]
    pub theorem1: Option<Theorem1SuiteCfg>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NllSuiteCfg {
    pub methods: Vec<String>,
    pub k: usize,
    pub n_draws: usize,
}

impl NllSuiteCfg {
    pub fn parse_methods(&self) -> Result<Vec<Method>, CliError> {
        self.methods
            .iter()
            .map(|m| Method::parse(m).map_err(CliError::from_config_error))
            .collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NystromSuiteCfg {
    pub sizes: Vec<usize>,
    pub paired_size: usize,
    pub seeds: u64,
    pub ridge: f64,
    pub regression: SyntheticRegression,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSuiteCfg {
    pub batch: usize,
    pub k: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
}

fn default_reps() -> usize {
    5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1SuiteCfg {
    pub n: usize,
    pub trials: usize,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let cfg: RunConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| CliError::config(format!("{}: {}", e.path(), e.inner())))?;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.config_version != CONFIG_VERSION {
        return Err(CliError::config(format!(
            "config_version: expected {CONFIG_VERSION}, got {}",
            cfg.config_version
        )));
    }
    cfg.kernel.recipe()?;
    let gs = &cfg.ground_set;
    let variants =
        gs.grid_m.is_some() as u8 + gs.features_path.is_some() as u8 + gs.synthetic.is_some() as u8;
    if variants != 1 {
        return Err(CliError::config(
            "ground_set: exactly one of grid_m, features_path, synthetic is required",
        ));
    }
    if let Some(m) = gs.grid_m {
        if m < 2 {
            return Err(CliError::config("ground_set.grid_m must be at least 2"));
        }
    }
    if let Some(path) = &gs.features_path {
        if !path.exists() {
            return Err(CliError::config(format!(
                "ground_set.features_path: no such file {}",
                path.display()
            )));
        }
    }
    if let Some(syn) = &gs.synthetic {
        if syn.n == 0 || syn.dim == 0 || syn.cluster_sizes.is_empty() {
            return Err(CliError::config(
                "ground_set.synthetic: n, dim and cluster_sizes must be nonempty",
            ));
        }
        if syn.train_matrices == 0 || syn.eval_matrices == 0 {
            return Err(CliError::config(
                "ground_set.synthetic: train_matrices and eval_matrices must be positive",
            ));
        }
    }
    if let Some(model) = &cfg.model {
        match model.mode.as_str() {
            "static" | "dynamic" => {}
            other => {
                return Err(CliError::config(format!(
                    "model.mode must be static or dynamic, got {other:?}"
                )))
            }
        }
        if model.hidden.contains(&0) {
            return Err(CliError::config("model.hidden widths must be positive"));
        }
        if let Some(att) = &model.attention {
            if att != "inhibitive" && att != "uniform" {
                return Err(CliError::config(
                    "model.attention must be inhibitive or uniform",
                ));
            }
        }
        if model.mode == "dynamic" && gs.synthetic.is_none() {
            return Err(CliError::config(
                "model.mode dynamic requires a synthetic ground set (a pool of feature matrices)",
            ));
        }
    }
    if let Some(sample) = &cfg.sample {
        Method::parse(&sample.method).map_err(CliError::from_config_error)?;
        if sample.k == 0 {
            return Err(CliError::config("sample.k must be positive"));
        }
    }
    if let Some(train) = &cfg.train {
        if train.n_paths == 0 || train.k == 0 {
            return Err(CliError::config("train.n_paths and train.k must be positive"));
        }
    }
    if let Some(eval) = &cfg.eval {
        if let Some(nll) = &eval.nll {
            nll.parse_methods()?;
            if nll.n_draws == 0 {
                return Err(CliError::config("eval.nll.n_draws must be positive"));
            }
        }
        if let Some(ny) = &eval.nystrom {
            if ny.sizes.is_empty() || ny.seeds == 0 || ny.paired_size == 0 {
                return Err(CliError::config(
                    "eval.nystrom needs nonempty sizes, a paired_size and at least one seed",
                ));
            }
        }
        if let Some(t) = &eval.theorem1 {
            if !(2..=6).contains(&t.n) {
                return Err(CliError::config("eval.theorem1.n must lie in 2..=6"));
            }
        }
    }
    Ok(())
}
