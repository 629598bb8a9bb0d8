//! Command implementations behind the `dppkit` binary. Everything here is a
//! pure function of (config, flags): all randomness derives from the config
//! seed, and outputs land only under the resolved output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dppkit::dpp::{Dpp, Subset};
use dppkit::error::Error as DppError;
use dppkit::eval::{
    self, CompareConfig, GroundTruth, NllReport, Theorem1Report, TimingReport,
};
use dppkit::kernels::{load_features, unit_square_grid, FeatureMatrix};
use dppkit::parallel;
use dppkit::samplers::{draw_method, kmedoids, sample_uniform, Method};
use dppkit::surrogate::{
    init_params, load_checkpoint, AttentionKind, ModelMode, ModelSpec, SurrogateModel,
};
use dppkit::training::{generate_dataset, train_with_progress, KernelSource};

pub mod config;

use config::{RunConfig, SyntheticGroundSet};

/// Seed salts: independent random streams for each stage of a run.
const SALT_TRAIN_MATRICES: u64 = 0x7472_6169;
const SALT_EVAL_MATRICES: u64 = 0x6576_616c;
const SALT_DATASET: u64 = 0x6461_7461;
const SALT_MODEL_INIT: u64 = 0x6d6f_6465;
const SALT_SAMPLE: u64 = 0x7361_6d70;
const SALT_EVAL: u64 = 0x6e6c_6c00;
const SALT_TIMING: u64 = 0x7469_6d65;
const SALT_NYSTROM: u64 = 0x6e79_7374;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn from_config_error(e: DppError) -> Self {
        CliError::Config(e.to_string())
    }

    /// 0 ok, 2 config error, 3 numerical failure, 4 missing artifact.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::MissingArtifact(_) => 4,
        }
    }
}

impl From<DppError> for CliError {
    fn from(e: DppError) -> Self {
        match e {
            DppError::AsymmetricKernel(_)
            | DppError::NotPsd { .. }
            | DppError::SingularMatrix
            | DppError::ImpossibleCondition
            | DppError::InfeasibleSize { .. }
            | DppError::DegenerateAttention
            | DppError::DegenerateDistribution
            | DppError::TrainingDivergence { .. }
            | DppError::SingularRidge => CliError::Numeric(e.to_string()),
            DppError::Io(io) => CliError::Io(io),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// The ground set a config resolves to.
pub enum GroundKind {
    Fixed(FeatureMatrix),
    Synthetic(SyntheticGroundSet),
}

pub struct Resolved {
    pub recipe: dppkit::training::KernelRecipe,
    pub ground: GroundKind,
}

pub fn resolve(cfg: &RunConfig) -> Result<Resolved, CliError> {
    let recipe = cfg.kernel.recipe()?;
    let ground = if let Some(m) = cfg.ground_set.grid_m {
        GroundKind::Fixed(unit_square_grid(m).map_err(CliError::from)?)
    } else if let Some(path) = &cfg.ground_set.features_path {
        GroundKind::Fixed(load_features(path).map_err(CliError::from)?)
    } else if let Some(syn) = &cfg.ground_set.synthetic {
        GroundKind::Synthetic(syn.clone())
    } else {
        return Err(CliError::config("ground_set is empty"));
    };
    Ok(Resolved { recipe, ground })
}

impl Resolved {
    pub fn train_matrices(&self, seed: u64) -> Result<Vec<FeatureMatrix>, CliError> {
        match &self.ground {
            GroundKind::Fixed(phi) => Ok(vec![phi.clone()]),
            GroundKind::Synthetic(syn) => Ok(syn
                .generator()
                .generate_many(syn.train_matrices, seed ^ SALT_TRAIN_MATRICES)?),
        }
    }

    pub fn eval_matrices(&self, seed: u64) -> Result<Vec<FeatureMatrix>, CliError> {
        match &self.ground {
            GroundKind::Fixed(phi) => Ok(vec![phi.clone()]),
            GroundKind::Synthetic(syn) => Ok(syn
                .generator()
                .generate_many(syn.eval_matrices, seed ^ SALT_EVAL_MATRICES)?),
        }
    }

    /// The single feature matrix `sample` draws against: the fixed ground
    /// set, or the first held-out synthetic matrix.
    pub fn sample_matrix(&self, seed: u64) -> Result<FeatureMatrix, CliError> {
        Ok(self.eval_matrices(seed)?.remove(0))
    }
}

pub fn checkpoint_path(out_dir: &Path) -> PathBuf {
    out_dir.join("checkpoint.json")
}

fn load_model_checkpoint(out_dir: &Path) -> Result<SurrogateModel, CliError> {
    let path = checkpoint_path(out_dir);
    if !path.exists() {
        return Err(CliError::MissingArtifact(path));
    }
    load_checkpoint(&path).map_err(CliError::from)
}

fn model_spec(
    cfg: &RunConfig,
    resolved: &Resolved,
) -> Result<ModelSpec, CliError> {
    let model_cfg = cfg
        .model
        .as_ref()
        .ok_or_else(|| CliError::config("model section is required for training"))?;
    let attention = match model_cfg.attention.as_deref() {
        None | Some("inhibitive") => AttentionKind::Inhibitive,
        Some("uniform") => AttentionKind::Uniform,
        Some(other) => {
            return Err(CliError::config(format!(
                "model.attention must be inhibitive or uniform, got {other:?}"
            )))
        }
    };
    match (model_cfg.mode.as_str(), &resolved.ground) {
        ("static", GroundKind::Fixed(phi)) => Ok(ModelSpec::static_model(
            phi.n_items(),
            model_cfg.hidden.clone(),
        )),
        ("static", GroundKind::Synthetic(syn)) => {
            Ok(ModelSpec::static_model(syn.n, model_cfg.hidden.clone()))
        }
        ("dynamic", GroundKind::Synthetic(syn)) => Ok(ModelSpec::dynamic_model(
            syn.n,
            syn.dim,
            model_cfg.hidden.clone(),
        )
        .with_attention(attention)),
        ("dynamic", GroundKind::Fixed(_)) => Err(CliError::config(
            "dynamic models require a synthetic ground set",
        )),
        (other, _) => Err(CliError::config(format!("unknown model.mode {other:?}"))),
    }
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_curve: PathBuf,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
}

/// `train`: build the sampling-path dataset, fit the surrogate, write the
/// checkpoint and the loss-curve CSV.
pub fn cmd_train(
    cfg: &RunConfig,
    out_dir: &Path,
    threads: usize,
    mut log: impl FnMut(String),
) -> Result<TrainOutcome, CliError> {
    let resolved = resolve(cfg)?;
    let train_cfg_raw = cfg
        .train
        .as_ref()
        .ok_or_else(|| CliError::config("train section is required"))?;
    let train_cfg = train_cfg_raw.to_train_config(cfg.seed)?;

    let matrices = resolved.train_matrices(cfg.seed)?;
    let source = match &resolved.ground {
        GroundKind::Fixed(phi) => {
            let dpp = Dpp::new(resolved.recipe.build(phi)?)?;
            KernelSource::Static {
                dpp,
                features: phi.clone(),
            }
        }
        GroundKind::Synthetic(_) => KernelSource::Dynamic {
            matrices,
            recipe: resolved.recipe,
        },
    };
    log(format!(
        "generating {} sampling paths of length {}",
        train_cfg_raw.n_paths, train_cfg_raw.k
    ));
    let dataset = generate_dataset(
        &source,
        train_cfg_raw.n_paths,
        train_cfg_raw.k,
        cfg.seed ^ SALT_DATASET,
        threads,
    )?;
    log(format!("dataset: {} records", dataset.len()));

    let spec = model_spec(cfg, &resolved)?;
    let mut model = init_params(&spec, cfg.seed ^ SALT_MODEL_INIT)?;
    let curve = train_with_progress(&mut model, &dataset, &train_cfg, |epoch, loss| {
        log(format!("epoch {epoch}: mean loss {loss:.6e}"));
    })?;

    std::fs::create_dir_all(out_dir)?;
    let checkpoint = checkpoint_path(out_dir);
    model.save_checkpoint(&checkpoint)?;
    let loss_curve = out_dir.join("loss_curve.csv");
    let mut csv = String::from("epoch,mean_loss\n");
    for (i, l) in curve.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l}");
    }
    std::fs::write(&loss_curve, csv)?;
    Ok(TrainOutcome {
        checkpoint,
        loss_curve,
        initial_loss: curve.first().copied(),
        final_loss: curve.last().copied(),
    })
}

pub struct SampleOutcome {
    pub csv_path: PathBuf,
    pub rows: usize,
}

/// `sample`: draw n subsets with the named method and write the subsets CSV
/// (`sample_id,items,path,nll`).
pub fn cmd_sample(
    cfg: &RunConfig,
    out_dir: &Path,
    method_flag: Option<&str>,
    k_flag: Option<usize>,
    n_draws: usize,
    condition_flag: Option<&str>,
    threads: usize,
) -> Result<SampleOutcome, CliError> {
    let resolved = resolve(cfg)?;
    let sample_cfg = cfg.sample.as_ref();
    let method_name = method_flag
        .map(str::to_string)
        .or_else(|| sample_cfg.map(|s| s.method.clone()))
        .ok_or_else(|| CliError::config("no sampling method: pass --method or a sample section"))?;
    let method = Method::parse(&method_name).map_err(CliError::from_config_error)?;
    let k = k_flag
        .or_else(|| sample_cfg.map(|s| s.k))
        .ok_or_else(|| CliError::config("no subset size: pass --k or a sample section"))?;

    let phi = resolved.sample_matrix(cfg.seed)?;
    let n = phi.n_items();
    let condition = match condition_flag {
        Some(text) => Subset::parse_csv_field(text, n).map_err(CliError::from_config_error)?,
        None => {
            let idx = sample_cfg.map(|s| s.condition.clone()).unwrap_or_default();
            Subset::new(idx, n).map_err(CliError::from_config_error)?
        }
    };
    if condition.len() > k {
        return Err(CliError::config(format!(
            "conditioning set of size {} exceeds k = {k}",
            condition.len()
        )));
    }
    let model = if method.needs_model() {
        Some(load_model_checkpoint(out_dir)?)
    } else {
        None
    };
    let dpp = Dpp::new(resolved.recipe.build(&phi)?)?;

    let draws: Vec<Result<(Subset, f64), CliError>> =
        parallel::map_indexed(n_draws, threads, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SALT_SAMPLE ^ i as u64);
            let s = draw_method(method, &dpp, &phi, model.as_ref(), k, &condition, &mut rng)?;
            let nll = eval::nll(&dpp, &s);
            Ok((s, nll))
        });

    let mut csv = String::from("sample_id,items,path,nll\n");
    let mut rows = 0usize;
    for (i, d) in draws.into_iter().enumerate() {
        let (s, nll) = d?;
        let _ = writeln!(csv, "{i},{},{},{}", s.to_csv_field(), s.to_path_field(), nll);
        rows += 1;
    }
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("subsets.csv");
    std::fs::write(&csv_path, csv)?;
    Ok(SampleOutcome { csv_path, rows })
}

pub enum SuiteOutcome {
    Nll {
        csv_path: PathBuf,
        reports: Vec<NllReport>,
    },
    Nystrom {
        csv_path: PathBuf,
        /// (method, size, mean frobenius, mean rmse)
        summary: Vec<(String, usize, f64, f64)>,
    },
    Timing {
        csv_path: PathBuf,
        report: TimingReport,
    },
    Theorem1 {
        csv_path: PathBuf,
        report: Theorem1Report,
        adversarial_detected: bool,
    },
}

/// `eval --suite ...`: run one evaluation suite and write its CSV.
pub fn cmd_eval(
    cfg: &RunConfig,
    out_dir: &Path,
    suite: &str,
    threads: usize,
) -> Result<SuiteOutcome, CliError> {
    let resolved = resolve(cfg)?;
    let eval_cfg = cfg
        .eval
        .as_ref()
        .ok_or_else(|| CliError::config("eval section is required"))?;
    match suite {
        "nll" => {
            let suite_cfg = eval_cfg
                .nll
                .as_ref()
                .ok_or_else(|| CliError::config("eval.nll section is required"))?;
            let methods = suite_cfg.parse_methods()?;
            let model = if methods.iter().any(Method::needs_model) {
                Some(load_model_checkpoint(out_dir)?)
            } else {
                None
            };
            let matrices = resolved.eval_matrices(cfg.seed)?;
            let compare = CompareConfig {
                methods,
                k: suite_cfg.k,
                n_draws: suite_cfg.n_draws,
                seed: cfg.seed ^ SALT_EVAL,
                threads,
            };
            let reports = match &resolved.ground {
                GroundKind::Fixed(phi) => {
                    let dpp = Dpp::new(resolved.recipe.build(phi)?)?;
                    eval::compare_methods(
                        &GroundTruth::Fixed {
                            dpp: &dpp,
                            features: phi,
                        },
                        model.as_ref(),
                        &compare,
                    )?
                }
                GroundKind::Synthetic(_) => eval::compare_methods(
                    &GroundTruth::PerMatrix {
                        matrices: &matrices,
                        recipe: resolved.recipe,
                    },
                    model.as_ref(),
                    &compare,
                )?,
            };
            std::fs::create_dir_all(out_dir)?;
            let csv_path = out_dir.join("results_nll.csv");
            std::fs::write(&csv_path, eval::nll_results_csv(&reports, suite_cfg.k))?;
            Ok(SuiteOutcome::Nll { csv_path, reports })
        }
        "nystrom" => {
            let suite_cfg = eval_cfg
                .nystrom
                .as_ref()
                .ok_or_else(|| CliError::config("eval.nystrom section is required"))?;
            let mut rows: Vec<(String, usize, f64, f64, u64)> = Vec::new();
            for seed_idx in 0..suite_cfg.seeds {
                let data_seed = cfg.seed ^ SALT_NYSTROM ^ seed_idx;
                let data = suite_cfg.regression.generate(data_seed)?;
                let kernel = resolved.recipe.build(&data.features)?;
                let dpp = Dpp::new(kernel)?;
                let n = data.features.n_items();
                for &size in &suite_cfg.sizes {
                    let mut rng = ChaCha8Rng::seed_from_u64(data_seed ^ 0xd99);
                    let s_dpp = dpp.sample_kdpp(size.min(dpp.rank()), &mut rng)?;
                    let r = eval::nystrom_regression_rmse(
                        &data.features,
                        &data.targets,
                        resolved.recipe,
                        &s_dpp,
                        suite_cfg.ridge,
                        data_seed ^ 0x5011,
                    )?;
                    // record the size actually drawn: the kernel rank caps it
                    rows.push((
                        "dpp".into(),
                        r.subset.len(),
                        r.frobenius_error,
                        r.rmse,
                        seed_idx,
                    ));
                }
                // paired comparison at the configured landmark count
                let mut rng = ChaCha8Rng::seed_from_u64(data_seed ^ 0xabc);
                let s_dpp = dpp.sample_kdpp(suite_cfg.paired_size.min(dpp.rank()), &mut rng)?;
                let s_uni = sample_uniform(n, suite_cfg.paired_size, &mut rng)?;
                let s_med = kmedoids(&data.features, suite_cfg.paired_size, &mut rng)?;
                for (name, s) in [("dpp-paired", &s_dpp), ("uniform", &s_uni), ("kmedoids", &s_med)]
                {
                    let r = eval::nystrom_regression_rmse(
                        &data.features,
                        &data.targets,
                        resolved.recipe,
                        s,
                        suite_cfg.ridge,
                        data_seed ^ 0x5011,
                    )?;
                    rows.push((
                        name.into(),
                        suite_cfg.paired_size,
                        r.frobenius_error,
                        r.rmse,
                        seed_idx,
                    ));
                }
            }
            std::fs::create_dir_all(out_dir)?;
            let csv_path = out_dir.join("results_nystrom.csv");
            std::fs::write(&csv_path, eval::nystrom_results_csv(&rows))?;

            let mut summary: Vec<(String, usize, f64, f64)> = Vec::new();
            let mut keys: Vec<(String, usize)> =
                rows.iter().map(|r| (r.0.clone(), r.1)).collect();
            keys.sort();
            keys.dedup();
            for (method, size) in keys {
                let group: Vec<&(String, usize, f64, f64, u64)> = rows
                    .iter()
                    .filter(|r| r.0 == method && r.1 == size)
                    .collect();
                let fro = group.iter().map(|r| r.2).sum::<f64>() / group.len() as f64;
                let rmse = group.iter().map(|r| r.3).sum::<f64>() / group.len() as f64;
                summary.push((method, size, fro, rmse));
            }
            Ok(SuiteOutcome::Nystrom { csv_path, summary })
        }
        "timing" => {
            let suite_cfg = eval_cfg
                .timing
                .as_ref()
                .ok_or_else(|| CliError::config("eval.timing section is required"))?;
            let GroundKind::Synthetic(syn) = &resolved.ground else {
                return Err(CliError::config(
                    "the timing suite benchmarks the varying-ground-set workload and needs a synthetic ground set",
                ));
            };
            let model = load_model_checkpoint(out_dir)?;
            if model.mode != ModelMode::Dynamic {
                return Err(CliError::config(
                    "the timing suite needs a dynamic checkpoint",
                ));
            }
            let matrices = syn
                .generator()
                .generate_many(suite_cfg.batch, cfg.seed ^ SALT_TIMING)?;
            let report = eval::timing_benchmark(
                &matrices,
                resolved.recipe,
                &model,
                suite_cfg.k,
                suite_cfg.reps,
                cfg.seed ^ SALT_TIMING,
            )?;
            std::fs::create_dir_all(out_dir)?;
            let csv_path = out_dir.join("results_timing.csv");
            std::fs::write(&csv_path, report.to_csv())?;
            Ok(SuiteOutcome::Timing { csv_path, report })
        }
        "theorem1" => {
            let suite_cfg = eval_cfg
                .theorem1
                .as_ref()
                .ok_or_else(|| CliError::config("eval.theorem1 section is required"))?;
            let report = eval::theorem1_check(suite_cfg.n, suite_cfg.trials, cfg.seed)?;
            let table = eval::correlated_line_table(suite_cfg.n)?;
            let adversarial = eval::adversarial_perturbation(&table, 10.0 * report.margin.max(0.0));
            let adversarial_detected =
                dppkit::dpp::submodularity_margin(&adversarial) < 0.0;
            std::fs::create_dir_all(out_dir)?;
            let csv_path = out_dir.join("results_theorem1.csv");
            let mut csv = String::from("n,margin,trials,passes,precondition_ok,adversarial_detected\n");
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                report.n,
                report.margin,
                report.trials,
                report.passes,
                report.precondition_ok,
                adversarial_detected
            );
            std::fs::write(&csv_path, csv)?;
            Ok(SuiteOutcome::Theorem1 {
                csv_path,
                report,
                adversarial_detected,
            })
        }
        other => Err(CliError::config(format!(
            "unknown suite {other:?}: valid suites are nll, nystrom, timing, theorem1"
        ))),
    }
}

/// Pretty table for the nll suite.
pub fn format_nll_table(reports: &[NllReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>10} {:>10} {:>12} {:>8}",
        "method", "mean_nll", "stderr", "nll_per_item", "draws"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<12} {:>10.3} {:>10.3} {:>12.4} {:>8}",
            r.method,
            r.mean,
            r.stderr,
            r.mean_per_item,
            r.nlls.len()
        );
    }
    out
}
