//! The surrogate sampler network: an inhibitive attention map over the
//! ground-set features feeding a dense feedforward stack that predicts
//! conditional inclusion marginals.
//!
//! The static variant models one fixed kernel and takes the multi-hot prefix
//! indicator as input; the dynamic variant takes the feature matrix itself,
//! compressed through attention into a fixed-width input.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dpp::{MarginalVector, Subset};
use crate::error::{Error, Result};
use crate::kernels::FeatureMatrix;
use crate::matrix::{dot, Matrix};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Scaled dot-product configuration; the scale is pinned to d^-1/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionConfig {
    dim: usize,
    scale: f64,
}

impl AttentionConfig {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "attention dimension must be at least 1".into(),
            ));
        }
        Ok(AttentionConfig {
            dim,
            scale: 1.0 / (dim as f64).sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Inhibitive attention (queries are the feature rows of the prefix S):
/// a'_j = prod_{i in S} (1 - softmax(phi_i Phi^T / sqrt(d))_j, a = a'/|a'|_1.
/// The empty prefix yields the uniform vector, the limit of the empty
/// product after renormalization.
pub fn inhibitive_attention(phi: &FeatureMatrix, s: &Subset) -> Result<Vec<f64>> {
    let n = phi.n_items();
    if s.is_empty() {
        return Ok(vec![1.0 / n as f64; n]);
    }
    let cfg = AttentionConfig::new(phi.dim())?;
    let mut a = vec![1.0; n];
    let mut scores = vec![0.0; n];
    for &i in s.indices() {
        let qi = phi.row(i);
        let mut max = f64::NEG_INFINITY;
        for (j, sc) in scores.iter_mut().enumerate() {
            *sc = dot(qi, phi.row(j)) * cfg.scale();
            max = max.max(*sc);
        }
        let mut z = 0.0;
        for sc in scores.iter_mut() {
            *sc = (*sc - max).exp();
            z += *sc;
        }
        for (aj, sc) in a.iter_mut().zip(&scores) {
            *aj *= 1.0 - sc / z;
        }
    }
    let total: f64 = a.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateAttention);
    }
    for aj in a.iter_mut() {
        *aj /= total;
    }
    Ok(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelMode {
    Static,
    Dynamic,
}

/// How the dynamic model weighs the ground set: the inhibitive mechanism, or
/// a flat vector (the attention-ablated baseline).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AttentionKind {
    #[default]
    Inhibitive,
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// out x in, row-major.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }
}

/// Describes a model to initialize: widths plus mode.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub mode: ModelMode,
    pub n_max: usize,
    pub feature_dim: Option<usize>,
    pub hidden: Vec<usize>,
    pub attention: AttentionKind,
}

impl ModelSpec {
    pub fn static_model(n_max: usize, hidden: Vec<usize>) -> Self {
        ModelSpec {
            mode: ModelMode::Static,
            n_max,
            feature_dim: None,
            hidden,
            attention: AttentionKind::Inhibitive,
        }
    }

    pub fn dynamic_model(n_max: usize, feature_dim: usize, hidden: Vec<usize>) -> Self {
        ModelSpec {
            mode: ModelMode::Dynamic,
            n_max,
            feature_dim: Some(feature_dim),
            hidden,
            attention: AttentionKind::Inhibitive,
        }
    }

    pub fn with_attention(mut self, attention: AttentionKind) -> Self {
        self.attention = attention;
        self
    }
}

#[derive(Clone, Debug)]
pub struct SurrogateModel {
    pub mode: ModelMode,
    pub n_max: usize,
    pub feature_dim: Option<usize>,
    pub attention: AttentionKind,
    pub mlp: MlpParams,
}

impl SurrogateModel {
    pub fn input_width(&self) -> usize {
        match self.mode {
            ModelMode::Static => self.n_max,
            ModelMode::Dynamic => self.n_max * (self.feature_dim.unwrap_or(0) + 1),
        }
    }

    /// Builds the dense input for a prefix: multi-hot indicator in static
    /// mode, the attention-scaled feature rows [a_j phi_j, a_j] flattened in
    /// dynamic mode.
    pub fn build_input(&self, phi: Option<&FeatureMatrix>, s: &Subset) -> Result<Vec<f64>> {
        if let Some(&bad) = s.indices().iter().find(|&&i| i >= self.n_max) {
            return Err(Error::IncompatibleInput(format!(
                "prefix item {bad} out of range for n_max {}",
                self.n_max
            )));
        }
        match self.mode {
            ModelMode::Static => {
                if phi.is_some() {
                    return Err(Error::IncompatibleInput(
                        "static model takes no feature matrix".into(),
                    ));
                }
                let mut x = vec![0.0; self.n_max];
                for &i in s.indices() {
                    x[i] = 1.0;
                }
                Ok(x)
            }
            ModelMode::Dynamic => {
                let phi = phi.ok_or_else(|| {
                    Error::IncompatibleInput("dynamic model requires a feature matrix".into())
                })?;
                let d = self.feature_dim.unwrap_or(0);
                if phi.n_items() != self.n_max || phi.dim() != d {
                    return Err(Error::IncompatibleInput(format!(
                        "feature matrix is {}x{}, model expects {}x{}",
                        phi.n_items(),
                        phi.dim(),
                        self.n_max,
                        d
                    )));
                }
                let a = match self.attention {
                    AttentionKind::Inhibitive => inhibitive_attention(phi, s)?,
                    AttentionKind::Uniform => vec![1.0 / self.n_max as f64; self.n_max],
                };
                let mut x = Vec::with_capacity(self.n_max * (d + 1));
                for (j, &aj) in a.iter().enumerate() {
                    x.extend(phi.row(j).iter().map(|&f| aj * f));
                    x.push(aj);
                }
                Ok(x)
            }
        }
    }

    /// Runs the MLP on a prepared input: rectifier hidden layers, logistic
    /// output head. Returns every layer's post-activation (the input slot
    /// first), which the training module reuses for backprop.
    pub fn activations(&self, input: Vec<f64>) -> Vec<Vec<f64>> {
        let depth = self.mlp.layers.len();
        let mut acts = Vec::with_capacity(depth + 1);
        acts.push(input);
        for (li, layer) in self.mlp.layers.iter().enumerate() {
            let x = acts.last().unwrap();
            let last = li + 1 == depth;
            let out: Vec<f64> = (0..layer.weight.rows())
                .map(|r| {
                    let z = dot(layer.weight.row(r), x) + layer.bias[r];
                    if last {
                        logistic(z)
                    } else {
                        z.max(0.0)
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    /// Predicted conditional marginals for prefix `s`: forward pass followed
    /// by masking, so entries at i in S are exactly zero.
    pub fn forward(&self, phi: Option<&FeatureMatrix>, s: &Subset) -> Result<MarginalVector> {
        let input = self.build_input(phi, s)?;
        let mut out = self.activations(input).pop().unwrap();
        for &i in s.indices() {
            out[i] = 0.0;
        }
        Ok(MarginalVector::new(out))
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = CheckpointFile::from_model(self);
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::CheckpointParse(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Glorot-uniform initialization: weights in +-sqrt(6/(fan_in+fan_out)),
/// zero biases; deterministic for a given seed.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<SurrogateModel> {
    if spec.n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be positive".into()));
    }
    if spec.hidden.contains(&0) {
        return Err(Error::InvalidArgument(
            "hidden layer widths must be positive".into(),
        ));
    }
    if spec.mode == ModelMode::Dynamic && spec.feature_dim.unwrap_or(0) == 0 {
        return Err(Error::InvalidArgument(
            "dynamic models need a positive feature dimension".into(),
        ));
    }
    let mut model = SurrogateModel {
        mode: spec.mode,
        n_max: spec.n_max,
        feature_dim: match spec.mode {
            ModelMode::Static => None,
            ModelMode::Dynamic => spec.feature_dim,
        },
        attention: spec.attention,
        mlp: MlpParams { layers: Vec::new() },
    };
    let mut widths = vec![model.input_width()];
    widths.extend(&spec.hidden);
    widths.push(spec.n_max);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Matrix::from_fn(fan_out, fan_in, |_, _| {
            (rng.random::<f64>() * 2.0 - 1.0) * limit
        });
        model.mlp.layers.push(Layer {
            weight,
            bias: vec![0.0; fan_out],
        });
    }
    Ok(model)
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    mode: String,
    n_max: usize,
    d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attention: Option<String>,
    layers: Vec<CheckpointLayer>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl CheckpointFile {
    fn from_model(model: &SurrogateModel) -> Self {
        CheckpointFile {
            version: CHECKPOINT_VERSION,
            mode: match model.mode {
                ModelMode::Static => "static".into(),
                ModelMode::Dynamic => "dynamic".into(),
            },
            n_max: model.n_max,
            d: model.feature_dim,
            attention: match model.attention {
                AttentionKind::Inhibitive => None,
                AttentionKind::Uniform => Some("uniform".into()),
            },
            layers: model
                .mlp
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    rows: l.weight.rows(),
                    cols: l.weight.cols(),
                    w: l.weight.data().to_vec(),
                    b: l.bias.clone(),
                })
                .collect(),
        }
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SurrogateModel> {
    let text = std::fs::read_to_string(path)?;
    parse_checkpoint(&text)
}

pub fn parse_checkpoint(text: &str) -> Result<SurrogateModel> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::CheckpointParse(e.to_string()))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mode = match file.mode.as_str() {
        "static" => ModelMode::Static,
        "dynamic" => ModelMode::Dynamic,
        other => {
            return Err(Error::CheckpointParse(format!(
                "unknown mode {other:?}"
            )))
        }
    };
    let attention = match file.attention.as_deref() {
        None | Some("inhibitive") => AttentionKind::Inhibitive,
        Some("uniform") => AttentionKind::Uniform,
        Some(other) => {
            return Err(Error::CheckpointParse(format!(
                "unknown attention kind {other:?}"
            )))
        }
    };
    if mode == ModelMode::Dynamic && file.d.unwrap_or(0) == 0 {
        return Err(Error::CheckpointShape(
            "dynamic checkpoint missing feature dimension".into(),
        ));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, l) in file.layers.iter().enumerate() {
        if l.w.len() != l.rows * l.cols {
            return Err(Error::CheckpointShape(format!(
                "layer {i}: weight length {} != rows*cols {}",
                l.w.len(),
                l.rows * l.cols
            )));
        }
        if l.b.len() != l.rows {
            return Err(Error::CheckpointShape(format!(
                "layer {i}: bias length {} != rows {}",
                l.b.len(),
                l.rows
            )));
        }
        let mut weight = Matrix::zeros(l.rows, l.cols);
        for r in 0..l.rows {
            weight.row_mut(r).copy_from_slice(&l.w[r * l.cols..(r + 1) * l.cols]);
        }
        layers.push(Layer {
            weight,
            bias: l.b.clone(),
        });
    }
    let model = SurrogateModel {
        mode,
        n_max: file.n_max,
        feature_dim: match mode {
            ModelMode::Static => None,
            ModelMode::Dynamic => file.d,
        },
        attention,
        mlp: MlpParams { layers },
    };
    if model.mlp.layers.is_empty() {
        return Err(Error::CheckpointShape("checkpoint has no layers".into()));
    }
    let mut expected = model.input_width();
    for (i, l) in model.mlp.layers.iter().enumerate() {
        if l.weight.cols() != expected {
            return Err(Error::CheckpointShape(format!(
                "layer {i}: input width {} != expected {expected}",
                l.weight.cols()
            )));
        }
        expected = l.weight.rows();
    }
    if expected != model.n_max {
        return Err(Error::CheckpointShape(format!(
            "output width {expected} != n_max {}",
            model.n_max
        )));
    }
    Ok(model)
}
