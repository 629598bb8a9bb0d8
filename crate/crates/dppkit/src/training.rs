//! Sampling-path datasets and surrogate training.
//!
//! Training data comes straight from the exact sampler: every k-DPP draw
//! contributes its k growing prefixes, each paired with the true conditional
//! marginal vector of that prefix. The surrogate is then fit by explicit
//! backprop through the dense stack with an adaptive-moment optimizer;
//! attention has no trainable parameters, so it acts as a fixed feature map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dpp::{Dpp, MarginalVector, Subset};
use crate::error::{Error, Result};
use crate::kernels::{exp_quadratic_kernel, linear_kernel, FeatureMatrix, KernelMatrix};
use crate::matrix::Matrix;
use crate::parallel;
use crate::surrogate::{ModelMode, SurrogateModel};

/// Recipe for building a kernel from features.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelRecipe {
    ExpQuadratic { beta: f64 },
    Linear,
}

impl KernelRecipe {
    pub fn build(&self, phi: &FeatureMatrix) -> Result<KernelMatrix> {
        match *self {
            KernelRecipe::ExpQuadratic { beta } => exp_quadratic_kernel(phi, beta),
            KernelRecipe::Linear => Ok(linear_kernel(phi)),
        }
    }
}

/// Where sampling paths come from: one fixed DPP, or a pool of feature
/// matrices with a kernel recipe applied per matrix.
pub enum KernelSource {
    Static {
        dpp: Dpp,
        features: FeatureMatrix,
    },
    Dynamic {
        matrices: Vec<FeatureMatrix>,
        recipe: KernelRecipe,
    },
}

#[derive(Clone, Debug)]
pub struct PathRecord {
    pub matrix_id: usize,
    pub prefix: Subset,
    pub target: MarginalVector,
}

#[derive(Clone, Debug, Default)]
pub struct PathDataset {
    pub records: Vec<PathRecord>,
    pub features: Vec<FeatureMatrix>,
}

impl PathDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Line-oriented cache format: matrix_id,prefix,target with semicolon
    /// joined fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("matrix_id,prefix,target\n");
        for r in &self.records {
            let target = r
                .target
                .values()
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!(
                "{},{},{}\n",
                r.matrix_id,
                r.prefix.to_path_field(),
                target
            ));
        }
        out
    }

    /// Parses a cache file back into records. The caller supplies the
    /// feature matrices the records reference (the cache stores indices
    /// only); the ground-set size comes from the target length.
    pub fn from_csv(text: &str, features: Vec<FeatureMatrix>) -> Result<PathDataset> {
        let mut records = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line_no == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ',');
            let (Some(id), Some(prefix), Some(target)) =
                (parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Format(format!(
                    "dataset cache row {}: expected matrix_id,prefix,target",
                    line_no + 1
                )));
            };
            let matrix_id: usize = id.trim().parse().map_err(|_| Error::Parse {
                row: line_no + 1,
                col: 1,
                message: format!("bad matrix id {id:?}"),
            })?;
            let values = target
                .split(';')
                .enumerate()
                .map(|(col, v)| {
                    v.trim().parse::<f64>().map_err(|_| Error::Parse {
                        row: line_no + 1,
                        col: col + 1,
                        message: format!("bad target value {v:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let prefix = Subset::parse_csv_field(prefix, values.len())?;
            records.push(PathRecord {
                matrix_id,
                prefix,
                target: MarginalVector::new(values),
            });
        }
        Ok(PathDataset { records, features })
    }
}

/// Draws `n_paths` k-DPP samples from the source and emits the k prefixes of
/// each (sizes 0..k-1) paired with exact conditional marginals. Paths run in
/// parallel with per-path seeds (base xor path index), so regeneration with
/// the same seed is bit-identical regardless of thread count.
pub fn generate_dataset(
    source: &KernelSource,
    n_paths: usize,
    k: usize,
    seed: u64,
    threads: usize,
) -> Result<PathDataset> {
    if k == 0 {
        return Err(Error::InvalidArgument("path length k must be positive".into()));
    }
    let (dpps, features): (Vec<Dpp>, Vec<FeatureMatrix>) = match source {
        KernelSource::Static { dpp, features } => (vec![dpp.clone()], vec![features.clone()]),
        KernelSource::Dynamic { matrices, recipe } => {
            if matrices.is_empty() {
                return Err(Error::InvalidArgument(
                    "dynamic source needs at least one feature matrix".into(),
                ));
            }
            let dpps = matrices
                .iter()
                .map(|phi| Dpp::new(recipe.build(phi)?))
                .collect::<Result<Vec<_>>>()?;
            (dpps, matrices.clone())
        }
    };

    let per_path: Vec<Result<Vec<PathRecord>>> = parallel::map_indexed(n_paths, threads, |p| {
        let matrix_id = p % dpps.len();
        let dpp = &dpps[matrix_id];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ p as u64);
        let items = dpp.sample_kdpp(k, &mut rng)?;
        let mut prefix = Subset::empty();
        let mut records = Vec::with_capacity(k);
        for t in 0..k {
            let target = dpp.conditional_marginals(&prefix)?;
            records.push(PathRecord {
                matrix_id,
                prefix: prefix.clone(),
                target,
            });
            prefix.push(items.indices()[t]);
        }
        Ok(records)
    });

    let mut records = Vec::with_capacity(n_paths * k);
    for r in per_path {
        records.extend(r?);
    }
    Ok(PathDataset { records, features })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    SquaredL2,
    L1,
    Kl,
}

impl LossKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "squared-l2" | "l2" => Ok(LossKind::SquaredL2),
            "l1" => Ok(LossKind::L1),
            "kl" => Ok(LossKind::Kl),
            other => Err(Error::InvalidArgument(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            loss: LossKind::SquaredL2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

const KL_CLAMP: f64 = 1e-7;

/// Loss between a prediction and target marginal vector.
///
/// `alpha` is the norm-equivalence constant max_{|x|_inf = 1} 1/|x|: for the
/// L1 and L2 norms the maximizer is a single spike, so alpha = 1.
#[derive(Clone, Copy, Debug)]
pub struct LossValue {
    pub loss: f64,
    pub grad_norm: f64,
    pub alpha: f64,
}

pub fn loss(pred: &MarginalVector, target: &MarginalVector, kind: LossKind) -> Result<LossValue> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let mut grad_sq = 0.0;
    for (&q, &v) in pred.values().iter().zip(target.values()) {
        let (term, grad) = per_item_loss(q, v, kind, n);
        total += term;
        grad_sq += grad * grad;
    }
    Ok(LossValue {
        loss: total,
        grad_norm: grad_sq.sqrt(),
        alpha: 1.0,
    })
}

/// Per-item loss term and d(term)/dq. Masked entries (q = v = 0) contribute
/// exactly zero under every loss, keeping masking outside the loss path.
fn per_item_loss(q: f64, v: f64, kind: LossKind, n: f64) -> (f64, f64) {
    if q == 0.0 && v == 0.0 {
        return (0.0, 0.0);
    }
    match kind {
        LossKind::SquaredL2 => {
            let d = q - v;
            (d * d / n, 2.0 * d / n)
        }
        LossKind::L1 => {
            let d = q - v;
            (d.abs() / n, d.signum() / n)
        }
        LossKind::Kl => {
            let qc = q.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
            let mut term = 0.0;
            if v > 0.0 {
                term += v * (v / qc).ln();
            }
            if v < 1.0 {
                term += (1.0 - v) * ((1.0 - v) / (1.0 - qc)).ln();
            }
            let grad = if !(KL_CLAMP..=1.0 - KL_CLAMP).contains(&q) {
                0.0
            } else {
                -v / qc + (1.0 - v) / (1.0 - qc)
            };
            (term, grad)
        }
    }
}

/// Per-layer weight and bias gradients, shapes mirroring the model.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &SurrogateModel) -> Self {
        Gradients {
            weights: model
                .mlp
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
            biases: model
                .mlp
                .layers
                .iter()
                .map(|l| vec![0.0; l.bias.len()])
                .collect(),
        }
    }
}

fn record_features<'a>(
    model: &SurrogateModel,
    dataset_features: &'a [FeatureMatrix],
    record: &PathRecord,
) -> Result<Option<&'a FeatureMatrix>> {
    match model.mode {
        ModelMode::Static => Ok(None),
        ModelMode::Dynamic => {
            let phi = dataset_features.get(record.matrix_id).ok_or_else(|| {
                Error::IncompatibleInput(format!(
                    "record references feature matrix {} but the dataset holds {}",
                    record.matrix_id,
                    dataset_features.len()
                ))
            })?;
            Ok(Some(phi))
        }
    }
}

/// Mean loss and parameter gradients over a batch via reverse-mode
/// differentiation of forward + loss. The attention map is a fixed feature
/// transform (it has no trainable parameters), so gradients flow only into
/// the dense stack. Prefix entries are masked out of both the prediction and
/// the gradient.
pub fn backward(
    model: &SurrogateModel,
    features: &[FeatureMatrix],
    batch: &[&PathRecord],
    kind: LossKind,
) -> Result<(Gradients, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("batch must be nonempty".into()));
    }
    let mut grads = Gradients::zeros_like(model);
    let mut total_loss = 0.0;
    let inv_batch = 1.0 / batch.len() as f64;
    let depth = model.mlp.layers.len();

    for (bi, record) in batch.iter().enumerate() {
        let phi = record_features(model, features, record)?;
        let input = model.build_input(phi, &record.prefix)?;
        let acts = model.activations(input);
        if acts.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::TrainingDivergence { batch_index: bi });
        }
        let output = acts.last().unwrap();
        if record.target.len() != output.len() {
            return Err(Error::LengthMismatch {
                left: record.target.len(),
                right: output.len(),
            });
        }
        let n = output.len() as f64;

        // delta at the output layer: dL/dq * sigma'(z), with masked entries
        // contributing nothing
        let mut delta: Vec<f64> = output
            .iter()
            .enumerate()
            .map(|(i, &qraw)| {
                if record.prefix.contains(i) {
                    return 0.0;
                }
                let v = record.target.values()[i];
                let (_, dq) = per_item_loss(qraw, v, kind, n);
                dq * qraw * (1.0 - qraw)
            })
            .collect();
        let loss_here: f64 = output
            .iter()
            .enumerate()
            .map(|(i, &qraw)| {
                let q = if record.prefix.contains(i) { 0.0 } else { qraw };
                per_item_loss(q, record.target.values()[i], kind, n).0
            })
            .sum();
        if !loss_here.is_finite() {
            return Err(Error::TrainingDivergence { batch_index: bi });
        }
        total_loss += loss_here * inv_batch;

        for li in (0..depth).rev() {
            let layer = &model.mlp.layers[li];
            let below = &acts[li];
            let gw = &mut grads.weights[li];
            for (r, &dr) in delta.iter().enumerate() {
                if dr == 0.0 {
                    continue;
                }
                let scaled = dr * inv_batch;
                grads.biases[li][r] += scaled;
                let grow = gw.row_mut(r);
                for (g, &x) in grow.iter_mut().zip(below) {
                    *g += scaled * x;
                }
            }
            if li > 0 {
                // propagate through W and the rectifier of the layer below
                let mut next = vec![0.0; layer.weight.cols()];
                for (r, &dr) in delta.iter().enumerate() {
                    if dr == 0.0 {
                        continue;
                    }
                    for (nj, &w) in next.iter_mut().zip(layer.weight.row(r)) {
                        *nj += dr * w;
                    }
                }
                for (nj, &a) in next.iter_mut().zip(&acts[li]) {
                    if a <= 0.0 {
                        *nj = 0.0;
                    }
                }
                delta = next;
            }
        }
    }
    Ok((grads, total_loss))
}

/// First/second moment accumulators plus the step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub m_weights: Vec<Matrix>,
    pub v_weights: Vec<Matrix>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_biases: Vec<Vec<f64>>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(model: &SurrogateModel) -> Self {
        let z = Gradients::zeros_like(model);
        OptimizerState {
            m_weights: z.weights.clone(),
            v_weights: z.weights,
            m_biases: z.biases.clone(),
            v_biases: z.biases,
            t: 0,
        }
    }
}

/// One adaptive-moment update with bias correction.
pub fn adam_step(
    model: &mut SurrogateModel,
    grads: &Gradients,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (li, layer) in model.mlp.layers.iter_mut().enumerate() {
        let gw = &grads.weights[li];
        let mw = &mut state.m_weights[li];
        let vw = &mut state.v_weights[li];
        for r in 0..layer.weight.rows() {
            let wrow = layer.weight.row_mut(r);
            let grow = gw.row(r);
            // moments are updated in place, row by row
            for c in 0..wrow.len() {
                let g = grow[c];
                let m = cfg.beta1 * mw[(r, c)] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * vw[(r, c)] + (1.0 - cfg.beta2) * g * g;
                mw[(r, c)] = m;
                vw[(r, c)] = v;
                wrow[c] -= cfg.learning_rate * (m / bc1) / ((v / bc2).sqrt() + cfg.epsilon);
            }
        }
        for (c, b) in layer.bias.iter_mut().enumerate() {
            let g = grads.biases[li][c];
            let m = cfg.beta1 * state.m_biases[li][c] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * state.v_biases[li][c] + (1.0 - cfg.beta2) * g * g;
            state.m_biases[li][c] = m;
            state.v_biases[li][c] = v;
            *b -= cfg.learning_rate * (m / bc1) / ((v / bc2).sqrt() + cfg.epsilon);
        }
    }
}

/// Trains the model in place over seeded shuffled batches and returns the
/// per-epoch mean training loss (one entry per epoch).
pub fn train(
    model: &mut SurrogateModel,
    dataset: &PathDataset,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    train_with_progress(model, dataset, cfg, |_, _| {})
}

/// [`train`] with an epoch callback (index, mean loss) for log lines.
pub fn train_with_progress(
    model: &mut SurrogateModel,
    dataset: &PathDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let mut state = OptimizerState::new(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PathRecord> = chunk.iter().map(|&i| &dataset.records[i]).collect();
            let (grads, mean_loss) = backward(model, &dataset.features, &batch, cfg.loss)?;
            adam_step(model, &grads, &mut state, cfg);
            epoch_loss += mean_loss;
            batches += 1;
        }
        let mean = epoch_loss / batches as f64;
        on_epoch(epoch, mean);
        curve.push(mean);
    }
    Ok(curve)
}

fn shuffle(order: &mut [usize], rng: &mut impl Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}
