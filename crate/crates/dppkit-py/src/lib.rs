//! Python bindings: the exact DPP machinery, the surrogate model and the
//! baseline samplers, with subsets passed as plain index lists.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dppkit::dpp::Subset;
use dppkit::error::Error as DppError;
use dppkit::kernels;
use dppkit::matrix::Matrix;
use dppkit::samplers;
use dppkit::surrogate::{self, AttentionKind, ModelMode, ModelSpec};
use dppkit::training::{self, KernelRecipe, KernelSource, LossKind, TrainConfig};

fn to_py_err(e: DppError) -> PyErr {
    match e {
        DppError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn subset(items: Vec<usize>, n: usize) -> PyResult<Subset> {
    Subset::new(items, n).map_err(to_py_err)
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn recipe(kernel: &str, beta: Option<f64>) -> PyResult<KernelRecipe> {
    match kernel {
        "exp-quadratic" => Ok(KernelRecipe::ExpQuadratic {
            beta: beta
                .ok_or_else(|| PyValueError::new_err("beta is required for exp-quadratic"))?,
        }),
        "linear" => Ok(KernelRecipe::Linear),
        other => Err(PyValueError::new_err(format!(
            "kernel must be exp-quadratic or linear, got {other:?}"
        ))),
    }
}

/// N x d item feature matrix.
#[pyclass(name = "FeatureMatrix", skip_from_py_object)]
#[derive(Clone)]
struct PyFeatureMatrix {
    inner: kernels::FeatureMatrix,
}

#[pymethods]
impl PyFeatureMatrix {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(PyValueError::new_err(
                "rows must be nonempty and rectangular",
            ));
        }
        Ok(PyFeatureMatrix {
            inner: kernels::FeatureMatrix::from_rows(&rows).map_err(to_py_err)?,
        })
    }

    /// m x m grid on the unit square.
    #[staticmethod]
    fn grid(m: usize) -> PyResult<Self> {
        Ok(PyFeatureMatrix {
            inner: kernels::unit_square_grid(m).map_err(to_py_err)?,
        })
    }

    /// Load a feature CSV (optional header line).
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        Ok(PyFeatureMatrix {
            inner: kernels::load_features(path).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.matrix())
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureMatrix({} items, dim {})",
            self.inner.n_items(),
            self.inner.dim()
        )
    }
}

/// An L-ensemble DPP with cached spectrum.
#[pyclass(name = "Dpp")]
struct PyDpp {
    inner: dppkit::Dpp,
}

#[pymethods]
impl PyDpp {
    /// Build from features and a kernel recipe.
    #[new]
    #[pyo3(signature = (features, kernel="exp-quadratic", beta=None))]
    fn new(features: &PyFeatureMatrix, kernel: &str, beta: Option<f64>) -> PyResult<Self> {
        let k = recipe(kernel, beta)?
            .build(&features.inner)
            .map_err(to_py_err)?;
        Ok(PyDpp {
            inner: dppkit::Dpp::new(k).map_err(to_py_err)?,
        })
    }

    /// Build directly from a symmetric PSD kernel matrix.
    #[staticmethod]
    fn from_kernel(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let k = kernels::KernelMatrix::new(Matrix::from_rows(&rows)).map_err(to_py_err)?;
        Ok(PyDpp {
            inner: dppkit::Dpp::new(k).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn log_normalizer(&self) -> f64 {
        self.inner.log_normalizer()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.spectrum().eigenvalues().to_vec()
    }

    fn log_prob(&self, items: Vec<usize>) -> PyResult<f64> {
        Ok(self.inner.log_prob(&subset(items, self.inner.n())?))
    }

    fn nll(&self, items: Vec<usize>) -> PyResult<f64> {
        Ok(-self.inner.log_prob(&subset(items, self.inner.n())?))
    }

    fn expected_size(&self) -> f64 {
        self.inner.expected_size()
    }

    fn marginal_kernel(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.marginal_kernel().matrix())
    }

    /// Exact spectral sample, items in draw order.
    fn sample(&self, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.inner.sample(&mut rng).indices().to_vec()
    }

    /// Fixed-size sample.
    fn sample_kdpp(&self, k: usize, seed: u64) -> PyResult<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self
            .inner
            .sample_kdpp(k, &mut rng)
            .map_err(to_py_err)?
            .indices()
            .to_vec())
    }

    /// Conditional kernel over the complement of `items`.
    fn condition_kernel(&self, items: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        let s = subset(items, self.inner.n())?;
        Ok(matrix_rows(
            self.inner.condition_kernel(&s).map_err(to_py_err)?.matrix(),
        ))
    }

    /// Conditional inclusion marginals (zero at conditioned items).
    fn conditional_marginals(&self, items: Vec<usize>) -> PyResult<Vec<f64>> {
        let s = subset(items, self.inner.n())?;
        Ok(self
            .inner
            .conditional_marginals(&s)
            .map_err(to_py_err)?
            .values()
            .to_vec())
    }

    /// Deterministic greedy mode of size k.
    fn greedy_mode(&self, k: usize) -> PyResult<Vec<usize>> {
        Ok(self
            .inner
            .greedy_mode(k)
            .map_err(to_py_err)?
            .indices()
            .to_vec())
    }

    /// Probability of every subset, indexed by bitmask (n <= 20).
    fn enumerate_probs(&self) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .enumerate_probs()
            .map_err(to_py_err)?
            .values()
            .to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Dpp(n={})", self.inner.n())
    }
}

/// The marginal-predicting surrogate network.
#[pyclass(name = "SurrogateModel")]
struct PySurrogateModel {
    inner: surrogate::SurrogateModel,
}

#[pymethods]
impl PySurrogateModel {
    /// Initialize a fresh model ("static" or "dynamic" mode).
    #[staticmethod]
    #[pyo3(signature = (mode, n_max, hidden, seed, d=None, attention="inhibitive"))]
    fn init(
        mode: &str,
        n_max: usize,
        hidden: Vec<usize>,
        seed: u64,
        d: Option<usize>,
        attention: &str,
    ) -> PyResult<Self> {
        let kind = match attention {
            "inhibitive" => AttentionKind::Inhibitive,
            "uniform" => AttentionKind::Uniform,
            other => {
                return Err(PyValueError::new_err(format!(
                    "attention must be inhibitive or uniform, got {other:?}"
                )))
            }
        };
        let spec = match mode {
            "static" => ModelSpec::static_model(n_max, hidden),
            "dynamic" => ModelSpec::dynamic_model(
                n_max,
                d.ok_or_else(|| PyValueError::new_err("dynamic mode requires d"))?,
                hidden,
            )
            .with_attention(kind),
            other => {
                return Err(PyValueError::new_err(format!(
                    "mode must be static or dynamic, got {other:?}"
                )))
            }
        };
        Ok(PySurrogateModel {
            inner: surrogate::init_params(&spec, seed).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PySurrogateModel {
            inner: surrogate::load_checkpoint(path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_checkpoint(path).map_err(to_py_err)
    }

    #[getter]
    fn mode(&self) -> &'static str {
        match self.inner.mode {
            ModelMode::Static => "static",
            ModelMode::Dynamic => "dynamic",
        }
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max
    }

    /// Predicted marginals for a prefix (masked to zero on the prefix).
    #[pyo3(signature = (prefix, features=None))]
    fn forward(&self, prefix: Vec<usize>, features: Option<&PyFeatureMatrix>) -> PyResult<Vec<f64>> {
        let s = subset(prefix, self.inner.n_max)?;
        Ok(self
            .inner
            .forward(features.map(|f| &f.inner), &s)
            .map_err(to_py_err)?
            .values()
            .to_vec())
    }

    /// Sequential surrogate sample of size k (draw order, condition first).
    #[pyo3(signature = (k, seed, features=None, condition=vec![]))]
    fn sample(
        &self,
        k: usize,
        seed: u64,
        features: Option<&PyFeatureMatrix>,
        condition: Vec<usize>,
    ) -> PyResult<Vec<usize>> {
        let a = subset(condition, self.inner.n_max)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(
            samplers::sample_surrogate(&self.inner, features.map(|f| &f.inner), k, &a, &mut rng)
                .map_err(to_py_err)?
                .indices()
                .to_vec(),
        )
    }

    /// Deterministic greedy mode of the surrogate.
    #[pyo3(signature = (k, features=None, condition=vec![]))]
    fn sample_mode(
        &self,
        k: usize,
        features: Option<&PyFeatureMatrix>,
        condition: Vec<usize>,
    ) -> PyResult<Vec<usize>> {
        let a = subset(condition, self.inner.n_max)?;
        Ok(
            samplers::sample_mode(&self.inner, features.map(|f| &f.inner), k, &a)
                .map_err(to_py_err)?
                .indices()
                .to_vec(),
        )
    }

    fn __repr__(&self) -> String {
        format!(
            "SurrogateModel(mode={}, n_max={})",
            self.mode(),
            self.inner.n_max
        )
    }
}

/// Inhibitive attention vector for a prefix (uniform for the empty prefix).
#[pyfunction]
fn inhibitive_attention(features: &PyFeatureMatrix, prefix: Vec<usize>) -> PyResult<Vec<f64>> {
    let s = subset(prefix, features.inner.n_items())?;
    surrogate::inhibitive_attention(&features.inner, &s).map_err(to_py_err)
}

/// Uniform sample without replacement.
#[pyfunction]
fn sample_uniform(n: usize, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(samplers::sample_uniform(n, k, &mut rng)
        .map_err(to_py_err)?
        .indices()
        .to_vec())
}

/// PAM-style k-medoids over the feature rows.
#[pyfunction]
fn kmedoids(features: &PyFeatureMatrix, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(samplers::kmedoids(&features.inner, k, &mut rng)
        .map_err(to_py_err)?
        .indices()
        .to_vec())
}

/// Sampling from the attention distribution alone.
#[pyfunction]
fn sample_attention_only(features: &PyFeatureMatrix, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(samplers::sample_attention_only(&features.inner, k, &mut rng)
        .map_err(to_py_err)?
        .indices()
        .to_vec())
}

/// Train a static surrogate on sampling paths from one kernel.
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (features, n_paths, k, hidden, epochs, seed, kernel="exp-quadratic", beta=None, batch_size=32, learning_rate=1e-3))]
fn train_static(
    features: &PyFeatureMatrix,
    n_paths: usize,
    k: usize,
    hidden: Vec<usize>,
    epochs: usize,
    seed: u64,
    kernel: &str,
    beta: Option<f64>,
    batch_size: usize,
    learning_rate: f64,
) -> PyResult<(PySurrogateModel, Vec<f64>)> {
    let km = recipe(kernel, beta)?
        .build(&features.inner)
        .map_err(to_py_err)?;
    let dpp = dppkit::Dpp::new(km).map_err(to_py_err)?;
    let source = KernelSource::Static {
        dpp,
        features: features.inner.clone(),
    };
    let dataset = training::generate_dataset(&source, n_paths, k, seed, 1).map_err(to_py_err)?;
    let spec = ModelSpec::static_model(features.inner.n_items(), hidden);
    let mut model = surrogate::init_params(&spec, seed).map_err(to_py_err)?;
    let cfg = TrainConfig {
        learning_rate,
        epochs,
        batch_size,
        seed,
        loss: LossKind::SquaredL2,
        ..TrainConfig::default()
    };
    let curve = training::train(&mut model, &dataset, &cfg).map_err(to_py_err)?;
    Ok((PySurrogateModel { inner: model }, curve))
}

#[pymodule]
fn dppkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFeatureMatrix>()?;
    m.add_class::<PyDpp>()?;
    m.add_class::<PySurrogateModel>()?;
    m.add_function(wrap_pyfunction!(inhibitive_attention, m)?)?;
    m.add_function(wrap_pyfunction!(sample_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(kmedoids, m)?)?;
    m.add_function(wrap_pyfunction!(sample_attention_only, m)?)?;
    m.add_function(wrap_pyfunction!(train_static, m)?)?;
    Ok(())
}
