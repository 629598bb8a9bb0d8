//! dppkit: exact determinantal point process sampling, conditioning and
//! likelihood evaluation, plus a neural surrogate sampler built on an
//! inhibitive attention mechanism that approximates DPP draws at a fraction
//! of the cost.
//!
//! The crate is organized around the pipeline the experiments run:
//!
//! - [`kernels`]: feature ingestion and kernel construction (exponentiated
//!   quadratic and linear), spectral decomposition, log determinants.
//! - [`dpp`]: the exact machinery — subset likelihoods, the two-phase
//!   spectral sampler, fixed-size k-DPPs, closed-form conditioning,
//!   conditional marginals, greedy mode, a brute-force enumeration oracle
//!   and the submodularity-margin checker.
//! - [`surrogate`]: the marginal-predicting network in a static
//!   (fixed ground set) and a dynamic (feature-matrix input) variant.
//! - [`training`]: sampling-path datasets, norm losses, backprop and the
//!   adaptive-moment optimizer.
//! - [`samplers`]: the sequential surrogate sampler with conditioning and
//!   mode plus the uniform / k-medoids / attention-only baselines.
//! - [`eval`]: NLL comparison tables, the Nystrom reconstruction task, the
//!   wallclock speedup benchmark and the perturbation checker.
//! - [`synth`]: seeded synthetic ground sets and regression data.
//!
//! Everything is deterministic given explicit seeds; sampling operations
//! take a caller-owned random stream, so concurrent draws with independent
//! seeds are safe.

pub mod dpp;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod matrix;
pub mod parallel;
pub mod samplers;
pub mod surrogate;
pub mod synth;
pub mod training;

pub use dpp::{Dpp, MarginalVector, SetFunctionTable, Subset};
pub use error::{Error, Result};
pub use kernels::{FeatureMatrix, KernelMatrix, SpectralDecomposition};
pub use surrogate::SurrogateModel;
pub use training::{PathDataset, TrainConfig};
