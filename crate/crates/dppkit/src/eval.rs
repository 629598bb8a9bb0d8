//! Evaluation harness: NLL scoring under the reference DPP, method
//! comparison tables, the Nystrom downstream task, the wallclock speedup
//! benchmark and the perturbation checker behind the submodularity
//! inheritance result.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dpp::{submodularity_margin, Dpp, SetFunctionTable, Subset};
use crate::error::{Error, Result};
use crate::kernels::{exp_quadratic_kernel, FeatureMatrix, KernelMatrix};
use crate::matrix::Matrix;
use crate::parallel;
use crate::samplers::{draw_method, MarginalPredictor, Method};
use crate::surrogate::SurrogateModel;
use crate::training::KernelRecipe;

/// Negative log-likelihood of a subset under the reference DPP; probability
/// zero scores +inf rather than erroring.
pub fn nll(dpp: &Dpp, s: &Subset) -> f64 {
    -dpp.log_prob(s)
}

#[derive(Clone, Debug)]
pub struct NllReport {
    pub method: String,
    pub nlls: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub mean_per_item: f64,
    pub seconds: f64,
}

impl NllReport {
    pub fn from_nlls(method: String, nlls: Vec<f64>, k: usize, seconds: f64) -> Self {
        let count = nlls.len().max(1) as f64;
        let mean = nlls.iter().sum::<f64>() / count;
        let stderr = if nlls.len() < 2 {
            0.0
        } else {
            let var = nlls.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / (nlls.len() - 1) as f64;
            (var / nlls.len() as f64).sqrt()
        };
        NllReport {
            method,
            nlls,
            mean,
            stderr,
            mean_per_item: mean / k.max(1) as f64,
            seconds,
        }
    }
}

/// What the comparison scores against: one fixed kernel, or one kernel per
/// feature matrix with draws cycling through the pool.
pub enum GroundTruth<'a> {
    Fixed {
        dpp: &'a Dpp,
        features: &'a FeatureMatrix,
    },
    PerMatrix {
        matrices: &'a [FeatureMatrix],
        recipe: KernelRecipe,
    },
}

#[derive(Clone, Debug)]
pub struct CompareConfig {
    pub methods: Vec<Method>,
    pub k: usize,
    pub n_draws: usize,
    pub seed: u64,
    pub threads: usize,
}

/// Scores each method with `n_draws` seeded draws; the exact-DPP row uses
/// fixed-size k-DPP draws so every method is compared at the same subset
/// size. Deterministic given the config, independent of thread count.
pub fn compare_methods(
    truth: &GroundTruth,
    model: Option<&SurrogateModel>,
    cfg: &CompareConfig,
) -> Result<Vec<NllReport>> {
    if cfg.n_draws == 0 {
        return Err(Error::InvalidArgument("n_draws must be positive".into()));
    }
    let (dpps, features): (Vec<Dpp>, Vec<&FeatureMatrix>) = match truth {
        GroundTruth::Fixed { dpp, features } => (vec![(*dpp).clone()], vec![*features]),
        GroundTruth::PerMatrix { matrices, recipe } => {
            if matrices.is_empty() {
                return Err(Error::InvalidArgument(
                    "per-matrix comparison needs at least one feature matrix".into(),
                ));
            }
            let dpps = matrices
                .iter()
                .map(|phi| Dpp::new(recipe.build(phi)?))
                .collect::<Result<Vec<_>>>()?;
            (dpps, matrices.iter().collect())
        }
    };

    let mut reports = Vec::with_capacity(cfg.methods.len());
    for (mi, &method) in cfg.methods.iter().enumerate() {
        let start = Instant::now();
        // greedy mode is deterministic per ground set, so compute it once
        // per matrix and replicate across the draws that land there
        let nlls: Vec<f64> = if method == Method::DppNetMode {
            let per_matrix: Vec<Result<f64>> = parallel::map_indexed(dpps.len(), cfg.threads, |m| {
                let mut rng = draw_rng(cfg.seed, mi, m);
                let s = draw_method(
                    method,
                    &dpps[m],
                    features[m],
                    model,
                    cfg.k,
                    &Subset::empty(),
                    &mut rng,
                )?;
                Ok(nll(&dpps[m], &s))
            });
            let per_matrix = per_matrix.into_iter().collect::<Result<Vec<f64>>>()?;
            (0..cfg.n_draws)
                .map(|i| per_matrix[i % per_matrix.len()])
                .collect()
        } else {
            let drawn: Vec<Result<f64>> = parallel::map_indexed(cfg.n_draws, cfg.threads, |i| {
                let m = i % dpps.len();
                let mut rng = draw_rng(cfg.seed, mi, i);
                let s = draw_method(
                    // the exact row is compared at fixed size
                    if method == Method::Dpp { Method::Kdpp } else { method },
                    &dpps[m],
                    features[m],
                    model,
                    cfg.k,
                    &Subset::empty(),
                    &mut rng,
                )?;
                Ok(nll(&dpps[m], &s))
            });
            drawn.into_iter().collect::<Result<Vec<f64>>>()?
        };
        reports.push(NllReport::from_nlls(
            method.name().to_string(),
            nlls,
            cfg.k,
            start.elapsed().as_secs_f64(),
        ));
    }
    // aggregation is order-independent; report rows sort by method name
    reports.sort_by(|a, b| a.method.cmp(&b.method));
    Ok(reports)
}

fn draw_rng(seed: u64, method_index: usize, draw: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ ((method_index as u64 + 1) << 40) ^ draw as u64)
}

/// Results CSV with the fixed schema
/// `method,k,n_draws,mean_nll,stderr_nll,mean_nll_per_item,seconds`.
pub fn nll_results_csv(reports: &[NllReport], k: usize) -> String {
    let mut out = String::from("method,k,n_draws,mean_nll,stderr_nll,mean_nll_per_item,seconds\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method,
            k,
            r.nlls.len(),
            r.mean,
            r.stderr,
            r.mean_per_item,
            r.seconds
        ));
    }
    out
}

/// Nystrom reconstruction K_hat = K[:,S] pinv(K[S,S]) K[S,:], with the
/// pseudoinverse taken spectrally and eigenvalues at or below
/// 1e-10 * lambda_max treated as zero.
pub fn nystrom_reconstruct(kernel: &KernelMatrix, s: &Subset) -> Result<KernelMatrix> {
    if s.is_empty() {
        return Err(Error::InvalidArgument(
            "landmark set must be nonempty".into(),
        ));
    }
    let landmarks = s.ascending();
    let k = kernel.matrix();
    let n = kernel.n();
    let kss = k.principal_submatrix(&landmarks);
    let (vals, vecs) = kss.jacobi_eigh();
    let lambda_max = vals.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = 1e-10 * lambda_max;
    let m = landmarks.len();
    let mut pinv = Matrix::zeros(m, m);
    for (c, &lam) in vals.iter().enumerate() {
        if lam <= cutoff {
            continue;
        }
        let w = 1.0 / lam;
        for i in 0..m {
            let vic = vecs[(i, c)];
            if vic == 0.0 {
                continue;
            }
            for j in 0..m {
                pinv[(i, j)] += w * vic * vecs[(j, c)];
            }
        }
    }
    let cross = Matrix::from_fn(n, m, |i, j| k[(i, landmarks[j])]);
    let approx = cross.matmul(&pinv).matmul_transpose_b(&cross);
    KernelMatrix::new(approx.symmetrized())
}

#[derive(Clone, Debug)]
pub struct NystromResult {
    pub subset: Subset,
    pub frobenius_error: f64,
    pub rmse: f64,
}

/// Kernel ridge regression on an 80/20 split with the Nystrom-reconstructed
/// kernel standing in for the exact one; reports the held-out RMSE and the
/// reconstruction error.
pub fn nystrom_regression_rmse(
    features: &FeatureMatrix,
    targets: &[f64],
    recipe: KernelRecipe,
    landmarks: &Subset,
    ridge: f64,
    split_seed: u64,
) -> Result<NystromResult> {
    let n = features.n_items();
    if targets.len() != n {
        return Err(Error::LengthMismatch {
            left: targets.len(),
            right: n,
        });
    }
    let kernel = recipe.build(features)?;
    let approx = nystrom_reconstruct(&kernel, landmarks)?;
    let frobenius_error = kernel
        .matrix()
        .sub(approx.matrix())
        .frobenius_norm();

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (n * 4) / 5;
    let (train, test) = order.split_at(n_train);

    let ka = approx.matrix();
    let mut system = Matrix::from_fn(n_train, n_train, |i, j| ka[(train[i], train[j])]);
    for i in 0..n_train {
        system[(i, i)] += ridge;
    }
    let factor = system.cholesky().map_err(|_| Error::SingularRidge)?;
    let y_train: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
    let alpha = factor.solve_vec(&y_train);

    let mut sq_sum = 0.0;
    for &t in test {
        let pred: f64 = train
            .iter()
            .zip(&alpha)
            .map(|(&tr, &a)| ka[(t, tr)] * a)
            .sum();
        let d = pred - targets[t];
        sq_sum += d * d;
    }
    let rmse = (sq_sum / test.len().max(1) as f64).sqrt();
    Ok(NystromResult {
        subset: landmarks.clone(),
        frobenius_error,
        rmse,
    })
}

pub fn nystrom_results_csv(rows: &[(String, usize, f64, f64, u64)]) -> String {
    let mut out = String::from("method,subset_size,frobenius_error,rmse,seed\n");
    for (method, size, fro, rmse, seed) in rows {
        out.push_str(&format!("{method},{size},{fro},{rmse},{seed}\n"));
    }
    out
}

#[derive(Clone, Debug)]
pub struct TimingRow {
    pub method: String,
    pub seconds: f64,
    pub forward_count: u64,
}

#[derive(Clone, Debug)]
pub struct TimingReport {
    pub n: usize,
    pub k: usize,
    pub batch: usize,
    pub rows: Vec<TimingRow>,
    pub ratio_exact_over_surrogate: f64,
}

impl TimingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,n,k,batch,seconds,forward_count\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method, self.n, self.k, self.batch, r.seconds, r.forward_count
            ));
        }
        out
    }
}

/// Wallclock comparison in the varying-ground-set regime the surrogate
/// targets: each batch element is a fresh feature matrix, so the exact
/// route pays kernel construction plus spectral preprocessing per element
/// while the surrogate only runs its sequential forward passes. Reports the
/// median over `reps` batch timings plus a hardware-independent forward
/// count for the surrogate.
pub fn timing_benchmark(
    matrices: &[FeatureMatrix],
    recipe: KernelRecipe,
    model: &SurrogateModel,
    k: usize,
    reps: usize,
    seed: u64,
) -> Result<TimingReport> {
    if matrices.is_empty() {
        return Err(Error::InvalidArgument("timing needs feature matrices".into()));
    }
    let n = matrices[0].n_items();
    let batch = matrices.len();
    let reps = reps.max(1);

    let mut exact_times = Vec::with_capacity(reps);
    for rep in 0..reps {
        let start = Instant::now();
        for (i, phi) in matrices.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((rep as u64) << 32) ^ i as u64);
            let dpp = Dpp::new(recipe.build(phi)?)?;
            let s = dpp.sample_kdpp(k, &mut rng)?;
            std::hint::black_box(s);
        }
        exact_times.push(start.elapsed().as_secs_f64());
    }

    let mut surrogate_times = Vec::with_capacity(reps);
    for rep in 0..reps {
        let start = Instant::now();
        for (i, phi) in matrices.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((rep as u64) << 32) ^ i as u64);
            let s = crate::samplers::sample_surrogate(
                model,
                Some(phi),
                k,
                &Subset::empty(),
                &mut rng,
            )?;
            std::hint::black_box(s);
        }
        surrogate_times.push(start.elapsed().as_secs_f64());
    }

    let exact = median(&mut exact_times);
    let surrogate = median(&mut surrogate_times);
    Ok(TimingReport {
        n,
        k,
        batch,
        rows: vec![
            TimingRow {
                method: "dpp".into(),
                seconds: exact,
                forward_count: 0,
            },
            TimingRow {
                method: "dppnet".into(),
                seconds: surrogate,
                forward_count: (batch * k) as u64,
            },
        ],
        ratio_exact_over_surrogate: exact / surrogate,
    })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

/// Log-probability table of an exponentiated-quadratic DPP over n collinear
/// points. Every pair of items is correlated, which makes the log table
/// strictly submodular over incomparable pairs; a block-diagonal kernel
/// would pin the margin at exactly zero instead.
pub fn correlated_line_table(n: usize) -> Result<SetFunctionTable> {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 0.5]).collect();
    let phi = FeatureMatrix::from_rows(&rows)?;
    let dpp = Dpp::new(exp_quadratic_kernel(&phi, 1.0)?)?;
    Ok(dpp.enumerate_probs()?.map(f64::ln))
}

#[derive(Clone, Debug)]
pub struct Theorem1Report {
    pub n: usize,
    pub margin: f64,
    pub trials: usize,
    pub passes: usize,
    /// First failing (S, T) pair per failed trial, as bitmasks.
    pub failures: Vec<(u64, u64)>,
    pub precondition_ok: bool,
}

/// Perturbation check of the submodularity-inheritance mechanism: a strictly
/// submodular table with margin eps stays submodular under any perturbation
/// of sup-norm at most eps/4. Sources with nonpositive margin yield a
/// precondition-violation report rather than an error.
pub fn theorem1_check_table(
    table: &SetFunctionTable,
    trials: usize,
    seed: u64,
) -> Theorem1Report {
    let n = table.n();
    let margin = submodularity_margin(table);
    if !(margin > 0.0) {
        return Theorem1Report {
            n,
            margin,
            trials: 0,
            passes: 0,
            failures: Vec::new(),
            precondition_ok: false,
        };
    }
    let budget = margin / 4.0;
    // absolute slack for double-precision cancellation at the zero boundary
    let scale = table
        .values()
        .iter()
        .fold(0.0f64, |a, &v| a.max(v.abs()))
        .max(1.0);
    let fp_slack = 1e-12 * scale;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passes = 0usize;
    let mut failures = Vec::new();
    for _ in 0..trials {
        let perturbed: Vec<f64> = table
            .values()
            .iter()
            .map(|&v| v + (rng.random::<f64>() * 2.0 - 1.0) * budget)
            .collect();
        let pt = SetFunctionTable::new(n, perturbed).expect("size preserved");
        let m = submodularity_margin(&pt);
        if m >= -fp_slack {
            passes += 1;
        } else {
            failures.push(worst_pair(&pt));
        }
    }
    Theorem1Report {
        n,
        margin,
        trials,
        passes,
        failures,
        precondition_ok: true,
    }
}

/// Default source: the correlated line kernel at the given size.
pub fn theorem1_check(n: usize, trials: usize, seed: u64) -> Result<Theorem1Report> {
    if !(2..=6).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "theorem-1 check supports 2 <= n <= 6, got {n}"
        )));
    }
    let table = correlated_line_table(n)?;
    Ok(theorem1_check_table(&table, trials, seed))
}

/// Argmin pair of the four-term submodularity expression.
pub fn worst_pair(table: &SetFunctionTable) -> (u64, u64) {
    let n = table.n();
    let full = (1u64 << n) - 1;
    let mut best = (1u64, 2u64);
    let mut best_val = f64::INFINITY;
    for s in 1..full {
        for t in (s + 1)..full {
            let union = s | t;
            if union == s || union == t {
                continue;
            }
            let val = table.get(s) + table.get(t) - table.get(union) - table.get(s & t);
            if val < best_val {
                best_val = val;
                best = (s, t);
            }
        }
    }
    best
}

/// Adversarial perturbation at sup-norm `strength`: pushes the worst pair of
/// the table toward a submodularity violation. Used to verify the checker
/// actually detects violations beyond the safe radius.
pub fn adversarial_perturbation(table: &SetFunctionTable, strength: f64) -> SetFunctionTable {
    let (s, t) = worst_pair(table);
    let union = s | t;
    let inter = s & t;
    let mut values = table.values().to_vec();
    values[s as usize] -= strength;
    values[t as usize] -= strength;
    values[union as usize] += strength;
    values[inter as usize] += strength;
    SetFunctionTable::new(table.n(), values).expect("size preserved")
}

/// Exact inclusion-probability chain table: p(S) = log P(S subset of Y),
/// computed from the enumerated subset law. Strictly submodular for fully
/// correlated kernels.
pub fn exact_inclusion_log_table(dpp: &Dpp) -> Result<SetFunctionTable> {
    let probs = dpp.enumerate_probs()?;
    SetFunctionTable::from_fn(dpp.n(), |mask| probs.superset_sum(mask).ln())
}

/// The surrogate's induced inclusion chain in log space: for each subset,
/// sum the log predicted marginals along the ascending-index prefix chain.
/// This is exactly log P(S subset of Y) when the predictor returns true
/// conditional marginals.
pub fn surrogate_inclusion_log_table(
    predictor: &impl MarginalPredictor,
    phi: Option<&FeatureMatrix>,
    n: usize,
) -> Result<SetFunctionTable> {
    if n > 20 {
        return Err(Error::SizeGuard { n, max: 20 });
    }
    let mut values = vec![0.0; 1usize << n];
    for mask in 1..(1u64 << n) {
        let items: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let mut prefix = Subset::empty();
        let mut log_p = 0.0;
        for &item in &items {
            let q = predictor.predict(phi, &prefix)?;
            log_p += q.values()[item].max(f64::MIN_POSITIVE).ln();
            prefix.push(item);
        }
        values[mask as usize] = log_p;
    }
    SetFunctionTable::new(n, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::unit_square_grid;
    use crate::matrix::Matrix;
    use crate::samplers::ExactMarginalOracle;
    use rand::SeedableRng;

    fn grid_dpp() -> (Dpp, FeatureMatrix) {
        let phi = unit_square_grid(4).unwrap();
        let dpp = Dpp::new(exp_quadratic_kernel(&phi, 0.5).unwrap()).unwrap();
        (dpp, phi)
    }

    #[test]
    fn nll_identity_pair() {
        let dpp = Dpp::new(KernelMatrix::new(Matrix::identity(3)).unwrap()).unwrap();
        let s = Subset::new(vec![0, 1], 3).unwrap();
        assert!((nll(&dpp, &s) - 8.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_additive_consistency() {
        let (dpp, _) = grid_dpp();
        let s = Subset::new(vec![0, 5, 10], 16).unwrap();
        let ld = crate::kernels::log_det_psd(
            &dpp.kernel().matrix().principal_submatrix(&s.ascending()),
        )
        .unwrap();
        assert!((nll(&dpp, &s) - (dpp.log_normalizer() - ld)).abs() < 1e-10);
    }

    #[test]
    fn report_single_draw_zero_stderr() {
        let r = NllReport::from_nlls("uniform".into(), vec![3.5], 2, 0.0);
        assert_eq!(r.stderr, 0.0);
        assert_eq!(r.mean, 3.5);
        assert_eq!(r.mean_per_item, 1.75);
    }

    #[test]
    fn compare_methods_deterministic_and_sorted() {
        let (dpp, phi) = grid_dpp();
        let cfg = CompareConfig {
            methods: vec![Method::Uniform, Method::Kdpp],
            k: 3,
            n_draws: 8,
            seed: 5,
            threads: 2,
        };
        let truth = GroundTruth::Fixed {
            dpp: &dpp,
            features: &phi,
        };
        let a = compare_methods(&truth, None, &cfg).unwrap();
        let b = compare_methods(&truth, None, &cfg).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.nlls, y.nlls);
        }
        // rows come back sorted by method name regardless of request order
        assert_eq!(a[0].method, "kdpp");
        assert_eq!(a[1].method, "uniform");
    }

    #[test]
    fn compare_methods_single_uniform_row() {
        let (dpp, phi) = grid_dpp();
        let cfg = CompareConfig {
            methods: vec![Method::Uniform],
            k: 2,
            n_draws: 1,
            seed: 1,
            threads: 1,
        };
        let truth = GroundTruth::Fixed {
            dpp: &dpp,
            features: &phi,
        };
        let reports = compare_methods(&truth, None, &cfg).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].nlls.len(), 1);
        assert_eq!(reports[0].stderr, 0.0);
    }

    #[test]
    fn results_csv_schema() {
        let r = NllReport::from_nlls("uniform".into(), vec![1.0, 2.0], 2, 0.25);
        let csv = nll_results_csv(&[r], 2);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,k,n_draws,mean_nll,stderr_nll,mean_nll_per_item,seconds"
        );
        assert!(lines.next().unwrap().starts_with("uniform,2,2,1.5,"));
    }

    #[test]
    fn nystrom_full_subset_is_exact() {
        let (dpp, _) = grid_dpp();
        let all = Subset::new((0..16).collect(), 16).unwrap();
        let approx = nystrom_reconstruct(dpp.kernel(), &all).unwrap();
        let err = dpp.kernel().matrix().sub(approx.matrix()).frobenius_norm()
            / dpp.kernel().matrix().frobenius_norm();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn nystrom_rank_one_single_landmark() {
        let phi = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0], vec![-0.5]]).unwrap();
        let k = crate::kernels::linear_kernel(&phi);
        let s = Subset::new(vec![1], 3).unwrap();
        let approx = nystrom_reconstruct(&k, &s).unwrap();
        let err = k.matrix().sub(approx.matrix()).frobenius_norm();
        assert!(err < 1e-10, "error {err}");
    }

    #[test]
    fn nystrom_rank_three_landmarks() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        use rand::Rng;
        // rank-3 kernel from a 20x3 factor
        let f = Matrix::from_fn(20, 3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let k = KernelMatrix::new(f.matmul_transpose_b(&f)).unwrap();
        let s = Subset::new(vec![0, 7, 13], 20).unwrap();
        let approx = nystrom_reconstruct(&k, &s).unwrap();
        let err = k.matrix().sub(approx.matrix()).frobenius_norm();
        assert!(err < 1e-8, "error {err}");
    }

    #[test]
    fn nystrom_interpolates_landmark_rows() {
        let (dpp, _) = grid_dpp();
        let s = Subset::new(vec![2, 9, 11], 16).unwrap();
        let approx = nystrom_reconstruct(dpp.kernel(), &s).unwrap();
        for &i in s.indices() {
            for j in 0..16 {
                let d = (approx.matrix()[(i, j)] - dpp.kernel().matrix()[(i, j)]).abs();
                assert!(d < 1e-8, "row {i} col {j}: {d}");
            }
        }
    }

    #[test]
    fn nystrom_regression_full_landmarks_match_exact_kernel() {
        // one loose cluster keeps the kernel spectrum above the pinv cutoff,
        // so reconstruction from all landmarks is exact
        let data = crate::synth::SyntheticRegression {
            n: 40,
            cluster_sizes: vec![40],
            center_scale: 0.0,
            spread: 0.8,
            ..Default::default()
        }
        .generate(3)
        .unwrap();
        let all = Subset::new((0..40).collect(), 40).unwrap();
        let recipe = KernelRecipe::ExpQuadratic { beta: 1.0 };
        let with_all =
            nystrom_regression_rmse(&data.features, &data.targets, recipe, &all, 1e-2, 7).unwrap();

        // exact-kernel ridge as the oracle
        let kernel = recipe.build(&data.features).unwrap();
        let exact = {
            let n = 40;
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            use rand::Rng;
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let n_train = n * 4 / 5;
            let (train, test) = order.split_at(n_train);
            let mut sys = Matrix::from_fn(n_train, n_train, |i, j| {
                kernel.matrix()[(train[i], train[j])]
            });
            for i in 0..n_train {
                sys[(i, i)] += 1e-2;
            }
            let alpha = sys
                .cholesky()
                .unwrap()
                .solve_vec(&train.iter().map(|&i| data.targets[i]).collect::<Vec<_>>());
            let mut sq = 0.0;
            for &t in test {
                let pred: f64 = train
                    .iter()
                    .zip(&alpha)
                    .map(|(&tr, &a)| kernel.matrix()[(t, tr)] * a)
                    .sum();
                sq += (pred - data.targets[t]).powi(2);
            }
            (sq / test.len() as f64).sqrt()
        };
        assert!(
            (with_all.rmse - exact).abs() < 1e-8,
            "{} vs {exact}",
            with_all.rmse
        );
        let rel = with_all.frobenius_error / kernel.matrix().frobenius_norm();
        assert!(rel < 1e-8, "relative reconstruction error {rel}");
    }

    #[test]
    fn nystrom_requires_landmarks() {
        let (dpp, _) = grid_dpp();
        assert!(nystrom_reconstruct(dpp.kernel(), &Subset::empty()).is_err());
    }

    #[test]
    fn singular_ridge_system_reports_hint() {
        // identical points give a rank-one reconstructed kernel; with zero
        // ridge the training system is singular
        let phi = FeatureMatrix::from_rows(&vec![vec![1.0, 1.0]; 10]).unwrap();
        let targets = vec![0.5; 10];
        let s = Subset::new(vec![0], 10).unwrap();
        match nystrom_regression_rmse(
            &phi,
            &targets,
            KernelRecipe::ExpQuadratic { beta: 0.5 },
            &s,
            0.0,
            1,
        ) {
            Err(Error::SingularRidge) => {}
            other => panic!("expected singular-ridge hint, got {other:?}"),
        }
    }

    #[test]
    fn theorem1_modular_source_reports_violated_precondition() {
        let weights = [0.2, 0.5, 0.9];
        let table = SetFunctionTable::from_fn(3, |mask| {
            (0..3)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| weights[i])
                .sum()
        })
        .unwrap();
        let report = theorem1_check_table(&table, 100, 3);
        assert!(!report.precondition_ok);
        assert_eq!(report.trials, 0);
    }

    #[test]
    fn theorem1_correlated_source_all_pass() {
        let report = theorem1_check(3, 200, 11).unwrap();
        assert!(report.precondition_ok);
        assert!(report.margin > 0.0, "margin {}", report.margin);
        assert_eq!(report.passes, 200, "failures: {:?}", report.failures);
    }

    #[test]
    fn theorem1_adversarial_detected() {
        let table = correlated_line_table(3).unwrap();
        let margin = submodularity_margin(&table);
        let bad = adversarial_perturbation(&table, 10.0 * margin);
        assert!(submodularity_margin(&bad) < 0.0);
    }

    #[test]
    fn inclusion_tables_agree_on_exact_marginals() {
        let (dpp, _) = grid_dpp();
        // restrict to a small sub-kernel for the chain comparison
        let small = Dpp::new(KernelMatrix::new(
            dpp.kernel().matrix().principal_submatrix(&[0, 1, 4, 5]),
        )
        .unwrap())
        .unwrap();
        let oracle = ExactMarginalOracle(&small);
        let chain = surrogate_inclusion_log_table(&oracle, None, 4).unwrap();
        let direct = exact_inclusion_log_table(&small).unwrap();
        for mask in 0..16u64 {
            assert!(
                (chain.get(mask) - direct.get(mask)).abs() < 1e-8,
                "mask {mask:b}: {} vs {}",
                chain.get(mask),
                direct.get(mask)
            );
        }
    }

    #[test]
    fn timing_report_counts_forwards() {
        let feats = crate::synth::SyntheticFeatures {
            n: 12,
            dim: 2,
            cluster_sizes: vec![6, 6],
            center_scale: 1.5,
            spread: 0.4,
        };
        let matrices = feats.generate_many(3, 5).unwrap();
        let model = crate::surrogate::init_params(
            &crate::surrogate::ModelSpec::dynamic_model(12, 2, vec![8]),
            1,
        )
        .unwrap();
        let report = timing_benchmark(
            &matrices,
            KernelRecipe::ExpQuadratic { beta: 0.5 },
            &model,
            4,
            3,
            9,
        )
        .unwrap();
        assert_eq!(report.rows[1].forward_count, 12);
        assert!(report.rows.iter().all(|r| r.seconds >= 0.0));
    }
}
