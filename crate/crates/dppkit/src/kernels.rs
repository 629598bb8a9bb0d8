//! Feature ingestion and kernel construction.
//!
//! A [`FeatureMatrix`] holds one feature row per ground-set item; kernels are
//! built from it either as an exponentiated quadratic or a linear Gram
//! matrix. [`spectral_decompose`] and [`log_det_psd`] provide the symmetric
//! linear algebra everything downstream relies on.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Absolute tolerance for kernel symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Negative eigenvalues above `-PSD_CLAMP_REL * lambda_max` are treated as
/// round-off and clamped to zero; anything below is rejected as indefinite.
pub const PSD_CLAMP_REL: f64 = 1e-8;

/// N x d matrix of item feature vectors, one row per item.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: Matrix,
}

impl FeatureMatrix {
    pub fn new(data: Matrix) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::InvalidArgument(
                "feature matrix needs at least one row and one column".into(),
            ));
        }
        if !data.is_finite() {
            return Err(Error::InvalidArgument(
                "feature matrix contains non-finite entries".into(),
            ));
        }
        Ok(FeatureMatrix { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        FeatureMatrix::new(Matrix::from_rows(rows))
    }

    pub fn n_items(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.squared_distance(i, j).sqrt()
    }
}

/// Symmetric positive semi-definite DPP kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    data: Matrix,
}

impl KernelMatrix {
    pub fn new(data: Matrix) -> Result<Self> {
        if data.rows() != data.cols() || data.rows() == 0 {
            return Err(Error::InvalidArgument(
                "kernel matrix must be square and nonempty".into(),
            ));
        }
        let asym = data.max_abs_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::AsymmetricKernel(asym));
        }
        Ok(KernelMatrix {
            data: data.symmetrized(),
        })
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }
}

/// Eigendecomposition with eigenvalues sorted descending and clamped to be
/// nonnegative; eigenvectors are the matching orthonormal columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Matrix,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of eigenvalues that are nonzero relative to the largest.
    pub fn rank(&self) -> usize {
        let max = self.eigenvalues.first().copied().unwrap_or(0.0);
        if max <= 0.0 {
            return 0;
        }
        self.eigenvalues
            .iter()
            .filter(|&&l| l > 1e-12 * max)
            .count()
    }

    /// V diag(f(lambda)) V^T.
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.n();
        let v = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)];
                if vik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += w * vik * v[(j, k)];
                }
            }
        }
        out
    }
}

/// Loads a feature CSV: comma separated, one item per row, with an optional
/// single header line detected by a non-numeric first row.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_features(&text)
}

pub fn parse_features(text: &str) -> Result<FeatureMatrix> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::Format("no rows".into()));
    }

    let mut start = 0;
    let first_numeric = lines[0]
        .1
        .split(',')
        .all(|cell| cell.trim().parse::<f64>().is_ok());
    if !first_numeric {
        start = 1;
        if lines.len() == 1 {
            return Err(Error::Format("no rows".into()));
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(lines.len() - start);
    let mut width = None;
    for &(line_no, line) in &lines[start..] {
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: line_no,
                col: col + 1,
                message: format!("expected a number, found {cell:?}"),
            })?;
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Format(format!(
                    "ragged row {line_no}: expected {w} columns, found {}",
                    row.len()
                )))
            }
            _ => {}
        }
        rows.push(row);
    }
    FeatureMatrix::from_rows(&rows)
}

/// m x m grid on the unit square with corners at 0 and 1, row-major order:
/// point (i, j) is at (i/(m-1), j/(m-1)).
pub fn unit_square_grid(m: usize) -> Result<FeatureMatrix> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid size must be at least 2, got {m}"
        )));
    }
    let step = 1.0 / (m - 1) as f64;
    let mut rows = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            rows.push(vec![i as f64 * step, j as f64 * step]);
        }
    }
    FeatureMatrix::from_rows(&rows)
}

/// L_ij = exp(-beta * ||phi_i - phi_j||^2).
pub fn exp_quadratic_kernel(phi: &FeatureMatrix, beta: f64) -> Result<KernelMatrix> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {beta}"
        )));
    }
    let n = phi.n_items();
    let mut data = Matrix::zeros(n, n);
    for i in 0..n {
        data[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v = (-beta * phi.squared_distance(i, j)).exp();
            data[(i, j)] = v;
            data[(j, i)] = v;
        }
    }
    KernelMatrix::new(data)
}

/// L = Phi Phi^T. Features are used as-is: no scaling or normalization is
/// applied before the Gram product.
pub fn linear_kernel(phi: &FeatureMatrix) -> KernelMatrix {
    let n = phi.n_items();
    let mut data = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(phi.row(i), phi.row(j));
            data[(i, j)] = v;
            data[(j, i)] = v;
        }
    }
    KernelMatrix::new(data).expect("Gram matrix is symmetric by construction")
}

/// Eigendecomposition of a PSD kernel. Eigenvalues within round-off of zero
/// are clamped to zero; genuinely negative spectra are rejected.
pub fn spectral_decompose(kernel: &KernelMatrix) -> Result<SpectralDecomposition> {
    let (raw_vals, raw_vecs) = kernel.matrix().jacobi_eigh();
    let n = raw_vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw_vals[b].partial_cmp(&raw_vals[a]).unwrap());

    let lambda_max = raw_vals[order[0]].max(0.0);
    let threshold = -PSD_CLAMP_REL * lambda_max;
    let mut eigenvalues = Vec::with_capacity(n);
    for &idx in &order {
        let l = raw_vals[idx];
        if l < threshold {
            return Err(Error::NotPsd {
                eigenvalue: l,
                threshold,
            });
        }
        eigenvalues.push(l.max(0.0));
    }

    let eigenvectors = Matrix::from_fn(n, n, |i, k| raw_vecs[(i, order[k])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// log det of a symmetric positive-definite matrix via Cholesky; the empty
/// 0x0 matrix has determinant 1, hence log det 0.
pub fn log_det_psd(m: &Matrix) -> Result<f64> {
    if m.rows() == 0 {
        return Ok(0.0);
    }
    Ok(m.cholesky()?.log_det())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parse_two_line_file() {
        let phi = parse_features("0,0\n1,1").unwrap();
        assert_eq!(phi.n_items(), 2);
        assert_eq!(phi.row(0), &[0.0, 0.0]);
        assert_eq!(phi.row(1), &[1.0, 1.0]);
    }

    #[test]
    fn parse_empty_file() {
        match parse_features("") {
            Err(Error::Format(msg)) => assert!(msg.contains("no rows")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn parse_ragged_rows() {
        match parse_features("1,2\n3,4,5") {
            Err(Error::Format(msg)) => assert!(msg.contains("row 2"), "{msg}"),
            other => panic!("expected ragged-row error, got {other:?}"),
        }
    }

    #[test]
    fn parse_header_detection() {
        let phi = parse_features("x,y\n0.5,1.5\n2.5,3.5").unwrap();
        assert_eq!(phi.n_items(), 2);
        assert_eq!(phi.row(0), &[0.5, 1.5]);
    }

    #[test]
    fn parse_bad_cell_location() {
        match parse_features("1,2\n3,oops") {
            Err(Error::Parse { row, col, .. }) => {
                assert_eq!((row, col), (2, 2));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn grid_corners() {
        let g = unit_square_grid(2).unwrap();
        assert_eq!(g.n_items(), 4);
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert_eq!(g.row(1), &[0.0, 1.0]);
        assert_eq!(g.row(2), &[1.0, 0.0]);
        assert_eq!(g.row(3), &[1.0, 1.0]);
    }

    #[test]
    fn grid_ten_by_ten() {
        let g = unit_square_grid(10).unwrap();
        assert_eq!(g.n_items(), 100);
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert_eq!(g.row(99), &[1.0, 1.0]);
    }

    #[test]
    fn grid_center_point() {
        let g = unit_square_grid(3).unwrap();
        assert_eq!(g.row(4), &[0.5, 0.5]);
    }

    #[test]
    fn grid_too_small() {
        assert!(unit_square_grid(1).is_err());
    }

    #[test]
    fn exp_quadratic_values() {
        let phi = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let k = exp_quadratic_kernel(&phi, 0.5).unwrap();
        assert_eq!(k.matrix()[(0, 0)], 1.0);
        assert!((k.matrix()[(0, 1)] - 0.606531).abs() < 1e-6);
        assert!(exp_quadratic_kernel(&phi, 0.0).is_err());
    }

    #[test]
    fn exp_quadratic_symmetric_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = 2 + rng.random_range(0..6usize);
            let d = 1 + rng.random_range(0..4usize);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect();
            let phi = FeatureMatrix::from_rows(&rows).unwrap();
            let k = exp_quadratic_kernel(&phi, 0.3 + rng.random::<f64>()).unwrap();
            for i in 0..n {
                assert_eq!(k.matrix()[(i, i)], 1.0);
            }
            assert!(k.matrix().max_abs_asymmetry() == 0.0);
        }
    }

    #[test]
    fn linear_kernel_orthonormal_rows() {
        let phi = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let k = linear_kernel(&phi);
        assert_eq!(k.matrix().data(), Matrix::identity(2).data());
    }

    #[test]
    fn linear_kernel_rank_one() {
        let phi = FeatureMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let k = linear_kernel(&phi);
        let spec = spectral_decompose(&k).unwrap();
        assert!((spec.eigenvalues()[0] - 2.0).abs() < 1e-12);
        assert!(spec.eigenvalues()[1].abs() < 1e-12);
    }

    #[test]
    fn linear_kernel_rank_matches_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let phi = FeatureMatrix::from_rows(&rows).unwrap();
        let spec = spectral_decompose(&linear_kernel(&phi)).unwrap();
        assert_eq!(spec.rank(), 2);
    }

    #[test]
    fn linear_kernel_psd_spot_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let phi = FeatureMatrix::from_rows(&rows).unwrap();
        let k = linear_kernel(&phi);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let kx = k.matrix().matvec(&x);
            assert!(dot(&x, &kx) >= -1e-10);
        }
    }

    #[test]
    fn spectral_decompose_diag() {
        let k = KernelMatrix::new(Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]])).unwrap();
        let spec = spectral_decompose(&k).unwrap();
        assert_eq!(spec.eigenvalues(), &[2.0, 1.0]);
        for col in 0..2 {
            let picked: Vec<f64> = (0..2).map(|i| spec.eigenvectors()[(i, col)].abs()).collect();
            assert_eq!(picked[col], 1.0);
        }
    }

    #[test]
    fn spectral_decompose_rank_one() {
        let k = KernelMatrix::new(Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]])).unwrap();
        let spec = spectral_decompose(&k).unwrap();
        assert!((spec.eigenvalues()[0] - 2.0).abs() < 1e-12);
        assert!(spec.eigenvalues()[1].abs() < 1e-12);
    }

    #[test]
    fn spectral_decompose_rejects_indefinite() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let k = KernelMatrix::new(m).unwrap();
        match spectral_decompose(&k) {
            Err(Error::NotPsd { .. }) => {}
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn kernel_matrix_rejects_asymmetry() {
        let m = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]);
        assert!(matches!(
            KernelMatrix::new(m),
            Err(Error::AsymmetricKernel(_))
        ));
    }

    #[test]
    fn log_det_psd_values() {
        assert_eq!(log_det_psd(&Matrix::identity(3)).unwrap(), 0.0);
        let d = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        assert!((log_det_psd(&d).unwrap() - 8.0f64.ln()).abs() < 1e-12);
        let m = Matrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 3.0]]);
        assert!((log_det_psd(&m).unwrap() - 8.0f64.ln()).abs() < 1e-12);
        assert_eq!(log_det_psd(&Matrix::zeros(0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn log_det_matches_eigenvalue_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let n = 1 + rng.random_range(0..8usize);
            let f = Matrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let mut a = f.matmul_transpose_b(&f);
            for i in 0..n {
                a[(i, i)] += 0.5;
            }
            let ld = log_det_psd(&a).unwrap();
            let spec = spectral_decompose(&KernelMatrix::new(a).unwrap()).unwrap();
            let from_eigs: f64 = spec.eigenvalues().iter().map(|l| l.ln()).sum();
            assert!(
                (ld - from_eigs).abs() <= 1e-8 * ld.abs().max(1.0),
                "{ld} vs {from_eigs}"
            );
        }
    }
}
