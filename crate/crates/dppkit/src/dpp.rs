//! Exact DPP machinery: likelihood, spectral sampling, k-DPPs, conditioning,
//! conditional marginals, greedy mode, the brute-force enumeration oracle and
//! the submodularity-margin checker.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{log_det_psd, spectral_decompose, KernelMatrix, SpectralDecomposition};

/// Hard cap for the enumeration oracle (2^N table entries).
pub const ENUMERATION_MAX: usize = 20;

/// Near-ties below this absolute gap resolve to the lowest index. Exact
/// symmetries (grid corners) only tie up to round-off, so argmax needs slack
/// for the documented lowest-index rule to mean anything.
pub const TIE_TOL: f64 = 1e-9;

/// Ordered list of distinct item indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subset {
    indices: Vec<usize>,
}

impl Subset {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "item index {i} out of range for ground set of size {n}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!("duplicate item index {i}")));
            }
            seen[i] = true;
        }
        Ok(Subset { indices })
    }

    pub fn empty() -> Self {
        Subset {
            indices: Vec::new(),
        }
    }

    pub fn from_mask(mask: u64, n: usize) -> Self {
        let indices = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        Subset { indices }
    }

    pub fn mask(&self) -> u64 {
        self.indices.iter().fold(0u64, |m, &i| m | 1 << i)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Indices in selection order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn ascending(&self) -> Vec<usize> {
        let mut v = self.indices.clone();
        v.sort_unstable();
        v
    }

    pub fn contains(&self, item: usize) -> bool {
        self.indices.contains(&item)
    }

    pub fn push(&mut self, item: usize) {
        debug_assert!(!self.contains(item));
        self.indices.push(item);
    }

    /// Ascending semicolon-joined indices, the CSV wire format.
    pub fn to_csv_field(&self) -> String {
        join_indices(&self.ascending())
    }

    /// Selection-order semicolon-joined indices (the optional "path" column).
    pub fn to_path_field(&self) -> String {
        join_indices(&self.indices)
    }

    pub fn parse_csv_field(field: &str, n: usize) -> Result<Self> {
        let field = field.trim();
        if field.is_empty() {
            return Ok(Subset::empty());
        }
        let mut indices = Vec::new();
        for part in field.split(';') {
            let idx: usize = part.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("invalid item index {part:?} in subset field"))
            })?;
            indices.push(idx);
        }
        Subset::new(indices, n)
    }
}

fn join_indices(indices: &[usize]) -> String {
    indices
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Length-N vector of conditional inclusion probabilities; zero at
/// conditioned items.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalVector {
    values: Vec<f64>,
}

impl MarginalVector {
    pub fn new(values: Vec<f64>) -> Self {
        MarginalVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Dense table of a set function over all 2^n subsets of [n], indexed by
/// bitmask.
#[derive(Clone, Debug)]
pub struct SetFunctionTable {
    n: usize,
    values: Vec<f64>,
}

impl SetFunctionTable {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > ENUMERATION_MAX {
            return Err(Error::SizeGuard {
                n,
                max: ENUMERATION_MAX,
            });
        }
        if values.len() != 1usize << n {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: 1usize << n,
            });
        }
        Ok(SetFunctionTable { n, values })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(u64) -> f64) -> Result<Self> {
        if n > ENUMERATION_MAX {
            return Err(Error::SizeGuard {
                n,
                max: ENUMERATION_MAX,
            });
        }
        let values = (0..1u64 << n).map(&mut f).collect();
        Ok(SetFunctionTable { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SetFunctionTable {
        SetFunctionTable {
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sum of entries over all supersets of `mask`.
    pub fn superset_sum(&self, mask: u64) -> f64 {
        let full = (1u64 << self.n) - 1;
        let free = full & !mask;
        // enumerate submasks of `free`
        let mut total = self.values[(mask | free) as usize];
        if free == 0 {
            return self.values[mask as usize];
        }
        let mut sub = (free - 1) & free;
        loop {
            total += self.values[(mask | sub) as usize];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
        total
    }
}

/// Minimum of f(S) + f(T) - f(S u T) - f(S n T) over incomparable pairs
/// S, T not in {empty, full}. Comparable pairs cancel identically and would
/// pin the margin at zero, so they are excluded along with the corner cases;
/// the result is nonnegative iff f is submodular on that domain. The scan is
/// quadratic in the table size (4^n pairs), fine at the enumeration guard's
/// small n.
pub fn submodularity_margin(table: &SetFunctionTable) -> f64 {
    let n = table.n();
    let full = (1u64 << n) - 1;
    let mut margin = f64::INFINITY;
    for s in 1..full {
        for t in (s + 1)..full {
            let union = s | t;
            if union == s || union == t {
                continue;
            }
            let inter = s & t;
            let gap = table.get(s) + table.get(t) - table.get(union) - table.get(inter);
            if gap < margin {
                margin = gap;
            }
        }
    }
    margin
}

/// Elementary symmetric polynomial table: `e[j][m]` is e_j over the first m
/// eigenvalues, for j in 0..=k.
pub fn elementary_symmetric(lambda: &[f64], k: usize) -> Vec<Vec<f64>> {
    let n = lambda.len();
    let mut e = vec![vec![0.0; n + 1]; k + 1];
    for m in 0..=n {
        e[0][m] = 1.0;
    }
    for j in 1..=k {
        for m in 1..=n {
            e[j][m] = e[j][m - 1] + lambda[m - 1] * e[j - 1][m - 1];
        }
    }
    e
}

/// Argmax with the documented tie rule: values within [`TIE_TOL`] of the
/// maximum count as tied and the lowest index wins. `eligible` filters the
/// candidate positions.
pub fn argmax_lowest_tie(values: &[f64], eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if eligible(i) && v > best {
            best = v;
        }
    }
    if best == f64::NEG_INFINITY {
        return None;
    }
    values
        .iter()
        .enumerate()
        .find(|(i, &v)| eligible(*i) && v >= best - TIE_TOL)
        .map(|(i, _)| i)
}

/// An L-ensemble DPP with cached spectrum and log normalizer.
#[derive(Clone, Debug)]
pub struct Dpp {
    kernel: KernelMatrix,
    spectrum: SpectralDecomposition,
    log_normalizer: f64,
}

impl Dpp {
    pub fn new(kernel: KernelMatrix) -> Result<Self> {
        let spectrum = spectral_decompose(&kernel)?;
        let log_normalizer = spectrum.eigenvalues().iter().map(|l| l.ln_1p()).sum();
        Ok(Dpp {
            kernel,
            spectrum,
            log_normalizer,
        })
    }

    pub fn n(&self) -> usize {
        self.kernel.n()
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    /// log det(I + L).
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn rank(&self) -> usize {
        self.spectrum.rank()
    }

    /// log P(S) = log det L_S - log det(I + L). Numerically singular L_S
    /// yields -inf (probability zero), not an error.
    pub fn log_prob(&self, s: &Subset) -> f64 {
        if s.is_empty() {
            return -self.log_normalizer;
        }
        let sub = self.kernel.matrix().principal_submatrix(&s.ascending());
        match log_det_psd(&sub) {
            Ok(ld) => ld - self.log_normalizer,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// E|S| = sum_i lambda_i / (1 + lambda_i) = Tr[L (L + I)^-1].
    pub fn expected_size(&self) -> f64 {
        self.spectrum
            .eigenvalues()
            .iter()
            .map(|&l| l / (1.0 + l))
            .sum()
    }

    /// Marginal kernel K = L (I + L)^-1; its principal minors give inclusion
    /// probabilities and its trace is the expected size.
    pub fn marginal_kernel(&self) -> KernelMatrix {
        let k = self.spectrum.reassemble(|l| l / (1.0 + l));
        KernelMatrix::new(k.symmetrized()).expect("marginal kernel is symmetric")
    }

    /// Spectral two-phase exact sampler; returns items in selection order.
    pub fn sample(&self, rng: &mut impl Rng) -> Subset {
        let selected: Vec<usize> = self
            .spectrum
            .eigenvalues()
            .iter()
            .enumerate()
            .filter(|(_, &l)| rng.random::<f64>() < l / (1.0 + l))
            .map(|(i, _)| i)
            .collect();
        self.sample_from_eigenvectors(&selected, rng)
    }

    /// Fixed-size sample: phase one picks exactly k eigenvectors via the
    /// elementary-symmetric-polynomial recursion, phase two is identical to
    /// the plain sampler.
    pub fn sample_kdpp(&self, k: usize, rng: &mut impl Rng) -> Result<Subset> {
        if k == 0 {
            return Ok(Subset::empty());
        }
        let rank = self.rank();
        if k > rank {
            return Err(Error::InfeasibleSize { k, rank });
        }
        let lambda = self.spectrum.eigenvalues();
        let e = elementary_symmetric(lambda, k);
        let mut selected = Vec::with_capacity(k);
        let mut j = k;
        for m in (1..=lambda.len()).rev() {
            if j == 0 {
                break;
            }
            let denom = e[j][m];
            let p = if denom > 0.0 {
                (lambda[m - 1] * e[j - 1][m - 1] / denom).clamp(0.0, 1.0)
            } else if m == j {
                1.0
            } else {
                0.0
            };
            if rng.random::<f64>() < p {
                selected.push(m - 1);
                j -= 1;
            }
        }
        debug_assert_eq!(selected.len(), k);
        Ok(self.sample_from_eigenvectors(&selected, rng))
    }

    fn sample_from_eigenvectors(&self, selected: &[usize], rng: &mut impl Rng) -> Subset {
        let n = self.n();
        let vecs = self.spectrum.eigenvectors();
        // columns of the selected eigenvectors, stored per column
        let mut basis: Vec<Vec<f64>> = selected
            .iter()
            .map(|&c| (0..n).map(|i| vecs[(i, c)]).collect())
            .collect();
        let mut items = Subset::empty();
        let mut weights = vec![0.0; n];
        while !basis.is_empty() {
            for (i, w) in weights.iter_mut().enumerate() {
                *w = basis.iter().map(|col| col[i] * col[i]).sum();
            }
            let item = sample_categorical(&weights, rng)
                .expect("orthonormal basis always carries positive mass");
            items.push(item);

            // pivot on the column with the largest component at `item`
            let pivot_idx = (0..basis.len())
                .max_by(|&a, &b| {
                    basis[a][item]
                        .abs()
                        .partial_cmp(&basis[b][item].abs())
                        .unwrap()
                })
                .unwrap();
            let pivot = basis.swap_remove(pivot_idx);
            let p_item = pivot[item];
            for col in basis.iter_mut() {
                let factor = col[item] / p_item;
                if factor != 0.0 {
                    for (c, p) in col.iter_mut().zip(&pivot) {
                        *c -= factor * p;
                    }
                }
            }
            // re-orthonormalize what remains (modified Gram-Schmidt)
            let mut kept: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
            for mut col in basis.drain(..) {
                for done in &kept {
                    let proj = crate::matrix::dot(&col, done);
                    for (c, d) in col.iter_mut().zip(done.iter()) {
                        *c -= proj * d;
                    }
                }
                let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    for c in col.iter_mut() {
                        *c /= norm;
                    }
                    kept.push(col);
                }
            }
            basis = kept;
        }
        items
    }

    /// Conditional kernel L^A = ([(L + I_Abar)^-1]_Abar)^-1 - I over the
    /// complement of A, in ascending original-index order.
    pub fn condition_kernel(&self, a: &Subset) -> Result<KernelMatrix> {
        let n = self.n();
        validate_subset(a, n)?;
        if a.is_empty() {
            return Ok(self.kernel.clone());
        }
        let abar: Vec<usize> = (0..n).filter(|i| !a.contains(*i)).collect();
        if abar.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot condition on the full ground set".into(),
            ));
        }
        let mut m = self.kernel.matrix().clone();
        for &i in &abar {
            m[(i, i)] += 1.0;
        }
        let factor = m.cholesky().map_err(|_| Error::ImpossibleCondition)?;
        let inv = factor.inverse();
        let sub = inv.principal_submatrix(&abar).symmetrized();
        let sub_factor = sub.cholesky().map_err(|_| Error::ImpossibleCondition)?;
        let mut cond = sub_factor.inverse();
        for i in 0..abar.len() {
            cond[(i, i)] -= 1.0;
        }
        KernelMatrix::new(cond.symmetrized())
    }

    /// Conditional inclusion marginals v_i = 1 - [(L + I_Sbar)^-1]_ii for
    /// i not in S, and exactly 0 at i in S. Computed from one Cholesky
    /// factorization of L + I_Sbar rather than an explicit inverse.
    pub fn conditional_marginals(&self, s: &Subset) -> Result<MarginalVector> {
        let n = self.n();
        validate_subset(s, n)?;
        let mut m = self.kernel.matrix().clone();
        for i in 0..n {
            if !s.contains(i) {
                m[(i, i)] += 1.0;
            }
        }
        let factor = m.cholesky().map_err(|_| Error::ImpossibleCondition)?;
        let mut values = vec![0.0; n];
        let mut unit = vec![0.0; n];
        for i in 0..n {
            if s.contains(i) {
                continue;
            }
            unit[i] = 1.0;
            let col = factor.solve_vec(&unit);
            unit[i] = 0.0;
            values[i] = (1.0 - col[i]).clamp(0.0, 1.0);
        }
        Ok(MarginalVector::new(values))
    }

    /// Deterministic greedy mode of size k: repeatedly append the item with
    /// the largest conditional marginal, lowest index on ties.
    pub fn greedy_mode(&self, k: usize) -> Result<Subset> {
        let n = self.n();
        if k > n {
            return Err(Error::InvalidArgument(format!(
                "mode size {k} exceeds ground set size {n}"
            )));
        }
        let mut prefix = Subset::empty();
        for _ in 0..k {
            let v = self.conditional_marginals(&prefix)?;
            let next = argmax_lowest_tie(v.values(), |i| !prefix.contains(i))
                .ok_or(Error::ImpossibleCondition)?;
            if v.values()[next] <= 0.0 {
                return Err(Error::ImpossibleCondition);
            }
            prefix.push(next);
        }
        Ok(prefix)
    }

    /// Brute-force probability table over all 2^N subsets; the test oracle
    /// for every sampler and conditioning identity. Guarded at N <= 20.
    pub fn enumerate_probs(&self) -> Result<SetFunctionTable> {
        let n = self.n();
        SetFunctionTable::from_fn(n, |mask| {
            self.log_prob(&Subset::from_mask(mask, n)).exp()
        })
    }
}

fn validate_subset(s: &Subset, n: usize) -> Result<()> {
    // Subsets are validated at construction; re-check the bound so a subset
    // built for a different ground set fails loudly.
    if let Some(&bad) = s.indices().iter().find(|&&i| i >= n) {
        return Err(Error::InvalidArgument(format!(
            "item index {bad} out of range for ground set of size {n}"
        )));
    }
    Ok(())
}

/// Draws an index proportionally to the given nonnegative weights.
pub fn sample_categorical(weights: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if acc > target {
                return Some(i);
            }
        }
    }
    last_positive
}
