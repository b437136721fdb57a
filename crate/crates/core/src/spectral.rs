//! Dense spectral reference implementations. These exist to cross-check
//! the sparse polynomial filtering path at desk scale and are refused
//! above a small dimension cap.

use crate::error::{Error, Result};
use crate::filter::{frequency_response, FilterChoice, FilterConfig};
use crate::graph::AdjustmentMap;
use crate::ingest::RatingTensor;
use crate::sparse::{DenseVector, SparseMatrix};
use nalgebra::{DMatrix, SymmetricEigen};

/// Largest graph dimension the dense oracle accepts.
pub const MAX_ORACLE_DIM: usize = 512;

/// Eigendecomposition of the normalized Laplacian L = I - P of a
/// symmetric similarity graph.
#[derive(Debug, Clone)]
pub struct SpectralOracle {
    pub eigenvalues: Vec<f64>,
    /// Column i is the eigenvector for eigenvalues[i].
    pub basis: DMatrix<f64>,
    pub dim: usize,
}

impl SpectralOracle {
    /// Decompose L = I - P for a symmetric graph P.
    pub fn from_graph(p: &SparseMatrix) -> Result<Self> {
        let n = p.n_rows();
        if n != p.n_cols() {
            return Err(Error::DimensionMismatch {
                context: "spectral oracle",
                expected: n,
                found: p.n_cols(),
            });
        }
        if n > MAX_ORACLE_DIM {
            return Err(Error::Parameter(format!(
                "oracle refused: dimension {n} exceeds {MAX_ORACLE_DIM}"
            )));
        }
        let mut l = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for (j, v) in p.row(i) {
                l[(i, j as usize)] -= v;
            }
        }
        let eig = SymmetricEigen::new(l);
        Ok(Self {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            basis: eig.eigenvectors,
            dim: n,
        })
    }

    /// Reconstruction error max |U diag(lambda) U^T - L| against a graph's
    /// Laplacian; used by tests to sanity-check the decomposition.
    pub fn reconstruction_error(&self, p: &SparseMatrix) -> f64 {
        let n = self.dim;
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.eigenvalues.clone()));
        let rec = &self.basis * lam * self.basis.transpose();
        let mut l = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for (j, v) in p.row(i) {
                l[(i, j as usize)] -= v;
            }
        }
        (rec - l).abs().max()
    }

    /// Filter a signal through the graph Fourier transform:
    /// U diag(h(lambda_1)..h(lambda_n)) U^T x.
    pub fn apply(&self, choice: &FilterChoice, signal: &[f64]) -> Result<DenseVector> {
        if signal.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "spectral apply",
                expected: self.dim,
                found: signal.len(),
            });
        }
        let x = nalgebra::DVector::from_column_slice(signal);
        let mut hat = self.basis.transpose() * x;
        for (i, v) in hat.iter_mut().enumerate() {
            *v *= frequency_response(choice, self.eigenvalues[i]);
        }
        let y = &self.basis * hat;
        Ok(y.iter().copied().collect())
    }

    /// The low-pass ratio eta_k = max |h| over the top band divided by
    /// min |h| over the bottom band, for cut index k (1-based count of
    /// low eigenvalues). Returns None when the denominator vanishes.
    pub fn low_pass_ratio(&self, choice: &FilterChoice, k: usize) -> Option<f64> {
        let mut lambdas = self.eigenvalues.clone();
        lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if k == 0 || k >= lambdas.len() {
            return None;
        }
        let low = lambdas[..k]
            .iter()
            .map(|&l| frequency_response(choice, l).abs())
            .fold(f64::INFINITY, f64::min);
        let high = lambdas[k..]
            .iter()
            .map(|&l| frequency_response(choice, l).abs())
            .fold(0.0, f64::max);
        if low <= 1e-12 {
            None
        } else {
            Some(high / low)
        }
    }
}

/// L = I - P for a symmetric graph with entries in [0, 1].
pub fn laplacian(p: &SparseMatrix) -> Result<SparseMatrix> {
    let n = p.n_rows();
    let mut triplets = Vec::with_capacity(p.nnz() + n);
    for i in 0..n {
        let mut diag = 1.0;
        for (j, v) in p.row(i) {
            if j as usize == i {
                diag -= v;
            } else {
                triplets.push((i as u32, j, -v));
            }
        }
        if diag != 0.0 {
            triplets.push((i as u32, i as u32, diag));
        }
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

/// End-to-end dense reference of the scoring pipeline, built entirely on
/// dense algebra so it shares no kernels with the sparse path. Returns
/// each user's aggregated item scores.
#[allow(clippy::too_many_arguments)]
pub fn reference_scores(
    train: &RatingTensor,
    filters: &FilterConfig,
    s_f: &AdjustmentMap,
    s_t: f64,
    uniform_weights: bool,
    overall_graph_only: bool,
) -> Result<Vec<DenseVector>> {
    let (n_users, n_items) = (train.n_users, train.n_items);
    let c1 = train.n_criteria();
    filters.validate(c1)?;
    if n_items > MAX_ORACLE_DIM {
        return Err(Error::Parameter(format!(
            "oracle refused: {n_items} items exceeds {MAX_ORACLE_DIM}"
        )));
    }

    // Stacked rating matrix and its bi-degree normalization.
    let stacked: Vec<&SparseMatrix> = if overall_graph_only {
        vec![train.overall()]
    } else {
        train.matrices.iter().collect()
    };
    let rows = stacked.len() * n_users;
    let mut r = DMatrix::<f64>::zeros(rows, n_items);
    for (b, m) in stacked.iter().enumerate() {
        for u in 0..n_users {
            for (i, v) in m.row(u) {
                r[(b * n_users + u, i as usize)] = v;
            }
        }
    }
    let du: Vec<f64> = (0..rows).map(|i| r.row(i).sum()).collect();
    let di: Vec<f64> = (0..n_items).map(|j| r.column(j).sum()).collect();
    let mut rn = r;
    for i in 0..rows {
        for j in 0..n_items {
            if du[i] > 0.0 && di[j] > 0.0 {
                rn[(i, j)] /= du[i].sqrt() * di[j].sqrt();
            }
        }
    }
    let p = rn.transpose() * &rn;
    let adjusted = |s: f64| -> DMatrix<f64> { p.map(|v| if v > 0.0 { v.powf(s) } else { 0.0 }) };

    // Per-user criterion weights.
    let mut chat = DMatrix::<f64>::from_element(n_users, c1, 1.0);
    if !uniform_weights {
        let mut x = DMatrix::<f64>::zeros(n_users, c1);
        for (c, m) in train.matrices.iter().enumerate() {
            for u in 0..n_users {
                x[(u, c)] = m.row(u).map(|(_, v)| v).sum();
            }
        }
        for u in 0..n_users {
            let s: f64 = x.row(u).sum();
            if s > 0.0 {
                for c in 0..c1 {
                    x[(u, c)] /= s;
                }
            }
        }
        let t = x.transpose() * &x;
        let tbar = t.map(|v| if v > 0.0 { v.powf(s_t) } else { 0.0 });
        chat = x * tbar;
    }

    // Per-criterion filtering and aggregation.
    let graphs: Vec<DMatrix<f64>> = filters
        .per_criterion
        .iter()
        .map(|choice| match choice {
            FilterChoice::Named(f) => adjusted(*s_f.get(f).unwrap_or(&1.0)),
            FilterChoice::Coeffs(_) => p.clone(),
        })
        .collect();
    let mut out = Vec::with_capacity(n_users);
    for u in 0..n_users {
        let mut agg = nalgebra::DVector::<f64>::zeros(n_items);
        for (c, m) in train.matrices.iter().enumerate() {
            let mut signal = nalgebra::DVector::<f64>::zeros(n_items);
            for (i, v) in m.row(u) {
                signal[i as usize] = v;
            }
            let mut power = signal;
            let mut smoothed = nalgebra::DVector::<f64>::zeros(n_items);
            for &a in &filters.per_criterion[c].coefficients() {
                power = graphs[c].transpose() * power;
                smoothed += a * &power;
            }
            agg += (chat[(u, c)] / c1 as f64) * smoothed;
        }
        out.push(agg.iter().copied().collect());
    }
    Ok(out)
}

/// Graph quadratic form x^T L x.
pub fn smoothness(l_graph: &SparseMatrix, x: &[f64]) -> f64 {
    let lx = l_graph.mul_vec(x).expect("dimension mismatch in smoothness");
    x.iter().zip(&lx).map(|(&a, &b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::apply_filter;
    use crate::graph::{uniform_adjustment, FilterFamily, ItemGraphBank};
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn bank_from(p: SparseMatrix) -> ItemGraphBank {
        let p = Arc::new(p);
        let adjusted: BTreeMap<_, _> = FilterFamily::ALL
            .iter()
            .map(|&f| (f, Arc::clone(&p)))
            .collect();
        ItemGraphBank {
            p_tilde: p,
            adjusted,
            s_f_values: uniform_adjustment(1.0),
        }
    }

    /// Random symmetric graph with eigenvalues of I - P inside [0, 1]:
    /// built as a normalized Gram matrix of a random rating matrix.
    fn random_similarity(rng: &mut StdRng, users: usize, items: usize) -> SparseMatrix {
        let mut triplets = Vec::new();
        for u in 0..users {
            for i in 0..items {
                if rng.gen::<f64>() < 0.5 {
                    triplets.push((u as u32, i as u32, rng.gen_range(1.0..5.0)));
                }
            }
        }
        let r = SparseMatrix::from_triplets(users, items, triplets).unwrap();
        let (rn, _) = crate::sparse::bidegree_normalize(&r).unwrap();
        crate::sparse::gram(&rn, None).unwrap()
    }

    #[test]
    fn averaging_graph_spectrum() {
        let p = SparseMatrix::from_dense(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let oracle = SpectralOracle::from_graph(&p).unwrap();
        let mut lambdas = oracle.eigenvalues.clone();
        lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(lambdas[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lambdas[1], 1.0, epsilon = 1e-12);
        // L filter on this graph reproduces P itself.
        let y = oracle
            .apply(&FilterChoice::Named(FilterFamily::Linear), &[1.0, 0.0])
            .unwrap();
        assert_abs_diff_eq!(y[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(y[1], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn all_pass_on_identity_graph() {
        let oracle = SpectralOracle::from_graph(&SparseMatrix::identity(5)).unwrap();
        let x = vec![0.3, -1.0, 2.0, 0.0, 4.4];
        let y = oracle.apply(&FilterChoice::Coeffs(vec![1.0]), &x).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(y[i], x[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn spectral_matches_polynomial_path() {
        let mut rng = StdRng::seed_from_u64(99);
        let p = random_similarity(&mut rng, 25, 20);
        let oracle = SpectralOracle::from_graph(&p).unwrap();
        assert!(oracle.reconstruction_error(&p) < 1e-8);
        let bank = bank_from(p);
        let x: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..5.0)).collect();
        for family in FilterFamily::ALL {
            let choice = FilterChoice::Named(family);
            let a = apply_filter(&bank, &choice, &x).unwrap();
            let b = oracle.apply(&choice, &x).unwrap();
            for i in 0..20 {
                assert_abs_diff_eq!(a[i], b[i], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn oracle_refuses_large_graphs() {
        let p = SparseMatrix::identity(MAX_ORACLE_DIM + 1);
        assert!(SpectralOracle::from_graph(&p).is_err());
    }

    #[test]
    fn smoothness_fixture() {
        let l = SparseMatrix::from_dense(&[vec![0.5, -0.5], vec![-0.5, 0.5]]).unwrap();
        assert_abs_diff_eq!(smoothness(&l, &[1.0, -1.0]), 2.0, epsilon = 1e-12);
        // Constant signal is in the nullspace of this Laplacian.
        assert_abs_diff_eq!(smoothness(&l, &[1.0, 1.0]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_filtering_never_roughens() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let p = random_similarity(&mut rng, 12, 10);
            let l = laplacian(&p).unwrap();
            let bank = bank_from(p);
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..5.0)).collect();
            let y = apply_filter(&bank, &FilterChoice::Named(FilterFamily::Linear), &x).unwrap();
            assert!(smoothness(&l, &y) <= smoothness(&l, &x) + 1e-9);
        }
    }

    #[test]
    fn named_filters_are_low_pass() {
        let mut rng = StdRng::seed_from_u64(31);
        let p = random_similarity(&mut rng, 15, 12);
        let oracle = SpectralOracle::from_graph(&p).unwrap();
        for family in FilterFamily::ALL {
            let choice = FilterChoice::Named(family);
            for k in 1..oracle.dim {
                if let Some(eta) = oracle.low_pass_ratio(&choice, k) {
                    assert!(eta <= 1.0 + 1e-9, "{family} eta_{k} = {eta}");
                }
            }
        }
    }
}
