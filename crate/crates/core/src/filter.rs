//! Criterion-specific polynomial low-pass filtering of rating signals.
//!
//! Filters are evaluated by repeated sparse matrix-vector products; powers
//! of the similarity graph are never materialized.

use crate::error::{Error, Result};
use crate::graph::{FilterFamily, ItemGraphBank};
use crate::sparse::{DenseVector, SparseMatrix};

/// Maximum polynomial order accepted for explicit coefficients.
pub const MAX_ORDER: usize = 8;

/// Filter selection for one criterion: a named family or raw polynomial
/// coefficients a_1..a_K over powers of the similarity graph.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterChoice {
    Named(FilterFamily),
    Coeffs(Vec<f64>),
}

impl FilterChoice {
    /// Polynomial coefficients a_1..a_K realizing this choice.
    /// L -> [1], I -> [0, 1] (P^2), O -> [2, -1] (2P - P^2).
    pub fn coefficients(&self) -> Vec<f64> {
        match self {
            FilterChoice::Named(FilterFamily::Linear) => vec![1.0],
            FilterChoice::Named(FilterFamily::Inward) => vec![0.0, 1.0],
            FilterChoice::Named(FilterFamily::Outward) => vec![2.0, -1.0],
            FilterChoice::Coeffs(a) => a.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FilterChoice::Coeffs(a) = self {
            if a.is_empty() {
                return Err(Error::Parameter("empty coefficient list".into()));
            }
            if a.len() > MAX_ORDER {
                return Err(Error::Parameter(format!(
                    "polynomial order {} exceeds the cap of {MAX_ORDER}",
                    a.len()
                )));
            }
        }
        Ok(())
    }

    /// The graph this choice filters over: named families use their
    /// adjusted graph, explicit coefficients use the unadjusted one.
    pub fn graph<'a>(&self, bank: &'a ItemGraphBank) -> Result<&'a SparseMatrix> {
        match self {
            FilterChoice::Named(f) => Ok(bank.adjusted_for(*f)?.as_ref()),
            FilterChoice::Coeffs(_) => Ok(bank.p_tilde.as_ref()),
        }
    }
}

impl std::fmt::Display for FilterChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FilterChoice::Named(family) => f.write_str(family.label()),
            FilterChoice::Coeffs(a) => {
                let parts: Vec<String> = a.iter().map(|v| format!("{v}")).collect();
                write!(f, "[{}]", parts.join(","))
            }
        }
    }
}

/// Per-criterion filter choices (length C+1).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub per_criterion: Vec<FilterChoice>,
}

impl FilterConfig {
    pub fn all(choice: FilterChoice, n_criteria: usize) -> Self {
        Self {
            per_criterion: vec![choice; n_criteria],
        }
    }

    pub fn validate(&self, n_criteria: usize) -> Result<()> {
        if self.per_criterion.len() != n_criteria {
            return Err(Error::DimensionMismatch {
                context: "filter config",
                expected: n_criteria,
                found: self.per_criterion.len(),
            });
        }
        for c in &self.per_criterion {
            c.validate()?;
        }
        Ok(())
    }

    /// The filter families actually referenced, for graph adjustment.
    pub fn families(&self) -> Vec<FilterFamily> {
        let mut out: Vec<FilterFamily> = self
            .per_criterion
            .iter()
            .filter_map(|c| match c {
                FilterChoice::Named(f) => Some(*f),
                FilterChoice::Coeffs(_) => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Apply the polynomial filter to a signal: signal * sum_k a_k P^k,
/// evaluated as repeated vector-matrix products.
pub fn apply_filter(
    bank: &ItemGraphBank,
    choice: &FilterChoice,
    signal: &[f64],
) -> Result<DenseVector> {
    choice.validate()?;
    let graph = choice.graph(bank)?;
    apply_polynomial(graph, &choice.coefficients(), signal)
}

/// signal * sum_k a_k G^k for an explicit graph.
pub fn apply_polynomial(graph: &SparseMatrix, coeffs: &[f64], signal: &[f64]) -> Result<DenseVector> {
    if signal.len() != graph.n_cols() {
        return Err(Error::DimensionMismatch {
            context: "apply_filter signal",
            expected: graph.n_cols(),
            found: signal.len(),
        });
    }
    let mut power = signal.to_vec();
    let mut acc = vec![0.0; signal.len()];
    for &a in coeffs {
        power = graph.vec_mul(&power)?;
        if a != 0.0 {
            for (y, &p) in acc.iter_mut().zip(&power) {
                *y += a * p;
            }
        }
    }
    Ok(acc)
}

/// Smooth one user's raw rating row for one criterion. Masking of
/// interacted items happens later, at ranking.
pub fn score_user_criterion(
    bank: &ItemGraphBank,
    choice: &FilterChoice,
    r_uc: &[f64],
) -> Result<DenseVector> {
    apply_filter(bank, choice, r_uc)
}

/// Frequency response h(lambda) of a filter choice over the graph
/// Laplacian spectrum: named families have closed forms, explicit
/// coefficients give sum_k a_k (1 - lambda)^k.
pub fn frequency_response(choice: &FilterChoice, lambda: f64) -> f64 {
    match choice {
        FilterChoice::Named(FilterFamily::Linear) => 1.0 - lambda,
        FilterChoice::Named(FilterFamily::Inward) => lambda * lambda - 2.0 * lambda + 1.0,
        FilterChoice::Named(FilterFamily::Outward) => 1.0 - lambda * lambda,
        FilterChoice::Coeffs(a) => {
            let base = 1.0 - lambda;
            let mut pow = 1.0;
            let mut acc = 0.0;
            for &c in a {
                pow *= base;
                acc += c * pow;
            }
            acc
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::uniform_adjustment;
    use approx::assert_abs_diff_eq;
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

    #[test]
    fn linear_filter_multiplies_once() {
        let bank = bank_from(SparseMatrix::from_dense(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap());
        let y = apply_filter(&bank, &FilterChoice::Named(FilterFamily::Linear), &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(y[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(y[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn idempotent_graph_collapses_filters() {
        // P^2 = P here, so all three named filters agree.
        let bank = bank_from(SparseMatrix::from_dense(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap());
        for family in FilterFamily::ALL {
            let y = apply_filter(&bank, &FilterChoice::Named(family), &[1.0, 0.0]).unwrap();
            assert_abs_diff_eq!(y[0], 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(y[1], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_graph_passes_signal_through() {
        let bank = bank_from(SparseMatrix::identity(3));
        let x = vec![1.0, -2.0, 0.5];
        let y = apply_filter(&bank, &FilterChoice::Named(FilterFamily::Linear), &x).unwrap();
        assert_eq!(y, x);
        let y = apply_filter(&bank, &FilterChoice::Coeffs(vec![1.0]), &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn filtering_is_linear() {
        let p = SparseMatrix::from_dense(&[
            vec![0.4, 0.2, 0.0],
            vec![0.2, 0.5, 0.1],
            vec![0.0, 0.1, 0.3],
        ])
        .unwrap();
        let bank = bank_from(p);
        let x = vec![1.0, 2.0, 3.0];
        let y = vec![-1.0, 0.5, 0.0];
        let (alpha, beta) = (0.7, -1.3);
        for choice in [
            FilterChoice::Named(FilterFamily::Outward),
            FilterChoice::Coeffs(vec![0.3, -0.2, 0.5]),
        ] {
            let fx = apply_filter(&bank, &choice, &x).unwrap();
            let fy = apply_filter(&bank, &choice, &y).unwrap();
            let mixed: Vec<f64> = x
                .iter()
                .zip(&y)
                .map(|(&a, &b)| alpha * a + beta * b)
                .collect();
            let fmixed = apply_filter(&bank, &choice, &mixed).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(fmixed[i], alpha * fx[i] + beta * fy[i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zero_signal_stays_zero() {
        let bank = bank_from(SparseMatrix::from_dense(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap());
        let y = score_user_criterion(&bank, &FilterChoice::Named(FilterFamily::Inward), &[0.0, 0.0])
            .unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn scaling_signal_scales_output() {
        let bank = bank_from(SparseMatrix::from_dense(&[vec![0.3, 0.2], vec![0.2, 0.6]]).unwrap());
        let x = vec![1.5, 0.0];
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let a = score_user_criterion(&bank, &FilterChoice::Named(FilterFamily::Linear), &x).unwrap();
        let b =
            score_user_criterion(&bank, &FilterChoice::Named(FilterFamily::Linear), &doubled).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(b[i], 2.0 * a[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn horner_matches_materialized_powers() {
        let p = SparseMatrix::from_dense(&[
            vec![0.4, 0.2, 0.0],
            vec![0.2, 0.5, 0.1],
            vec![0.0, 0.1, 0.3],
        ])
        .unwrap();
        let bank = bank_from(p.clone());
        let coeffs = vec![0.5, -0.25, 0.125, 0.0625];
        let x = vec![1.0, -1.0, 2.0];
        let y = apply_filter(&bank, &FilterChoice::Coeffs(coeffs.clone()), &x).unwrap();

        // Materialize P^k explicitly with spmm.
        let mut power = SparseMatrix::identity(3);
        let mut expected = vec![0.0; 3];
        for &a in &coeffs {
            power = crate::sparse::spmm(&power, &p).unwrap();
            let term = power.vec_mul(&x).unwrap();
            for i in 0..3 {
                expected[i] += a * term[i];
            }
        }
        for i in 0..3 {
            assert_abs_diff_eq!(y[i], expected[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn response_values_match_closed_forms() {
        let l = FilterChoice::Named(FilterFamily::Linear);
        assert_abs_diff_eq!(frequency_response(&l, 0.0), 1.0);
        assert_abs_diff_eq!(frequency_response(&l, 1.0), 0.0);
        let i = FilterChoice::Named(FilterFamily::Inward);
        assert_abs_diff_eq!(frequency_response(&i, 0.5), 0.25);
        let o = FilterChoice::Named(FilterFamily::Outward);
        assert_abs_diff_eq!(frequency_response(&o, 0.5), 0.75);
        // Explicit coefficients reduce to the same polynomials.
        for lambda in [0.0, 0.3, 0.8, 1.0] {
            assert_abs_diff_eq!(
                frequency_response(&FilterChoice::Coeffs(vec![2.0, -1.0]), lambda),
                frequency_response(&o, lambda),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn order_cap_enforced() {
        assert!(FilterChoice::Coeffs(vec![1.0; 9]).validate().is_err());
        assert!(FilterChoice::Coeffs(vec![]).validate().is_err());
        assert!(FilterChoice::Coeffs(vec![1.0; 8]).validate().is_ok());
    }
}
