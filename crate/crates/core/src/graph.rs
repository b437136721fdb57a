//! Item-item similarity graph construction: user-expansion stacking,
//! bi-degree normalization, the Gram product, and per-filter-family
//! Hadamard-power adjustment.

use crate::error::{Error, Result};
use crate::ingest::RatingTensor;
use crate::sparse::{self, SparseMatrix};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Default cap on stored entries of the similarity graph.
pub const DEFAULT_NNZ_CAP: usize = 200_000_000;

/// The three predefined polynomial low-pass filter families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FilterFamily {
    /// First-order filter P; response 1 - lambda.
    Linear,
    /// Second-order filter P^2; response (1 - lambda)^2.
    Inward,
    /// Second-order filter 2P - P^2; response 1 - lambda^2.
    Outward,
}

impl FilterFamily {
    pub const ALL: [FilterFamily; 3] = [
        FilterFamily::Linear,
        FilterFamily::Inward,
        FilterFamily::Outward,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FilterFamily::Linear => "L",
            FilterFamily::Inward => "I",
            FilterFamily::Outward => "O",
        }
    }
}

impl std::fmt::Display for FilterFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for FilterFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "l" | "linear" => Ok(FilterFamily::Linear),
            "I" | "i" | "inward" => Ok(FilterFamily::Inward),
            "O" | "o" | "outward" => Ok(FilterFamily::Outward),
            other => Err(Error::Parameter(format!("unknown filter family {other:?}"))),
        }
    }
}

/// Per-family Hadamard adjustment exponents.
pub type AdjustmentMap = BTreeMap<FilterFamily, f64>;

pub fn uniform_adjustment(s: f64) -> AdjustmentMap {
    FilterFamily::ALL.iter().map(|&f| (f, s)).collect()
}

/// The normalized item-item similarity graph plus its Hadamard-adjusted
/// variants, one per filter family. Graphs with the same exponent share
/// storage.
#[derive(Debug, Clone)]
pub struct ItemGraphBank {
    pub p_tilde: Arc<SparseMatrix>,
    pub adjusted: BTreeMap<FilterFamily, Arc<SparseMatrix>>,
    pub s_f_values: AdjustmentMap,
}

impl ItemGraphBank {
    pub fn n_items(&self) -> usize {
        self.p_tilde.n_rows()
    }

    pub fn adjusted_for(&self, family: FilterFamily) -> Result<&Arc<SparseMatrix>> {
        self.adjusted
            .get(&family)
            .ok_or_else(|| Error::Parameter(format!("no adjusted graph for family {family}")))
    }

    /// New bank with different adjustment exponents, reusing the stored
    /// normalized graph instead of rebuilding it.
    pub fn readjust(&self, s_f_values: &AdjustmentMap) -> Result<ItemGraphBank> {
        for (&f, &s) in s_f_values {
            if !(s > 0.0) {
                return Err(Error::Parameter(format!(
                    "adjustment exponent for {f} must be positive, got {s}"
                )));
            }
        }
        let mut adjusted = BTreeMap::new();
        let mut by_exponent: BTreeMap<u64, Arc<SparseMatrix>> = BTreeMap::new();
        for (&family, &s) in s_f_values {
            let graph = if s == 1.0 {
                Arc::clone(&self.p_tilde)
            } else {
                let key = s.to_bits();
                match by_exponent.get(&key) {
                    Some(g) => Arc::clone(g),
                    None => {
                        let g = Arc::new(self.p_tilde.hadamard_power(s)?);
                        by_exponent.insert(key, Arc::clone(&g));
                        g
                    }
                }
            };
            adjusted.insert(family, graph);
        }
        Ok(ItemGraphBank {
            p_tilde: Arc::clone(&self.p_tilde),
            adjusted,
            s_f_values: s_f_values.clone(),
        })
    }
}

/// Stack the C+1 rating matrices vertically: block c occupies rows
/// [c * n_users, (c+1) * n_users).
pub fn build_expansion(t: &RatingTensor) -> Result<SparseMatrix> {
    sparse::vconcat(&t.matrices)
}

/// Build the normalized item-item similarity graph and its adjusted
/// variants from a rating tensor.
pub fn build_item_graph(
    t: &RatingTensor,
    s_f_values: &AdjustmentMap,
    nnz_cap: usize,
) -> Result<ItemGraphBank> {
    if t.nnz_total() == 0 {
        return Err(Error::Parameter("all-empty rating tensor".into()));
    }
    for (&f, &s) in s_f_values {
        if !(s > 0.0) {
            return Err(Error::Parameter(format!(
                "adjustment exponent for {f} must be positive, got {s}"
            )));
        }
    }
    let r_mc = build_expansion(t)?;
    let (r_norm, _diag) = sparse::bidegree_normalize(&r_mc)?;
    let p_tilde = Arc::new(sparse::gram(&r_norm, Some(nnz_cap))?);
    let bare = ItemGraphBank {
        p_tilde,
        adjusted: BTreeMap::new(),
        s_f_values: AdjustmentMap::new(),
    };
    bare.readjust(s_f_values)
}
