//! Criteria preference matrix, preference-infused aggregation, top-K
//! ranking and per-prediction attribution.

use crate::error::{Error, Result};
use crate::ingest::RatingTensor;
use crate::sparse::DenseVector;

/// Per-user weights over criteria, derived from rating-sum profiles
/// smoothed through the criterion-criterion similarity graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    /// Row-major n_users x (C+1).
    weights: Vec<f64>,
    n_users: usize,
    n_criteria: usize,
    pub s_t: f64,
}

impl PreferenceMatrix {
    pub fn n_criteria(&self) -> usize {
        self.n_criteria
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.weights[u * self.n_criteria..(u + 1) * self.n_criteria]
    }

    /// Uniform weights; used by the aggregation-ablation variant.
    pub fn uniform(n_users: usize, n_criteria: usize) -> Self {
        Self {
            weights: vec![1.0; n_users * n_criteria],
            n_users,
            n_criteria,
            s_t: 1.0,
        }
    }
}

/// Build the criteria preference matrix from a train tensor:
/// X[u,c] = sum of user u's ratings under criterion c; X~ = row-normalized
/// X; T = X~^T X~; Tbar = T^s_T elementwise; Chat = X~ Tbar.
pub fn build_preferences(t: &RatingTensor, s_t: f64) -> Result<PreferenceMatrix> {
    if !(s_t > 0.0) {
        return Err(Error::Parameter(format!(
            "preference exponent must be positive, got {s_t}"
        )));
    }
    let c1 = t.n_criteria();
    let n = t.n_users;

    let mut x = vec![0.0; n * c1];
    for (c, m) in t.matrices.iter().enumerate() {
        for u in 0..n {
            x[u * c1 + c] = m.row(u).map(|(_, v)| v).sum();
        }
    }
    // Row normalization; all-zero users keep an all-zero row.
    let mut x_tilde = x;
    for u in 0..n {
        let row = &mut x_tilde[u * c1..(u + 1) * c1];
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for v in row {
                *v /= sum;
            }
        }
    }

    let mut t_mat = vec![0.0; c1 * c1];
    for u in 0..n {
        let row = &x_tilde[u * c1..(u + 1) * c1];
        for a in 0..c1 {
            for b in 0..c1 {
                t_mat[a * c1 + b] += row[a] * row[b];
            }
        }
    }
    for v in &mut t_mat {
        if *v > 0.0 {
            *v = v.powf(s_t);
        }
    }

    let mut weights = vec![0.0; n * c1];
    for u in 0..n {
        let row = &x_tilde[u * c1..(u + 1) * c1];
        let out = &mut weights[u * c1..(u + 1) * c1];
        for a in 0..c1 {
            let xa = row[a];
            if xa == 0.0 {
                continue;
            }
            for b in 0..c1 {
                out[b] += xa * t_mat[a * c1 + b];
            }
        }
    }
    Ok(PreferenceMatrix {
        weights,
        n_users: n,
        n_criteria: c1,
        s_t,
    })
}

/// Preference-weighted average of per-criterion smoothed scores:
/// s_u = (1 / (C+1)) * sum_c Chat[u,c] * s_{u,c}.
pub fn aggregate(
    prefs: &PreferenceMatrix,
    per_criterion_scores: &[DenseVector],
    u: usize,
) -> Result<DenseVector> {
    if per_criterion_scores.len() != prefs.n_criteria {
        return Err(Error::DimensionMismatch {
            context: "aggregate",
            expected: prefs.n_criteria,
            found: per_criterion_scores.len(),
        });
    }
    let n_items = per_criterion_scores[0].len();
    let w = prefs.row(u);
    let scale = 1.0 / prefs.n_criteria as f64;
    let mut out = vec![0.0; n_items];
    for (c, scores) in per_criterion_scores.iter().enumerate() {
        let wc = w[c] * scale;
        if wc == 0.0 {
            continue;
        }
        for (o, &s) in out.iter_mut().zip(scores) {
            *o += wc * s;
        }
    }
    Ok(out)
}

/// The K highest-scoring items outside the mask, in descending score with
/// ties broken by ascending item id. Returns fewer than K items when the
/// unmasked pool is smaller.
pub fn rank_topk(scores: &[f64], mask: &[bool], k: usize) -> Vec<u32> {
    debug_assert_eq!(scores.len(), mask.len());
    let mut candidates: Vec<u32> = (0..scores.len() as u32)
        .filter(|&i| !mask[i as usize])
        .collect();
    let cut = k.min(candidates.len());
    candidates.select_nth_unstable_by(cut.max(1) - 1, |&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    candidates.truncate(cut);
    candidates.sort_unstable_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    candidates
}

/// Per-(user, item) decomposition of the final score into criterion
/// contributions Chat[u,c] * (s_{u,c})_i.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub user: usize,
    pub item: usize,
    pub contributions: Vec<f64>,
}

impl AttributionMap {
    /// The aggregated score this map decomposes.
    pub fn final_score(&self) -> f64 {
        self.contributions.iter().sum::<f64>() / self.contributions.len() as f64
    }
}

/// Build an attribution map from already-computed per-criterion scores.
pub fn attribution(
    prefs: &PreferenceMatrix,
    per_criterion_scores: &[DenseVector],
    u: usize,
    item: usize,
) -> Result<AttributionMap> {
    if u >= prefs.n_users {
        return Err(Error::Parameter(format!("user {u} out of range")));
    }
    let n_items = per_criterion_scores
        .first()
        .map(|s| s.len())
        .unwrap_or(0);
    if item >= n_items {
        return Err(Error::Parameter(format!("item {item} out of range")));
    }
    let w = prefs.row(u);
    let contributions = per_criterion_scores
        .iter()
        .enumerate()
        .map(|(c, s)| w[c] * s[item])
        .collect();
    Ok(AttributionMap {
        user: u,
        item,
        contributions,
    })
}
