//! Top-K ranking metrics and the positive-item ground truth rule.

use crate::error::{Error, Result};
use crate::ingest::RatingTensor;
use std::collections::HashSet;

/// Per-user positive test items. Positivity is defined against the global
/// median of all overall test ratings: an interaction is positive iff its
/// overall rating is strictly greater than that median.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// positives[u] is the set of positive item ids for user u.
    pub positives: Vec<HashSet<u32>>,
    pub median: f64,
}

impl GroundTruth {
    /// Users with at least one positive item; only these enter metric
    /// averages.
    pub fn n_evaluable(&self) -> usize {
        self.positives.iter().filter(|p| !p.is_empty()).count()
    }
}

/// Median with the even-count convention of averaging the two middle
/// values.
fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Compute ground truth from a test-fold tensor's overall ratings.
pub fn positives(test: &RatingTensor) -> Result<GroundTruth> {
    let overall = test.overall();
    let mut all: Vec<f64> = (0..test.n_users)
        .flat_map(|u| overall.row(u).map(|(_, v)| v))
        .collect();
    if all.is_empty() {
        return Err(Error::Parameter("empty test fold".into()));
    }
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = median(&all);
    let positives = (0..test.n_users)
        .map(|u| {
            overall
                .row(u)
                .filter(|&(_, v)| v > med)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    Ok(GroundTruth {
        positives,
        median: med,
    })
}

/// Recall@K = |top-K hits| / min(|truth|, K). Returns None for empty
/// truth (user not evaluable).
pub fn recall_at_k(recommended: &[u32], truth: &HashSet<u32>, k: usize) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let hits = recommended
        .iter()
        .take(k)
        .filter(|i| truth.contains(i))
        .count();
    Some(hits as f64 / truth.len().min(k) as f64)
}

/// NDCG@K with binary relevance: DCG = sum over ranks r of
/// rel_r / log2(r + 1); IDCG places min(|truth|, K) hits first. Returns
/// None for empty truth.
pub fn ndcg_at_k(recommended: &[u32], truth: &HashSet<u32>, k: usize) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = recommended
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| truth.contains(i))
        .map(|(r0, _)| discount(r0 + 1))
        .sum();
    let idcg: f64 = (1..=truth.len().min(k)).map(discount).sum();
    Some(dcg / idcg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn overall_tensor(rows: Vec<Vec<f64>>) -> RatingTensor {
        let m = SparseMatrix::from_dense(&rows).unwrap();
        RatingTensor {
            n_users: m.n_rows(),
            n_items: m.n_cols(),
            matrices: vec![m],
            criterion_names: vec!["rating_0".into()],
        }
    }

    #[test]
    fn odd_count_median_and_strict_cut() {
        // Ratings {1,2,3,4,5}: median 3, positives are the 4 and 5.
        let t = overall_tensor(vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]]);
        let gt = positives(&t).unwrap();
        assert_abs_diff_eq!(gt.median, 3.0);
        let mut pos: Vec<u32> = gt.positives[0].iter().copied().collect();
        pos.sort();
        assert_eq!(pos, vec![3, 4]);
    }

    #[test]
    fn even_count_median_averages_middle_two() {
        let t = overall_tensor(vec![vec![1.0, 2.0], vec![4.0, 5.0]]);
        let gt = positives(&t).unwrap();
        assert_abs_diff_eq!(gt.median, 3.0);
        assert_eq!(gt.n_evaluable(), 1);
    }

    #[test]
    fn all_equal_ratings_give_no_positives() {
        let t = overall_tensor(vec![vec![3.0, 3.0], vec![0.0, 3.0]]);
        let gt = positives(&t).unwrap();
        assert_eq!(gt.n_evaluable(), 0);
        assert!(recall_at_k(&[0, 1], &gt.positives[0], 2).is_none());
        assert!(ndcg_at_k(&[0, 1], &gt.positives[0], 2).is_none());
    }

    #[test]
    fn positives_match_brute_force_on_random_ratings() {
        let mut rng = StdRng::seed_from_u64(17);
        let n_users = 40;
        let n_items = 50;
        let mut dense = vec![vec![0.0; n_items]; n_users];
        let mut flat = Vec::new();
        for row in &mut dense {
            for v in row.iter_mut() {
                if rng.gen::<f64>() < 0.5 {
                    *v = rng.gen_range(1..=5) as f64;
                    flat.push(*v);
                }
            }
        }
        assert!(flat.len() >= 900);
        let gt = positives(&overall_tensor(dense.clone())).unwrap();
        flat.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = median(&flat);
        for (u, row) in dense.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                let expect = v > 0.0 && v > med;
                assert_eq!(gt.positives[u].contains(&(i as u32)), expect);
            }
        }
    }

    #[test]
    fn ndcg_worked_example() {
        // recommended = [i1, i2], truth = {i1, i3}, K = 2:
        // DCG = 1, IDCG = 1 + 1/log2(3), ratio 0.6131.
        let truth: HashSet<u32> = [1, 3].into_iter().collect();
        let rec = [1, 2];
        assert_abs_diff_eq!(recall_at_k(&rec, &truth, 2).unwrap(), 0.5);
        assert_abs_diff_eq!(ndcg_at_k(&rec, &truth, 2).unwrap(), 0.6131, epsilon = 5e-5);
    }

    #[test]
    fn perfect_topk_scores_one() {
        let truth: HashSet<u32> = [4, 7, 9].into_iter().collect();
        let rec = [7, 9, 4];
        assert_abs_diff_eq!(recall_at_k(&rec, &truth, 3).unwrap(), 1.0);
        assert_abs_diff_eq!(ndcg_at_k(&rec, &truth, 3).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn no_hits_scores_zero() {
        let truth: HashSet<u32> = [0].into_iter().collect();
        let rec = [5, 6, 7];
        assert_abs_diff_eq!(recall_at_k(&rec, &truth, 3).unwrap(), 0.0);
        assert_abs_diff_eq!(ndcg_at_k(&rec, &truth, 3).unwrap(), 0.0);
    }

    #[test]
    fn recall_denominator_caps_at_k() {
        // 8 positives, K = 5, 5 hits: recall is 1, not 5/8.
        let truth: HashSet<u32> = (0..8).collect();
        let rec = [0, 1, 2, 3, 4];
        assert_abs_diff_eq!(recall_at_k(&rec, &truth, 5).unwrap(), 1.0);
    }

    #[test]
    fn adding_a_hit_never_decreases_metrics() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..200 {
            let truth: HashSet<u32> = (0..rng.gen_range(1..8)).map(|_| rng.gen_range(0..30)).collect();
            let k = rng.gen_range(1..=10usize);
            let mut rec: Vec<u32> = (0..k as u32).map(|_| rng.gen_range(30..60)).collect();
            let r0 = recall_at_k(&rec, &truth, k).unwrap();
            let n0 = ndcg_at_k(&rec, &truth, k).unwrap();
            // Replace a miss with an unseen true positive.
            if let Some(&hit) = truth.iter().find(|i| !rec.contains(i)) {
                let slot = rng.gen_range(0..rec.len());
                rec[slot] = hit;
                assert!(recall_at_k(&rec, &truth, k).unwrap() >= r0 - 1e-12);
                assert!(ndcg_at_k(&rec, &truth, k).unwrap() >= n0 - 1e-12);
            }
        }
    }
}
