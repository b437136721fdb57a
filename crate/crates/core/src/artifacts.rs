//! Output artifact writers. Every file carries the config fingerprint and
//! seed on its first line and is written atomically (temp file + rename),
//! so interrupted runs never leave partial outputs behind.

use crate::error::Result;
use crate::ingest::{Fold, RatingTensor, Split};
use crate::pipeline::EvalReport;
use crate::prefs::AttributionMap;
use std::fmt::Write as _;
use std::path::Path;

/// Provenance line placed at the top of every artifact.
pub fn stamp(config_hash: u64, seed: u64) -> String {
    format!("# config_hash={config_hash:016x} seed={seed}\n")
}

/// Write bytes via a temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// `user_id,rank,item_id,score` with six-decimal scores, ids mapped back
/// to their original values.
pub fn recommendations_csv(
    recs: &[Vec<(u32, f64)>],
    user_ids: &[i64],
    item_ids: &[i64],
    config_hash: u64,
    seed: u64,
) -> String {
    let mut out = stamp(config_hash, seed);
    out.push_str("user_id,rank,item_id,score\n");
    for (u, rec) in recs.iter().enumerate() {
        for (rank, &(item, score)) in rec.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{score:.6}",
                user_ids[u],
                rank + 1,
                item_ids[item as usize]
            );
        }
    }
    out
}

/// `user_id,item_id,criterion_index,criterion_name,contribution`.
pub fn attribution_csv(
    maps: &[AttributionMap],
    user_ids: &[i64],
    item_ids: &[i64],
    criterion_names: &[String],
    config_hash: u64,
    seed: u64,
) -> String {
    let mut out = stamp(config_hash, seed);
    out.push_str("user_id,item_id,criterion_index,criterion_name,contribution\n");
    for m in maps {
        for (c, &v) in m.contributions.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{c},{},{v:.6}",
                user_ids[m.user], item_ids[m.item], criterion_names[c]
            );
        }
    }
    out
}

/// `user_id,item_id,fold` manifest of a split.
pub fn split_manifest_csv(
    split: &Split,
    user_ids: &[i64],
    item_ids: &[i64],
    config_hash: u64,
    seed: u64,
) -> String {
    let mut out = stamp(config_hash, seed);
    out.push_str("user_id,item_id,fold\n");
    for &(u, i, fold) in &split.assignment {
        let _ = writeln!(out, "{},{},{fold}", user_ids[u as usize], item_ids[i as usize]);
    }
    out
}

/// Internal-index -> original-id table.
pub fn id_map_csv(kind: &str, ids: &[i64]) -> String {
    let mut out = format!("index,{kind}\n");
    for (idx, id) in ids.iter().enumerate() {
        let _ = writeln!(out, "{idx},{id}");
    }
    out
}

/// Key=value run report.
pub fn report_text(
    report: &EvalReport,
    extra: &[(String, String)],
    config_hash: u64,
    seed: u64,
) -> String {
    let mut out = stamp(config_hash, seed);
    let _ = writeln!(out, "config_hash={config_hash:016x}");
    let _ = writeln!(out, "seed={seed}");
    for (&k, v) in &report.recall {
        let _ = writeln!(out, "recall@{k}={v:.6}");
    }
    for (&k, v) in &report.ndcg {
        let _ = writeln!(out, "ndcg@{k}={v:.6}");
    }
    let _ = writeln!(out, "n_users_evaluated={}", report.n_users_evaluated);
    let _ = writeln!(out, "n_users_total={}", report.n_users_total);
    let _ = writeln!(out, "graph_build_s={:.3}", report.graph_build_s);
    let _ = writeln!(out, "filter_s={:.3}", report.filter_s);
    let _ = writeln!(out, "total_s={:.3}", report.total_s);
    for (k, v) in extra {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

/// One leaderboard row per candidate:
/// `rank,config_hash,recall@5,recall@10,ndcg@5,ndcg@10,graph_build_s,filter_s,total_s`.
pub fn leaderboard_csv(
    rows: &[(u64, EvalReport)],
    config_hash: u64,
    seed: u64,
) -> String {
    let mut out = stamp(config_hash, seed);
    out.push_str("rank,config_hash,recall@5,recall@10,ndcg@5,ndcg@10,graph_build_s,filter_s,total_s\n");
    for (rank, (hash, r)) in rows.iter().enumerate() {
        let metric = |m: &std::collections::BTreeMap<usize, f64>, k: usize| {
            m.get(&k).copied().unwrap_or(f64::NAN)
        };
        let _ = writeln!(
            out,
            "{},{hash:016x},{:.6},{:.6},{:.6},{:.6},{:.3},{:.3},{:.3}",
            rank + 1,
            metric(&r.recall, 5),
            metric(&r.recall, 10),
            metric(&r.ndcg, 5),
            metric(&r.ndcg, 10),
            r.graph_build_s,
            r.filter_s,
            r.total_s
        );
    }
    out
}

/// Timing rows for the scalability benchmark:
/// `n_users,n_items,n_mc_ratings,graph_nnz,graph_build_s,score_batch_users,score_s`.
pub fn bench_csv(rows: &[BenchRow], config_hash: u64, seed: u64) -> String {
    let mut out = stamp(config_hash, seed);
    out.push_str("n_users,n_items,n_mc_ratings,graph_nnz,graph_build_s,score_batch_users,score_s\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3},{},{:.4}",
            r.n_users, r.n_items, r.n_mc_ratings, r.graph_nnz, r.graph_build_s,
            r.score_batch_users, r.score_s
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n_users: usize,
    pub n_items: usize,
    pub n_mc_ratings: usize,
    pub graph_nnz: usize,
    pub graph_build_s: f64,
    pub score_batch_users: usize,
    pub score_s: f64,
}

/// Trivial id maps for synthetic data, where internal index == id.
pub fn identity_ids(n: usize) -> Vec<i64> {
    (0..n as i64).collect()
}

/// Convenience: identity maps sized to a tensor.
pub fn tensor_identity_ids(t: &RatingTensor) -> (Vec<i64>, Vec<i64>) {
    (identity_ids(t.n_users), identity_ids(t.n_items))
}

/// Fold counts for a report line.
pub fn fold_counts(split: &Split) -> (usize, usize, usize) {
    let mut counts = (0usize, 0usize, 0usize);
    for &(_, _, fold) in &split.assignment {
        match fold {
            Fold::Train => counts.0 += 1,
            Fold::Valid => counts.1 += 1,
            Fold::Test => counts.2 += 1,
        }
    }
    counts
}
