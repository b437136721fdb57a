//! End-to-end scoring pipeline: graph construction, blocked per-user
//! filtering, preference aggregation, masking, ranking, and metric
//! reports, plus the four ablation variants.

use crate::error::{Error, Result};
use crate::filter::{FilterChoice, FilterConfig};
use crate::graph::{
    self, uniform_adjustment, AdjustmentMap, FilterFamily, ItemGraphBank, DEFAULT_NNZ_CAP,
};
use crate::ingest::RatingTensor;
use crate::metrics::{self, GroundTruth};
use crate::prefs::{self, AttributionMap, PreferenceMatrix};
use crate::sparse::{self, DenseVector, SparseMatrix};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;

/// Users per scoring block; signals are filtered block-wise in item-major
/// layout so each graph pass touches the graph once per block.
const BLOCK: usize = 64;

/// Complete scoring configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub filters: FilterConfig,
    pub s_f: AdjustmentMap,
    pub s_t: f64,
    pub k_list: Vec<usize>,
    pub nnz_cap: usize,
}

impl ModelConfig {
    pub fn defaults(n_criteria: usize) -> Self {
        Self {
            filters: FilterConfig::all(FilterChoice::Named(FilterFamily::Linear), n_criteria),
            s_f: uniform_adjustment(1.0),
            s_t: 1.0,
            k_list: vec![5, 10],
            nnz_cap: DEFAULT_NNZ_CAP,
        }
    }

    pub fn validate(&self, n_criteria: usize) -> Result<()> {
        self.filters.validate(n_criteria)?;
        if self.k_list.is_empty() {
            return Err(Error::Config("empty K list".into()));
        }
        if self.k_list.iter().any(|&k| k == 0) {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if !(self.s_t > 0.0) {
            return Err(Error::Config(format!(
                "preference exponent must be positive, got {}",
                self.s_t
            )));
        }
        Ok(())
    }
}

/// Ablation switches. Each one disables a single pipeline ingredient and
/// leaves everything else untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Full pipeline.
    None,
    /// `m`: build the item graph from the overall matrix only.
    OverallGraphOnly,
    /// `s`: force every adjustment exponent to 1.
    UnitAdjustment,
    /// `f`: force every criterion's filter to the first-order family.
    AllLinear,
    /// `p`: uniform criterion weights instead of learned preferences.
    UniformWeights,
}

impl Variant {
    pub const ALL_ABLATIONS: [Variant; 4] = [
        Variant::OverallGraphOnly,
        Variant::UnitAdjustment,
        Variant::AllLinear,
        Variant::UniformWeights,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::OverallGraphOnly => "m",
            Variant::UnitAdjustment => "s",
            Variant::AllLinear => "f",
            Variant::UniformWeights => "p",
        }
    }

    /// The config actually run under this variant.
    pub fn effective_config(self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        match self {
            Variant::UnitAdjustment => cfg.s_f = uniform_adjustment(1.0),
            Variant::AllLinear => {
                cfg.filters = FilterConfig::all(
                    FilterChoice::Named(FilterFamily::Linear),
                    cfg.filters.per_criterion.len(),
                );
            }
            _ => {}
        }
        cfg
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Variant::None),
            "m" => Ok(Variant::OverallGraphOnly),
            "s" => Ok(Variant::UnitAdjustment),
            "f" => Ok(Variant::AllLinear),
            "p" => Ok(Variant::UniformWeights),
            other => Err(Error::Parameter(format!("unknown variant {other:?}"))),
        }
    }
}

/// Built model state: graph bank, preference weights, and the effective
/// (variant-applied) configuration.
pub struct Model {
    pub bank: ItemGraphBank,
    pub prefs: PreferenceMatrix,
    pub config: ModelConfig,
    pub variant: Variant,
    pub graph_build_s: f64,
    /// Normalized stacked rating matrix; enables scoring through the
    /// factored form x R~^T R~ when a filter runs over the unadjusted
    /// graph, which is much cheaper than a pass over the Gram matrix.
    r_norm: std::sync::Arc<SparseMatrix>,
    /// Force every graph pass through the materialized similarity matrix,
    /// disabling the factored shortcut; used by benchmarks that measure
    /// cost as a function of the graph's stored entries.
    pub force_materialized: bool,
    n_users: usize,
    n_items: usize,
}

/// The tensor the item graph is built from under a variant.
fn graph_input(train: &RatingTensor, variant: Variant) -> RatingTensor {
    if variant == Variant::OverallGraphOnly {
        RatingTensor {
            n_users: train.n_users,
            n_items: train.n_items,
            matrices: vec![train.overall().clone()],
            criterion_names: vec![train.criterion_names[0].clone()],
        }
    } else {
        train.clone()
    }
}

/// Restrict adjustment to the families the filter config references so
/// unused Hadamard powers are never materialized.
fn s_f_used(config: &ModelConfig) -> AdjustmentMap {
    let needed = config.filters.families();
    config
        .s_f
        .iter()
        .filter(|(f, _)| needed.contains(f))
        .map(|(&f, &s)| (f, s))
        .collect()
}

/// Build graph bank and preferences from the train fold.
pub fn build_model(train: &RatingTensor, base: &ModelConfig, variant: Variant) -> Result<Model> {
    let c1 = train.n_criteria();
    base.validate(c1)?;
    let config = variant.effective_config(base);

    let t0 = Instant::now();
    let input = graph_input(train, variant);
    let bank = graph::build_item_graph(&input, &s_f_used(&config), config.nnz_cap)?;
    let graph_build_s = t0.elapsed().as_secs_f64();
    finish_model(train, &input, bank, config, variant, graph_build_s)
}

/// Assemble a model around an already-built (e.g. cached) graph bank.
/// The bank must have been built from the same train fold and variant.
pub fn model_from_bank(
    train: &RatingTensor,
    bank: ItemGraphBank,
    base: &ModelConfig,
    variant: Variant,
) -> Result<Model> {
    let c1 = train.n_criteria();
    base.validate(c1)?;
    let config = variant.effective_config(base);
    if bank.n_items() != train.n_items {
        return Err(Error::DimensionMismatch {
            context: "cached graph bank",
            expected: train.n_items,
            found: bank.n_items(),
        });
    }
    let bank = bank.readjust(&s_f_used(&config))?;
    let input = graph_input(train, variant);
    finish_model(train, &input, bank, config, variant, 0.0)
}

fn finish_model(
    train: &RatingTensor,
    input: &RatingTensor,
    bank: ItemGraphBank,
    config: ModelConfig,
    variant: Variant,
    graph_build_s: f64,
) -> Result<Model> {
    let (r_norm, _) = sparse::bidegree_normalize(&graph::build_expansion(input)?)?;
    let prefs = if variant == Variant::UniformWeights {
        PreferenceMatrix::uniform(train.n_users, train.n_criteria())
    } else {
        prefs::build_preferences(train, config.s_t)?
    };
    Ok(Model {
        bank,
        prefs,
        config,
        variant,
        graph_build_s,
        r_norm: std::sync::Arc::new(r_norm),
        force_materialized: false,
        n_users: train.n_users,
        n_items: train.n_items,
    })
}

/// How one polynomial step x -> x P is evaluated.
enum GraphOp<'a> {
    Materialized(&'a SparseMatrix),
    /// P = R^T R applied as two rectangular products.
    Factored(&'a SparseMatrix),
}

/// y = X A for a block of `b` signals stored item-major: x[i*b + u] is
/// signal u's value at row-index i of A.
fn block_vec_mul(a: &SparseMatrix, x: &[f64], b: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), a.n_rows() * b);
    let mut y = vec![0.0; a.n_cols() * b];
    for i in 0..a.n_rows() {
        let xi = &x[i * b..(i + 1) * b];
        if xi.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (j, v) in a.row(i) {
            let yj = &mut y[j as usize * b..j as usize * b + b];
            for (o, &s) in yj.iter_mut().zip(xi) {
                *o += v * s;
            }
        }
    }
    y
}

/// y = X A^T for a block of `b` signals over A's column space.
fn block_vec_mul_t(a: &SparseMatrix, x: &[f64], b: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), a.n_cols() * b);
    let mut y = vec![0.0; a.n_rows() * b];
    for i in 0..a.n_rows() {
        let yi = &mut y[i * b..(i + 1) * b];
        for (j, v) in a.row(i) {
            let xj = &x[j as usize * b..j as usize * b + b];
            for (o, &s) in yi.iter_mut().zip(xj) {
                *o += v * s;
            }
        }
    }
    y
}

fn graph_step(op: &GraphOp<'_>, x: &[f64], b: usize) -> Vec<f64> {
    match op {
        GraphOp::Materialized(p) => block_vec_mul(p, x, b),
        GraphOp::Factored(r) => {
            let mid = block_vec_mul_t(r, x, b);
            block_vec_mul(r, &mid, b)
        }
    }
}

/// X * sum_k a_k P^k over a block, item-major in and out.
fn apply_polynomial_block(op: &GraphOp<'_>, coeffs: &[f64], x: Vec<f64>, b: usize) -> Vec<f64> {
    let mut acc = vec![0.0; x.len()];
    let mut power = x;
    for &a in coeffs {
        power = graph_step(op, &power, b);
        if a != 0.0 {
            for (o, &p) in acc.iter_mut().zip(&power) {
                *o += a * p;
            }
        }
    }
    acc
}

impl Model {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Cheap rebuild for a new configuration over the same train fold and
    /// variant: the normalized graph is reused, only Hadamard adjustments
    /// and preferences are recomputed.
    pub fn with_config(&self, train: &RatingTensor, config: ModelConfig) -> Result<Model> {
        config.validate(train.n_criteria())?;
        let t0 = Instant::now();
        let needed = config.filters.families();
        let s_f_used: AdjustmentMap = config
            .s_f
            .iter()
            .filter(|(f, _)| needed.contains(f))
            .map(|(&f, &s)| (f, s))
            .collect();
        let bank = self.bank.readjust(&s_f_used)?;
        let prefs = if self.variant == Variant::UniformWeights {
            PreferenceMatrix::uniform(self.n_users, train.n_criteria())
        } else {
            prefs::build_preferences(train, config.s_t)?
        };
        Ok(Model {
            bank,
            prefs,
            config,
            variant: self.variant,
            graph_build_s: self.graph_build_s + t0.elapsed().as_secs_f64(),
            r_norm: std::sync::Arc::clone(&self.r_norm),
            force_materialized: self.force_materialized,
            n_users: self.n_users,
            n_items: self.n_items,
        })
    }

    fn op_for<'a>(&'a self, graph: &'a SparseMatrix) -> GraphOp<'a> {
        let is_p_tilde = std::ptr::eq(graph, self.bank.p_tilde.as_ref());
        if !self.force_materialized && is_p_tilde && 2 * self.r_norm.nnz() < self.bank.p_tilde.nnz() {
            GraphOp::Factored(&self.r_norm)
        } else {
            GraphOp::Materialized(graph)
        }
    }

    /// Aggregated scores for a batch of users. Criteria sharing a filter
    /// polynomial and graph are pre-summed (filtering is linear), so each
    /// distinct filter costs one block pass regardless of C.
    pub fn score_users(&self, train: &RatingTensor, users: &[u32]) -> Result<Vec<DenseVector>> {
        let b = users.len();
        let c1 = train.n_criteria();
        let scale = 1.0 / c1 as f64;
        if b == 0 {
            return Ok(Vec::new());
        }

        // Group criteria by (coefficients, graph identity).
        struct Group<'a> {
            coeffs: Vec<f64>,
            graph: &'a SparseMatrix,
            criteria: Vec<usize>,
        }
        let mut groups: Vec<Group<'_>> = Vec::new();
        for (c, choice) in self.config.filters.per_criterion.iter().enumerate() {
            let graph = choice.graph(&self.bank)?;
            let coeffs = choice.coefficients();
            match groups
                .iter_mut()
                .find(|g| g.coeffs == coeffs && std::ptr::eq(g.graph, graph))
            {
                Some(g) => g.criteria.push(c),
                None => groups.push(Group {
                    coeffs,
                    graph,
                    criteria: vec![c],
                }),
            }
        }

        let mut acc = vec![0.0; self.n_items * b];
        for g in &groups {
            // Weighted block signal, item-major.
            let mut x = vec![0.0; self.n_items * b];
            for &c in &g.criteria {
                for (bu, &u) in users.iter().enumerate() {
                    let w = self.prefs.row(u as usize)[c] * scale;
                    if w == 0.0 {
                        continue;
                    }
                    for (i, v) in train.matrices[c].row(u as usize) {
                        x[i as usize * b + bu] += w * v;
                    }
                }
            }
            let op = self.op_for(g.graph);
            let y = apply_polynomial_block(&op, &g.coeffs, x, b);
            for (o, &v) in acc.iter_mut().zip(&y) {
                *o += v;
            }
        }

        let mut out = vec![vec![0.0; self.n_items]; b];
        for i in 0..self.n_items {
            for (bu, row) in out.iter_mut().enumerate() {
                row[i] = acc[i * b + bu];
            }
        }
        Ok(out)
    }

    /// Unweighted per-criterion smoothed scores s_{u,c} for one user.
    pub fn per_criterion_scores(&self, train: &RatingTensor, u: usize) -> Result<Vec<DenseVector>> {
        self.config
            .filters
            .per_criterion
            .iter()
            .enumerate()
            .map(|(c, choice)| {
                let mut signal = vec![0.0; self.n_items];
                for (i, v) in train.matrices[c].row(u) {
                    signal[i as usize] = v;
                }
                let op = self.op_for(choice.graph(&self.bank)?);
                Ok(apply_polynomial_block(&op, &choice.coefficients(), signal, 1))
            })
            .collect()
    }

    /// Score decomposition for one (user, item) pair.
    pub fn attribution(&self, train: &RatingTensor, u: usize, item: usize) -> Result<AttributionMap> {
        let per_criterion = self.per_criterion_scores(train, u)?;
        prefs::attribution(&self.prefs, &per_criterion, u, item)
    }
}

/// Items hidden from ranking for one user: every interaction in the
/// listed tensors.
fn build_mask(tensors: &[&RatingTensor], u: usize, n_items: usize) -> Vec<bool> {
    let mut mask = vec![false; n_items];
    for t in tensors {
        for m in &t.matrices {
            for (i, _) in m.row(u) {
                mask[i as usize] = true;
            }
        }
    }
    mask
}

/// Top-K recommendations for every user. `mask_tensors` lists the folds
/// whose interactions are hidden (train when evaluating on valid;
/// train + valid when evaluating on test).
pub fn recommend_all(
    model: &Model,
    train: &RatingTensor,
    mask_tensors: &[&RatingTensor],
    k: usize,
) -> Result<Vec<Vec<(u32, f64)>>> {
    let users: Vec<u32> = (0..model.n_users as u32).collect();
    let per_block: Vec<Vec<Vec<(u32, f64)>>> = users
        .par_chunks(BLOCK)
        .map(|chunk| -> Result<Vec<Vec<(u32, f64)>>> {
            let scores = model.score_users(train, chunk)?;
            Ok(chunk
                .iter()
                .zip(scores)
                .map(|(&u, s)| {
                    let mask = build_mask(mask_tensors, u as usize, model.n_items);
                    prefs::rank_topk(&s, &mask, k)
                        .into_iter()
                        .map(|i| (i, s[i as usize]))
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_block.concat())
}

/// Metric report for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub n_users_evaluated: usize,
    pub n_users_total: usize,
    pub graph_build_s: f64,
    pub filter_s: f64,
    pub total_s: f64,
}

impl EvalReport {
    /// Equality ignoring wall-clock noise.
    pub fn same_metrics(&self, other: &EvalReport) -> bool {
        self.recall == other.recall
            && self.ndcg == other.ndcg
            && self.n_users_evaluated == other.n_users_evaluated
    }
}

/// Full pipeline run evaluated against one held-out fold.
pub fn run_ca_gf(
    train: &RatingTensor,
    eval_fold: &RatingTensor,
    mask_tensors: &[&RatingTensor],
    config: &ModelConfig,
) -> Result<EvalReport> {
    run_variant(Variant::None, train, eval_fold, mask_tensors, config)
}

/// Report plus the ranked lists it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: EvalReport,
    pub recommendations: Vec<Vec<(u32, f64)>>,
}

/// Pipeline run with one ingredient ablated.
pub fn run_variant(
    variant: Variant,
    train: &RatingTensor,
    eval_fold: &RatingTensor,
    mask_tensors: &[&RatingTensor],
    config: &ModelConfig,
) -> Result<EvalReport> {
    let model = build_model(train, config, variant)?;
    Ok(evaluate_model(&model, train, eval_fold, mask_tensors)?.report)
}

/// Score, rank, and evaluate an already-built model.
pub fn evaluate_model(
    model: &Model,
    train: &RatingTensor,
    eval_fold: &RatingTensor,
    mask_tensors: &[&RatingTensor],
) -> Result<RunOutput> {
    let t0 = Instant::now();
    let truth = ground_truth_or_empty(eval_fold)?;
    let t_filter = Instant::now();
    let k_max = *model.config.k_list.iter().max().unwrap();
    let recs = recommend_all(model, train, mask_tensors, k_max)?;
    let filter_s = t_filter.elapsed().as_secs_f64();
    let mut report = score_against_truth(&model.config.k_list, &recs, &truth);
    report.graph_build_s = model.graph_build_s;
    report.filter_s = filter_s;
    report.total_s = model.graph_build_s + t0.elapsed().as_secs_f64();
    Ok(RunOutput {
        report,
        recommendations: recs,
    })
}

/// Ground truth, treating an empty eval fold as "no evaluable users"
/// rather than an error.
fn ground_truth_or_empty(eval_fold: &RatingTensor) -> Result<GroundTruth> {
    if eval_fold.overall().nnz() == 0 {
        return Ok(GroundTruth {
            positives: vec![Default::default(); eval_fold.n_users],
            median: f64::NAN,
        });
    }
    metrics::positives(eval_fold)
}

/// Average metrics over evaluable users.
pub fn score_against_truth(
    k_list: &[usize],
    recs: &[Vec<(u32, f64)>],
    truth: &GroundTruth,
) -> EvalReport {
    let mut recall: BTreeMap<usize, f64> = k_list.iter().map(|&k| (k, 0.0)).collect();
    let mut ndcg = recall.clone();
    let mut n_eval = 0usize;
    for (u, rec) in recs.iter().enumerate() {
        let t = &truth.positives[u];
        if t.is_empty() {
            continue;
        }
        n_eval += 1;
        let items: Vec<u32> = rec.iter().map(|&(i, _)| i).collect();
        for &k in k_list {
            *recall.get_mut(&k).unwrap() += metrics::recall_at_k(&items, t, k).unwrap();
            *ndcg.get_mut(&k).unwrap() += metrics::ndcg_at_k(&items, t, k).unwrap();
        }
    }
    if n_eval > 0 {
        for v in recall.values_mut().chain(ndcg.values_mut()) {
            *v /= n_eval as f64;
        }
    }
    EvalReport {
        recall,
        ndcg,
        n_users_evaluated: n_eval,
        n_users_total: recs.len(),
        graph_build_s: 0.0,
        filter_s: 0.0,
        total_s: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, split, SplitSpec, SyntheticSpec};
    use crate::spectral::reference_scores;
    use approx::assert_abs_diff_eq;

    fn small_tensor(seed: u64) -> RatingTensor {
        generate_synthetic(&SyntheticSpec {
            n_users: 12,
            n_items: 10,
            n_mc_ratings: 180,
            n_criteria: 3,
            sparsity: 0.5,
            seed,
        })
        .unwrap()
    }

    fn mixed_config() -> ModelConfig {
        let mut cfg = ModelConfig::defaults(3);
        cfg.filters = FilterConfig {
            per_criterion: vec![
                FilterChoice::Named(FilterFamily::Outward),
                FilterChoice::Named(FilterFamily::Inward),
                FilterChoice::Named(FilterFamily::Linear),
            ],
        };
        cfg.s_f = [
            (FilterFamily::Linear, 0.7),
            (FilterFamily::Inward, 1.0),
            (FilterFamily::Outward, 1.3),
        ]
        .into_iter()
        .collect();
        cfg.s_t = 2.0;
        cfg
    }

    #[test]
    fn scores_match_dense_reference() {
        for seed in [1, 2, 3] {
            let t = small_tensor(seed);
            let cfg = mixed_config();
            let model = build_model(&t, &cfg, Variant::None).unwrap();
            let users: Vec<u32> = (0..t.n_users as u32).collect();
            let got = model.score_users(&t, &users).unwrap();
            let expected =
                reference_scores(&t, &cfg.filters, &cfg.s_f, cfg.s_t, false, false).unwrap();
            for u in 0..t.n_users {
                for i in 0..t.n_items {
                    assert_abs_diff_eq!(got[u][i], expected[u][i], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn variant_reference_paths_agree() {
        let t = small_tensor(9);
        let cfg = mixed_config();
        for (variant, uniform, overall_only) in [
            (Variant::OverallGraphOnly, false, true),
            (Variant::UniformWeights, true, false),
        ] {
            let model = build_model(&t, &cfg, variant).unwrap();
            let users: Vec<u32> = (0..t.n_users as u32).collect();
            let got = model.score_users(&t, &users).unwrap();
            let expected =
                reference_scores(&t, &cfg.filters, &cfg.s_f, cfg.s_t, uniform, overall_only)
                    .unwrap();
            for u in 0..t.n_users {
                for i in 0..t.n_items {
                    assert_abs_diff_eq!(got[u][i], expected[u][i], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn blocked_scoring_independent_of_batch_split() {
        let t = small_tensor(4);
        let model = build_model(&t, &mixed_config(), Variant::None).unwrap();
        let users: Vec<u32> = (0..t.n_users as u32).collect();
        let whole = model.score_users(&t, &users).unwrap();
        for chunk_size in [1, 3, 5] {
            let mut pieces = Vec::new();
            for chunk in users.chunks(chunk_size) {
                pieces.extend(model.score_users(&t, chunk).unwrap());
            }
            for u in 0..t.n_users {
                for i in 0..t.n_items {
                    assert_abs_diff_eq!(whole[u][i], pieces[u][i], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn run_is_deterministic() {
        let t = small_tensor(6);
        let s = split(&t, &SplitSpec::default_with_seed(7)).unwrap();
        let cfg = mixed_config();
        let a = run_ca_gf(&s.train, &s.test, &[&s.train, &s.valid], &cfg).unwrap();
        let b = run_ca_gf(&s.train, &s.test, &[&s.train, &s.valid], &cfg).unwrap();
        assert!(a.same_metrics(&b));
        assert!(a.recall.values().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.ndcg.values().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn variant_identities_are_bit_exact() {
        let t = small_tensor(11);
        let s = split(&t, &SplitSpec::default_with_seed(3)).unwrap();
        let cfg = mixed_config();
        let masks: &[&RatingTensor] = &[&s.train, &s.valid];

        let mut unit = cfg.clone();
        unit.s_f = uniform_adjustment(1.0);
        let a = run_variant(Variant::UnitAdjustment, &s.train, &s.test, masks, &cfg).unwrap();
        let b = run_ca_gf(&s.train, &s.test, masks, &unit).unwrap();
        assert!(a.same_metrics(&b));

        let mut all_l = cfg.clone();
        all_l.filters = FilterConfig::all(FilterChoice::Named(FilterFamily::Linear), 3);
        let a = run_variant(Variant::AllLinear, &s.train, &s.test, masks, &cfg).unwrap();
        let b = run_ca_gf(&s.train, &s.test, masks, &all_l).unwrap();
        assert!(a.same_metrics(&b));
    }

    #[test]
    fn uniform_variant_is_unweighted_mean() {
        let t = small_tensor(13);
        let cfg = mixed_config();
        let model = build_model(&t, &cfg, Variant::UniformWeights).unwrap();
        let u = 2usize;
        let got = &model.score_users(&t, &[u as u32]).unwrap()[0];
        let per = model.per_criterion_scores(&t, u).unwrap();
        for i in 0..t.n_items {
            let mean: f64 = per.iter().map(|s| s[i]).sum::<f64>() / per.len() as f64;
            assert_abs_diff_eq!(got[i], mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn attribution_decomposes_final_score() {
        let t = small_tensor(17);
        let cfg = mixed_config();
        let model = build_model(&t, &cfg, Variant::None).unwrap();
        let scores = model.score_users(&t, &[0]).unwrap();
        for item in 0..t.n_items {
            let a = model.attribution(&t, 0, item).unwrap();
            assert_abs_diff_eq!(a.final_score(), scores[0][item], epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_eval_fold_gives_empty_report() {
        let t = small_tensor(20);
        let empty = RatingTensor {
            n_users: t.n_users,
            n_items: t.n_items,
            matrices: (0..t.n_criteria())
                .map(|_| SparseMatrix::from_triplets(t.n_users, t.n_items, vec![]).unwrap())
                .collect(),
            criterion_names: t.criterion_names.clone(),
        };
        let report = run_ca_gf(&t, &empty, &[&t], &ModelConfig::defaults(3)).unwrap();
        assert_eq!(report.n_users_evaluated, 0);
        assert_eq!(report.recall[&10], 0.0);
    }

    #[test]
    fn masked_items_never_recommended() {
        let t = small_tensor(23);
        let s = split(&t, &SplitSpec::default_with_seed(5)).unwrap();
        let model = build_model(&s.train, &ModelConfig::defaults(3), Variant::None).unwrap();
        let recs = recommend_all(&model, &s.train, &[&s.train, &s.valid], 10).unwrap();
        for (u, rec) in recs.iter().enumerate() {
            let mask = build_mask(&[&s.train, &s.valid], u, t.n_items);
            for &(i, _) in rec {
                assert!(!mask[i as usize]);
            }
        }
    }

    #[test]
    fn factored_and_materialized_paths_agree() {
        let t = small_tensor(29);
        let cfg = ModelConfig::defaults(3); // all s_f = 1 -> factored eligible
        let model = build_model(&t, &cfg, Variant::None).unwrap();
        let users: Vec<u32> = (0..t.n_users as u32).collect();
        let got = model.score_users(&t, &users).unwrap();
        // Manual pass over the materialized Gram matrix.
        for u in 0..t.n_users {
            let mut expected = vec![0.0; t.n_items];
            for c in 0..3 {
                let mut sig = vec![0.0; t.n_items];
                for (i, v) in t.matrices[c].row(u) {
                    sig[i as usize] = v;
                }
                let sm = model.bank.p_tilde.vec_mul(&sig).unwrap();
                let w = model.prefs.row(u)[c] / 3.0;
                for i in 0..t.n_items {
                    expected[i] += w * sm[i];
                }
            }
            for i in 0..t.n_items {
                assert_abs_diff_eq!(got[u][i], expected[i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn variant_labels_round_trip() {
        for v in [Variant::None, Variant::OverallGraphOnly, Variant::UnitAdjustment,
                  Variant::AllLinear, Variant::UniformWeights] {
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
        assert!("x".parse::<Variant>().is_err());
    }
}
