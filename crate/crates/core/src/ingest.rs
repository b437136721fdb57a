//! Rating-file ingestion, train/validation/test splitting and synthetic
//! dataset generation.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// C+1 sparse user-item rating matrices sharing one user/item index space.
/// Criterion 0 is always the overall rating; an interaction present in any
/// criterion matrix is present in the overall matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTensor {
    pub n_users: usize,
    pub n_items: usize,
    pub matrices: Vec<SparseMatrix>,
    pub criterion_names: Vec<String>,
}

impl RatingTensor {
    /// Number of criteria including the overall rating (C+1).
    pub fn n_criteria(&self) -> usize {
        self.matrices.len()
    }

    pub fn overall(&self) -> &SparseMatrix {
        &self.matrices[0]
    }

    pub fn nnz_total(&self) -> usize {
        self.matrices.iter().map(|m| m.nnz()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.matrices.is_empty() {
            return Err(Error::Parameter("tensor has no criteria".into()));
        }
        if self.criterion_names.len() != self.matrices.len() {
            return Err(Error::Parameter("criterion name count mismatch".into()));
        }
        for m in &self.matrices {
            if m.n_rows() != self.n_users || m.n_cols() != self.n_items {
                return Err(Error::DimensionMismatch {
                    context: "rating tensor",
                    expected: self.n_users,
                    found: m.n_rows(),
                });
            }
        }
        if self.overall().nnz() == 0 {
            return Err(Error::Parameter("overall matrix is empty".into()));
        }
        // Overall-matrix dominance.
        for c in 1..self.matrices.len() {
            for u in 0..self.n_users {
                let overall: Vec<u32> = self.overall().row(u).map(|(i, _)| i).collect();
                for (i, _) in self.matrices[c].row(u) {
                    if overall.binary_search(&i).is_err() {
                        return Err(Error::Parameter(format!(
                            "criterion {c} entry ({u}, {i}) missing from overall matrix"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// On-disk layout of a rating file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingFormat {
    /// `user_id,item_id,rating_0,...,rating_C`; a zero criterion column
    /// means "unrated for that criterion".
    Wide,
    /// `user_id,item_id,criterion,rating`
    Long,
}

impl std::str::FromStr for RatingFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(Self::Wide),
            "long" => Ok(Self::Long),
            other => Err(Error::Parameter(format!("unknown rating format {other:?}"))),
        }
    }
}

/// A loaded tensor plus the id-remap tables and loader diagnostics.
#[derive(Debug)]
pub struct LoadOutcome {
    pub tensor: RatingTensor,
    /// Internal user index -> original id.
    pub user_ids: Vec<i64>,
    /// Internal item index -> original id.
    pub item_ids: Vec<i64>,
    /// Interactions dropped because they had no overall rating.
    pub dropped_missing_overall: usize,
    /// Duplicate (user, item, criterion) entries resolved last-wins.
    pub duplicates: usize,
}

pub fn load_ratings(path: &Path, format: RatingFormat) -> Result<LoadOutcome> {
    let file = std::fs::File::open(path)?;
    parse_ratings(BufReader::new(file), format, &path.display().to_string())
}

pub fn parse_ratings<R: BufRead>(
    reader: R,
    format: RatingFormat,
    path: &str,
) -> Result<LoadOutcome> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_string(),
        line,
        msg,
    };

    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty file".into()))?;
    let header = header?;
    let head: Vec<&str> = header.trim().split(',').collect();

    let criterion_names: Vec<String>;
    let n_criteria_wide;
    match format {
        RatingFormat::Wide => {
            if head.len() < 3 || head[0] != "user_id" || head[1] != "item_id" {
                return Err(err(1, format!("bad wide header {header:?}")));
            }
            criterion_names = head[2..].iter().map(|s| s.to_string()).collect();
            n_criteria_wide = criterion_names.len();
        }
        RatingFormat::Long => {
            if head != ["user_id", "item_id", "criterion", "rating"] {
                return Err(err(1, format!("bad long header {header:?}")));
            }
            criterion_names = Vec::new();
            n_criteria_wide = 0;
        }
    }

    // (user, item, criterion) -> rating, last-wins.
    let mut entries: BTreeMap<(i64, i64, usize), f64> = BTreeMap::new();
    let mut duplicates = 0usize;
    let mut max_criterion = 0usize;

    for (idx, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        match format {
            RatingFormat::Wide => {
                if fields.len() != 2 + n_criteria_wide {
                    return Err(err(lineno, format!("expected {} fields", 2 + n_criteria_wide)));
                }
                let u: i64 = fields[0]
                    .parse()
                    .map_err(|e| err(lineno, format!("user_id: {e}")))?;
                let i: i64 = fields[1]
                    .parse()
                    .map_err(|e| err(lineno, format!("item_id: {e}")))?;
                for (c, f) in fields[2..].iter().enumerate() {
                    let v: f64 = f.parse().map_err(|e| err(lineno, format!("rating: {e}")))?;
                    if v != 0.0 {
                        if entries.insert((u, i, c), v).is_some() {
                            duplicates += 1;
                        }
                    }
                }
            }
            RatingFormat::Long => {
                if fields.len() != 4 {
                    return Err(err(lineno, "expected 4 fields".into()));
                }
                let u: i64 = fields[0]
                    .parse()
                    .map_err(|e| err(lineno, format!("user_id: {e}")))?;
                let i: i64 = fields[1]
                    .parse()
                    .map_err(|e| err(lineno, format!("item_id: {e}")))?;
                let c: usize = fields[2]
                    .parse()
                    .map_err(|e| err(lineno, format!("criterion: {e}")))?;
                let v: f64 = fields[3]
                    .parse()
                    .map_err(|e| err(lineno, format!("rating: {e}")))?;
                max_criterion = max_criterion.max(c);
                if v != 0.0 {
                    if entries.insert((u, i, c), v).is_some() {
                        duplicates += 1;
                    }
                }
            }
        }
    }

    let n_criteria = match format {
        RatingFormat::Wide => n_criteria_wide,
        RatingFormat::Long => max_criterion + 1,
    };
    if n_criteria == 0 {
        return Err(err(1, "no criterion columns".into()));
    }
    let criterion_names = if criterion_names.is_empty() {
        (0..n_criteria).map(|c| format!("rating_{c}")).collect()
    } else {
        criterion_names
    };

    // Drop interactions that have no overall rating: the protocol ranks
    // with respect to the overall rating only.
    let with_overall: HashSet<(i64, i64)> = entries
        .keys()
        .filter(|&&(_, _, c)| c == 0)
        .map(|&(u, i, _)| (u, i))
        .collect();
    let before = entries
        .keys()
        .map(|&(u, i, _)| (u, i))
        .collect::<HashSet<_>>()
        .len();
    entries.retain(|&(u, i, _), _| with_overall.contains(&(u, i)));
    let dropped_missing_overall = before - with_overall.len();

    // Remap ids to dense 0-based indices in ascending id order.
    let mut user_ids: Vec<i64> = with_overall.iter().map(|&(u, _)| u).collect();
    let mut item_ids: Vec<i64> = with_overall.iter().map(|&(_, i)| i).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    item_ids.sort_unstable();
    item_ids.dedup();
    if user_ids.is_empty() {
        return Err(err(1, "no interactions with an overall rating".into()));
    }
    let user_index: BTreeMap<i64, u32> = user_ids
        .iter()
        .enumerate()
        .map(|(k, &id)| (id, k as u32))
        .collect();
    let item_index: BTreeMap<i64, u32> = item_ids
        .iter()
        .enumerate()
        .map(|(k, &id)| (id, k as u32))
        .collect();

    let mut triplets: Vec<Vec<(u32, u32, f64)>> = vec![Vec::new(); n_criteria];
    for (&(u, i, c), &v) in &entries {
        triplets[c].push((user_index[&u], item_index[&i], v));
    }
    let matrices = triplets
        .into_iter()
        .map(|t| SparseMatrix::from_triplets(user_ids.len(), item_ids.len(), t))
        .collect::<Result<Vec<_>>>()?;

    let tensor = RatingTensor {
        n_users: user_ids.len(),
        n_items: item_ids.len(),
        matrices,
        criterion_names,
    };
    tensor.validate()?;
    Ok(LoadOutcome {
        tensor,
        user_ids,
        item_ids,
        dropped_missing_overall,
        duplicates,
    })
}

/// Write a tensor back to disk. Wide rows are sorted by (user, item);
/// criteria missing an entry are written as 0.
pub fn save_ratings<W: Write>(tensor: &RatingTensor, out: &mut W, format: RatingFormat) -> Result<()> {
    match format {
        RatingFormat::Wide => {
            write!(out, "user_id,item_id")?;
            for name in &tensor.criterion_names {
                write!(out, ",{name}")?;
            }
            writeln!(out)?;
            for u in 0..tensor.n_users {
                for (i, _) in tensor.overall().row(u) {
                    write!(out, "{u},{i}")?;
                    for m in &tensor.matrices {
                        let v = m.row(u).find(|&(j, _)| j == i).map_or(0.0, |(_, v)| v);
                        write!(out, ",{v}")?;
                    }
                    writeln!(out)?;
                }
            }
        }
        RatingFormat::Long => {
            writeln!(out, "user_id,item_id,criterion,rating")?;
            for (c, m) in tensor.matrices.iter().enumerate() {
                for u in 0..tensor.n_users {
                    for (i, v) in m.row(u) {
                        writeln!(out, "{u},{i},{c},{v}")?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Train/validation/test split parameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub valid_fraction_of_train: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// Default 80/20 + 10% fractions with an explicit seed.
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            valid_fraction_of_train: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Fold {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for Fold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fold::Train => "train",
            Fold::Valid => "valid",
            Fold::Test => "test",
        })
    }
}

#[derive(Debug)]
pub struct Split {
    pub train: RatingTensor,
    pub valid: RatingTensor,
    pub test: RatingTensor,
    /// Users with fewer than 2 overall interactions, placed wholly in train.
    pub underfilled_users: usize,
    /// (user, item, fold) assignment for the manifest.
    pub assignment: Vec<(u32, u32, Fold)>,
}

/// Partition each user's overall interactions into train/valid/test; all
/// criterion ratings follow their (user, item) interaction into the same
/// fold. Per user: test = max(1, round((1 - train_fraction) * n)),
/// valid = floor(valid_fraction_of_train * (n - test)).
pub fn split(t: &RatingTensor, spec: &SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)
        || !(spec.valid_fraction_of_train > 0.0 && spec.valid_fraction_of_train < 1.0)
    {
        return Err(Error::Parameter("split fractions must lie in (0,1)".into()));
    }
    let mut assignment: Vec<(u32, u32, Fold)> = Vec::with_capacity(t.overall().nnz());
    let mut underfilled = 0usize;
    for u in 0..t.n_users {
        let mut items: Vec<u32> = t.overall().row(u).map(|(i, _)| i).collect();
        let n = items.len();
        if n == 0 {
            continue;
        }
        if n < 2 {
            underfilled += 1;
            for i in items {
                assignment.push((u as u32, i, Fold::Train));
            }
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(splitmix(u as u64)));
        items.shuffle(&mut rng);
        let mut test_n = ((1.0 - spec.train_fraction) * n as f64).round() as usize;
        test_n = test_n.clamp(1, n - 1);
        let train_n = n - test_n;
        let valid_n = (spec.valid_fraction_of_train * train_n as f64).floor() as usize;
        for (k, &i) in items.iter().enumerate() {
            let fold = if k < train_n - valid_n {
                Fold::Train
            } else if k < train_n {
                Fold::Valid
            } else {
                Fold::Test
            };
            assignment.push((u as u32, i, fold));
        }
    }
    assignment.sort_unstable();

    let fold_of: std::collections::HashMap<(u32, u32), Fold> = assignment
        .iter()
        .map(|&(u, i, f)| ((u, i), f))
        .collect();
    let make = |fold: Fold| -> Result<RatingTensor> {
        let matrices = t
            .matrices
            .iter()
            .map(|m| {
                let mut triplets = Vec::new();
                for u in 0..t.n_users {
                    for (i, v) in m.row(u) {
                        if fold_of.get(&(u as u32, i)) == Some(&fold) {
                            triplets.push((u as u32, i, v));
                        }
                    }
                }
                SparseMatrix::from_triplets(t.n_users, t.n_items, triplets)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RatingTensor {
            n_users: t.n_users,
            n_items: t.n_items,
            matrices,
            criterion_names: t.criterion_names.clone(),
        })
    };
    Ok(Split {
        train: make(Fold::Train)?,
        valid: make(Fold::Valid)?,
        test: make(Fold::Test)?,
        underfilled_users: underfilled,
        assignment,
    })
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Parameters for the synthetic benchmark generator.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Total rating count summed over all criteria.
    pub n_mc_ratings: usize,
    /// Criterion count including overall (C+1).
    pub n_criteria: usize,
    /// Target sparsity (informational; interactions are derived from
    /// n_mc_ratings).
    pub sparsity: f64,
    pub seed: u64,
}

/// The seven synthetic sizes used for scalability benchmarks, smallest
/// first: (users, items, total MC ratings) with five criteria each.
pub fn benchmark_ladder(seed: u64) -> Vec<SyntheticSpec> {
    let sizes: [(usize, usize, usize); 7] = [
        (1_500, 3_000, 300_000),
        (2_500, 5_500, 1_000_000),
        (4_000, 6_000, 1_800_000),
        (5_000, 9_000, 3_400_000),
        (8_000, 10_000, 6_000_000),
        (10_000, 15_000, 11_000_000),
        (25_000, 20_000, 38_000_000),
    ];
    sizes
        .iter()
        .map(|&(n_users, n_items, n_mc_ratings)| {
            let n_criteria = 5;
            let interactions = n_mc_ratings as f64 / n_criteria as f64;
            SyntheticSpec {
                n_users,
                n_items,
                n_mc_ratings,
                n_criteria,
                sparsity: 1.0 - interactions / (n_users as f64 * n_items as f64),
                seed,
            }
        })
        .collect()
}

/// Generate a synthetic tensor with uniformly sampled distinct (user, item)
/// interactions.
///
/// Ratings carry latent structure so the pipeline's ingredients each have
/// signal to recover: every sub-criterion has its own per-item attribute
/// (plus a shared user-group x item-group affinity), each user favors one
/// sub-criterion — rating it more generously and weighting it most in
/// their overall rating — and the overall rating is a favored-weighted
/// blend of the sub-criterion ratings. Criterion ratings therefore
/// correlate with the overall rating, item similarity is better estimated
/// from all criteria than from the overall matrix alone, and per-user
/// rating sums reveal which criterion drives each user's overall rating.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<RatingTensor> {
    if spec.n_criteria == 0 || spec.n_users == 0 || spec.n_items == 0 {
        return Err(Error::Parameter("synthetic spec has a zero dimension".into()));
    }
    if spec.n_mc_ratings > spec.n_users * spec.n_items * spec.n_criteria {
        return Err(Error::Parameter(format!(
            "{} MC ratings do not fit a {}x{}x{} tensor",
            spec.n_mc_ratings, spec.n_users, spec.n_items, spec.n_criteria
        )));
    }
    let n_interactions = (spec.n_mc_ratings as f64 / spec.n_criteria as f64).round() as usize;
    if n_interactions == 0 {
        return Err(Error::Parameter("spec implies zero interactions".into()));
    }
    if n_interactions > spec.n_users * spec.n_items {
        return Err(Error::Parameter(
            "implied interaction count exceeds the user-item grid".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    const N_GROUPS: usize = 4;
    let user_group: Vec<usize> = (0..spec.n_users).map(|_| rng.gen_range(0..N_GROUPS)).collect();
    let item_group: Vec<usize> = (0..spec.n_items).map(|_| rng.gen_range(0..N_GROUPS)).collect();
    // One attribute profile per criterion; criterion 0's is used directly
    // only in the single-criterion case.
    let item_attr: Vec<Vec<f64>> = (0..spec.n_criteria.max(1))
        .map(|_| (0..spec.n_items).map(|_| rng.gen_range(1.0..=5.0)).collect())
        .collect();
    let affinity: Vec<f64> = (0..N_GROUPS * N_GROUPS)
        .map(|_| rng.gen_range(1.0..=5.0))
        .collect();
    // Favored sub-criterion per user (unused when there are none).
    let favored: Vec<usize> = (0..spec.n_users)
        .map(|_| {
            if spec.n_criteria > 1 {
                rng.gen_range(1..spec.n_criteria)
            } else {
                0
            }
        })
        .collect();

    // Distinct (user, item) pairs, uniform over the grid.
    let mut pairs: HashSet<(u32, u32)> = HashSet::with_capacity(n_interactions);
    let grid = spec.n_users * spec.n_items;
    if n_interactions * 2 > grid {
        // Dense regime: sample by index shuffle.
        let mut all: Vec<usize> = (0..grid).collect();
        all.shuffle(&mut rng);
        for &k in all.iter().take(n_interactions) {
            pairs.insert(((k / spec.n_items) as u32, (k % spec.n_items) as u32));
        }
    } else {
        while pairs.len() < n_interactions {
            let u = rng.gen_range(0..spec.n_users) as u32;
            let i = rng.gen_range(0..spec.n_items) as u32;
            pairs.insert((u, i));
        }
    }
    let mut pairs: Vec<(u32, u32)> = pairs.into_iter().collect();
    pairs.sort_unstable();

    let mut triplets: Vec<Vec<(u32, u32, f64)>> =
        vec![Vec::with_capacity(n_interactions); spec.n_criteria];
    for &(u, i) in &pairs {
        let aff = affinity[user_group[u as usize] * N_GROUPS + item_group[i as usize]];
        if spec.n_criteria == 1 {
            let latent = 0.45 * item_attr[0][i as usize] + 0.55 * aff;
            let jitter: f64 = rng.gen_range(-0.75..=0.75);
            triplets[0].push((u, i, (latent + jitter).round().clamp(1.0, 5.0)));
            continue;
        }
        // Continuous sub-criterion levels, then the overall rating as
        // their favored-weighted blend.
        let mut blend = 0.0;
        let mut weight_sum = 0.0;
        let mut raw = vec![0.0; spec.n_criteria];
        for c in 1..spec.n_criteria {
            let boost = if favored[u as usize] == c { 0.8 } else { 0.0 };
            let jitter: f64 = rng.gen_range(-0.6..=0.6);
            let level = 0.45 * item_attr[c][i as usize] + 0.35 * aff + boost + jitter;
            raw[c] = level;
            let w = if favored[u as usize] == c { 4.0 } else { 1.0 };
            blend += w * level;
            weight_sum += w;
        }
        let jitter: f64 = rng.gen_range(-0.4..=0.4);
        triplets[0].push((u, i, (blend / weight_sum + jitter).round().clamp(1.0, 5.0)));
        for c in 1..spec.n_criteria {
            triplets[c].push((u, i, raw[c].round().clamp(1.0, 5.0)));
        }
    }

    let matrices = triplets
        .into_iter()
        .map(|t| SparseMatrix::from_triplets(spec.n_users, spec.n_items, t))
        .collect::<Result<Vec<_>>>()?;
    let criterion_names = (0..spec.n_criteria).map(|c| format!("rating_{c}")).collect();
    Ok(RatingTensor {
        n_users: spec.n_users,
        n_items: spec.n_items,
        matrices,
        criterion_names,
    })
}
