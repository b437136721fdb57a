//! Run configuration: one TOML file drives every command, with CLI
//! overrides layered on top. The effective configuration is fingerprinted
//! and embedded in every output artifact.

use crate::baseline::BaselineConfig;
use crate::cache::fnv1a;
use crate::error::{Error, Result};
use crate::filter::{FilterChoice, FilterConfig};
use crate::graph::{AdjustmentMap, FilterFamily, DEFAULT_NNZ_CAP};
use crate::ingest::{RatingFormat, SplitSpec, SyntheticSpec};
use crate::pipeline::{ModelConfig, Variant};
use crate::tune::{SearchStrategy, TuneSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Filter selection as written in TOML: a family label or a coefficient
/// array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterSpec {
    Named(String),
    Coeffs(Vec<f64>),
}

impl FilterSpec {
    pub fn to_choice(&self) -> Result<FilterChoice> {
        match self {
            FilterSpec::Named(s) => Ok(FilterChoice::Named(s.parse()?)),
            FilterSpec::Coeffs(a) => {
                let c = FilterChoice::Coeffs(a.clone());
                c.validate()?;
                Ok(c)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Ratings file; unset means commands must generate synthetic data.
    pub path: Option<PathBuf>,
    pub format: String,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            format: "wide".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub valid_fraction_of_train: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            valid_fraction_of_train: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub nnz_cap: usize,
    /// Cache the built graph bank under the output directory.
    pub cache: bool,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            nnz_cap: DEFAULT_NNZ_CAP,
            cache: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FiltersSection {
    /// One entry per criterion; empty means all first-order.
    pub per_criterion: Vec<FilterSpec>,
    /// Adjustment exponent per family label.
    pub s_f: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggSection {
    pub s_t: f64,
}

impl Default for AggSection {
    fn default() -> Self {
        Self { s_t: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k_list: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { k_list: vec![5, 10] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub alpha: f64,
    pub ideal_rank: usize,
    pub dense_cap: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let d = BaselineConfig::default();
        Self {
            alpha: d.alpha,
            ideal_rank: d.ideal_rank,
            dense_cap: d.dense_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub strategy: String,
    pub s_f_grid: Vec<f64>,
    pub s_t_grid: Vec<f64>,
    pub objective_k: usize,
}

impl Default for TuneSection {
    fn default() -> Self {
        let d = TuneSpec::default();
        Self {
            strategy: "exhaustive".into(),
            s_f_grid: d.s_f_grid,
            s_t_grid: d.s_t_grid,
            objective_k: d.objective_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Ladder rungs above this rating count are skipped.
    pub max_mc_ratings: usize,
    /// Users scored per timing measurement; a fixed batch isolates
    /// graph-size scaling from population growth.
    pub batch_users: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            max_mc_ratings: 6_000_000,
            batch_users: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_users: usize,
    pub n_items: usize,
    pub n_mc_ratings: usize,
    pub n_criteria: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n_users: 1_500,
            n_items: 3_000,
            n_mc_ratings: 300_000,
            n_criteria: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// 0 means all available cores.
    pub threads: usize,
    pub variant: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            variant: "none".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub split: SplitSection,
    pub graph: GraphSection,
    pub filters: FiltersSection,
    pub agg: AggSection,
    pub eval: EvalSection,
    pub baseline: BaselineSection,
    pub tune: TuneSection,
    pub bench: BenchSection,
    pub synth: SynthSection,
    pub output: OutputSection,
    pub run: RunSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn rating_format(&self) -> Result<RatingFormat> {
        self.data.format.parse()
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train_fraction,
            valid_fraction_of_train: self.split.valid_fraction_of_train,
            seed: self.run.seed,
        }
    }

    pub fn variant(&self) -> Result<Variant> {
        self.run.variant.parse()
    }

    fn s_f_map(&self) -> Result<AdjustmentMap> {
        let mut map: AdjustmentMap =
            FilterFamily::ALL.iter().map(|&f| (f, 1.0)).collect();
        for (label, &s) in &self.filters.s_f {
            map.insert(label.parse()?, s);
        }
        Ok(map)
    }

    /// Scoring configuration for a tensor with `n_criteria` criteria.
    pub fn model_config(&self, n_criteria: usize) -> Result<ModelConfig> {
        let filters = if self.filters.per_criterion.is_empty() {
            FilterConfig::all(FilterChoice::Named(FilterFamily::Linear), n_criteria)
        } else {
            FilterConfig {
                per_criterion: self
                    .filters
                    .per_criterion
                    .iter()
                    .map(|f| f.to_choice())
                    .collect::<Result<_>>()?,
            }
        };
        let cfg = ModelConfig {
            filters,
            s_f: self.s_f_map()?,
            s_t: self.agg.s_t,
            k_list: self.eval.k_list.clone(),
            nnz_cap: self.graph.nnz_cap,
        };
        cfg.validate(n_criteria)?;
        Ok(cfg)
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            alpha: self.baseline.alpha,
            ideal_rank: self.baseline.ideal_rank,
            dense_cap: self.baseline.dense_cap,
            k_list: self.eval.k_list.clone(),
        }
    }

    pub fn tune_spec(&self) -> Result<TuneSpec> {
        Ok(TuneSpec {
            strategy: self.tune.strategy.parse::<SearchStrategy>()?,
            s_f_grid: self.tune.s_f_grid.clone(),
            s_t_grid: self.tune.s_t_grid.clone(),
            objective_k: self.tune.objective_k,
        })
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let interactions =
            self.synth.n_mc_ratings as f64 / self.synth.n_criteria.max(1) as f64;
        SyntheticSpec {
            n_users: self.synth.n_users,
            n_items: self.synth.n_items,
            n_mc_ratings: self.synth.n_mc_ratings,
            n_criteria: self.synth.n_criteria,
            sparsity: 1.0 - interactions / (self.synth.n_users.max(1) as f64
                * self.synth.n_items.max(1) as f64),
            seed: self.run.seed,
        }
    }

    /// Stable fingerprint of the effective configuration. Thread count and
    /// output directory are excluded: neither changes results, and
    /// identical runs must stamp identical hashes regardless of
    /// parallelism or destination.
    pub fn config_hash(&self) -> u64 {
        let mut canonical = self.clone();
        canonical.run.threads = 0;
        canonical.output = OutputSection::default();
        let text = toml::to_string(&canonical).expect("config serializes");
        fnv1a(text.as_bytes())
    }

    /// Effective TOML text, written next to outputs for reproduction.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Fingerprint of one model configuration (used for leaderboard rows,
/// where candidates differ below the run-config level).
pub fn model_config_hash(cfg: &ModelConfig, seed: u64) -> u64 {
    let mut text = String::new();
    for c in &cfg.filters.per_criterion {
        text.push_str(&format!("{c};"));
    }
    for (f, s) in &cfg.s_f {
        text.push_str(&format!("{f}={s};"));
    }
    text.push_str(&format!("s_t={};seed={seed}", cfg.s_t));
    fnv1a(text.as_bytes())
}
