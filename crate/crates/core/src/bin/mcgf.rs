//! Command-line entry point: config-driven preparation, evaluation,
//! tuning, attribution, benchmarking, and synthetic data generation.

use clap::{Parser, Subcommand};
use mcgf::artifacts::{self, BenchRow};
use mcgf::baseline;
use mcgf::cache;
use mcgf::config::{model_config_hash, FilterSpec, RunConfig};
use mcgf::error::{Error, Result};
use mcgf::filter::FilterChoice;
use mcgf::ingest::{self, RatingTensor, Split};
use mcgf::pipeline::{self, Variant};
use mcgf::tune;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "mcgf",
    about = "Training-free multi-criteria recommendation via graph filtering",
    version
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides [run].seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides [run].threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides [output].dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Ablation variant: none, m, s, f, or p.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Evaluate a baseline instead of the main pipeline (gfcf-mc).
    #[arg(long, global = true)]
    baseline: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the dataset and optionally cache the built graph bank.
    Prepare,
    /// Score the test fold; writes a report and recommendation lists.
    Evaluate,
    /// Search filters and exponents on the validation fold.
    Tune,
    /// Decompose one prediction into per-criterion contributions.
    Attribution {
        #[arg(long)]
        user: i64,
        #[arg(long)]
        item: i64,
    },
    /// Time graph builds and scoring over the synthetic size ladder.
    Bench,
    /// Generate a synthetic multi-criteria rating file.
    Synth,
}

struct Dataset {
    tensor: RatingTensor,
    user_ids: Vec<i64>,
    item_ids: Vec<i64>,
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data.path {
        Some(path) => {
            let outcome = ingest::load_ratings(path, cfg.rating_format()?)?;
            if outcome.dropped_missing_overall > 0 {
                eprintln!(
                    "warning: dropped {} interactions without an overall rating",
                    outcome.dropped_missing_overall
                );
            }
            if outcome.duplicates > 0 {
                eprintln!(
                    "warning: {} duplicate entries resolved last-wins",
                    outcome.duplicates
                );
            }
            Ok(Dataset {
                tensor: outcome.tensor,
                user_ids: outcome.user_ids,
                item_ids: outcome.item_ids,
            })
        }
        None => {
            let tensor = ingest::generate_synthetic(&cfg.synthetic_spec())?;
            let (user_ids, item_ids) = artifacts::tensor_identity_ids(&tensor);
            Ok(Dataset {
                tensor,
                user_ids,
                item_ids,
            })
        }
    }
}

fn split_dataset(cfg: &RunConfig, ds: &Dataset) -> Result<Split> {
    let split = ingest::split(&ds.tensor, &cfg.split_spec())?;
    if split.underfilled_users > 0 {
        eprintln!(
            "warning: {} users with <2 interactions placed wholly in train",
            split.underfilled_users
        );
    }
    Ok(split)
}

fn write_effective_config(cfg: &RunConfig) -> Result<()> {
    let text = format!(
        "{}{}",
        artifacts::stamp(cfg.config_hash(), cfg.run.seed),
        cfg.to_toml()
    );
    artifacts::write_atomic(&cfg.output.dir.join("effective_config.toml"), &text)
}

fn bank_cache_path(cfg: &RunConfig) -> PathBuf {
    cfg.output.dir.join("graph_bank.bin")
}

fn cmd_prepare(cfg: &RunConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let split = split_dataset(cfg, &ds)?;
    let out = &cfg.output.dir;
    artifacts::write_atomic(
        &out.join("split_manifest.csv"),
        &artifacts::split_manifest_csv(
            &split,
            &ds.user_ids,
            &ds.item_ids,
            cfg.config_hash(),
            cfg.run.seed,
        ),
    )?;
    artifacts::write_atomic(
        &out.join("user_ids.csv"),
        &artifacts::id_map_csv("user_id", &ds.user_ids),
    )?;
    artifacts::write_atomic(
        &out.join("item_ids.csv"),
        &artifacts::id_map_csv("item_id", &ds.item_ids),
    )?;
    if cfg.graph.cache {
        let model_cfg = cfg.model_config(split.train.n_criteria())?;
        let model = pipeline::build_model(&split.train, &model_cfg, cfg.variant()?)?;
        cache::save_bank(&bank_cache_path(cfg), &model.bank)?;
    }
    write_effective_config(cfg)?;
    let (n_train, n_valid, n_test) = artifacts::fold_counts(&split);
    println!(
        "prepared: {} users, {} items, folds train={n_train} valid={n_valid} test={n_test}",
        ds.tensor.n_users, ds.tensor.n_items
    );
    Ok(())
}

fn build_model_maybe_cached(
    cfg: &RunConfig,
    train: &RatingTensor,
    variant: Variant,
) -> Result<pipeline::Model> {
    let model_cfg = cfg.model_config(train.n_criteria())?;
    if cfg.graph.cache {
        let path = bank_cache_path(cfg);
        if path.exists() {
            match cache::load_bank(&path) {
                Ok(bank) => {
                    return pipeline::model_from_bank(train, bank, &model_cfg, variant);
                }
                Err(e) => eprintln!("warning: ignoring graph cache ({e})"),
            }
        }
    }
    pipeline::build_model(train, &model_cfg, variant)
}

fn cmd_evaluate(cfg: &RunConfig, baseline_name: Option<&str>) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let split = split_dataset(cfg, &ds)?;
    let masks: &[&RatingTensor] = &[&split.train, &split.valid];
    let out = &cfg.output.dir;
    let hash = cfg.config_hash();
    let seed = cfg.run.seed;

    match baseline_name {
        Some("gfcf-mc") => {
            let run = baseline::run_gfcf_mc(
                &split.train,
                &split.test,
                masks,
                &cfg.baseline_config(),
            )?;
            if cfg.baseline.alpha != 0.0 && !run.ideal_term_applied {
                eprintln!(
                    "warning: {} items exceed dense_cap={}; ideal low-pass term disabled",
                    ds.tensor.n_items, cfg.baseline.dense_cap
                );
            }
            let extra = vec![
                ("baseline".to_string(), "gfcf-mc".to_string()),
                ("alpha".to_string(), format!("{}", cfg.baseline.alpha)),
                (
                    "ideal_term_applied".to_string(),
                    format!("{}", run.ideal_term_applied),
                ),
            ];
            artifacts::write_atomic(
                &out.join("report.txt"),
                &artifacts::report_text(&run.report, &extra, hash, seed),
            )?;
        }
        Some(other) => {
            return Err(Error::Parameter(format!("unknown baseline {other:?}")));
        }
        None => {
            let variant = cfg.variant()?;
            let model = build_model_maybe_cached(cfg, &split.train, variant)?;
            let run = pipeline::evaluate_model(&model, &split.train, &split.test, masks)?;
            let extra = vec![("variant".to_string(), variant.label().to_string())];
            artifacts::write_atomic(
                &out.join("report.txt"),
                &artifacts::report_text(&run.report, &extra, hash, seed),
            )?;
            artifacts::write_atomic(
                &out.join("recommendations.csv"),
                &artifacts::recommendations_csv(
                    &run.recommendations,
                    &ds.user_ids,
                    &ds.item_ids,
                    hash,
                    seed,
                ),
            )?;
        }
    }
    write_effective_config(cfg)?;
    println!("evaluation written to {}", out.display());
    Ok(())
}

fn cmd_tune(cfg: &RunConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let split = split_dataset(cfg, &ds)?;
    let base = cfg.model_config(split.train.n_criteria())?;
    let outcome = tune::tune(&split.train, &split.valid, &base, &cfg.tune_spec()?)?;
    let out = &cfg.output.dir;
    let seed = cfg.run.seed;

    let rows: Vec<(u64, pipeline::EvalReport)> = outcome
        .leaderboard
        .iter()
        .map(|c| (model_config_hash(&c.config, seed), c.report.clone()))
        .collect();
    artifacts::write_atomic(
        &out.join("leaderboard.csv"),
        &artifacts::leaderboard_csv(&rows, cfg.config_hash(), seed),
    )?;

    // Best configuration as a ready-to-run config file.
    let mut best_cfg = cfg.clone();
    best_cfg.filters.per_criterion = outcome
        .best
        .filters
        .per_criterion
        .iter()
        .map(|c| match c {
            FilterChoice::Named(f) => FilterSpec::Named(f.label().to_string()),
            FilterChoice::Coeffs(a) => FilterSpec::Coeffs(a.clone()),
        })
        .collect();
    best_cfg.filters.s_f = outcome
        .best
        .s_f
        .iter()
        .map(|(f, &s)| (f.label().to_string(), s))
        .collect();
    best_cfg.agg.s_t = outcome.best.s_t;
    let text = format!(
        "{}{}",
        artifacts::stamp(best_cfg.config_hash(), seed),
        best_cfg.to_toml()
    );
    artifacts::write_atomic(&out.join("best_config.toml"), &text)?;
    write_effective_config(cfg)?;
    println!(
        "tuned {} candidates; best validation recall@{} = {:.4}",
        outcome.leaderboard.len(),
        cfg.tune.objective_k,
        outcome.leaderboard[0].objective
    );
    Ok(())
}

fn cmd_attribution(cfg: &RunConfig, user: i64, item: i64) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let split = split_dataset(cfg, &ds)?;
    let u = ds
        .user_ids
        .iter()
        .position(|&id| id == user)
        .ok_or_else(|| Error::Parameter(format!("unknown user id {user}")))?;
    let i = ds
        .item_ids
        .iter()
        .position(|&id| id == item)
        .ok_or_else(|| Error::Parameter(format!("unknown item id {item}")))?;
    let model = build_model_maybe_cached(cfg, &split.train, cfg.variant()?)?;
    let map = model.attribution(&split.train, u, i)?;
    artifacts::write_atomic(
        &cfg.output.dir.join("attribution.csv"),
        &artifacts::attribution_csv(
            &[map],
            &ds.user_ids,
            &ds.item_ids,
            &ds.tensor.criterion_names,
            cfg.config_hash(),
            cfg.run.seed,
        ),
    )?;
    write_effective_config(cfg)?;
    println!("attribution written for user {user}, item {item}");
    Ok(())
}

fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let mut rows = Vec::new();
    for spec in ingest::benchmark_ladder(cfg.run.seed) {
        if spec.n_mc_ratings > cfg.bench.max_mc_ratings {
            eprintln!(
                "skipping ({} users, {} items, {} ratings): above bench.max_mc_ratings={}",
                spec.n_users, spec.n_items, spec.n_mc_ratings, cfg.bench.max_mc_ratings
            );
            continue;
        }
        let tensor = ingest::generate_synthetic(&spec)?;
        let model_cfg = cfg.model_config(tensor.n_criteria())?;
        let mut model = pipeline::build_model(&tensor, &model_cfg, cfg.variant()?)?;
        // Measure passes over the stored graph, not the factored shortcut,
        // and over a fixed user batch so only graph size varies.
        model.force_materialized = true;
        let batch: Vec<u32> = (0..cfg.bench.batch_users.min(tensor.n_users) as u32).collect();
        let t0 = Instant::now();
        let scores = model.score_users(&tensor, &batch)?;
        let score_s = t0.elapsed().as_secs_f64();
        assert_eq!(scores.len(), batch.len());
        let graph_nnz = model.config.filters.per_criterion[0]
            .graph(&model.bank)?
            .nnz();
        let row = BenchRow {
            n_users: spec.n_users,
            n_items: spec.n_items,
            n_mc_ratings: spec.n_mc_ratings,
            graph_nnz,
            graph_build_s: model.graph_build_s,
            score_batch_users: batch.len(),
            score_s,
        };
        println!(
            "bench ({}, {}, {}): graph nnz {}, build {:.2}s, score {:.3}s",
            row.n_users, row.n_items, row.n_mc_ratings, row.graph_nnz, row.graph_build_s,
            row.score_s
        );
        rows.push(row);
    }
    artifacts::write_atomic(
        &cfg.output.dir.join("bench.csv"),
        &artifacts::bench_csv(&rows, cfg.config_hash(), cfg.run.seed),
    )?;
    write_effective_config(cfg)?;
    Ok(())
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let tensor = ingest::generate_synthetic(&cfg.synthetic_spec())?;
    let mut buf = Vec::new();
    ingest::save_ratings(&tensor, &mut buf, ingest::RatingFormat::Wide)?;
    let text = String::from_utf8(buf).expect("ratings are utf-8");
    artifacts::write_atomic(&cfg.output.dir.join("synthetic.csv"), &text)?;
    write_effective_config(cfg)?;
    println!(
        "generated {} users x {} items, {} ratings",
        tensor.n_users,
        tensor.n_items,
        tensor.nnz_total()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.run.threads = threads;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(variant) = &cli.variant {
        cfg.run.variant = variant.clone();
    }
    cfg.variant()?; // fail early on a bad variant label
    if cfg.run.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Prepare => cmd_prepare(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg, cli.baseline.as_deref()),
        Command::Tune => cmd_tune(&cfg),
        Command::Attribution { user, item } => cmd_attribution(&cfg, user, item),
        Command::Bench => cmd_bench(&cfg),
        Command::Synth => cmd_synth(&cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
