//! Subcommand implementations. Argument structs double as the clap surface;
//! `main` only parses and dispatches. Every command validates its arguments
//! before any network call, prints machine-readable JSON to stdout, and logs
//! human-oriented notes to stderr.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use semfilter_core::cluster::{kmeans, DistanceSpec, DEFAULT_MAX_ITERS};
use semfilter_core::data::Predicate;
use semfilter_core::embed::{embed_table, EmbeddingSet};
use semfilter_core::engine::{
    reference_filter, semantic_filter, FilterConfig, FilterResult, Strategy,
};
use semfilter_core::evalsim::{compute_metrics, validate_bound, SyntheticSpec};
use semfilter_core::oracle::{ColumnOracle, Oracle};
use semfilter_core::planner::{error_ceiling, xi_simvote, xi_univote, PlannerParams, XiBound};
use semfilter_core::vote::Thresholds;
use serde_json::json;

use crate::embed_io::{read_embeddings, write_embeddings};
use crate::http::{HttpEmbedder, HttpOracle, OracleConfig};
use crate::manifest::{OracleSpec, PredicateSpec, RunManifest, RunStrategy};
use crate::output::{read_result_labels, stats_json, write_filter_result, write_partition};
use semfilter_core::data::Table;

use crate::table_io::{content_hash, load_table, truth_labels, TableFormat};

pub use crate::table_io::TableFormat as Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Uni,
    Sim,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleArg {
    Mock,
    Http,
}

fn table_format(path: &std::path::Path, arg: Option<FormatArg>) -> TableFormat {
    match arg {
        Some(FormatArg::Jsonl) => TableFormat::Jsonl,
        Some(FormatArg::Csv) => TableFormat::Csv,
        None => TableFormat::from_path(path),
    }
}

fn emit(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json"));
}

/// Shared table-loading flags.
#[derive(Debug, Args)]
pub struct TableArgs {
    /// Input table (JSONL or RFC 4180 CSV).
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Column holding the record id; row index is used when omitted.
    #[arg(long)]
    pub id_column: Option<String>,
}

impl TableArgs {
    fn load(&self) -> Result<Table> {
        load_table(
            &self.input,
            table_format(&self.input, self.format),
            self.id_column.as_deref(),
        )
        .with_context(|| format!("loading table {}", self.input.display()))
    }
}

#[derive(Debug, Args)]
pub struct EmbedCmd {
    #[command(flatten)]
    pub table: TableArgs,
    /// Predicate template with {column} placeholders; its columns are fused
    /// into the embedded text.
    #[arg(long)]
    pub template: String,
    /// Optional instruction preamble.
    #[arg(long)]
    pub instruction: Option<String>,
    /// Embedding endpoint base URL (POST {base}/v1/embeddings).
    #[arg(long)]
    pub base_url: String,
    /// Embedding model name.
    #[arg(long)]
    pub model: String,
    /// Whitespace-token chunk size for long texts.
    #[arg(long, default_value_t = semfilter_core::embed::DEFAULT_MAX_CHUNK_TOKENS)]
    pub max_chunk_tokens: usize,
    /// Texts per embeddings request.
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Output embeddings file (.jsonl for JSONL, anything else binary).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_embed(args: &EmbedCmd) -> Result<()> {
    let table = args.table.load()?;
    let predicate = Predicate::new(&args.template, args.instruction.as_deref())?;
    predicate.validate_against(&table)?;
    let mut embedder = HttpEmbedder::new(&args.base_url, &args.model)?;
    embedder.batch_size = args.batch_size;
    log::info!("embedding {} records", table.len());
    let set = embed_table(&table, &predicate, &embedder, args.max_chunk_tokens)?;
    write_embeddings(&set, &args.out)?;
    emit(&json!({ "records": set.len(), "dim": set.dim(), "out": args.out }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct ClusterCmd {
    /// Embeddings file produced by `embed`.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Distance mix: 1.0 is pure Euclidean, smaller blends in BM25.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.2)]
    pub bm25_k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub bm25_b: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Table and template are required when lambda < 1 (the BM25 corpus is
    /// built over the predicate's fused columns).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub id_column: Option<String>,
    #[arg(long)]
    pub template: Option<String>,
    /// Output partition JSONL ({"id", "cluster"} per record).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_cluster(args: &ClusterCmd) -> Result<()> {
    let set = read_embeddings(&args.embeddings)?;
    let ids = set.ids().collect();
    let spec = DistanceSpec {
        lambda: args.lambda,
        bm25_k1: args.bm25_k1,
        bm25_b: args.bm25_b,
    };
    let corpus = if spec.pure_euclidean() {
        None
    } else {
        let input = args
            .input
            .as_ref()
            .ok_or_else(|| anyhow!("--lambda < 1 requires --input and --template"))?;
        let template = args
            .template
            .as_ref()
            .ok_or_else(|| anyhow!("--lambda < 1 requires --template"))?;
        let table =
            load_table(input, table_format(input, args.format), args.id_column.as_deref())?;
        let predicate = Predicate::new(template, None)?;
        let texts: Vec<(u64, String)> = table
            .records()
            .iter()
            .map(|r| (r.id, semfilter_core::embed::fused_text(r, predicate.referenced_columns())))
            .collect();
        Some(semfilter_core::bm25::Bm25Corpus::build(
            texts.iter().map(|(id, t)| (*id, t.as_str())),
        )?)
    };
    let partition = kmeans(&ids, &set, args.k, spec, corpus.as_ref(), args.seed, DEFAULT_MAX_ITERS)?;
    write_partition(&partition, &args.out)?;
    emit(&json!({
        "records": set.len(),
        "clusters": partition.num_clusters(),
        "objective": partition.objective,
        "iterations": partition.iterations,
        "out": args.out,
    }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct PlanCmd {
    /// Error tolerance: a single value ("0.1") or an inclusive range
    /// ("0.10..0.30") swept by --step.
    #[arg(long)]
    pub epsilon: String,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, default_value_t = 0.15)]
    pub lb: f64,
    /// Upper threshold; defaults to 1 - lb.
    #[arg(long)]
    pub ub: Option<f64>,
    /// Sample variance estimate (0.25 is the conservative binary maximum).
    #[arg(long, default_value_t = 0.25)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.9996)]
    pub failure_base: f64,
    /// Weight-skew constant for the similarity-vote bound.
    #[arg(long, default_value_t = 2.0)]
    pub v: f64,
}

fn parse_epsilon_sweep(spec: &str, step: f64) -> Result<Vec<f64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let start: f64 = a.parse().context("bad epsilon range start")?;
        let end: f64 = b.parse().context("bad epsilon range end")?;
        if step <= 0.0 || end < start {
            bail!("need start <= end and a positive --step");
        }
        let mut out = Vec::new();
        let mut eps = start;
        while eps <= end + 1e-12 {
            out.push((eps * 1e9).round() / 1e9);
            eps += step;
        }
        Ok(out)
    } else {
        Ok(vec![spec.parse().context("bad epsilon")?])
    }
}

fn xi_json(bound: XiBound) -> serde_json::Value {
    match bound {
        XiBound::Feasible(x) => json!(x),
        XiBound::Infeasible => json!("infeasible"),
    }
}

pub fn cmd_plan(args: &PlanCmd) -> Result<()> {
    let thresholds = match args.ub {
        Some(ub) => Thresholds::new(args.lb, ub)?,
        None => Thresholds::symmetric(args.lb)?,
    };
    let mut rows = Vec::new();
    for eps in parse_epsilon_sweep(&args.epsilon, args.step)? {
        let params = PlannerParams {
            epsilon: eps,
            failure_base: args.failure_base,
            sigma_hat_sq: args.sigma2,
            weight_skew: args.v,
            r_bound: 1.0,
        };
        rows.push(json!({
            "epsilon": eps,
            "xi_uni": xi_json(xi_univote(&params)?),
            "xi_sim": xi_json(xi_simvote(&params)?),
            "ceiling": error_ceiling(thresholds, eps),
        }));
    }
    emit(&json!(rows));
    Ok(())
}

#[derive(Debug, Args)]
pub struct FilterCmd {
    #[arg(long, required_unless_present = "replay")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub id_column: Option<String>,
    /// Embeddings file; required unless --strategy reference.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, required_unless_present = "replay")]
    pub template: Option<String>,
    #[arg(long)]
    pub instruction: Option<String>,
    /// JSON config file mirroring the engine configuration; flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Sample ratio; mutually exclusive with --epsilon.
    #[arg(long, conflicts_with = "epsilon")]
    pub xi: Option<f64>,
    /// Error tolerance; derives the sample ratio from the planner.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lb: Option<f64>,
    /// Defaults to 1 - lb.
    #[arg(long)]
    pub ub: Option<f64>,
    #[arg(long)]
    pub min_sample: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<u32>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "mock")]
    pub oracle: OracleArg,
    /// Ground-truth column consulted by the mock oracle.
    #[arg(long, default_value = "label")]
    pub truth_column: String,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Oracle cache file (JSONL); repeated runs cost zero new calls.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub parallelism: usize,
    #[arg(long, default_value_t = 3)]
    pub retry_budget: u32,
    /// Planner inputs used when --epsilon is given.
    #[arg(long, default_value_t = 0.25)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.9996)]
    pub failure_base: f64,
    #[arg(long, default_value_t = 2.0)]
    pub v: f64,
    #[arg(long, required_unless_present = "replay")]
    pub out: Option<PathBuf>,
    /// Manifest path; defaults to "<out>.manifest.json".
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Replay a previous run from its manifest (verifies input hashes).
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

struct ResolvedFilter {
    strategy: RunStrategy,
    cfg: FilterConfig,
    oracle_spec: OracleSpec,
    predicate_spec: PredicateSpec,
    input: PathBuf,
    format: Option<FormatArg>,
    id_column: Option<String>,
    embeddings: Option<PathBuf>,
    out: PathBuf,
    manifest_out: PathBuf,
}

fn resolve_filter(args: &FilterCmd) -> Result<ResolvedFilter> {
    if let Some(replay_path) = &args.replay {
        let manifest = RunManifest::load(replay_path)?;
        manifest.verify_inputs()?;
        let out = args.out.clone().unwrap_or_else(|| manifest.output_path.clone());
        let manifest_out = args
            .manifest
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.manifest.json", out.display())));
        let format = match manifest.input_format.as_deref() {
            Some("csv") => Some(FormatArg::Csv),
            Some(_) => Some(FormatArg::Jsonl),
            None => None,
        };
        return Ok(ResolvedFilter {
            strategy: manifest.strategy,
            cfg: manifest.config.clone(),
            oracle_spec: manifest.oracle.clone(),
            predicate_spec: manifest.predicate.clone(),
            input: manifest.input_path.clone(),
            format,
            id_column: manifest.id_column.clone(),
            embeddings: manifest.embeddings_path.clone(),
            out,
            manifest_out,
        });
    }

    let input = args.input.clone().ok_or_else(|| anyhow!("--input is required"))?;
    let template =
        args.template.clone().ok_or_else(|| anyhow!("--template is required"))?;
    let out = args.out.clone().ok_or_else(|| anyhow!("--out is required"))?;

    let mut cfg: FilterConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => FilterConfig::default(),
    };
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(xi) = args.xi {
        cfg.xi = xi;
    }
    if let Some(lb) = args.lb {
        cfg.thresholds = match args.ub {
            Some(ub) => Thresholds::new(lb, ub)?,
            None => Thresholds::symmetric(lb)?,
        };
    } else if let Some(ub) = args.ub {
        cfg.thresholds = Thresholds::new(cfg.thresholds.lb, ub)?;
    }
    if let Some(min_sample) = args.min_sample {
        cfg.min_sample = min_sample;
    }
    if let Some(max_depth) = args.max_depth {
        cfg.max_depth = max_depth;
    }
    if let Some(lambda) = args.lambda {
        cfg.distance.lambda = lambda;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let strategy = match args.strategy {
        Some(StrategyArg::Uni) => RunStrategy::Uni,
        Some(StrategyArg::Sim) => RunStrategy::Sim,
        Some(StrategyArg::Reference) => RunStrategy::Reference,
        None => match cfg.strategy {
            Strategy::Uni => RunStrategy::Uni,
            Strategy::Sim => RunStrategy::Sim,
        },
    };
    cfg.strategy = match strategy {
        RunStrategy::Sim => Strategy::Sim,
        _ => Strategy::Uni,
    };

    if let Some(eps) = args.epsilon {
        let params = PlannerParams {
            epsilon: eps,
            failure_base: args.failure_base,
            sigma_hat_sq: args.sigma2,
            weight_skew: args.v,
            r_bound: 1.0,
        };
        let bound = match strategy {
            RunStrategy::Sim => xi_simvote(&params)?,
            _ => xi_univote(&params)?,
        };
        match bound {
            XiBound::Feasible(xi) => {
                // xi = 0 means any positive ratio works; min_sample drives
                // the actual sizes, so clamp to a tiny positive ratio.
                cfg.xi = xi.max(1e-9);
                log::info!("planner: epsilon {eps} -> xi {}", cfg.xi);
            }
            XiBound::Infeasible => bail!(
                "epsilon {eps} with failure base {} is infeasible; relax them or use --strategy reference",
                args.failure_base
            ),
        }
    }

    let oracle_spec = match args.oracle {
        OracleArg::Mock => OracleSpec::Mock { truth_column: args.truth_column.clone() },
        OracleArg::Http => OracleSpec::Http {
            base_url: args
                .base_url
                .clone()
                .ok_or_else(|| anyhow!("--oracle http requires --base-url"))?,
            model: args.model.clone().ok_or_else(|| anyhow!("--oracle http requires --model"))?,
        },
    };
    if strategy != RunStrategy::Reference && args.embeddings.is_none() {
        bail!("--embeddings is required unless --strategy reference");
    }
    let manifest_out = args
        .manifest
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.manifest.json", out.display())));
    Ok(ResolvedFilter {
        strategy,
        cfg,
        oracle_spec,
        predicate_spec: PredicateSpec { template, instruction: args.instruction.clone() },
        input,
        format: args.format,
        id_column: args.id_column.clone(),
        embeddings: args.embeddings.clone(),
        out,
        manifest_out,
    })
}

fn build_oracle(
    spec: &OracleSpec,
    cache: Option<&PathBuf>,
    parallelism: usize,
    retry_budget: u32,
) -> Result<Box<dyn Oracle>> {
    match spec {
        OracleSpec::Mock { truth_column } => Ok(Box::new(ColumnOracle::new(truth_column))),
        OracleSpec::Http { base_url, model } => {
            let cfg = OracleConfig {
                base_url: base_url.clone(),
                model: model.clone(),
                parallelism,
                retry_budget,
                cache_path: cache.cloned(),
                ..OracleConfig::default()
            };
            Ok(Box::new(HttpOracle::new(cfg)?))
        }
    }
}

pub fn cmd_filter(args: &FilterCmd) -> Result<()> {
    let resolved = resolve_filter(args)?;
    let table = load_table(
        &resolved.input,
        table_format(&resolved.input, resolved.format),
        resolved.id_column.as_deref(),
    )?;
    let predicate = Predicate::new(
        &resolved.predicate_spec.template,
        resolved.predicate_spec.instruction.as_deref(),
    )?;
    let mut oracle = build_oracle(
        &resolved.oracle_spec,
        args.cache.as_ref(),
        args.parallelism,
        args.retry_budget,
    )?;

    let started = Instant::now();
    let mut result: FilterResult = match resolved.strategy {
        RunStrategy::Reference => reference_filter(&table, &predicate, &mut *oracle)?,
        _ => {
            let embeddings_path = resolved
                .embeddings
                .as_ref()
                .ok_or_else(|| anyhow!("missing embeddings path"))?;
            let embeddings: EmbeddingSet = read_embeddings(embeddings_path)?;
            semantic_filter(&table, &embeddings, &predicate, &resolved.cfg, &mut *oracle)?
        }
    };
    result.stats.wall_time_ms = started.elapsed().as_millis() as u64;

    write_filter_result(&result, &resolved.out)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        strategy: resolved.strategy,
        oracle: resolved.oracle_spec.clone(),
        predicate: resolved.predicate_spec.clone(),
        config: resolved.cfg.clone(),
        input_path: resolved.input.clone(),
        input_sha256: content_hash(&resolved.input)?,
        input_format: resolved.format.map(|f| {
            match f {
                FormatArg::Jsonl => "jsonl",
                FormatArg::Csv => "csv",
            }
            .to_string()
        }),
        id_column: resolved.id_column.clone(),
        embeddings_path: resolved.embeddings.clone(),
        embeddings_sha256: match &resolved.embeddings {
            Some(p) => Some(content_hash(p)?),
            None => None,
        },
        output_path: resolved.out.clone(),
    };
    manifest.save(&resolved.manifest_out)?;

    let mut out_json = stats_json(&result);
    out_json["out"] = json!(resolved.out);
    out_json["manifest"] = json!(resolved.manifest_out);
    emit(&out_json);
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    /// Filter results JSONL produced by `filter`.
    #[arg(long)]
    pub results: PathBuf,
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, default_value = "label")]
    pub truth_column: String,
}

pub fn cmd_eval(args: &EvalCmd) -> Result<()> {
    let predicted = read_result_labels(&args.results)?;
    let table = args.table.load()?;
    let truth = truth_labels(&table, &args.truth_column)?;
    let metrics = compute_metrics(&predicted, &truth)?;
    emit(&serde_json::to_value(&metrics)?);
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// Synthetic workload spec (JSON: n, dim, seed, clusters[]).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub trials: u32,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Derive xi from the planner at --epsilon instead of --xi.
    #[arg(long, default_value_t = false)]
    pub derive_xi: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.25)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.9996)]
    pub failure_base: f64,
    #[arg(long, default_value_t = 2.0)]
    pub v: f64,
}

pub fn cmd_simulate(args: &SimulateCmd) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("reading spec {}", args.spec.display()))?;
    let spec: SyntheticSpec = serde_json::from_str(&text)?;

    let mut cfg: FilterConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => FilterConfig::default(),
    };
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(xi) = args.xi {
        cfg.xi = xi;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(strategy) = args.strategy {
        cfg.strategy = match strategy {
            StrategyArg::Sim => Strategy::Sim,
            _ => Strategy::Uni,
        };
    }
    let params = PlannerParams {
        epsilon: args.epsilon,
        failure_base: args.failure_base,
        sigma_hat_sq: args.sigma2,
        weight_skew: args.v,
        r_bound: 1.0,
    };
    if args.derive_xi {
        let bound = match cfg.strategy {
            Strategy::Sim => xi_simvote(&params)?,
            Strategy::Uni => xi_univote(&params)?,
        };
        match bound {
            XiBound::Feasible(xi) => cfg.xi = xi.max(1e-9),
            XiBound::Infeasible => bail!("planner infeasible for epsilon {}", args.epsilon),
        }
    }
    let report = validate_bound(&spec, &cfg, &params, args.trials)?;
    emit(&serde_json::to_value(&report)?);
    Ok(())
}
