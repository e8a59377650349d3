//! `semfilter`: evaluate natural-language filter predicates over tabular
//! data by clustering embeddings, sampling each cluster for LLM judgment,
//! and voting the rest, with planned error bounds.

use clap::{Parser, Subcommand};
use semfilter::commands;

#[derive(Parser)]
#[command(
    name = "semfilter",
    version,
    about = "Semantic filter over tabular text: cluster, sample, vote",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Embed a table's predicate columns via an embeddings endpoint.
    Embed(commands::EmbedCmd),
    /// Partition an embedding set with seeded k-means.
    Cluster(commands::ClusterCmd),
    /// Print the planned sample ratios and error ceiling for a tolerance sweep.
    Plan(commands::PlanCmd),
    /// Run the semantic filter (or the linear-scan reference baseline).
    Filter(commands::FilterCmd),
    /// Score filter results against a ground-truth column.
    Eval(commands::EvalCmd),
    /// Generate a synthetic workload and validate the statistical bounds.
    Simulate(commands::SimulateCmd),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Embed(args) => commands::cmd_embed(args),
        Command::Cluster(args) => commands::cmd_cluster(args),
        Command::Plan(args) => commands::cmd_plan(args),
        Command::Filter(args) => commands::cmd_filter(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Simulate(args) => commands::cmd_simulate(args),
    };
    if let Err(err) = result {
        eprintln!("{}", serde_json::json!({ "error": format!("{err:#}") }));
        std::process::exit(1);
    }
}
