//! `pmas` — operator entry point for the shortlisting engine: run one case,
//! run a benchmark, cluster agent profiles, and export reports.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{
    apply_override, build_gateway, load_templates, parse_supervisor_mode, parse_system,
    parse_variant, FileConfig,
};
use pmas_core::bench::{run_bench, runlog, BenchReport, ExperimentConfig};
use pmas_core::cluster::{
    build_profile_vectors, cluster_profiles, diversity_report, silhouette_sweep, ClusterModel,
    DEFAULT_CLUSTER_COUNT,
};
use pmas_core::fixtures::oracle_fixtures;
use pmas_core::ingest::synthetic::{generate_synthetic, PlantedSignal, SyntheticSpec};
use pmas_core::ingest::{load_cases, save_cases_to_path, CaseFile};
use pmas_core::{CasePool, TemplateStore};

#[derive(Parser)]
#[command(
    name = "pmas",
    version,
    about = "Hierarchical multi-agent shortlisting engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case and print its result.
    Run(RunArgs),
    /// Run a benchmark over a case file.
    Bench(BenchArgs),
    /// Cluster agent profiles from a run log.
    Cluster(ClusterArgs),
    /// Re-export summaries from a saved bench report.
    Report(ReportArgs),
    /// Generate a deterministic synthetic case file plus oracle fixtures.
    GenFixtures(GenFixturesArgs),
}

#[derive(Args, Clone)]
struct ExperimentFlags {
    /// Declarative config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// key=value overrides onto the experiment config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Script every role from this fixture file.
    #[arg(long)]
    provider_fixtures: Option<PathBuf>,
    #[arg(long, value_name = "partner-mas|single|debate")]
    system: Option<String>,
    #[arg(long, value_name = "generic|business")]
    variant: Option<String>,
    #[arg(long, value_name = "deterministic|importance|weight|majority")]
    supervisor_mode: Option<String>,
    #[arg(long, value_name = "N")]
    runs_k: Option<usize>,
    /// Candidate-order shuffle seed (prompt-order sensitivity runs).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Print the effective experiment config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentFlags,
    /// Case file (.csv delimited table, .json structured records).
    #[arg(long)]
    cases: PathBuf,
    /// Which case to run.
    #[arg(long)]
    case_id: String,
    /// Output directory for the case record.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    experiment: ExperimentFlags,
    #[arg(long)]
    cases: PathBuf,
    /// Output directory for report, per-case table, and run log.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// Run log (JSON lines) from a bench run.
    #[arg(long)]
    run_log: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of clusters.
    #[arg(long, default_value_t = DEFAULT_CLUSTER_COUNT)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON file mapping cluster index to a human label.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Also sweep silhouette over a k range, e.g. 2..12.
    #[arg(long, value_name = "LO..HI")]
    sweep: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// A bench_report.json produced by `pmas bench`.
    #[arg(long)]
    bench_report: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional run log + cluster model to add diversity diagnostics.
    #[arg(long)]
    run_log: Option<PathBuf>,
    #[arg(long)]
    cluster_model: Option<PathBuf>,
}

#[derive(Args)]
struct GenFixturesArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of synthetic cases.
    #[arg(long, default_value_t = 10)]
    cases: usize,
    /// Candidate-count range per case, e.g. 30..40.
    #[arg(long, default_value = "30..40")]
    candidates: String,
    /// Ground-truth count range per case, e.g. 2..5.
    #[arg(long, default_value = "2..5")]
    truth: String,
    /// Feature that separates ground truth from the rest.
    #[arg(long, default_value = "pair_tie_strength")]
    feature: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Report(args) => cmd_report(args),
        Command::GenFixtures(args) => cmd_gen_fixtures(args),
    }
}

/// Override precedence: dedicated flags > --set pairs > config file >
/// built-in defaults.
fn effective_setup(flags: &ExperimentFlags) -> Result<(FileConfig, ExperimentConfig)> {
    let file = match &flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut experiment = file.experiment.clone();
    for pair in &flags.set {
        apply_override(&mut experiment, pair)?;
    }
    if let Some(system) = &flags.system {
        experiment.system = parse_system(system)?;
    }
    if let Some(variant) = &flags.variant {
        experiment.variant = parse_variant(variant)?;
    }
    if let Some(mode) = &flags.supervisor_mode {
        experiment.supervisor_mode = parse_supervisor_mode(mode)?;
    }
    if let Some(runs_k) = flags.runs_k {
        experiment.runs_k = runs_k;
    }
    if let Some(seed) = flags.seed {
        experiment.shuffle_seed = Some(seed);
    }
    if let Some(concurrency) = flags.concurrency {
        experiment.concurrency = concurrency;
    }
    Ok((file, experiment))
}

fn load_case_pools(path: &Path) -> Result<Vec<CasePool>> {
    let file = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        CaseFile::structured(path)
    } else {
        CaseFile::delimited(path)
    };
    let loaded = load_cases(&file).with_context(|| format!("loading {}", path.display()))?;
    for skipped in &loaded.report.skipped {
        log::warn!("skipped case {}: {}", skipped.company_id, skipped.reason);
    }
    log::info!(
        "loaded {} cases ({} rows, {} skipped)",
        loaded.report.cases_loaded,
        loaded.report.rows_read,
        loaded.report.skipped.len()
    );
    Ok(loaded.pools)
}

fn prepare(
    flags: &ExperimentFlags,
) -> Result<(ExperimentConfig, TemplateStore, pmas_core::Gateway)> {
    let (file, experiment) = effective_setup(flags)?;
    let store = load_templates(&file)?;
    let gateway = build_gateway(&file, &experiment, flags.provider_fixtures.as_deref())?;
    Ok((experiment, store, gateway))
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    if args.experiment.print_config {
        return print_effective_config(&args.experiment);
    }
    let (experiment, store, gateway) = prepare(&args.experiment)?;
    let pools = load_case_pools(&args.cases)?;
    let pool = pools
        .iter()
        .find(|p| p.case_id() == args.case_id)
        .ok_or_else(|| {
            anyhow!(
                "case '{}' not found in {}",
                args.case_id,
                args.cases.display()
            )
        })?
        .clone();

    let (report, records) = run_bench(&[pool], &experiment, &gateway, &store)?;

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(
            out.join(format!("case_{}.json", args.case_id)),
            serde_json::to_string_pretty(&records[0])?,
        )?;
    }
    match report.cases.first() {
        Some(case) => {
            println!(
                "case {}: matched {}/{} (match rate {:.2}%)",
                case.case_id, case.matched, case.truth_size, case.match_rate
            );
            println!("shortlist:");
            for entry in &case.final_list.entries {
                println!("  {:>2}. {}", entry.rank, entry.firm_id);
            }
            Ok(ExitCode::SUCCESS)
        }
        None => {
            let failure = &report.failures[0];
            eprintln!(
                "case {} failed at {}: {}",
                failure.case_id, failure.stage, failure.reason
            );
            Ok(ExitCode::from(2))
        }
    }
}

fn print_effective_config(flags: &ExperimentFlags) -> Result<ExitCode> {
    let (_, experiment) = effective_setup(flags)?;
    println!("{}", serde_json::to_string_pretty(&experiment)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    if args.experiment.print_config {
        return print_effective_config(&args.experiment);
    }
    let (experiment, store, gateway) = prepare(&args.experiment)?;
    let pools = load_case_pools(&args.cases)?;
    let (report, records) = run_bench(&pools, &experiment, &gateway, &store)?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(
        args.out.join("bench_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(args.out.join("per_case.csv"), report.per_case_table_csv())?;
    runlog::write_jsonl(&records, &args.out.join("run_log.jsonl"))?;

    println!("{}", report.summary_text());
    for failure in &report.failures {
        println!(
            "  failed: {} at {} ({})",
            failure.case_id, failure.stage, failure.reason
        );
    }
    println!("outputs written to {}", args.out.display());
    Ok(ExitCode::from(
        u8::try_from(report.exit_code()).unwrap_or(1),
    ))
}

fn parse_range(text: &str) -> Result<(usize, usize)> {
    let (lo, hi) = text
        .split_once("..")
        .ok_or_else(|| anyhow!("range '{text}' must look like LO..HI"))?;
    Ok((
        lo.trim()
            .parse()
            .with_context(|| format!("bad range start '{lo}'"))?,
        hi.trim()
            .parse()
            .with_context(|| format!("bad range end '{hi}'"))?,
    ))
}

fn cmd_cluster(args: ClusterArgs) -> Result<ExitCode> {
    let records = runlog::read_jsonl(&args.run_log)
        .with_context(|| format!("reading run log {}", args.run_log.display()))?;
    let run_label = args
        .run_log
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("run")
        .to_string();
    // Embedding runs on the deterministic fallback embedder; no provider
    // bindings are needed for clustering.
    let gateway = pmas_core::Gateway::builder().build();
    let vectors = build_profile_vectors(&run_label, &records, &gateway)?;
    if vectors.is_empty() {
        bail!("run log contains no planner blueprints to cluster");
    }

    let mut model = cluster_profiles(&vectors, args.k, args.seed)?;
    if let Some(labels_path) = &args.labels {
        let text = std::fs::read_to_string(labels_path)?;
        let labels: std::collections::BTreeMap<usize, String> = serde_json::from_str(&text)
            .with_context(|| format!("parsing labels {}", labels_path.display()))?;
        for (cluster, label) in labels {
            model.set_label(cluster, label);
        }
    }

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(
        args.out.join("cluster_model.json"),
        serde_json::to_string_pretty(&model)?,
    )?;
    let rows = diversity_report(&run_label, &records, &model);
    std::fs::write(
        args.out.join("diversity.json"),
        serde_json::to_string_pretty(&rows)?,
    )?;
    let mut csv = String::from("case_id,agent_count,active_clusters,normalized_hhi,match_rate\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.case_id,
            row.agent_count,
            row.active_clusters,
            row.normalized_hhi,
            row.match_rate.map(|m| m.to_string()).unwrap_or_default()
        ));
    }
    std::fs::write(args.out.join("diversity.csv"), csv)?;

    println!(
        "clustered {} profiles into k={} (silhouette {:.3}{}, {} iterations)",
        vectors.len(),
        model.k,
        model.silhouette,
        if model.degenerate { ", degenerate" } else { "" },
        model.iterations
    );
    let sizes = model.cluster_sizes();
    for (cluster, size) in &sizes {
        let label = model
            .labels
            .get(cluster)
            .map(|l| format!(" ({l})"))
            .unwrap_or_default();
        println!("  cluster {cluster}{label}: {size} agents");
    }
    if let Some(sweep) = &args.sweep {
        let (lo, hi) = parse_range(sweep)?;
        println!("silhouette sweep:");
        for (k, score) in silhouette_sweep(&vectors, lo..=hi, args.seed) {
            println!("  k={k}: {score:.3}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.bench_report)
        .with_context(|| format!("reading {}", args.bench_report.display()))?;
    let report: BenchReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.bench_report.display()))?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("per_case.csv"), report.per_case_table_csv())?;
    // The Pareto point for this configuration: one (tokens, accuracy) row.
    let pareto = serde_json::json!({
        "system": report.metadata.system,
        "variant": report.metadata.variant,
        "supervisor_mode": report.metadata.supervisor_mode,
        "mean_match_rate": report.mean_match_rate,
        "ci_half_width": report.ci_half_width,
        "total_tokens": report.token_totals.prompt_tokens + report.token_totals.completion_tokens,
        "mixed_providers": report.metadata.mixed_providers,
    });
    std::fs::write(
        args.out.join("pareto_point.json"),
        serde_json::to_string_pretty(&pareto)?,
    )?;

    if let (Some(run_log), Some(model_path)) = (&args.run_log, &args.cluster_model) {
        let records = runlog::read_jsonl(run_log)?;
        let run_label = run_log
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("run")
            .to_string();
        let model: ClusterModel = serde_json::from_str(&std::fs::read_to_string(model_path)?)
            .with_context(|| format!("parsing {}", model_path.display()))?;
        let rows = diversity_report(&run_label, &records, &model);
        std::fs::write(
            args.out.join("diversity.json"),
            serde_json::to_string_pretty(&rows)?,
        )?;
    }

    println!("{}", report.summary_text());
    println!("exports written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_fixtures(args: GenFixturesArgs) -> Result<ExitCode> {
    let spec = SyntheticSpec {
        num_cases: args.cases,
        candidates_per_case: parse_range(&args.candidates)?,
        ground_truth_per_case: parse_range(&args.truth)?,
        seed: args.seed,
        planted_signal: PlantedSignal::FeatureRule {
            feature: args.feature.clone(),
        },
    };
    let pools = generate_synthetic(&spec)?;
    let store = TemplateStore::builtin();
    let fixtures = oracle_fixtures(&pools, &args.feature, &store);

    std::fs::create_dir_all(&args.out)?;
    let cases_path = args.out.join("cases.csv");
    save_cases_to_path(&pools, &cases_path)?;
    std::fs::write(
        args.out.join("fixtures.json"),
        serde_json::to_string_pretty(&fixtures)?,
    )?;
    println!(
        "wrote {} cases to {} and {} fixtures to {}",
        pools.len(),
        cases_path.display(),
        fixtures.fixtures.len(),
        args.out.join("fixtures.json").display()
    );
    Ok(ExitCode::SUCCESS)
}
