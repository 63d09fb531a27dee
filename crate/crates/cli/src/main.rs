use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qosmc_core::bler::{PipelineConfig, TrainingSweep};
use qosmc_core::policy::PolicyKind;
use qosmc_cli::error::{read_file, write_file, CliError, CliResult};
use qosmc_cli::report::{build_report, read_metrics_csv, render_text};
use qosmc_cli::run::{load_config, make_estimator, parse_seeds, run_batch, write_metrics_csv, EstimatorKind, Manifest, MANIFEST_METRICS_FILE};
use qosmc_cli::train::{cmd_train, summary_lines};

#[derive(Parser)]
#[command(name = "qosmc", version, about = "QoS-aware multi-connectivity cluster selection: train, run, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate oracle training data and fit the cluster model and BLER regressor.
    Train(TrainArgs),
    /// Simulate policies over seeds and write one metrics row per run.
    Run(RunArgs),
    /// Summarise a metrics CSV per policy.
    Report(ReportArgs),
    /// Print the default scenario as JSON.
    Scenario {
        #[arg(long)]
        fast: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Scenario JSON; the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "artifacts")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// UE positions per (numerology, power level, MCS) set.
    #[arg(long)]
    positions_per_set: Option<usize>,
    #[arg(long)]
    slots_per_row: Option<usize>,
    /// Cluster count of the deployed model.
    #[arg(long)]
    clusters: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON manifest; replaces the other run options.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "proposed,snr,lbmc", value_parser = parse_policy)]
    policy: Vec<PolicyKind>,
    /// `1..10` or `1,2,3`; defaults to the scenario's base seed and repetitions.
    #[arg(long, value_parser = parse_seed_list)]
    seeds: Option<SeedList>,
    #[arg(long, default_value = "artifacts")]
    models: PathBuf,
    #[arg(long, default_value = "learned", value_parser = parse_estimator)]
    estimator: EstimatorKind,
    #[arg(long, default_value = "results/metrics.csv")]
    out: PathBuf,
    /// Shorten runs to 10 s.
    #[arg(long)]
    fast: bool,
    /// Write per-run event and decision-audit JSON lines here.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    csv: PathBuf,
    /// Also write the summary as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse().map_err(|e: qosmc_core::Error| e.to_string())
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

fn parse_seed_list(s: &str) -> Result<SeedList, String> {
    parse_seeds(s).map(SeedList)
}

fn parse_estimator(s: &str) -> Result<EstimatorKind, String> {
    s.parse()
}

fn train(a: TrainArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref(), false)?;
    let mut sweep = TrainingSweep::default();
    sweep.positions_per_set = a.positions_per_set.unwrap_or(sweep.positions_per_set);
    sweep.slots_per_row = a.slots_per_row.unwrap_or(sweep.slots_per_row);
    let mut pipeline = PipelineConfig::default();
    pipeline.n_clusters = a.clusters.unwrap_or(pipeline.n_clusters);
    let report = cmd_train(&cfg, &sweep, &pipeline, a.seed, &a.out)?;
    for line in summary_lines(&report, &a.out) {
        println!("{line}");
    }
    Ok(())
}

fn run(a: RunArgs) -> CliResult<()> {
    let (config, policies, seeds, models, estimator, out, fast) = match &a.manifest {
        Some(path) => {
            let m = Manifest::load(path)?;
            let policies = m.policy_kinds()?;
            let models = m.models_dir.clone().unwrap_or(a.models.clone());
            (m.config, policies, Some(m.seeds), models, m.estimator, m.output_dir.join(MANIFEST_METRICS_FILE), m.fast)
        }
        None => (a.config.clone(), a.policy.clone(), a.seeds.clone().map(|s| s.0), a.models.clone(), a.estimator, a.out.clone(), a.fast),
    };
    let cfg = load_config(config.as_deref(), fast)?;
    let seeds = seeds.unwrap_or_else(|| (0..cfg.repetitions as u64).map(|i| cfg.base_seed + i).collect());
    let est = make_estimator(estimator, &models, &cfg)?;
    let rows = run_batch(&cfg, &policies, &seeds, est, a.trace_dir.as_deref())?;
    let mut buf = Vec::new();
    write_metrics_csv(&rows, &mut buf)?;
    write_file(&out, &buf)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn report(a: ReportArgs) -> CliResult<()> {
    let text = read_file(&a.csv)?;
    let rows = read_metrics_csv(text.as_bytes())?;
    let report = build_report(&rows)?;
    print!("{}", render_text(&report));
    if let Some(path) = a.json {
        let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Infeasible(e.to_string()))?;
        write_file(&path, json.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Scenario { fast } => load_config(None, fast).and_then(|c| {
            println!("{}", c.to_json()?);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qosmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
