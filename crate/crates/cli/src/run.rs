use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use qosmc_core::bler::{BlerEstimator, CqiOracleEstimator, GenieEstimator};
use qosmc_core::policy::{make_policy, PolicyKind};
use qosmc_core::sim::{run_scenario_with, RunMetrics, RunOptions, ScenarioConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, CliError, CliResult};
use crate::train::load_learned;

pub const CSV_HEADER: [&str; 10] = [
    "policy",
    "seed",
    "avg_rate_bps",
    "avg_latency_s",
    "reliability",
    "resource_hz",
    "se_bps_per_hz",
    "qos_rate_score",
    "qos_lat_score",
    "qos_rel_score",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Trained cluster model and regressor from a `train` directory.
    Learned,
    /// Latest CQI bin centre pushed through the oracle curve.
    CqiOracle,
    /// True mean SNR pushed through the oracle curve.
    Genie,
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "learned" => Ok(EstimatorKind::Learned),
            "cqi-oracle" => Ok(EstimatorKind::CqiOracle),
            "genie" => Ok(EstimatorKind::Genie),
            other => Err(format!("unknown estimator {other:?}; expected learned, cqi-oracle or genie")),
        }
    }
}

/// Everything one `run` invocation needs, loadable from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default = "run_subcommand")]
    pub subcommand: String,
    #[serde(default)]
    pub config: Option<PathBuf>,
    pub policies: Vec<String>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub models_dir: Option<PathBuf>,
    #[serde(default = "learned")]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub fast: bool,
}

fn run_subcommand() -> String {
    "run".into()
}

fn learned() -> EstimatorKind {
    EstimatorKind::Learned
}

pub const MANIFEST_METRICS_FILE: &str = "metrics.csv";

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let m: Manifest = serde_json::from_str(&read_file(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.subcommand != "run" {
            return Err(CliError::Usage(format!("manifest subcommand {:?} is not supported; use \"run\"", self.subcommand)));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Usage("manifest lists no seeds".into()));
        }
        self.policy_kinds().map(|_| ())
    }

    pub fn policy_kinds(&self) -> CliResult<Vec<PolicyKind>> {
        if self.policies.is_empty() {
            return Err(CliError::Usage("manifest lists no policies".into()));
        }
        self.policies.iter().map(|p| p.parse::<PolicyKind>().map_err(|e| CliError::Usage(e.to_string()))).collect()
    }
}

pub fn load_config(path: Option<&Path>, fast: bool) -> CliResult<ScenarioConfig> {
    let cfg = match path {
        Some(p) => ScenarioConfig::from_json(&read_file(p)?)?,
        None => ScenarioConfig::default(),
    };
    Ok(if fast { cfg.fast() } else { cfg })
}

pub fn make_estimator(kind: EstimatorKind, models_dir: &Path, cfg: &ScenarioConfig) -> CliResult<Arc<dyn BlerEstimator>> {
    let fading = cfg.propagation.fading;
    Ok(match kind {
        EstimatorKind::Learned => load_learned(models_dir, cfg)?,
        EstimatorKind::CqiOracle => Arc::new(CqiOracleEstimator::new(cfg.oracle.clone(), cfg.cqi_quantizer.clone(), fading)),
        EstimatorKind::Genie => Arc::new(GenieEstimator::new(cfg.oracle.clone(), fading)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub policy: String,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Runs every (policy, seed) pair in parallel. Rows come back policy-major in
/// the order given; traces, if asked for, are written after all runs finish.
pub fn run_batch(
    cfg: &ScenarioConfig,
    policies: &[PolicyKind],
    seeds: &[u64],
    estimator: Arc<dyn BlerEstimator>,
    trace_dir: Option<&Path>,
) -> CliResult<Vec<RunRow>> {
    let opts = RunOptions { audit: trace_dir.is_some(), events: trace_dir.is_some(), bler_override: None };
    let jobs: Vec<(PolicyKind, u64)> = policies.iter().flat_map(|&p| seeds.iter().map(move |&s| (p, s))).collect();
    let outputs = jobs
        .par_iter()
        .map(|&(kind, seed)| {
            let policy = make_policy(kind, estimator.clone());
            run_scenario_with(cfg, policy.as_ref(), seed, &opts).map_err(CliError::from)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(jobs.len());
    for ((kind, seed), out) in jobs.into_iter().zip(outputs) {
        if let Some(dir) = trace_dir {
            let stem = format!("{kind}-{seed}");
            write_file(&dir.join(format!("{stem}.events.jsonl")), lines(&out.events).as_bytes())?;
            write_file(&dir.join(format!("{stem}.audit.jsonl")), lines(&out.audit).as_bytes())?;
        }
        rows.push(RunRow { policy: kind.to_string(), seed, metrics: out.metrics });
    }
    Ok(rows)
}

fn lines(v: &[String]) -> String {
    let mut s = v.join("\n");
    if !s.is_empty() {
        s.push('\n');
    }
    s
}

/// Six significant digits, printed in the shortest form that reads back to
/// the rounded value.
pub fn fmt6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn write_metrics_csv<W: Write>(rows: &[RunRow], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CliError::Infeasible(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.policy.clone(),
            r.seed.to_string(),
            fmt6(m.avg_rate_bps),
            fmt6(m.avg_latency_s),
            fmt6(m.reliability),
            fmt6(m.resource_hz),
            fmt6(m.se_bps_per_hz),
            fmt6(m.qos.rate),
            fmt6(m.qos.latency),
            fmt6(m.qos.reliability),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Infeasible(e.to_string()))
}

/// `a..b` (inclusive) or a comma list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = |_| format!("bad seed list {s:?}; use 1..10 or 1,2,3");
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse::<u64>().map_err(bad)).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("seed list {s:?} is empty"));
    }
    Ok(seeds)
}
