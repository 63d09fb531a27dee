use std::path::{Path, PathBuf};
use std::sync::Arc;

use qosmc_core::bler::{
    generate_training_set, train_models, write_training_csv, BlerEstimator, BlerRegressor, CqiClusterModel,
    CqiOracleEstimator, LearnedEstimator, PipelineConfig, TrainingReport, TrainingSweep,
};
use qosmc_core::sim::ScenarioConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{read_file, write_file, CliError, CliResult};

pub const CLUSTER_MODEL_FILE: &str = "cluster_model.json";
pub const REGRESSOR_FILE: &str = "regressor.json";
pub const DATASET_FILE: &str = "dataset.csv";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

/// Generates the oracle dataset, trains both models and writes every artifact
/// under `out`.
pub fn cmd_train(cfg: &ScenarioConfig, sweep: &TrainingSweep, pipeline: &PipelineConfig, seed: u64, out: &Path) -> CliResult<TrainingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = generate_training_set(cfg, sweep, &mut rng)?;
    let models = train_models(&rows, pipeline, &mut rng)?;
    let mut csv = Vec::new();
    write_training_csv(&rows, &mut csv)?;
    write_file(&out.join(DATASET_FILE), &csv)?;
    write_file(&out.join(CLUSTER_MODEL_FILE), models.clusters.to_json()?.as_bytes())?;
    write_file(&out.join(REGRESSOR_FILE), models.regressor.to_json()?.as_bytes())?;
    let report = serde_json::to_string_pretty(&models.report).map_err(|e| CliError::Infeasible(e.to_string()))?;
    write_file(&out.join(TRAIN_REPORT_FILE), report.as_bytes())?;
    Ok(models.report)
}

/// Learned estimator from a `train` output directory.
pub fn load_learned(dir: &Path, cfg: &ScenarioConfig) -> CliResult<Arc<dyn BlerEstimator>> {
    let clusters = CqiClusterModel::from_json(&read_file(&dir.join(CLUSTER_MODEL_FILE))?)?;
    let regressor = BlerRegressor::from_json(&read_file(&dir.join(REGRESSOR_FILE))?)?;
    let cold = CqiOracleEstimator::new(cfg.oracle.clone(), cfg.cqi_quantizer.clone(), cfg.propagation.fading);
    Ok(Arc::new(LearnedEstimator::new(clusters, regressor, cold)?))
}

pub fn summary_lines(report: &TrainingReport, out: &Path) -> Vec<String> {
    let mut lines = vec![format!("{} training rows, deployed model: {} clusters", report.rows, report.n_clusters)];
    for c in &report.classifiers {
        lines.push(format!("  {:>3} clusters: classifier accuracy {:.4} on {} held-out rows", c.n_clusters, c.accuracy, c.test_size));
    }
    let r = &report.regressor;
    lines.push(format!("  regressor: test MAE {:.4}, {:.1}% within 0.05 ({} test rows)", r.test_mae, 100.0 * r.test_within_005, r.test_size));
    let files: Vec<PathBuf> = [CLUSTER_MODEL_FILE, REGRESSOR_FILE, DATASET_FILE, TRAIN_REPORT_FILE].iter().map(|f| out.join(f)).collect();
    lines.push(format!("wrote {}", files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")));
    lines
}
