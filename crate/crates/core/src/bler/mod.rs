//! BLER ground truth and the learned estimation pipeline: CQI-history
//! clustering, label classification and the BLER regressor.

pub mod dataset;
pub mod estimator;
pub mod kmeans;
pub mod oracle;
pub mod regressor;

pub use dataset::{generate_training_set, read_training_csv, write_training_csv, TrainingRow, TrainingSweep};
pub use estimator::{
    BlerEstimator, ConstantEstimator, CqiOracleEstimator, FixedSnrOracle, GenieEstimator, LearnedEstimator, LinkCurve,
};
pub use kmeans::{cqi_label, evaluate_classifier, kmeans_fit, train_classifier, ClassifierReport, CqiClusterModel, KmeansFit};
pub use oracle::{oracle_bler, BlerOracleParams, FadingCurve};
pub use regressor::{estimate_bler, train_regressor, BlerRegressor, RegressionSample, RegressorReport, TrainerConfig};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Cluster count of the deployed model.
    pub n_clusters: usize,
    /// Cluster counts evaluated in the classifier report.
    pub report_clusters: Vec<usize>,
    pub classifier_train_fraction: f64,
    pub trainer: TrainerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_clusters: kmeans::DEFAULT_CLUSTERS,
            report_clusters: vec![20, 30, 40, 50],
            classifier_train_fraction: 0.7,
            trainer: TrainerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingReport {
    pub rows: usize,
    pub n_clusters: usize,
    pub classifiers: Vec<ClassifierReport>,
    pub regressor: RegressorReport,
}

#[derive(Debug, Clone)]
pub struct TrainedModels {
    /// Nearest-centroid classifier of the deployed cluster count.
    pub clusters: CqiClusterModel,
    pub regressor: BlerRegressor,
    pub report: TrainingReport,
}

/// Clusters the CQI histories, fits and scores the label classifier for every
/// reported cluster count, then trains the regressor on the deployed labels.
pub fn train_models<R: Rng + ?Sized>(rows: &[TrainingRow], pc: &PipelineConfig, rng: &mut R) -> Result<TrainedModels> {
    if rows.len() < regressor::MIN_TRAINING_ROWS {
        return invalid(format!("{} training rows, at least {} required", rows.len(), regressor::MIN_TRAINING_ROWS));
    }
    let seqs: Vec<Vec<f64>> = rows.iter().map(|r| r.cqi.iter().map(|&c| c as f64).collect()).collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(rng);
    let n_train = (rows.len() as f64 * pc.classifier_train_fraction).round() as usize;
    let (train, test) = order.split_at(n_train);
    let pick = |idx: &[usize], v: &[Vec<f64>]| idx.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();

    let mut counts = pc.report_clusters.clone();
    if !counts.contains(&pc.n_clusters) {
        counts.push(pc.n_clusters);
    }
    let mut classifiers = Vec::new();
    let mut deployed = None;
    for &k in &counts {
        let fit = kmeans_fit(&seqs, k, rng)?;
        let train_labels: Vec<usize> = train.iter().map(|&i| fit.labels[i]).collect();
        let test_labels: Vec<usize> = test.iter().map(|&i| fit.labels[i]).collect();
        let clf = train_classifier(&pick(train, &seqs), &train_labels, &fit.model)?;
        let rep = evaluate_classifier(&clf, &pick(test, &seqs), &test_labels);
        if pc.report_clusters.contains(&k) {
            classifiers.push(rep);
        }
        if k == pc.n_clusters {
            deployed = Some((clf, fit.labels));
        }
    }
    let (clusters, labels) = deployed.expect("deployed cluster count is always fitted");
    let samples: Vec<RegressionSample> = rows
        .iter()
        .zip(&labels)
        .map(|(r, &label)| RegressionSample { label, numerology: r.numerology, power_level: r.power_level, mcs: r.mcs, bler: r.bler })
        .collect();
    let (regressor, reg_report) = train_regressor(&samples, clusters.levels(), &pc.trainer, rng)?;
    Ok(TrainedModels {
        clusters,
        regressor,
        report: TrainingReport { rows: rows.len(), n_clusters: pc.n_clusters, classifiers, regressor: reg_report },
    })
}
