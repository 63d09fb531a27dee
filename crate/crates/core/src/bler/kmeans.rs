//! CQI-sequence clustering (k-means++ seeded Lloyd iterations) and the
//! nearest-centroid classifier that maps a live CQI history onto a label.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::CqiHistory;
use crate::error::{invalid, Error, Result};

pub const CLUSTER_MODEL_SCHEMA: &str = "qosmc/cqi-cluster-model/v1";
pub const DEFAULT_CLUSTERS: usize = 40;
const MAX_ITERATIONS: usize = 300;
const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqiClusterModel {
    pub schema: String,
    pub centroids: Vec<Vec<f64>>,
}

impl CqiClusterModel {
    pub fn new(centroids: Vec<Vec<f64>>) -> Result<Self> {
        if centroids.len() < 2 {
            return invalid(format!("need at least 2 clusters, got {}", centroids.len()));
        }
        let dim = centroids[0].len();
        if dim == 0 || centroids.iter().any(|c| c.len() != dim) {
            return invalid("centroids must share one nonzero dimension");
        }
        Ok(CqiClusterModel { schema: CLUSTER_MODEL_SCHEMA.to_string(), centroids })
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    /// Nearest centroid by Euclidean distance; ties go to the lower label.
    pub fn nearest(&self, x: &[f64]) -> usize {
        nearest(&self.centroids, x).0
    }

    /// Mean CQI of each centroid, a scalar summary of the channel level a label stands for.
    pub fn levels(&self) -> Vec<f64> {
        self.centroids.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: CqiClusterModel = serde_json::from_str(s)?;
        if m.schema != CLUSTER_MODEL_SCHEMA {
            return invalid(format!("unsupported cluster model schema {:?}", m.schema));
        }
        CqiClusterModel::new(m.centroids)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub model: CqiClusterModel,
    /// Label of every input sequence under `model`.
    pub labels: Vec<usize>,
    /// Inertia after each Lloyd iteration.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

pub fn kmeans_fit<R: Rng + ?Sized>(sequences: &[Vec<f64>], n_clusters: usize, rng: &mut R) -> Result<KmeansFit> {
    if n_clusters < 2 {
        return invalid(format!("need at least 2 clusters, got {n_clusters}"));
    }
    let dim = sequences.first().map(|s| s.len()).unwrap_or(0);
    if sequences.iter().any(|s| s.len() != dim) || dim == 0 {
        return invalid("sequences must share one nonzero length");
    }
    let mut distinct: Vec<&Vec<f64>> = sequences.iter().collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < n_clusters {
        return invalid(format!("{} distinct sequences for {n_clusters} clusters", distinct.len()));
    }

    let mut centroids = plus_plus_init(sequences, n_clusters, rng);
    let mut labels = vec![0usize; sequences.len()];
    let mut inertia = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (l, x) in labels.iter_mut().zip(sequences) {
            *l = nearest(&centroids, x).0;
        }
        let mut sums = vec![vec![0.0; dim]; n_clusters];
        let mut counts = vec![0usize; n_clusters];
        for (&l, x) in labels.iter().zip(sequences) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| if n == 0 { Vec::new() } else { s.into_iter().map(|v| v / n as f64).collect() })
            .collect();
        // an emptied cluster takes over the point worst served by the others
        for k in 0..n_clusters {
            if next[k].is_empty() {
                let placed: Vec<Vec<f64>> = next.iter().filter(|c| !c.is_empty()).cloned().collect();
                let far = sequences
                    .iter()
                    .max_by(|a, b| nearest(&placed, a).1.total_cmp(&nearest(&placed, b).1))
                    .expect("nonempty input");
                next[k] = far.clone();
            }
        }
        let shift = centroids.iter().zip(&next).map(|(a, b)| sq_dist(a, b).sqrt()).fold(0.0, f64::max);
        centroids = next;
        inertia.push(sequences.iter().map(|x| nearest(&centroids, x).1).sum());
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    for (l, x) in labels.iter_mut().zip(sequences) {
        *l = nearest(&centroids, x).0;
    }
    Ok(KmeansFit { model: CqiClusterModel::new(centroids)?, labels, inertia, iterations })
}

fn plus_plus_init<R: Rng + ?Sized>(xs: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![xs[rng.random_range(0..xs.len())].clone()];
    let mut d2: Vec<f64> = xs.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            if target < d {
                pick = Some(i);
                break;
            }
            target -= d;
            pick = Some(i);
        }
        let c = xs[pick.expect("distinct points remain")].clone();
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Label of a warm CQI history.
pub fn cqi_label(model: &CqiClusterModel, hist: &CqiHistory) -> Result<usize> {
    if !hist.is_warm() {
        return Err(Error::NotReady(format!(
            "CQI history has {} of {} samples",
            hist.values().len(),
            hist.capacity()
        )));
    }
    if hist.capacity() != model.dim() {
        return invalid(format!("history length {} vs model dimension {}", hist.capacity(), model.dim()));
    }
    Ok(model.nearest(&hist.as_features()))
}

/// Nearest-centroid classifier fitted to labelled sequences: each class is
/// represented by the mean of its training members. Classes absent from the
/// training data fall back to `prior` centroids.
pub fn train_classifier(sequences: &[Vec<f64>], labels: &[usize], prior: &CqiClusterModel) -> Result<CqiClusterModel> {
    if sequences.len() != labels.len() {
        return invalid("one label per sequence required");
    }
    let k = prior.n_clusters();
    let dim = prior.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (x, &l) in sequences.iter().zip(labels) {
        if l >= k || x.len() != dim {
            return invalid(format!("label {l} or sequence length {} out of range", x.len()));
        }
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(x) {
            *s += v;
        }
    }
    let centroids = sums
        .into_iter()
        .zip(counts)
        .zip(&prior.centroids)
        .map(|((s, n), p)| if n == 0 { p.clone() } else { s.into_iter().map(|v| v / n as f64).collect() })
        .collect();
    CqiClusterModel::new(centroids)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub n_clusters: usize,
    pub accuracy: f64,
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<u32>>,
    pub test_size: usize,
}

pub fn evaluate_classifier(model: &CqiClusterModel, sequences: &[Vec<f64>], truth: &[usize]) -> ClassifierReport {
    let k = model.n_clusters();
    let mut confusion = vec![vec![0u32; k]; k];
    let mut hits = 0usize;
    for (x, &t) in sequences.iter().zip(truth) {
        let p = model.nearest(x);
        if p == t {
            hits += 1;
        }
        if t < k {
            confusion[t][p] += 1;
        }
    }
    let n = sequences.len().max(1);
    ClassifierReport { n_clusters: k, accuracy: hits as f64 / n as f64, confusion, test_size: sequences.len() }
}
