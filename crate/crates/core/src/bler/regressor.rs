//! Feed-forward BLER regressor: (CQI label, numerology, power level, MCS) to a
//! BLER in [0, 1]. Two tanh hidden layers, sigmoid output, Adam on MSE.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::radio::{Numerology, MAX_MCS};

pub const REGRESSOR_SCHEMA: &str = "qosmc/bler-regressor/v1";
pub const MIN_TRAINING_ROWS: usize = 500;
/// CQI levels are scaled by this before entering the network.
const CQI_SCALE: f64 = 15.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn new<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let w = (0..n_in * n_out).map(|_| rng.random_range(-limit..limit)).collect();
        Dense { n_in, n_out, w, b: vec![0.0; n_out] }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.b);
        for (j, &xj) in x.iter().enumerate() {
            // one-hot inputs are mostly zero
            if xj == 0.0 {
                continue;
            }
            for (o, row) in out.iter_mut().zip(self.w.chunks_exact(self.n_in)) {
                *o += row[j] * xj;
            }
        }
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_fraction: f64,
    pub grad_clip: Option<f64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            hidden: 64,
            epochs: 50,
            batch_size: 128,
            learning_rate: 3e-3,
            train_fraction: 0.7,
            grad_clip: Some(1.0),
        }
    }
}

/// One regression sample: label plus link context and the observed BLER.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionSample {
    pub label: usize,
    pub numerology: Numerology,
    pub power_level: u8,
    pub mcs: usize,
    pub bler: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlerRegressor {
    pub schema: String,
    /// Mean CQI of every label, fed to the network next to the one-hot code.
    pub label_levels: Vec<f64>,
    trained: bool,
    layers: Vec<Dense>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressorReport {
    pub train_size: usize,
    pub test_size: usize,
    pub epochs: usize,
    /// Mean training loss after each epoch.
    pub train_mse: Vec<f64>,
    pub test_mae: f64,
    /// Fraction of test predictions within 0.05 of the observed BLER.
    pub test_within_005: f64,
}

impl BlerRegressor {
    /// Fresh, untrained network for the given label levels.
    pub fn new<R: Rng + ?Sized>(label_levels: Vec<f64>, hidden: usize, rng: &mut R) -> Result<Self> {
        if label_levels.is_empty() || hidden == 0 {
            return invalid("regressor needs at least one label and one hidden unit");
        }
        let n_in = label_levels.len() + 4;
        let layers = vec![Dense::new(n_in, hidden, rng), Dense::new(hidden, hidden, rng), Dense::new(hidden, 1, rng)];
        Ok(BlerRegressor { schema: REGRESSOR_SCHEMA.to_string(), label_levels, trained: false, layers })
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn n_labels(&self) -> usize {
        self.label_levels.len()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    fn encode(&self, label: usize, num: Numerology, power_level: u8, mcs: usize, x: &mut Vec<f64>) {
        x.clear();
        x.resize(self.label_levels.len(), 0.0);
        x[label] = 1.0;
        x.push(self.label_levels[label] / CQI_SCALE);
        x.push(num.mu() as f64 / 3.0);
        x.push(power_level as f64 / 2.0);
        x.push((mcs as f64 - 1.0) / (MAX_MCS as f64 - 1.0));
    }

    fn check(&self, label: usize, mcs: usize) -> Result<()> {
        if label >= self.label_levels.len() {
            return invalid(format!("label {label} outside 0..{}", self.label_levels.len()));
        }
        if !(1..=MAX_MCS).contains(&mcs) {
            return invalid(format!("MCS index {mcs} outside 1..=27"));
        }
        Ok(())
    }

    /// Forward pass keeping activations: `acts[0]` is the input, `acts[3]` the output.
    fn forward(&self, x: &[f64], acts: &mut [Vec<f64>; 4]) {
        acts[0].clear();
        acts[0].extend_from_slice(x);
        for l in 0..3 {
            let (done, rest) = acts.split_at_mut(l + 1);
            self.layers[l].forward(&done[l], &mut rest[0]);
            if l < 2 {
                rest[0].iter_mut().for_each(|v| *v = v.tanh());
            } else {
                rest[0].iter_mut().for_each(|v| *v = sigmoid(*v));
            }
        }
    }

    fn predict_raw(&self, label: usize, num: Numerology, power_level: u8, mcs: usize) -> f64 {
        let mut x = Vec::new();
        self.encode(label, num, power_level, mcs, &mut x);
        let mut acts: [Vec<f64>; 4] = Default::default();
        self.forward(&x, &mut acts);
        acts[3][0]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: BlerRegressor = serde_json::from_str(s)?;
        if r.schema != REGRESSOR_SCHEMA {
            return invalid(format!("unsupported regressor schema {:?}", r.schema));
        }
        let n_in = r.label_levels.len() + 4;
        let shapes_ok = r.layers.len() == 3
            && r.layers[0].n_in == n_in
            && r.layers[1].n_in == r.layers[0].n_out
            && r.layers[2].n_in == r.layers[1].n_out
            && r.layers[2].n_out == 1
            && r.layers.iter().all(|d| d.w.len() == d.n_in * d.n_out && d.b.len() == d.n_out);
        if !shapes_ok {
            return invalid("regressor layer shapes are inconsistent");
        }
        Ok(r)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn estimate_bler(reg: &BlerRegressor, label: usize, num: Numerology, power_level: u8, mcs: usize) -> Result<f64> {
    if !reg.trained {
        return Err(Error::NotReady("BLER regressor has not been trained".into()));
    }
    reg.check(label, mcs)?;
    Ok(reg.predict_raw(label, num, power_level, mcs))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Shuffles, splits `train_fraction` / rest, trains on the first part and
/// reports error on the held-out part.
pub fn train_regressor<R: Rng + ?Sized>(
    samples: &[RegressionSample],
    label_levels: Vec<f64>,
    cfg: &TrainerConfig,
    rng: &mut R,
) -> Result<(BlerRegressor, RegressorReport)> {
    if samples.len() < MIN_TRAINING_ROWS {
        return invalid(format!("{} rows, at least {MIN_TRAINING_ROWS} required", samples.len()));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) || cfg.batch_size == 0 || cfg.epochs == 0 {
        return invalid("trainer needs train_fraction in (0,1) and positive batch size and epochs");
    }
    let mut reg = BlerRegressor::new(label_levels, cfg.hidden, rng)?;
    for s in samples {
        reg.check(s.label, s.mcs)?;
        if !(0.0..=1.0).contains(&s.bler) {
            return invalid(format!("BLER target {} outside [0,1]", s.bler));
        }
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let n_train = ((samples.len() as f64) * cfg.train_fraction).round() as usize;
    let (train_idx, test_idx) = order.split_at(n_train);

    let encoded: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut x = Vec::new();
            reg.encode(s.label, s.numerology, s.power_level, s.mcs, &mut x);
            x
        })
        .collect();

    let n_params = reg.n_params();
    let mut adam = Adam { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 };
    let mut grad = vec![0.0; n_params];
    let mut acts: [Vec<f64>; 4] = Default::default();
    let mut deltas: [Vec<f64>; 3] = Default::default();
    let mut batch_order = train_idx.to_vec();
    let mut train_mse = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        batch_order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in batch_order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                reg.forward(&encoded[i], &mut acts);
                let y = acts[3][0];
                let err = y - samples[i].bler;
                epoch_loss += err * err;
                // d(mse)/dz at the sigmoid output
                deltas[2].clear();
                deltas[2].push(2.0 * err * y * (1.0 - y) / batch.len() as f64);
                for l in (0..3).rev() {
                    accumulate(&reg, l, &acts[l], &deltas[l], &mut grad);
                    if l > 0 {
                        let layer = &reg.layers[l];
                        let mut d = vec![0.0; layer.n_in];
                        for (o, row) in layer.w.chunks_exact(layer.n_in).enumerate() {
                            for (dj, wj) in d.iter_mut().zip(row) {
                                *dj += wj * deltas[l][o];
                            }
                        }
                        for (dj, a) in d.iter_mut().zip(&acts[l]) {
                            *dj *= 1.0 - a * a;
                        }
                        deltas[l - 1] = d;
                    }
                }
            }
            if let Some(clip) = cfg.grad_clip {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    grad.iter_mut().for_each(|g| *g *= clip / norm);
                }
            }
            adam_step(&mut reg, &mut adam, &grad, cfg.learning_rate);
        }
        train_mse.push(epoch_loss / batch_order.len().max(1) as f64);
    }
    reg.trained = true;

    let mut abs_sum = 0.0;
    let mut within = 0usize;
    for &i in test_idx {
        let s = &samples[i];
        let e = (reg.predict_raw(s.label, s.numerology, s.power_level, s.mcs) - s.bler).abs();
        abs_sum += e;
        if e <= 0.05 {
            within += 1;
        }
    }
    let n_test = test_idx.len().max(1) as f64;
    let report = RegressorReport {
        train_size: train_idx.len(),
        test_size: test_idx.len(),
        epochs: cfg.epochs,
        train_mse,
        test_mae: abs_sum / n_test,
        test_within_005: within as f64 / n_test,
    };
    Ok((reg, report))
}

/// Adds the weight and bias gradients of layer `l` given its input and output delta.
fn accumulate(reg: &BlerRegressor, l: usize, input: &[f64], delta: &[f64], grad: &mut [f64]) {
    let offset: usize = reg.layers[..l].iter().map(Dense::len).sum();
    let layer = &reg.layers[l];
    let (gw, gb) = grad[offset..offset + layer.len()].split_at_mut(layer.w.len());
    for (o, &d) in delta.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
        for (g, &x) in row.iter_mut().zip(input) {
            if x != 0.0 {
                *g += d * x;
            }
        }
        gb[o] += d;
    }
}

fn adam_step(reg: &mut BlerRegressor, adam: &mut Adam, grad: &[f64], lr: f64) {
    adam.t += 1;
    let c1 = 1.0 - BETA1.powi(adam.t);
    let c2 = 1.0 - BETA2.powi(adam.t);
    let params = reg.layers.iter_mut().flat_map(|d| d.w.iter_mut().chain(d.b.iter_mut()));
    for (((p, g), m), v) in params.zip(grad).zip(adam.m.iter_mut()).zip(adam.v.iter_mut()) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(levels: &[f64], f: impl Fn(usize, usize) -> f64) -> Vec<RegressionSample> {
        let mut out = Vec::new();
        for label in 0..levels.len() {
            for mu in [0u8, 2, 3] {
                for mcs in 1..=MAX_MCS {
                    out.push(RegressionSample {
                        label,
                        numerology: Numerology::new(mu).unwrap(),
                        power_level: 0,
                        mcs,
                        bler: f(label, mcs),
                    });
                }
            }
        }
        out
    }

    #[test]
    fn learns_a_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let levels: Vec<f64> = (0..8).map(|i| i as f64 * 2.0).collect();
        let data = grid(&levels, |_, _| 0.3);
        let (reg, rep) = train_regressor(&data, levels, &TrainerConfig::default(), &mut rng).unwrap();
        for s in &data {
            let y = estimate_bler(&reg, s.label, s.numerology, s.power_level, s.mcs).unwrap();
            assert!((y - 0.3).abs() <= 0.02, "{y}");
        }
        assert!(rep.test_mae < 0.02);
        assert_eq!(rep.train_size + rep.test_size, data.len());
    }

    #[test]
    fn learns_a_logistic_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let levels: Vec<f64> = (0..10).map(|i| i as f64 * 1.5).collect();
        let target = |label: usize, mcs: usize| 1.0 / (1.0 + (3.0 * levels[label] - 1.1 * mcs as f64).exp());
        let data = grid(&levels, target);
        let (_, rep) = train_regressor(&data, levels.clone(), &TrainerConfig::default(), &mut rng).unwrap();
        assert!(rep.test_mae < 0.05, "{}", rep.test_mae);
        assert!(rep.train_mse.last().unwrap() < &rep.train_mse[0]);
    }

    #[test]
    fn untrained_and_small_inputs_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reg = BlerRegressor::new(vec![1.0, 2.0], 8, &mut rng).unwrap();
        assert!(matches!(estimate_bler(&reg, 0, Numerology::MU0, 0, 5), Err(Error::NotReady(_))));
        let few = grid(&[1.0, 2.0], |_, _| 0.5)[..100].to_vec();
        assert!(train_regressor(&few, vec![1.0, 2.0], &TrainerConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn deterministic_and_json_round_trip() {
        let levels: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let data = grid(&levels, |l, m| if l * 3 > m { 0.1 } else { 0.9 });
        let cfg = TrainerConfig { epochs: 3, ..TrainerConfig::default() };
        let a = train_regressor(&data, levels.clone(), &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap().0;
        let b = train_regressor(&data, levels, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap().0;
        let ja = a.to_json().unwrap();
        assert_eq!(ja, b.to_json().unwrap());
        let back = BlerRegressor::from_json(&ja).unwrap();
        assert_eq!(
            estimate_bler(&back, 3, Numerology::MU2, 1, 9).unwrap(),
            estimate_bler(&a, 3, Numerology::MU2, 1, 9).unwrap()
        );
        assert!(estimate_bler(&a, 8, Numerology::MU2, 1, 9).is_err());
        assert!(estimate_bler(&a, 0, Numerology::MU2, 1, 28).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn output_bounded_for_any_weights(seed in any::<u64>(), scale in 0.0f64..1e3, label in 0usize..5, mcs in 1usize..=27, mu in 0u8..=3, p in 0u8..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut reg = BlerRegressor::new(vec![0.0, 3.0, 6.0, 9.0, 15.0], 16, &mut rng).unwrap();
            for d in reg.layers.iter_mut() {
                d.w.iter_mut().for_each(|w| *w *= scale);
            }
            reg.trained = true;
            let y = estimate_bler(&reg, label, Numerology::new(mu).unwrap(), p, mcs).unwrap();
            prop_assert!((0.0..=1.0).contains(&y));
        }
    }
}
