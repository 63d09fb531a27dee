//! Ground-truth link curves. The per-slot oracle is a logistic in SNR per MCS;
//! [`FadingCurve`] gives its expectation under unit-mean Rayleigh power fading.

use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::radio::{Numerology, MAX_MCS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlerOracleParams {
    /// SNR at 50 % BLER for MCS 1..=27 (element 0 is MCS 1).
    pub snr50_db: Vec<f64>,
    /// Logistic slope in 1/dB.
    pub slope: f64,
    /// Extra SNR needed per numerology step.
    pub numerology_penalty_db: f64,
}

impl Default for BlerOracleParams {
    fn default() -> Self {
        BlerOracleParams {
            snr50_db: (0..MAX_MCS).map(|i| -4.0 + 1.1 * i as f64).collect(),
            slope: 1.0,
            numerology_penalty_db: 0.5,
        }
    }
}

impl BlerOracleParams {
    pub fn validate(&self) -> Result<()> {
        if self.snr50_db.len() != MAX_MCS {
            return invalid(format!("need {MAX_MCS} snr50 values, got {}", self.snr50_db.len()));
        }
        if self.snr50_db.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("snr50 must be strictly increasing in MCS");
        }
        if !(self.slope > 0.0) {
            return invalid(format!("slope must be positive, got {}", self.slope));
        }
        Ok(())
    }

    /// SNR margin above the 50 % point; the oracle is a function of this alone.
    pub fn margin_db(&self, snr_db: f64, mcs: usize, num: Numerology) -> Result<f64> {
        if !(1..=MAX_MCS).contains(&mcs) {
            return invalid(format!("MCS index {mcs} outside 1..=27"));
        }
        Ok(snr_db - self.snr50_db[mcs - 1] - self.numerology_penalty_db * num.mu() as f64)
    }
}

fn logistic_bler(slope: f64, margin_db: f64) -> f64 {
    1.0 / (1.0 + (slope * margin_db).exp())
}

pub fn oracle_bler(snr_db: f64, mcs: usize, num: Numerology, params: &BlerOracleParams) -> Result<f64> {
    Ok(logistic_bler(params.slope, params.margin_db(snr_db, mcs, num)?))
}

/// Tabulated `E_g[oracle(margin + 10 log10 g)]` for `g ~ Exp(1)`.
#[derive(Debug, Clone)]
pub struct FadingCurve {
    slope: f64,
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

const CURVE_LO_DB: f64 = -40.0;
const CURVE_HI_DB: f64 = 80.0;
const CURVE_STEP_DB: f64 = 0.05;
const QUAD_POINTS: usize = 4000;

impl FadingCurve {
    pub fn new(slope: f64) -> Self {
        // Quadrature over u = 1 - exp(-g), uniform on (0,1). The grid is
        // refined geometrically towards u = 0, where deep fades live.
        let nodes: Vec<(f64, f64)> = quadrature_nodes();
        let n = ((CURVE_HI_DB - CURVE_LO_DB) / CURVE_STEP_DB).round() as usize + 1;
        let values = (0..n)
            .map(|i| {
                let m = CURVE_LO_DB + i as f64 * CURVE_STEP_DB;
                nodes.iter().map(|&(gain_db, w)| w * logistic_bler(slope, m + gain_db)).sum::<f64>()
            })
            .collect();
        FadingCurve { slope, lo: CURVE_LO_DB, step: CURVE_STEP_DB, values }
    }

    /// Process-wide table for a slope; building one costs a few million
    /// logistic evaluations.
    pub fn shared(slope: f64) -> Arc<FadingCurve> {
        type Cache = Mutex<Vec<(u64, Arc<FadingCurve>)>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((_, c)) = guard.iter().find(|(k, _)| *k == slope.to_bits()) {
            return Arc::clone(c);
        }
        let c = Arc::new(FadingCurve::new(slope));
        guard.push((slope.to_bits(), Arc::clone(&c)));
        c
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn at_margin(&self, margin_db: f64) -> f64 {
        let x = (margin_db - self.lo) / self.step;
        if x <= 0.0 {
            return self.values[0].max(logistic_bler(self.slope, margin_db));
        }
        let last = self.values.len() - 1;
        if x >= last as f64 {
            // tail: E[BLER] ~ P(g < 10^(-m/10)) for large margins
            let threshold_gain = 10f64.powf(-margin_db / 10.0);
            return (-(-threshold_gain).exp_m1()).min(self.values[last]);
        }
        let i = x.floor() as usize;
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    pub fn bler(&self, snr_db: f64, mcs: usize, num: Numerology, params: &BlerOracleParams) -> Result<f64> {
        Ok(self.at_margin(params.margin_db(snr_db, mcs, num)?))
    }
}

fn quadrature_nodes() -> Vec<(f64, f64)> {
    // uniform bulk on [1e-2, 1) plus one band per decade below it
    let mut nodes = Vec::with_capacity(QUAD_POINTS * 2);
    let mut push = |a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        for k in 0..n {
            let u = a + (k as f64 + 0.5) * h;
            let g = -(-u).ln_1p();
            nodes.push((10.0 * g.log10(), h));
        }
    };
    let mut hi = 1e-2;
    push(hi, 1.0, QUAD_POINTS);
    while hi > 1e-9 {
        let lo = hi / 10.0;
        push(lo, hi, 400);
        hi = lo;
    }
    // below 1e-9 the fade is so deep the block always fails
    nodes.push((-200.0, 1e-9));
    nodes
}
