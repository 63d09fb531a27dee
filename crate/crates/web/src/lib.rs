//! wasm-bindgen surface for the static page in `www/`. Every export returns
//! JSON so the page needs no generated TypeScript types.

use std::sync::Arc;

use qosmc_core::bler::{BlerEstimator, GenieEstimator, LinkCurve};
use qosmc_core::channel::{path_loss_db, snr_db, CqiHistory, Position};
use qosmc_core::policy::{make_policy, PolicyKind};
use qosmc_core::radio::{Numerology, MAX_MCS};
use qosmc_core::selector::{select, GnbSnapshot, ScoreCard};
use qosmc_core::sim::{run_scenario, RunMetrics, ScenarioConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct GnbView {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub numerology: u8,
    pub small_cell: bool,
}

#[derive(Debug, Serialize)]
pub struct Layout {
    pub side_m: f64,
    pub gnbs: Vec<GnbView>,
}

pub fn layout_of(cfg: &ScenarioConfig) -> Layout {
    Layout {
        side_m: cfg.area_side_m,
        gnbs: cfg
            .gnbs
            .iter()
            .map(|g| GnbView {
                id: g.id,
                x: g.position.x,
                y: g.position.y,
                numerology: g.numerology.mu(),
                small_cell: g.carrier == qosmc_core::channel::CarrierClass::Small,
            })
            .collect(),
    }
}

#[derive(Debug, Serialize)]
pub struct BlerCurve {
    pub mcs: usize,
    pub snr_db: Vec<f64>,
    pub bler: Vec<f64>,
}

/// Per-attempt BLER against mean SNR for each requested MCS.
pub fn bler_curves(mcs: &[usize], mu: u8, fading: bool, snr_min: f64, snr_max: f64, steps: usize) -> Result<Vec<BlerCurve>, String> {
    let num = Numerology::new(mu).map_err(|e| e.to_string())?;
    if steps < 2 || snr_max.partial_cmp(&snr_min) != Some(std::cmp::Ordering::Greater) {
        return Err("need at least two points on an increasing SNR range".into());
    }
    let cfg = ScenarioConfig::default();
    let curve = LinkCurve::new(cfg.oracle.clone(), fading);
    let xs: Vec<f64> = (0..steps).map(|i| snr_min + (snr_max - snr_min) * i as f64 / (steps - 1) as f64).collect();
    mcs.iter()
        .map(|&m| {
            if !(1..=MAX_MCS).contains(&m) {
                return Err(format!("MCS {m} outside 1..={MAX_MCS}"));
            }
            Ok(BlerCurve { mcs: m, snr_db: xs.clone(), bler: xs.iter().map(|&s| curve.bler(s, m, num)).collect() })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct SelectionView {
    pub snr_db: Vec<f64>,
    pub cards: Vec<ScoreCard>,
    pub members: Vec<(usize, f64, u32, usize)>,
    pub feasible: bool,
    pub constraints_relaxed: bool,
}

/// Snapshots for a static UE with no shadowing and a flat background load.
pub fn snapshots_at(cfg: &ScenarioConfig, ue: Position, occupied_rbs: u32) -> Vec<GnbSnapshot> {
    cfg.gnbs
        .iter()
        .map(|g| {
            let pl = path_loss_db(g, &ue, 0.0, &cfg.propagation);
            let cqi = cfg.cqi_quantizer.cqi(snr_db(g, pl, 0, &cfg.propagation));
            GnbSnapshot {
                id: g.id,
                position: g.position,
                numerology: g.numerology,
                power_level: g.power_level,
                available_rbs: g.total_rbs.saturating_sub(occupied_rbs),
                total_rbs: g.total_rbs,
                cqi: CqiHistory::from_values(cfg.cqi_history_len, &vec![cqi; cfg.cqi_history_len]),
                mean_snr_db: Some(snr_db(g, pl, g.power_level, &cfg.propagation)),
            }
        })
        .collect()
}

pub fn select_view(x: f64, y: f64, occupied_rbs: u32) -> Result<SelectionView, String> {
    let cfg = ScenarioConfig::default();
    let ue = Position::new(x, y);
    if !ue.within(cfg.area_side_m) {
        return Err(format!("({x}, {y}) lies outside the {} m area", cfg.area_side_m));
    }
    let snaps = snapshots_at(&cfg, ue, occupied_rbs);
    let est = GenieEstimator::new(cfg.oracle.clone(), cfg.propagation.fading);
    let d = select(&snaps, &est, &cfg.qos, &cfg.selector, cfg.epoch_s, &cfg.mcs_table).map_err(|e| e.to_string())?;
    Ok(SelectionView {
        snr_db: snaps.iter().map(|s| s.mean_snr_db.unwrap_or(f64::NEG_INFINITY)).collect(),
        members: d.assignment.members.iter().map(|m| (m.gnb_id, m.cf, m.rbs, m.mcs)).collect(),
        feasible: d.assignment.feasible,
        constraints_relaxed: d.assignment.constraints_relaxed,
        cards: d.cards,
    })
}

#[derive(Debug, Serialize)]
pub struct PolicyRow {
    pub policy: String,
    pub metrics: RunMetrics,
}

/// Short simulation of all three policies on the default scenario.
pub fn compare(seed: u64, duration_s: f64) -> Result<Vec<PolicyRow>, String> {
    if !(0.1..=30.0).contains(&duration_s) {
        return Err("duration must lie in 0.1..=30 s".into());
    }
    let cfg = ScenarioConfig { duration_s, ..ScenarioConfig::default() };
    let est: Arc<dyn BlerEstimator> = Arc::new(GenieEstimator::new(cfg.oracle.clone(), cfg.propagation.fading));
    PolicyKind::ALL
        .iter()
        .map(|&k| {
            let p = make_policy(k, est.clone());
            let metrics = run_scenario(&cfg, p.as_ref(), seed).map_err(|e| e.to_string())?;
            Ok(PolicyRow { policy: k.to_string(), metrics })
        })
        .collect()
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn layout() -> Result<String, JsValue> {
    to_js(Ok(layout_of(&ScenarioConfig::default())))
}

#[wasm_bindgen(js_name = blerCurves)]
pub fn bler_curves_js(mcs: Vec<u32>, mu: u8, fading: bool, snr_min: f64, snr_max: f64, steps: usize) -> Result<String, JsValue> {
    let mcs: Vec<usize> = mcs.into_iter().map(|m| m as usize).collect();
    to_js(bler_curves(&mcs, mu, fading, snr_min, snr_max, steps))
}

#[wasm_bindgen(js_name = selectAt)]
pub fn select_at(x: f64, y: f64, occupied_rbs: u32) -> Result<String, JsValue> {
    to_js(select_view(x, y, occupied_rbs))
}

#[wasm_bindgen(js_name = comparePolicies)]
pub fn compare_policies(seed: u32, duration_s: f64) -> Result<String, JsValue> {
    to_js(compare(seed as u64, duration_s))
}
