use serde::{Deserialize, Serialize};

use crate::bler::BlerOracleParams;
use crate::channel::{CarrierClass, CqiQuantizer, GnbProfile, MobilityParams, Position, PropagationParams};
use crate::error::{invalid, Result};
use crate::radio::{McsTable, Numerology};
use crate::selector::{QosRequirement, SelectorConfig};

/// Occupied-RB random walk of the other users served by each gNB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadParams {
    /// Largest change per step, in RBs.
    pub step_rbs: u32,
    pub period_s: f64,
    pub max_occupied_rbs: u32,
}

impl Default for LoadParams {
    fn default() -> Self {
        LoadParams { step_rbs: 5, period_s: 0.1, max_occupied_rbs: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub area_side_m: f64,
    pub gnbs: Vec<GnbProfile>,
    pub propagation: PropagationParams,
    pub cqi_quantizer: CqiQuantizer,
    pub mobility: MobilityParams,
    pub oracle: BlerOracleParams,
    pub mcs_table: McsTable,
    pub cqi_history_len: usize,
    /// Measured traffic time.
    pub duration_s: f64,
    pub epoch_s: f64,
    /// Epochs of channel evolution before traffic starts, so CQI histories are warm.
    pub warmup_epochs: usize,
    pub packet_bytes: u32,
    pub qos: QosRequirement,
    pub selector: SelectorConfig,
    pub load: LoadParams,
    pub harq_max_attempts: u8,
    /// Provided rate within this fraction of the requirement still scores 1.
    pub rate_score_tolerance: f64,
    pub repetitions: usize,
    pub base_seed: u64,
    /// Fixed UE start; drawn per seed when absent.
    pub ue_start: Option<Position>,
    pub ue_mobile: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "default".into(),
            area_side_m: 1000.0,
            gnbs: default_layout(1000.0),
            propagation: PropagationParams::default(),
            cqi_quantizer: CqiQuantizer::default(),
            mobility: MobilityParams::default(),
            oracle: BlerOracleParams::default(),
            mcs_table: McsTable::default(),
            cqi_history_len: 20,
            duration_s: 600.0,
            epoch_s: 0.1,
            warmup_epochs: 20,
            packet_bytes: 1500,
            qos: QosRequirement::default(),
            selector: SelectorConfig::default(),
            load: LoadParams::default(),
            harq_max_attempts: 4,
            rate_score_tolerance: 0.01,
            repetitions: 10,
            base_seed: 1,
            ue_start: None,
            ue_mobile: true,
        }
    }
}

/// Nine gNBs: a mu=0 macro in the centre, mu=3 small cells on the inner-grid
/// corners and mu=2 small cells on the inner-grid edge midpoints.
pub fn default_layout(side: f64) -> Vec<GnbProfile> {
    let (a, m, b) = (side / 6.0, side / 2.0, side * 5.0 / 6.0);
    let mut out = vec![GnbProfile {
        id: 0,
        position: Position::new(m, m),
        numerology: Numerology::MU0,
        carrier: CarrierClass::Macro,
        max_power_dbm: 49.0,
        power_level: 0,
        total_rbs: 66,
    }];
    let small = [
        ((a, a), 3),
        ((b, a), 3),
        ((a, b), 3),
        ((b, b), 3),
        ((m, a), 2),
        ((a, m), 2),
        ((b, m), 2),
        ((m, b), 2),
    ];
    for (i, ((x, y), mu)) in small.into_iter().enumerate() {
        out.push(GnbProfile {
            id: i + 1,
            position: Position::new(x, y),
            numerology: Numerology::new(mu).expect("valid numerology"),
            carrier: CarrierClass::Small,
            max_power_dbm: 29.0,
            power_level: 0,
            total_rbs: 66,
        });
    }
    out
}

impl ScenarioConfig {
    /// Same scenario with a 10 s run.
    pub fn fast(mut self) -> Self {
        self.duration_s = 10.0;
        self
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area_side_m > 0.0) {
            return invalid("area side must be positive");
        }
        if self.gnbs.is_empty() {
            return invalid("scenario has no gNBs");
        }
        for (i, g) in self.gnbs.iter().enumerate() {
            if g.id != i {
                return invalid(format!("gNB ids must be 0..n in order; position {i} has id {}", g.id));
            }
            if !g.position.within(self.area_side_m) {
                return invalid(format!("gNB {i} lies outside the area"));
            }
            g.validate()?;
        }
        CqiQuantizer::new(self.cqi_quantizer.thresholds().to_vec())?;
        self.oracle.validate()?;
        self.qos.validate()?;
        if self.cqi_history_len == 0 {
            return invalid("CQI history length must be positive");
        }
        if !(self.duration_s > 0.0) {
            return invalid("duration must be positive");
        }
        if !(self.epoch_s > 0.0) || self.epoch_s > self.duration_s {
            return invalid("epoch must be positive and no longer than the run");
        }
        if self.repetitions == 0 {
            return invalid("at least one repetition required");
        }
        if self.packet_bytes == 0 {
            return invalid("packet size must be positive");
        }
        if self.harq_max_attempts == 0 {
            return invalid("HARQ needs at least one attempt");
        }
        if self.selector.max_cluster_size == 0 {
            return invalid("maximum cluster size must be at least 1");
        }
        if !(self.selector.allocation_headroom >= 1.0) {
            return invalid("allocation headroom must be at least 1");
        }
        if !(0.0..1.0).contains(&self.rate_score_tolerance) {
            return invalid("rate score tolerance must lie in [0,1)");
        }
        if self.mobility.v_min < 0.0 || self.mobility.v_max < self.mobility.v_min {
            return invalid("speeds need 0 <= v_min <= v_max");
        }
        if self.load.max_occupied_rbs > self.gnbs.iter().map(|g| g.total_rbs).min().unwrap_or(0) || !(self.load.period_s > 0.0) {
            return invalid("background load cap exceeds a gNB's RBs or period is not positive");
        }
        if let Some(p) = self.ue_start {
            if !p.within(self.area_side_m) {
                return invalid("UE start lies outside the area");
            }
        }
        Ok(())
    }

    /// Numerologies present, ascending.
    pub fn numerologies(&self) -> Vec<Numerology> {
        let mut v: Vec<Numerology> = self.gnbs.iter().map(|g| g.numerology).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Finest numerology present; one engine tick is one of its slots.
    pub fn finest_numerology(&self) -> Numerology {
        self.gnbs.iter().map(|g| g.numerology).max().unwrap_or(Numerology::MU0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_documented_scenario() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        assert_eq!(c.gnbs.len(), 9);
        assert_eq!(c.gnbs.iter().filter(|g| g.carrier == CarrierClass::Macro).count(), 1);
        assert_eq!(c.gnbs[0].position, Position::new(500.0, 500.0));
        assert!(c.gnbs.iter().all(|g| g.total_rbs == 66));
        assert_eq!(c.numerologies(), vec![Numerology::MU0, Numerology::MU2, Numerology::MU3]);
        assert_eq!(c.duration_s, 600.0);
        assert_eq!(c.clone().fast().duration_s, 10.0);
        assert_eq!(c.qos.rate_req_bps, 150e6);
        assert_eq!(c.packet_bytes, 1500);
        assert_eq!(c.repetitions, 10);
    }

    #[test]
    fn json_round_trip_and_partial_documents() {
        let c = ScenarioConfig::default();
        let back = ScenarioConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        let partial = ScenarioConfig::from_json(r#"{"duration_s": 3.0}"#).unwrap();
        assert_eq!(partial.duration_s, 3.0);
        assert_eq!(partial.gnbs.len(), 9);
        assert!(ScenarioConfig::from_json(r#"{"duration_s": -1.0}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"gnbs": []}"#).is_err());
    }
}
