//! Signal-side ground truth: geometry, random-waypoint mobility, log-distance
//! path loss with correlated lognormal shadowing, SNR, CQI quantization and
//! the per-gNB CQI history.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::radio::{Numerology, SUBCARRIERS_PER_RB};

pub const NUM_CQI: u8 = 16;
pub const NUM_POWER_LEVELS: u8 = 3;
/// Each power level backs off this much from the maximum.
pub const POWER_STEP_DB: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn within(&self, side: f64) -> bool {
        (0.0..=side).contains(&self.x) && (0.0..=side).contains(&self.y)
    }

    pub fn random<R: Rng + ?Sized>(side: f64, rng: &mut R) -> Self {
        Position { x: rng.random::<f64>() * side, y: rng.random::<f64>() * side }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilityParams {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams { v_min: 0.5, v_max: 3.0 }
    }
}

impl MobilityParams {
    fn draw_speed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.v_max <= self.v_min {
            return self.v_min;
        }
        self.v_min + rng.random::<f64>() * (self.v_max - self.v_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityState {
    pub position: Position,
    pub waypoint: Position,
    pub speed: f64,
}

impl MobilityState {
    pub fn random<R: Rng + ?Sized>(side: f64, params: &MobilityParams, rng: &mut R) -> Self {
        let position = Position::random(side, rng);
        let waypoint = Position::random(side, rng);
        MobilityState { position, waypoint, speed: params.draw_speed(rng) }
    }

    pub fn stationary(position: Position) -> Self {
        MobilityState { position, waypoint: position, speed: 0.0 }
    }
}

/// Random-waypoint step. Travel left over after reaching a waypoint is
/// dropped, so one step never moves farther than `speed * dt`.
pub fn step_mobility<R: Rng + ?Sized>(
    state: &MobilityState,
    dt: f64,
    side: f64,
    params: &MobilityParams,
    rng: &mut R,
) -> MobilityState {
    if state.speed <= 0.0 || dt <= 0.0 {
        return *state;
    }
    let remaining = state.position.distance(&state.waypoint);
    let travel = state.speed * dt;
    if travel >= remaining {
        return MobilityState {
            position: state.waypoint,
            waypoint: Position::random(side, rng),
            speed: params.draw_speed(rng),
        };
    }
    let f = travel / remaining;
    let p = Position::new(
        state.position.x + f * (state.waypoint.x - state.position.x),
        state.position.y + f * (state.waypoint.y - state.position.y),
    );
    MobilityState { position: Position::new(p.x.clamp(0.0, side), p.y.clamp(0.0, side)), ..*state }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarrierClass {
    /// Sub-7 GHz macro cell.
    Macro,
    /// FR2 small cell.
    Small,
}

/// Propagation constants of one carrier class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub carrier_ghz: f64,
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
    /// Combined transmit/receive array gain.
    pub antenna_gain_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    #[serde(rename = "macro")]
    pub macro_cell: ClassParams,
    #[serde(rename = "small")]
    pub small_cell: ClassParams,
    pub decorrelation_m: f64,
    pub noise_figure_db: f64,
    /// Gaussian error on the SNR a UE measures before quantizing it to a CQI.
    pub cqi_measurement_sigma_db: f64,
    /// Disable per-slot Rayleigh fading (unit gain every slot).
    pub fading: bool,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            macro_cell: ClassParams {
                carrier_ghz: 3.5,
                path_loss_exponent: 2.8,
                shadowing_sigma_db: 4.0,
                antenna_gain_db: 0.0,
            },
            small_cell: ClassParams {
                carrier_ghz: 25.0,
                path_loss_exponent: 2.1,
                shadowing_sigma_db: 7.0,
                antenna_gain_db: 24.0,
            },
            decorrelation_m: 25.0,
            noise_figure_db: 7.0,
            cqi_measurement_sigma_db: 1.0,
            fading: true,
        }
    }
}

impl PropagationParams {
    pub fn class(&self, c: CarrierClass) -> &ClassParams {
        match c {
            CarrierClass::Macro => &self.macro_cell,
            CarrierClass::Small => &self.small_cell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbProfile {
    pub id: usize,
    pub position: Position,
    pub numerology: Numerology,
    pub carrier: CarrierClass,
    pub max_power_dbm: f64,
    /// 0 = maximum power, 1 = -3 dB, 2 = -6 dB.
    #[serde(default)]
    pub power_level: u8,
    #[serde(default = "default_total_rbs")]
    pub total_rbs: u32,
}

fn default_total_rbs() -> u32 {
    66
}

impl GnbProfile {
    pub fn validate(&self) -> Result<()> {
        if self.power_level >= NUM_POWER_LEVELS {
            return invalid(format!("gNB {}: power level {} not in 0..3", self.id, self.power_level));
        }
        if self.total_rbs == 0 {
            return invalid(format!("gNB {} has no resource blocks", self.id));
        }
        Ok(())
    }

    pub fn tx_power_dbm(&self, power_level: u8) -> f64 {
        self.max_power_dbm - POWER_STEP_DB * power_level as f64
    }

    /// Full carrier bandwidth, which sets the receiver noise floor.
    pub fn carrier_bandwidth_hz(&self) -> f64 {
        self.total_rbs as f64 * SUBCARRIERS_PER_RB * self.numerology.scs_hz()
    }
}

/// Free-space intercept at 1 m for a carrier in GHz.
pub fn reference_loss_db(carrier_ghz: f64) -> f64 {
    32.4 + 20.0 * carrier_ghz.log10()
}

pub fn path_loss_db(gnb: &GnbProfile, ue: &Position, shadowing_db: f64, params: &PropagationParams) -> f64 {
    let c = params.class(gnb.carrier);
    let d = gnb.position.distance(ue).max(1.0);
    reference_loss_db(c.carrier_ghz) + 10.0 * c.path_loss_exponent * d.log10() + shadowing_db
}

pub fn noise_floor_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    -174.0 + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

pub fn snr_db(gnb: &GnbProfile, pl_db: f64, power_level: u8, params: &PropagationParams) -> f64 {
    gnb.tx_power_dbm(power_level) + params.class(gnb.carrier).antenna_gain_db
        - pl_db
        - noise_floor_dbm(gnb.carrier_bandwidth_hz(), params.noise_figure_db)
}

/// Per-slot Rayleigh power gain in dB (exponential with unit mean).
pub fn rayleigh_gain_db<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let g: f64 = Exp1.sample(rng);
    10.0 * g.max(1e-300).log10()
}

/// Lognormal shadowing with exponential spatial correlation: the value is
/// refreshed as the UE moves, fully decorrelating over `decorrelation_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shadowing {
    pub value_db: f64,
    pub anchor: Position,
}

impl Shadowing {
    pub fn new<R: Rng + ?Sized>(sigma_db: f64, at: Position, rng: &mut R) -> Self {
        let z: f64 = StandardNormal.sample(rng);
        Shadowing { value_db: sigma_db * z, anchor: at }
    }

    pub fn update<R: Rng + ?Sized>(&mut self, sigma_db: f64, decorrelation_m: f64, at: Position, rng: &mut R) {
        let moved = self.anchor.distance(&at);
        // drawing even when stationary keeps the random stream independent of the trajectory
        let z: f64 = StandardNormal.sample(rng);
        if moved <= 0.0 {
            return;
        }
        let rho = (-moved / decorrelation_m).exp();
        self.value_db = rho * self.value_db + (1.0 - rho * rho).sqrt() * sigma_db * z;
        self.anchor = at;
    }
}

/// Piecewise-constant SNR to CQI map over 16 increasing thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqiQuantizer {
    thresholds: Vec<f64>,
}

impl Default for CqiQuantizer {
    /// -6 dB to +39 dB in 3 dB steps, wide enough to resolve the margins
    /// the top MCS need under Rayleigh fading.
    fn default() -> Self {
        CqiQuantizer::uniform(-6.0, 3.0)
    }
}

impl CqiQuantizer {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.len() != NUM_CQI as usize {
            return invalid(format!("need {NUM_CQI} CQI thresholds, got {}", thresholds.len()));
        }
        if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("CQI thresholds must be strictly increasing");
        }
        Ok(CqiQuantizer { thresholds })
    }

    /// Evenly spaced thresholds `first + k * step`.
    pub fn uniform(first_db: f64, step_db: f64) -> Self {
        CqiQuantizer { thresholds: (0..NUM_CQI).map(|k| first_db + step_db * k as f64).collect() }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn cqi(&self, snr_db: f64) -> u8 {
        let n = self.thresholds.iter().take_while(|&&t| snr_db >= t).count();
        n.min(NUM_CQI as usize - 1) as u8
    }

    /// Representative SNR of a CQI bin (bin midpoint; open end bins sit 1 dB
    /// beyond their closed edge).
    pub fn bin_center_db(&self, cqi: u8) -> f64 {
        let t = &self.thresholds;
        match cqi {
            0 => t[0] - 1.0,
            k if k >= NUM_CQI - 1 => t[NUM_CQI as usize - 2] + 1.0,
            k => 0.5 * (t[k as usize - 1] + t[k as usize]),
        }
    }
}

pub fn snr_to_cqi(snr_db: f64, quantizer: &CqiQuantizer) -> u8 {
    quantizer.cqi(snr_db)
}

/// Ring buffer of the most recent CQI reports from one gNB, newest last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqiHistory {
    capacity: usize,
    values: VecDeque<u8>,
}

impl CqiHistory {
    pub fn new(capacity: usize) -> Self {
        CqiHistory { capacity: capacity.max(1), values: VecDeque::with_capacity(capacity) }
    }

    pub fn from_values(capacity: usize, values: &[u8]) -> Self {
        let mut h = CqiHistory::new(capacity);
        for &v in values {
            h.push(v);
        }
        h
    }

    pub fn push(&mut self, cqi: u8) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(cqi.min(NUM_CQI - 1));
    }

    pub fn is_warm(&self) -> bool {
        self.values.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn latest(&self) -> Option<u8> {
        self.values.back().copied()
    }

    pub fn values(&self) -> Vec<u8> {
        self.values.iter().copied().collect()
    }

    pub fn as_features(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

pub fn push_cqi(mut hist: CqiHistory, cqi: u8) -> CqiHistory {
    hist.push(cqi);
    hist
}
