//! QoS-aware serving-cluster selection: BLER matrix, per-gNB rate and
//! spectrum-efficiency estimates, four-way scoring, greedy cluster build,
//! participation factors and the RB allocation that realises the split.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bler::BlerEstimator;
use crate::channel::{CqiHistory, Position};
use crate::error::{invalid, Error, Result};
use crate::radio::{self, McsTable, Numerology, RbAllocation, MAX_MCS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub rate: f64,
    pub reliability: f64,
    pub latency: f64,
    pub spectrum_efficiency: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights { rate: 0.25, reliability: 0.25, latency: 0.25, spectrum_efficiency: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QosRequirement {
    pub rate_req_bps: f64,
    pub rel_req: f64,
    pub lat_req_s: f64,
    pub weights: ScoreWeights,
}

impl Default for QosRequirement {
    fn default() -> Self {
        QosRequirement { rate_req_bps: 150e6, rel_req: 0.99, lat_req_s: 0.4e-3, weights: ScoreWeights::default() }
    }
}

impl QosRequirement {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_req_bps > 0.0) {
            return invalid(format!("rate requirement must be positive, got {}", self.rate_req_bps));
        }
        if !(self.rel_req > 0.0 && self.rel_req <= 1.0) {
            return invalid(format!("reliability requirement must be in (0,1], got {}", self.rel_req));
        }
        if !(self.lat_req_s > 0.0) {
            return invalid(format!("latency requirement must be positive, got {}", self.lat_req_s));
        }
        let w = &self.weights;
        let parts = [w.rate, w.reliability, w.latency, w.spectrum_efficiency];
        if parts.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("score weights must lie in [0,1] and sum to 1");
        }
        Ok(())
    }
}

/// Live state of one candidate gNB at a decision epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbSnapshot {
    pub id: usize,
    pub position: Position,
    pub numerology: Numerology,
    pub power_level: u8,
    pub available_rbs: u32,
    pub total_rbs: u32,
    pub cqi: CqiHistory,
    /// True mean SNR at the data power level. Only genie estimators read it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_snr_db: Option<f64>,
}

/// Estimated BLER per gNB (rows) and MCS 1..=27 (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlerMatrix {
    rows: Vec<Vec<f64>>,
}

impl BlerMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for r in &rows {
            if r.len() != MAX_MCS {
                return invalid(format!("BLER row has {} entries, expected {MAX_MCS}", r.len()));
            }
            if r.iter().any(|b| !(0.0..=1.0).contains(b)) {
                return invalid("BLER entries must lie in [0,1]");
            }
        }
        Ok(BlerMatrix { rows })
    }

    pub fn n_gnbs(&self) -> usize {
        self.rows.len()
    }

    /// BLER of gNB row `i` at MCS index `mcs` (1-based).
    pub fn get(&self, i: usize, mcs: usize) -> f64 {
        self.rows[i][mcs - 1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }
}

pub fn build_bler_matrix(snapshots: &[GnbSnapshot], estimator: &dyn BlerEstimator) -> BlerMatrix {
    let rows = snapshots
        .iter()
        .map(|s| estimator.bler_row(s).into_iter().map(|b| if b.is_nan() { 1.0 } else { b.clamp(0.0, 1.0) }).collect())
        .collect();
    BlerMatrix { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub max_es_rate: f64,
    pub best_mcs: usize,
}

/// Best expected rate of each gNB over the MCS table using all its available
/// RBs; ties keep the lower MCS.
pub fn estimate_rates(m: &BlerMatrix, snapshots: &[GnbSnapshot], t: f64, table: &McsTable) -> Result<Vec<RateEstimate>> {
    if m.n_gnbs() != snapshots.len() {
        return invalid("BLER matrix and snapshots disagree on gNB count");
    }
    snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let ns = radio::slot_count(t, s.numerology)? as f64;
            let mut best = RateEstimate { max_es_rate: f64::NEG_INFINITY, best_mcs: 1 };
            for mcs in 1..=MAX_MCS {
                let tbs = radio::tbs_bits(RbAllocation(s.available_rbs), mcs, table)? as f64;
                let r = (1.0 - m.get(i, mcs)) * ns * tbs / t;
                if r > best.max_es_rate {
                    best = RateEstimate { max_es_rate: r, best_mcs: mcs };
                }
            }
            Ok(best)
        })
        .collect()
}

pub fn estimate_se(rates: &[RateEstimate], snapshots: &[GnbSnapshot]) -> Result<Vec<f64>> {
    rates
        .iter()
        .zip(snapshots)
        .map(|(r, s)| radio::spectrum_efficiency(r.max_es_rate, radio::consumed_bandwidth(RbAllocation(s.available_rbs), s.numerology)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub gnb_id: usize,
    pub max_es_rate: f64,
    pub best_mcs: usize,
    /// Estimated BLER at `best_mcs`.
    pub best_bler: f64,
    /// Lowest estimated BLER over all MCS.
    pub min_bler: f64,
    pub es_se: f64,
    pub min_latency_s: f64,
    pub rate_score: f64,
    pub rel_score: f64,
    pub lat_score: f64,
    pub se_score: f64,
    pub overall: f64,
}

/// Rate, reliability and latency scores. `se_score` and `overall` are left at 0.
pub fn qos_scores(
    rates: &[RateEstimate],
    esse: &[f64],
    m: &BlerMatrix,
    snapshots: &[GnbSnapshot],
    req: &QosRequirement,
    reliability_as_bler: bool,
) -> Vec<ScoreCard> {
    rates
        .iter()
        .zip(esse)
        .zip(snapshots)
        .enumerate()
        .map(|(i, ((r, &se), s))| {
            let best_bler = m.get(i, r.best_mcs);
            let min_lat = radio::min_latency(s.numerology);
            let rel = if reliability_as_bler { best_bler } else { 1.0 - best_bler };
            ScoreCard {
                gnb_id: s.id,
                max_es_rate: r.max_es_rate,
                best_mcs: r.best_mcs,
                best_bler,
                min_bler: m.row(i).iter().copied().fold(1.0, f64::min),
                es_se: se,
                min_latency_s: min_lat,
                rate_score: (r.max_es_rate / req.rate_req_bps).min(1.0),
                rel_score: (rel / req.rel_req).min(1.0),
                lat_score: (req.lat_req_s / min_lat).min(1.0),
                se_score: 0.0,
                overall: 0.0,
            }
        })
        .collect()
}

/// Normalise by the largest value; an all-zero vector scores 0 everywhere.
pub fn se_scores(esse: &[f64]) -> Vec<f64> {
    let max = esse.iter().copied().fold(0.0, f64::max);
    esse.iter().map(|&e| if max > 0.0 { e / max } else { 0.0 }).collect()
}

pub fn overall_score(card: &ScoreCard, w: &ScoreWeights) -> f64 {
    w.rate * card.rate_score + w.reliability * card.rel_score + w.latency * card.lat_score + w.spectrum_efficiency * card.se_score
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    pub max_cluster_size: usize,
    /// Score reliability with the BLER itself instead of 1 - BLER.
    pub reliability_as_bler: bool,
    /// Skip a candidate only when taking it would make the rate requirement
    /// unreachable within the size cap.
    pub lookahead: bool,
    /// Multiplier on each member's rate share when sizing its RB allocation.
    pub allocation_headroom: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig { max_cluster_size: 4, reliability_as_bler: false, lookahead: true, allocation_headroom: 1.1 }
    }
}

/// Full score cards for every snapshot.
pub fn score_gnbs(
    snapshots: &[GnbSnapshot],
    m: &BlerMatrix,
    req: &QosRequirement,
    t: f64,
    table: &McsTable,
    reliability_as_bler: bool,
) -> Result<(Vec<RateEstimate>, Vec<ScoreCard>)> {
    let rates = estimate_rates(m, snapshots, t, table)?;
    let esse = estimate_se(&rates, snapshots)?;
    let mut cards = qos_scores(&rates, &esse, m, snapshots, req, reliability_as_bler);
    for (c, s) in cards.iter_mut().zip(se_scores(&esse)) {
        c.se_score = s;
        c.overall = overall_score(c, &req.weights);
    }
    Ok((rates, cards))
}

/// Positions of `cards` in selection order: OS descending, then MAXESRate
/// descending, then gNB id ascending.
pub fn sort_order(cards: &[ScoreCard]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..cards.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (&cards[a], &cards[b]);
        y.overall
            .total_cmp(&x.overall)
            .then(y.max_es_rate.total_cmp(&x.max_es_rate))
            .then(x.gnb_id.cmp(&y.gnb_id))
    });
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSelection {
    /// Positions into the candidate cards, in the order they were added.
    pub members: Vec<usize>,
    pub estimated_rate: f64,
    pub feasible: bool,
}

fn top_sum(rates: impl Iterator<Item = f64>, n: usize) -> f64 {
    let mut v: Vec<f64> = rates.collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.iter().take(n).sum()
}

/// Greedy cluster build over `cards`, which must already exclude gNBs that
/// violate hard constraints.
pub fn select_cluster(cards: &[ScoreCard], req: &QosRequirement, max_cluster_size: usize, lookahead: bool) -> Result<ClusterSelection> {
    if cards.is_empty() {
        return Err(Error::NoFeasibleCluster("no candidate gNBs".into()));
    }
    if max_cluster_size == 0 {
        return invalid("maximum cluster size must be at least 1");
    }
    let order = sort_order(cards);
    let reachable = top_sum(cards.iter().map(|c| c.max_es_rate), max_cluster_size) >= req.rate_req_bps;
    let mut members: Vec<usize> = Vec::new();
    let mut total = 0.0;
    let mut remaining = order.clone();
    while total < req.rate_req_bps && members.len() < max_cluster_size && !remaining.is_empty() {
        let slots_after = max_cluster_size - members.len() - 1;
        let pick = if lookahead && reachable {
            remaining
                .iter()
                .position(|&c| {
                    let rest = remaining.iter().filter(|&&o| o != c).map(|&o| cards[o].max_es_rate);
                    total + cards[c].max_es_rate + top_sum(rest, slots_after) >= req.rate_req_bps
                })
                .unwrap_or(0)
        } else {
            0
        };
        let c = remaining.remove(pick);
        total += cards[c].max_es_rate;
        members.push(c);
    }
    Ok(ClusterSelection { members, estimated_rate: total, feasible: total >= req.rate_req_bps })
}

/// Rate-proportional split; all-zero rates split evenly.
pub fn participation_factors(rates: &[f64]) -> Vec<f64> {
    let total: f64 = rates.iter().sum();
    if rates.is_empty() {
        return Vec::new();
    }
    if !(total > 0.0) {
        return vec![1.0 / rates.len() as f64; rates.len()];
    }
    rates.iter().map(|r| r / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbDemand {
    pub numerology: Numerology,
    pub mcs: usize,
    pub bler: f64,
    pub available_rbs: u32,
    /// Rate this member must carry, in bit/s.
    pub target_rate_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbGrant {
    pub rbs: u32,
    /// Demand exceeded the available RBs and was clamped.
    pub shortfall: bool,
}

/// Smallest RB count whose expected rate over `t` covers the target, clamped to
/// the available RBs.
pub fn allocate_rbs(d: &RbDemand, t: f64, table: &McsTable) -> Result<RbGrant> {
    if d.target_rate_bps <= 0.0 {
        return Ok(RbGrant { rbs: 0, shortfall: false });
    }
    let ns = radio::slot_count(t, d.numerology)? as f64;
    let e = table.entry(d.mcs)?;
    let per_rb = ns * (1.0 - d.bler) * radio::DATA_RES_PER_RB * e.coding_rate * e.bits_per_symbol as f64;
    if !(per_rb > 0.0) {
        return Ok(RbGrant { rbs: d.available_rbs, shortfall: true });
    }
    let exact = d.target_rate_bps * t / per_rb;
    if exact > d.available_rbs as f64 {
        return Ok(RbGrant { rbs: d.available_rbs, shortfall: true });
    }
    let rate_at = |a: u32| -> Result<f64> { Ok((1.0 - d.bler) * ns * radio::tbs_bits(RbAllocation(a), d.mcs, table)? as f64 / t) };
    let mut rbs = exact.ceil() as u32;
    // TBS flooring can leave the ceiling a bit short
    while rbs < d.available_rbs && rate_at(rbs)? < d.target_rate_bps {
        rbs += 1;
    }
    let shortfall = rate_at(rbs)? < d.target_rate_bps;
    Ok(RbGrant { rbs, shortfall })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberAssignment {
    pub gnb_id: usize,
    pub mcs: usize,
    pub cf: f64,
    pub rbs: u32,
    pub est_bler: f64,
    pub est_rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub policy: String,
    pub members: Vec<MemberAssignment>,
    /// Estimated cluster rate covers the requirement.
    pub feasible: bool,
    /// Some member's RB demand was clamped to its availability.
    pub shortfall: bool,
    /// Hard constraints removed every candidate and were dropped.
    pub constraints_relaxed: bool,
    pub excluded: Vec<usize>,
}

impl ClusterAssignment {
    pub fn degree(&self) -> usize {
        self.members.len()
    }

    /// Connectivity vector over gNB ids `0..n`.
    pub fn connectivity(&self, n: usize) -> Vec<bool> {
        let mut con = vec![false; n];
        for m in &self.members {
            if m.gnb_id < n {
                con[m.gnb_id] = true;
            }
        }
        con
    }
}

/// Which cards survive the latency and reliability constraints.
pub fn constraint_mask(cards: &[ScoreCard], req: &QosRequirement) -> (Vec<bool>, Vec<bool>) {
    let lat_ok = cards.iter().map(|c| c.min_latency_s <= req.lat_req_s).collect();
    let rel_ok = cards.iter().map(|c| 1.0 - c.min_bler >= req.rel_req).collect();
    (lat_ok, rel_ok)
}

/// Turns chosen positions plus participation factors into per-member grants.
#[allow(clippy::too_many_arguments)]
pub fn assign_members(
    chosen: &[usize],
    cf: &[f64],
    snapshots: &[GnbSnapshot],
    cards: &[ScoreCard],
    req: &QosRequirement,
    headroom: f64,
    t: f64,
    table: &McsTable,
) -> Result<(Vec<MemberAssignment>, bool)> {
    let mut shortfall = false;
    let mut members = Vec::with_capacity(chosen.len());
    for (&i, &f) in chosen.iter().zip(cf) {
        let (s, c) = (&snapshots[i], &cards[i]);
        let grant = allocate_rbs(
            &RbDemand {
                numerology: s.numerology,
                mcs: c.best_mcs,
                bler: c.best_bler,
                available_rbs: s.available_rbs,
                target_rate_bps: f * req.rate_req_bps * headroom,
            },
            t,
            table,
        )?;
        shortfall |= grant.shortfall;
        members.push(MemberAssignment {
            gnb_id: s.id,
            mcs: c.best_mcs,
            cf: f,
            rbs: grant.rbs,
            est_bler: c.best_bler,
            est_rate_bps: c.max_es_rate,
        });
    }
    Ok((members, shortfall))
}

/// Everything one decision saw and produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub cards: Vec<ScoreCard>,
    pub assignment: ClusterAssignment,
}

/// Complete selection: estimate, score, exclude, build, split and allocate.
pub fn select(
    snapshots: &[GnbSnapshot],
    estimator: &dyn BlerEstimator,
    req: &QosRequirement,
    cfg: &SelectorConfig,
    t: f64,
    table: &McsTable,
) -> Result<Decision> {
    if snapshots.is_empty() {
        return Err(Error::NoFeasibleCluster("no candidate gNBs".into()));
    }
    let m = build_bler_matrix(snapshots, estimator);
    let (_, cards) = score_gnbs(snapshots, &m, req, t, table, cfg.reliability_as_bler)?;
    let (lat_ok, rel_ok) = constraint_mask(&cards, req);
    let both: Vec<usize> = (0..cards.len()).filter(|&i| lat_ok[i] && rel_ok[i]).collect();
    let lat_only: Vec<usize> = (0..cards.len()).filter(|&i| lat_ok[i]).collect();
    let (candidates, relaxed) = if !both.is_empty() {
        (both, false)
    } else if !lat_only.is_empty() {
        (lat_only, true)
    } else {
        ((0..cards.len()).collect(), true)
    };
    let sub: Vec<ScoreCard> = candidates.iter().map(|&i| cards[i]).collect();
    let sel = select_cluster(&sub, req, cfg.max_cluster_size, cfg.lookahead)?;
    let chosen: Vec<usize> = sel.members.iter().map(|&k| candidates[k]).collect();
    let cf = participation_factors(&chosen.iter().map(|&i| cards[i].max_es_rate).collect::<Vec<_>>());
    let (members, shortfall) = assign_members(&chosen, &cf, snapshots, &cards, req, cfg.allocation_headroom, t, table)?;
    let excluded = (0..cards.len()).filter(|i| !candidates.contains(i)).map(|i| cards[i].gnb_id).collect();
    Ok(Decision {
        cards,
        assignment: ClusterAssignment {
            policy: "proposed".into(),
            members,
            feasible: sel.feasible,
            shortfall,
            constraints_relaxed: relaxed,
            excluded,
        },
    })
}

/// SHA-256 of the JSON encoding of the decision inputs.
pub fn inputs_digest(snapshots: &[GnbSnapshot], req: &QosRequirement) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(snapshots).unwrap_or_default());
    h.update(serde_json::to_vec(req).unwrap_or_default());
    hex::encode(h.finalize())
}
