//! Comparison selectors: closest-gNB single connectivity and a load-balancing
//! multi-connectivity heuristic standing in for a learned load balancer.

use crate::bler::BlerEstimator;
use crate::channel::Position;
use crate::error::{Error, Result};
use crate::radio::McsTable;
use crate::selector::{
    assign_members, build_bler_matrix, score_gnbs, ClusterAssignment, Decision, GnbSnapshot, QosRequirement,
};

pub const LBMC_POLICY_NAME: &str = "lbmc-proxy";

/// Singleton cluster on the geometrically closest gNB (ties go to the lower id).
pub fn snr_single_connectivity(
    snapshots: &[GnbSnapshot],
    ue: Position,
    estimator: &dyn BlerEstimator,
    req: &QosRequirement,
    headroom: f64,
    t: f64,
    table: &McsTable,
) -> Result<Decision> {
    let closest = (0..snapshots.len())
        .min_by(|&a, &b| {
            let (sa, sb) = (&snapshots[a], &snapshots[b]);
            sa.position.distance(&ue).total_cmp(&sb.position.distance(&ue)).then(sa.id.cmp(&sb.id))
        })
        .ok_or_else(|| Error::NoFeasibleCluster("no candidate gNBs".into()))?;
    let m = build_bler_matrix(snapshots, estimator);
    let (_, cards) = score_gnbs(snapshots, &m, req, t, table, false)?;
    let (members, shortfall) = assign_members(&[closest], &[1.0], snapshots, &cards, req, headroom, t, table)?;
    Ok(Decision {
        assignment: ClusterAssignment {
            policy: "snr".into(),
            feasible: cards[closest].max_es_rate >= req.rate_req_bps,
            members,
            shortfall,
            constraints_relaxed: false,
            excluded: Vec::new(),
        },
        cards,
    })
}

/// Candidates in descending available-RB order (ties go to the lower id).
pub fn lbmc_order(snapshots: &[GnbSnapshot]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..snapshots.len()).collect();
    idx.sort_by(|&a, &b| snapshots[b].available_rbs.cmp(&snapshots[a].available_rbs).then(snapshots[a].id.cmp(&snapshots[b].id)));
    idx
}

/// Adds the least-loaded gNBs until the estimated rate covers the requirement
/// or the size cap is hit; traffic splits in proportion to available RBs.
pub fn load_balancing_mc(
    snapshots: &[GnbSnapshot],
    estimator: &dyn BlerEstimator,
    req: &QosRequirement,
    max_cluster_size: usize,
    headroom: f64,
    t: f64,
    table: &McsTable,
) -> Result<Decision> {
    if snapshots.is_empty() {
        return Err(Error::NoFeasibleCluster("no candidate gNBs".into()));
    }
    let m = build_bler_matrix(snapshots, estimator);
    let (_, cards) = score_gnbs(snapshots, &m, req, t, table, false)?;
    let mut chosen = Vec::new();
    let mut total = 0.0;
    for i in lbmc_order(snapshots) {
        if total >= req.rate_req_bps || chosen.len() >= max_cluster_size.max(1) {
            break;
        }
        total += cards[i].max_es_rate;
        chosen.push(i);
    }
    let avail: Vec<f64> = chosen.iter().map(|&i| snapshots[i].available_rbs as f64).collect();
    let cf = crate::selector::participation_factors(&avail);
    let (members, shortfall) = assign_members(&chosen, &cf, snapshots, &cards, req, headroom, t, table)?;
    Ok(Decision {
        assignment: ClusterAssignment {
            policy: LBMC_POLICY_NAME.into(),
            feasible: total >= req.rate_req_bps,
            members,
            shortfall,
            constraints_relaxed: false,
            excluded: Vec::new(),
        },
        cards,
    })
}
