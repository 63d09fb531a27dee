//! Serving-cluster policies the simulator can drive.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::baselines::{load_balancing_mc, snr_single_connectivity};
use crate::bler::BlerEstimator;
use crate::channel::Position;
use crate::error::{invalid, Error, Result};
use crate::radio::McsTable;
use crate::selector::{select, ClusterAssignment, Decision, GnbSnapshot, QosRequirement, SelectorConfig};

pub struct DecisionContext<'a> {
    pub snapshots: &'a [GnbSnapshot],
    pub ue_position: Position,
    pub req: &'a QosRequirement,
    pub selector: &'a SelectorConfig,
    pub epoch_s: f64,
    pub table: &'a McsTable,
}

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;
    fn decide(&self, ctx: &DecisionContext) -> Result<Decision>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Proposed,
    Snr,
    Lbmc,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Proposed, PolicyKind::Snr, PolicyKind::Lbmc];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Proposed => "proposed",
            PolicyKind::Snr => "snr",
            PolicyKind::Lbmc => "lbmc",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(PolicyKind::Proposed),
            "snr" => Ok(PolicyKind::Snr),
            "lbmc" => Ok(PolicyKind::Lbmc),
            other => invalid(format!("unknown policy {other:?}; expected proposed, snr or lbmc")),
        }
    }
}

pub struct ProposedPolicy {
    pub estimator: Arc<dyn BlerEstimator>,
}

impl Policy for ProposedPolicy {
    fn name(&self) -> &str {
        "proposed"
    }

    fn decide(&self, ctx: &DecisionContext) -> Result<Decision> {
        select(ctx.snapshots, self.estimator.as_ref(), ctx.req, ctx.selector, ctx.epoch_s, ctx.table)
    }
}

pub struct SnrPolicy {
    pub estimator: Arc<dyn BlerEstimator>,
}

impl Policy for SnrPolicy {
    fn name(&self) -> &str {
        "snr"
    }

    fn decide(&self, ctx: &DecisionContext) -> Result<Decision> {
        snr_single_connectivity(ctx.snapshots, ctx.ue_position, self.estimator.as_ref(), ctx.req, ctx.selector.allocation_headroom, ctx.epoch_s, ctx.table)
    }
}

pub struct LbmcPolicy {
    pub estimator: Arc<dyn BlerEstimator>,
}

impl Policy for LbmcPolicy {
    fn name(&self) -> &str {
        "lbmc"
    }

    fn decide(&self, ctx: &DecisionContext) -> Result<Decision> {
        load_balancing_mc(ctx.snapshots, self.estimator.as_ref(), ctx.req, ctx.selector.max_cluster_size, ctx.selector.allocation_headroom, ctx.epoch_s, ctx.table)
    }
}

/// Replays one assignment every epoch, clamping RBs to what is available.
pub struct FixedPolicy {
    pub assignment: ClusterAssignment,
}

impl Policy for FixedPolicy {
    fn name(&self) -> &str {
        "fixed"
    }

    fn decide(&self, ctx: &DecisionContext) -> Result<Decision> {
        let mut a = self.assignment.clone();
        for m in a.members.iter_mut() {
            let snap = ctx
                .snapshots
                .iter()
                .find(|s| s.id == m.gnb_id)
                .ok_or_else(|| Error::InvalidArgument(format!("fixed assignment names unknown gNB {}", m.gnb_id)))?;
            m.rbs = m.rbs.min(snap.available_rbs);
        }
        Ok(Decision { cards: Vec::new(), assignment: a })
    }
}

pub fn make_policy(kind: PolicyKind, estimator: Arc<dyn BlerEstimator>) -> Box<dyn Policy> {
    match kind {
        PolicyKind::Proposed => Box::new(ProposedPolicy { estimator }),
        PolicyKind::Snr => Box::new(SnrPolicy { estimator }),
        PolicyKind::Lbmc => Box::new(LbmcPolicy { estimator }),
    }
}
