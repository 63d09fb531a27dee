//! Multi-connectivity serving-cluster selection for a UE surrounded by
//! mixed-numerology gNBs, with a slot-level downlink simulator to compare
//! the selector against single-connectivity and load-balancing baselines.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bler;
pub mod channel;
pub mod error;
pub mod policy;
pub mod radio;
pub mod selector;
pub mod sim;

pub use error::{Error, Result};
pub use policy::{make_policy, Policy, PolicyKind};
pub use radio::{McsTable, Numerology, RbAllocation};
pub use selector::{select, ClusterAssignment, Decision, GnbSnapshot, QosRequirement, SelectorConfig};
pub use sim::{run_scenario, run_scenario_with, RunMetrics, ScenarioConfig};
