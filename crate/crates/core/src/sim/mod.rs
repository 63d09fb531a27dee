pub mod config;
pub mod engine;
pub mod harq;
pub mod load;
pub mod metrics;

pub use config::{default_layout, LoadParams, ScenarioConfig};
pub use engine::{run_scenario, run_scenario_with, RunDiagnostics, RunOptions, RunOutput};
pub use harq::{harq_step, residual_loss, residual_loss_after, HarqProcess, HarqState, MAX_HARQ_ATTEMPTS};
pub use load::{step_background_load, BackgroundLoad};
pub use metrics::{aggregate_repetitions, collect_metrics, mean_std, qos_scores, MeanStd, MemberStats, QosScores, RunMetrics, RunSummary};
