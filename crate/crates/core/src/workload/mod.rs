//! Experiment scenarios, the metrics they produce and their export.

pub mod export;
pub mod metrics;
pub mod scenario;

pub use export::{export, Format};
pub use metrics::{
    aggregate, dependent_delay_stats, saturation_stats, Aggregate, BlockRecord, DelaySummary,
    MetricsReport, SaturationSummary, Summary, TxRecord, TxTrace,
};
pub use scenario::{run_scenario, FeePolicy, Jitter, ScenarioConfig, Stage, SCENARIO_PRESETS};
