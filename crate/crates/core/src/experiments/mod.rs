//! Experiment orchestration: plan files, sweeps, figure recipes and the
//! CSV outputs they produce.

mod execute;
mod output;
mod plan;
mod recipes;
pub mod analysis;

pub use execute::{
    execute, manifest_path, plan_digest, read_manifest, simulate, ExecutionSummary, LedgerEntry, Manifest,
    ManifestFile, RunOutcome, RunRow, ScalingRow, TradeoffRow,
};
pub use output::{
    bytes_digest, create_csv, file_digest, parse_strategy_token, read_csv, read_csv_from, strategy_token, ClusterRow,
    CsvSink, ResultRow, RunKey, StrategyColumns,
};
pub use plan::{load_plan, parse_plan, ExperimentPlan, Horizon, RunSpec, DEFAULT_OUTPUTS, SCHEMA_VERSION};
pub use recipes::{figure_recipe, FIGURE_NAMES};

/// Environment variable that overrides every command's output directory.
pub const OUTPUT_DIR_ENV: &str = "MAJORITY_SIM_OUT";
