//! Evaluation harness: scenario grids, benchmark regimes, metrics, the method
//! registry and report files.

mod evaluate;
mod grid;
mod methods;
pub mod metrics;
mod pipeline;
mod report;

pub use evaluate::{evaluate_policy, summarize, trial_seeds, Evaluation, EVAL_BLOCK};
pub use grid::{build_scenario_grid, grid_file, GridConfig, OrderFlowShape, Regime};
pub use methods::{ExpertSettings, Method, MethodSet};
pub use pipeline::{
    benchmark_all, collect_stage, file_sha256, files, finetune_stage, load_methods, pretrain_stage, run_pipeline,
    stage_seed, train_ppo_stage, BenchmarkConfig, BenchmarkOutput, ExperimentConfig, Manifest, PipelineOutput, Stage,
    EXPERIMENT_FORMAT_VERSION,
};
pub use metrics::{max_drawdown, paired_t_test, sharpe_ratio, PairedTest, Sharpe};
pub use report::{MetricsReport, MetricsRow};
