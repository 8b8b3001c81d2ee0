//! Configurable pipelines over the method codes `M1`..`M20`, the
//! experiment matrix, and the alpha and frequency-threshold sweeps.

mod config;
mod plan;
mod runner;

pub use config::{plan_seed, ExperimentConfig, Params, KNOWN_KEYS};
pub use plan::{parse_steps, standard_steps, validate_steps, ExperimentPlan, PlanInputs, Step, STANDARD_CODES};
pub use runner::{
    default_alpha_grid, fill_deltas, format_alpha_grid, format_table, read_results_csv, run_experiment, run_matrix,
    run_with_inputs, sweep_alpha, sweep_minfreq, write_alpha_csv, write_minfreq_csv, write_results_csv, AlphaPoint,
    ExperimentOutcome, LoadedInputs, MinFreqPoint, ResultRow, RESULT_HEADER,
};
