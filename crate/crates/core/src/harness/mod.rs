//! Instance generation, batch experiments and their artifacts.

pub mod acceptance;
pub mod analysis;
pub mod config;
pub mod experiment;
pub mod instance;
pub mod output;
pub mod plot;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiment::{
    run_experiment, run_experiment_1, run_experiment_2, run_flow, solve_problem, ExperimentReport, RunOutcome,
    RunRecord, RunSettings,
};
pub use instance::gen_instance;
pub use output::{export_csv, load_csv, CsvRow};
pub use plot::{render_svg, Plot, Series};
