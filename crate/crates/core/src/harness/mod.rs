//! Seeded Monte Carlo experiments driven by TOML configs.

pub mod cli;
mod config;
mod output;
mod problem;
mod rng;
mod studies;

pub use config::{
    ApproxConfig, AtomLayout, ExperimentConfig, OperatorConfig, Points, PriorConfig, PxConfig,
    QuadratureConfig, SolverConfig, Truth,
};
pub use output::{write_json, write_records};
pub use problem::{
    atoms_for, clean_moment, draw_atoms, draw_noise, generate_problem, observation,
    oracle_solution, oracle_weights, ExactOperator, GeneratedProblem, Setup,
};
pub use rng::stream;
pub use studies::{
    demo_deconv, feasibility_study, fit_slope, median, rate_study_m, rate_study_n, single_solve,
    DemoOutput, DemoReport, DemoSnapshot, FrequencyCell, RateReport, Record, SingleSolve, SlopeFit,
    StudyOutput, EXCLUSION_BUDGET,
};
