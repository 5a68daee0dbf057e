//! Experiment orchestration: configuration, the benchmark architectures,
//! rate sweeps, EAR studies and result files.

pub mod config;
pub mod experiments;

pub use config::{Architecture, Stage1Init, SystemConfig};
pub use experiments::{
    optimize, reference_architectures, run_ear_study, run_rate_sweep, write_ear_study, write_optimized,
    write_sweep, ArchitectureSetup, CellResult, EarStudy, ExperimentResult, Optimized, RunOptions,
};
