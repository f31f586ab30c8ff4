//! Experiment configuration, multi-seed execution, saddle-distance
//! metrics, CSV persistence and the pieces behind the command-line
//! interface.

mod config;
mod phi;
mod record;
mod runner;

pub use config::{builtin_presets, preset, AlgoKind, RunConfig, TaskKind};
pub use phi::{obtain_reference, potential_phi, reference_key, sample_probes, SaddleReference};
pub use record::{read_seed_csv, AggRow, RunRecord, AGG_HEADER, SEED_HEADER};
pub use runner::{
    build_instance, driver_options, init_worker_pool, regularization_params, run_experiment, run_seed,
    run_sweep, ExperimentResult, WORKERS_ENV,
};
