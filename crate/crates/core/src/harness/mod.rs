//! Config-driven experiments: classification, profiles, evolution and decay fits.

pub mod config;
pub mod run;

pub use config::{Experiment, ExperimentConfig};
pub use run::{
    fit_series_csv, run_experiment, run_suite, Check, RateReport, RunOptions, RunSummary,
    SeriesReport, SuiteSummary,
};
