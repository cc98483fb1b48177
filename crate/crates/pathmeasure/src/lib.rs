//! Experiment runner for the path-measure library: configuration, worker
//! pools, artifact formats and the `summarize` report.

pub mod config;
pub mod exec;
pub mod experiments;
pub mod observables;
pub mod output;
pub mod runner;
pub mod summarize;

pub use pathmeasure_core as core;
