//! Experiment configuration, dataset loading, runs and CSV output.

pub mod config;
pub mod experiments;
pub mod libsvm;
pub mod oracle;
