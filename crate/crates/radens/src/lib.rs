//! Batch driver for the radiomics + deep-learning fusion pipeline: file
//! formats, phantom cohorts and the `radens` command line.

pub mod cli;
pub mod config;
pub mod extract;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod phantoms;
pub mod run;
