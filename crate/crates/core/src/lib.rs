//! Core algorithms for a mammography radiomics and score-fusion pipeline.
//!
//! Everything here is a pure value transform over in-memory data and builds
//! without `std`; file formats, the CLI and parallel scheduling live in the
//! `radens` crate.
#![no_std]

extern crate alloc;

pub mod calibration;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod image;
pub mod learners;
pub mod linalg;
pub mod rng;
pub mod segmentation;

pub use error::{Error, Result};
