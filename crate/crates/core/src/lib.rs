//! Desk-scale skill discovery and adaptation: contrastive skill learning with
//! a particle-entropy intrinsic reward on a DDPG backbone, plus the baselines
//! and evaluation statistics needed to study it end to end.
//!
//! Everything in this crate is pure computation over `f64` buffers; file
//! formats, logging sinks, and the command-line driver live in the companion
//! `cic-cli` crate. The crate is `no_std` (alloc only) outside of tests.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod cic;
pub mod ddpg;
pub mod entropy;
pub mod envs;
pub mod error;
pub mod math;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod stats;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::TensorBuf;
