//! Allocation-only core of the abxkit evaluation engine.
//!
//! Everything in this crate is a pure function over in-memory data: frame
//! distances and DTW, ABX task construction and scoring, k-means units,
//! the audio/audio-visual training objectives with their gradients, the
//! multilingual gap statistics and a synthetic fixture generator. File
//! formats, parallel executors and the CLI live in the `abxkit` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod exec;
pub mod fmt;
pub mod gaps;
pub mod items;
pub mod kernels;
pub mod losses;
pub mod matrix;
pub mod quantize;
pub mod score;
pub mod syngen;
pub mod task;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use matrix::FeatureMatrix;
