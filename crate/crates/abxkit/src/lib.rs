//! File formats, parallel execution and the command-line front end for
//! [`abxkit_core`].
//!
//! * [`featstore`]: per-utterance `FEA1` feature files plus `manifest.json`
//! * [`itemfile`]: phone and language item lists
//! * [`codebook`]: `KMB1` k-means codebooks and unit text export
//! * [`report`]: ABX report JSON and CSV dumps
//! * [`gapio`]: result tables in, gap reports out
//! * [`synth`]: writes generated fixtures to disk
//! * [`parallel`]: rayon-backed [`abxkit_core::Executor`]

pub mod cli;
pub mod codebook;
pub mod error;
pub mod featstore;
pub mod gapio;
pub mod itemfile;
pub mod parallel;
pub mod report;
pub mod synth;

pub use error::{Error, Result};

/// Version banner: crate version plus on-disk format versions.
pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (features FEA1 v1, codebook KMB1 v1, report ",
    "abxkit-report/1",
    ", gaps abxkit-gaps/1)"
);
