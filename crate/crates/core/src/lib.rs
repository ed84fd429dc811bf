//! Distribution-free confidence intervals for conditional medians and
//! conditional quantiles built on split conformal calibration.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every numerical
//! piece of the pipeline:
//!
//! - [`quantile`]: exact calibration-index arithmetic and order statistics.
//! - [`models`]: quantile regression forests and a k-NN backend.
//! - [`scores`]: locally nondecreasing conformity scores and their inversion.
//! - [`conformal`]: the median engine, the quantile engine, the unconditional
//!   median interval and the non-conformalized forest baseline.
//! - [`distributions`]: synthetic distributions with exact conditional
//!   quantile oracles.
//!
//! IO, experiment orchestration and the command line live in the `medconf`
//! companion crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod conformal;
pub mod data;
pub mod distributions;
mod error;
pub mod interval;
pub mod models;
pub mod quantile;
pub mod rng;
pub mod scores;
#[cfg(feature = "serde")]
pub mod serde_ext;
pub mod special;

pub use conformal::{
    unconditional_median_interval, unconditional_median_ranks, ConformalModel, Engine, QrfBaseline, QuantileSpec,
};
pub use data::{LabeledDataset, SplitIndices};
pub use distributions::SyntheticDistribution;
pub use error::{Error, Result};
pub use interval::Interval;
pub use models::{Backend, BackendConfig, ConditionalModel, ConditionalSample, ForestConfig};
pub use quantile::{Level, Rank};
pub use scores::{LocalScore, ScoreConfig, ScoreKind, ScorePair};
