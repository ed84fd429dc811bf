//! Regression and conditional-quantile backends fitted on the training split.

mod forest;
mod knn;
mod sample;

use alloc::vec::Vec;

pub use forest::{ForestConfig, QuantileForest};
pub use knn::KnnModel;
pub use sample::ConditionalSample;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got: x.len() })
    }
}

fn check_probability(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "q",
            value: q,
            expected: "[0, 1]",
        })
    }
}

/// A model of the conditional law of `Y` given `X = x`.
pub trait ConditionalModel {
    fn dim(&self) -> usize;

    /// The estimated conditional law at `x`.
    fn conditional(&self, x: &[f64]) -> Result<ConditionalSample>;

    fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.conditional(x)?.mean())
    }

    /// Weighted empirical quantile; nondecreasing in `q`.
    fn predict_quantile(&self, x: &[f64], q: f64) -> Result<f64> {
        check_probability(q)?;
        Ok(self.conditional(x)?.quantile(q))
    }

    /// Conditional CDF, linearly interpolated between atoms.
    fn predict_cdf(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.conditional(x)?.cdf(y))
    }

    /// Leftmost `y` whose interpolated CDF reaches `p`.
    fn predict_cdf_inverse(&self, x: &[f64], p: f64) -> Result<f64> {
        Ok(self.conditional(x)?.inverse_cdf(p))
    }
}

/// How to fit a backend.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BackendConfig {
    Forest(ForestConfig),
    Knn { k: usize },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Forest(ForestConfig::default())
    }
}

impl BackendConfig {
    pub fn fit(&self, train: &LabeledDataset, seed: u64) -> Result<Backend> {
        match self {
            BackendConfig::Forest(config) => QuantileForest::fit(train, config, seed).map(Backend::Forest),
            BackendConfig::Knn { k } => KnnModel::fit(train, *k).map(Backend::Knn),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BackendConfig::Forest(_) => "forest",
            BackendConfig::Knn { .. } => "knn",
        }
    }
}

/// A fitted backend.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Backend {
    Forest(QuantileForest),
    Knn(KnnModel),
}

impl ConditionalModel for Backend {
    fn dim(&self) -> usize {
        match self {
            Backend::Forest(m) => m.dim(),
            Backend::Knn(m) => m.dim(),
        }
    }

    fn conditional(&self, x: &[f64]) -> Result<ConditionalSample> {
        match self {
            Backend::Forest(m) => m.conditional(x),
            Backend::Knn(m) => m.conditional(x),
        }
    }

    fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        match self {
            Backend::Forest(m) => m.predict_mean(x),
            Backend::Knn(m) => m.predict_mean(x),
        }
    }
}

/// Fits a model of the conditional absolute deviation `|y - center(x)|` on
/// the same covariates. `center` must have been fitted on `train`.
pub fn fit_mad(
    train: &LabeledDataset,
    center: &impl ConditionalModel,
    config: &BackendConfig,
    seed: u64,
) -> Result<Backend> {
    let residuals = train
        .iter()
        .map(|(x, y)| Ok(libm::fabs(y - center.predict_mean(x)?)))
        .collect::<Result<Vec<f64>>>()?;
    config.fit(&train.with_responses(residuals)?, seed)
}
