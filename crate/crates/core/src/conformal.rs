//! Calibration engines.
//!
//! - The median engine scores calibration points by `|f(x, y)|` for a score
//!   with a central estimate and returns the symmetric interval
//!   `{y : |f(x, y)| <= Q}` with `Q` the `⌈(1 - α/2)(n2 + 1)⌉`-th smallest
//!   calibration score.
//! - The quantile engine takes the `⌈rq(n2 + 1) - 1⌉`-th smallest lower score
//!   and the `⌈(1 - s(1 - q))(n2 + 1)⌉`-th smallest upper score as thresholds
//!   and inverts the score pair against them.
//! - [`unconditional_median_interval`] brackets the median of a plain sample
//!   with order statistics chosen from the Binomial(n, 1/2) law.
//! - [`QrfBaseline`] is the non-conformalized forest band.
//!
//! Ranks that fall off either end of the calibration sample become infinite
//! thresholds, so small calibration sets give wide intervals instead of
//! errors.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::data::{LabeledDataset, SplitIndices};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::models::{check_dim, Backend, BackendConfig, ConditionalModel};
use crate::quantile::{
    lower_calibration_index, order_statistic_sorted, sort_ascending, upper_calibration_index, Level, Rank,
};
use crate::scores::{LocalScore, ScoreConfig, ScorePair};
use crate::special::binomial_half_cdf_below;

fn check_open_unit(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value: v,
            expected: "(0, 1)",
        })
    }
}

/// Target quantile `q`, miscoverage `alpha` and its split `r + s = alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuantileSpec {
    q: f64,
    alpha: f64,
    r: f64,
    s: f64,
}

impl QuantileSpec {
    /// `r + s` must equal `alpha` to within one ulp.
    pub fn new(q: f64, alpha: f64, r: f64, s: f64) -> Result<Self> {
        check_open_unit("q", q)?;
        check_open_unit("alpha", alpha)?;
        for (name, v) in [("r", r), ("s", s)] {
            if !(0.0..=alpha).contains(&v) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    expected: "[0, alpha]",
                });
            }
        }
        let sum = r + s;
        let ulp = f64::EPSILON * alpha.max(sum);
        if (sum - alpha).abs() > ulp {
            return Err(Error::InvalidParameter {
                name: "r + s",
                value: sum,
                expected: "alpha (within one ulp)",
            });
        }
        Ok(Self { q, alpha, r, s })
    }

    /// `r = s = alpha / 2`.
    pub fn symmetric(q: f64, alpha: f64) -> Result<Self> {
        Self::new(q, alpha, alpha / 2.0, alpha / 2.0)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// `1 - s(1 - q)`, the level of the upper threshold.
    pub fn upper_level(&self) -> Level {
        Level::from(self.s).mul(Level::from(self.q).complement()).complement()
    }

    pub fn lower_rank(&self, n2: usize) -> Result<Rank> {
        lower_calibration_index(n2, self.q, self.r)
    }

    pub fn upper_rank(&self, n2: usize) -> Result<Rank> {
        upper_calibration_index(n2, self.upper_level())
    }
}

/// Rank `⌈(1 - α/2)(n2 + 1)⌉` of the median engine's half-width.
pub fn median_rank(n2: usize, alpha: f64) -> Result<Rank> {
    check_open_unit("alpha", alpha)?;
    upper_calibration_index(n2, Level::from(alpha).half().complement())
}

/// Replaces the placeholder row of a per-point score error.
fn at_row(e: Error, row: usize) -> Error {
    match e {
        Error::ZeroSpread { .. } => Error::ZeroSpread { row },
        Error::NonPositiveResponse { value, .. } => Error::NonPositiveResponse { row, value },
        other => other,
    }
}

/// Ascending calibration scores `(f_lo, f_hi)` over every row of `calib`.
/// Errors name the row of `calib` at fault.
pub fn calibration_scores(score: &ScorePair, calib: &LabeledDataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = Vec::with_capacity(calib.len());
    let mut hi = Vec::with_capacity(calib.len());
    for (row, (x, y)) in calib.iter().enumerate() {
        let (a, b) = score.at(x)?.scores(y).map_err(|e| at_row(e, row))?;
        lo.push(a);
        hi.push(b);
    }
    sort_ascending(&mut lo);
    sort_ascending(&mut hi);
    Ok((lo, hi))
}

/// Ascending `|f(x, y)|` over `calib` for a score with a central estimate.
pub fn absolute_calibration_scores(score: &ScorePair, calib: &LabeledDataset) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(calib.len());
    for (row, (x, y)) in calib.iter().enumerate() {
        let local = score.at(x)?;
        if local.center().is_none() {
            return Err(Error::NoCenter(score.kind().name()));
        }
        let (e, _) = local.scores(y).map_err(|e| at_row(e, row))?;
        out.push(libm::fabs(e));
    }
    sort_ascending(&mut out);
    Ok(out)
}

/// Calibrated thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Engine {
    /// Symmetric interval `{y : |f(x, y)| <= half_width}`.
    Median {
        alpha: f64,
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_ext::extended"))]
        half_width: f64,
    },
    /// `{y : lo <= f_lo(x, y), f_hi(x, y) <= hi}`.
    Quantile {
        spec: QuantileSpec,
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_ext::extended"))]
        lo: f64,
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_ext::extended"))]
        hi: f64,
    },
}

impl Engine {
    /// Median engine from ascending absolute scores.
    pub fn median(sorted_abs: &[f64], alpha: f64) -> Result<Self> {
        let rank = median_rank(sorted_abs.len(), alpha)?;
        Ok(Engine::Median {
            alpha,
            half_width: order_statistic_sorted(sorted_abs, rank)?,
        })
    }

    /// Quantile engine from ascending lower and upper scores.
    pub fn quantile(sorted_lo: &[f64], sorted_hi: &[f64], spec: QuantileSpec) -> Result<Self> {
        if sorted_lo.len() != sorted_hi.len() {
            return Err(Error::LengthMismatch {
                rows: sorted_lo.len(),
                responses: sorted_hi.len(),
            });
        }
        let n2 = sorted_lo.len();
        Ok(Engine::Quantile {
            spec,
            lo: order_statistic_sorted(sorted_lo, spec.lower_rank(n2)?)?,
            hi: order_statistic_sorted(sorted_hi, spec.upper_rank(n2)?)?,
        })
    }

    /// `(threshold_lo, threshold_hi)`; the median engine reports `(-Q, Q)`.
    pub fn thresholds(&self) -> (f64, f64) {
        match *self {
            Engine::Median { half_width, .. } => (-half_width, half_width),
            Engine::Quantile { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Engine::Median { alpha, .. } => *alpha,
            Engine::Quantile { spec, .. } => spec.alpha(),
        }
    }

    /// The interval at a frozen score.
    pub fn invert(&self, local: &LocalScore) -> Interval {
        let (lo, hi) = self.thresholds();
        local.invert(lo, hi)
    }
}

/// A frozen calibrated model: `predict(x) = score.invert(x, thresholds)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConformalModel {
    score: ScorePair,
    engine: Engine,
    dim: usize,
    n1: usize,
    n2: usize,
}

impl ConformalModel {
    pub fn from_parts(score: ScorePair, engine: Engine, dim: usize, n1: usize, n2: usize) -> Result<Self> {
        if let Some(d) = score.dim() {
            if d != dim {
                return Err(Error::DimensionMismatch { expected: d, got: dim });
            }
        }
        Ok(Self {
            score,
            engine,
            dim,
            n1,
            n2,
        })
    }

    /// Median engine on an already fitted score.
    pub fn calibrate_median(score: ScorePair, calib: &LabeledDataset, alpha: f64, n1: usize) -> Result<Self> {
        check_open_unit("alpha", alpha)?;
        if calib.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        let engine = Engine::median(&absolute_calibration_scores(&score, calib)?, alpha)?;
        Self::from_parts(score, engine, calib.dim(), n1, calib.len())
    }

    /// Quantile engine on an already fitted score.
    pub fn calibrate_quantile(score: ScorePair, calib: &LabeledDataset, spec: QuantileSpec, n1: usize) -> Result<Self> {
        if calib.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        let (lo, hi) = calibration_scores(&score, calib)?;
        let engine = Engine::quantile(&lo, &hi, spec)?;
        Self::from_parts(score, engine, calib.dim(), n1, calib.len())
    }

    /// Fits the score on the training indices and runs the median engine on
    /// the calibration indices.
    pub fn fit_median_interval(
        data: &LabeledDataset,
        split: &SplitIndices,
        score: &ScoreConfig,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        check_open_unit("alpha", alpha)?;
        let (train, calib) = split_data(data, split)?;
        let fitted = score.fit(&train, seed)?;
        Self::calibrate_median(fitted, &calib, alpha, split.n1()).map_err(|e| remap_row(e, split))
    }

    /// Fits the score on the training indices and runs the quantile engine
    /// on the calibration indices.
    pub fn fit_quantile_interval(
        data: &LabeledDataset,
        split: &SplitIndices,
        score: &ScoreConfig,
        spec: QuantileSpec,
        seed: u64,
    ) -> Result<Self> {
        let (train, calib) = split_data(data, split)?;
        let fitted = score.fit(&train, seed)?;
        Self::calibrate_quantile(fitted, &calib, spec, split.n1()).map_err(|e| remap_row(e, split))
    }

    pub fn score(&self) -> &ScorePair {
        &self.score
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn thresholds(&self) -> (f64, f64) {
        self.engine.thresholds()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn predict(&self, x: &[f64]) -> Result<Interval> {
        check_dim(self.dim, x)?;
        Ok(self.engine.invert(&self.score.at(x)?))
    }
}

fn split_data(data: &LabeledDataset, split: &SplitIndices) -> Result<(LabeledDataset, LabeledDataset)> {
    if split.n1() + split.n2() != data.len() {
        return Err(Error::InvalidSplit {
            n: data.len(),
            n1: split.n1(),
        });
    }
    if split.n2() == 0 {
        return Err(Error::EmptyCalibration);
    }
    Ok((data.subset(split.train()), data.subset(split.calibration())))
}

/// Calibration errors carry positions within the calibration subset; map
/// them back to rows of the full dataset.
fn remap_row(e: Error, split: &SplitIndices) -> Error {
    let calib = split.calibration();
    match e {
        Error::ZeroSpread { row } => Error::ZeroSpread { row: calib[row] },
        Error::NonPositiveResponse { row, value } => Error::NonPositiveResponse { row: calib[row], value },
        other => other,
    }
}

/// Order-statistic ranks `(k, n + 1 - k)` of the unconditional median
/// interval, `k` the largest integer with `P{Binom(n, 1/2) < k} <= alpha/2`.
/// Rank 0 maps to `-inf` and rank `n + 1` to `+inf`.
pub fn unconditional_median_ranks(n: usize, alpha: f64) -> Result<(Rank, Rank)> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    check_open_unit("alpha", alpha)?;
    let budget = alpha / 2.0;
    // P{X < k} is nondecreasing in k, zero at k = 0 and one past n.
    let (mut lo, mut hi) = (0u64, n as u64 + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if binomial_half_cdf_below(n as u64, mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = lo as usize;
    Ok(if k == 0 {
        (Rank::NegInf, Rank::PosInf)
    } else {
        (Rank::At(k), Rank::At(n + 1 - k))
    })
}

/// `[Y_(k), Y_(n+1-k)]`, a confidence interval for the median of the law
/// the sample was drawn from.
pub fn unconditional_median_interval(y: &[f64], alpha: f64) -> Result<Interval> {
    let (lo, hi) = unconditional_median_ranks(y.len(), alpha)?;
    if y.iter().any(|v| !v.is_finite()) {
        let row = y.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite { row, column: 0 });
    }
    let mut sorted = y.to_vec();
    sort_ascending(&mut sorted);
    Ok(Interval::new(
        order_statistic_sorted(&sorted, lo)?,
        order_statistic_sorted(&sorted, hi)?,
    ))
}

/// Pointwise forest band `[Q(α/2 | x), Q(1 - α/2 | x)]` fitted on the whole
/// dataset, without calibration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QrfBaseline {
    model: Arc<Backend>,
    alpha: f64,
}

impl QrfBaseline {
    pub fn fit(data: &LabeledDataset, alpha: f64, backend: &BackendConfig, seed: u64) -> Result<Self> {
        check_open_unit("alpha", alpha)?;
        Ok(Self::from_backend(Arc::new(backend.fit(data, seed)?), alpha))
    }

    /// Wraps a backend already fitted on the full data.
    pub fn from_backend(model: Arc<Backend>, alpha: f64) -> Self {
        Self { model, alpha }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Interval> {
        let law = self.model.conditional(x)?;
        Ok(Interval::new(
            law.quantile(self.alpha / 2.0),
            law.quantile(1.0 - self.alpha / 2.0),
        ))
    }
}
