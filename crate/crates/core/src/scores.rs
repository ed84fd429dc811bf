//! Locally nondecreasing conformity scores.
//!
//! A [`ScorePair`] is a fitted pair `(f_lo, f_hi)` where, for every fixed
//! covariate `x`, both `y ↦ f_lo(x, y)` and `y ↦ f_hi(x, y)` are
//! nondecreasing. Freezing `x` gives a [`LocalScore`], which evaluates the
//! pair and inverts threshold pairs into the interval
//! `{y : t_lo <= f_lo(x, y), f_hi(x, y) <= t_hi}`.
//!
//! | kind         | f_lo = f_hi (or pair)            | inversion of `(a, b)`                  |
//! |--------------|----------------------------------|----------------------------------------|
//! | `residual`   | `y - μ(x)`                       | `[μ + a, μ + b]`                       |
//! | `normalized` | `(y - μ(x)) / (σ(x) + γ)`        | `[μ + a(σ + γ), μ + b(σ + γ)]`         |
//! | `cqr`        | `y - Q_lo(x)`, `y - Q_hi(x)`     | `[Q_lo + a, Q_hi + b]`                 |
//! | `cdf`        | `F(x, y)`                        | `[F⁻¹(a), F⁻¹(b)]` within the support  |
//! | `log`        | `ln y - μ(x)`                    | `[exp(μ + a), exp(μ + b)]`             |
//! | `zero`       | `y`                              | `[a, b]`                               |
//! | `randomized` | `y - A_x`, `A_x ~ N(0, (cM)^2)`  | `[A_x + a, A_x + b]`                   |

use alloc::sync::Arc;
use core::fmt;
use core::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::models::{fit_mad, Backend, BackendConfig, ConditionalModel, ConditionalSample};
use crate::rng::{derive_seed, hash_bits, stream};

/// Score identifiers as used on the command line and in model artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScoreKind {
    Residual,
    Normalized,
    Cqr,
    Cdf,
    Log,
    Zero,
    Randomized,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 7] = [
        ScoreKind::Residual,
        ScoreKind::Normalized,
        ScoreKind::Cqr,
        ScoreKind::Cdf,
        ScoreKind::Log,
        ScoreKind::Zero,
        ScoreKind::Randomized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Residual => "residual",
            ScoreKind::Normalized => "normalized",
            ScoreKind::Cqr => "cqr",
            ScoreKind::Cdf => "cdf",
            ScoreKind::Log => "log",
            ScoreKind::Zero => "zero",
            ScoreKind::Randomized => "randomized",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unrecognized score name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownScore;

impl fmt::Display for UnknownScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected one of residual, normalized, cqr, cdf, log, zero, randomized")
    }
}

impl FromStr for ScoreKind {
    type Err = UnknownScore;

    fn from_str(s: &str) -> Result<Self, UnknownScore> {
        ScoreKind::ALL.into_iter().find(|k| k.name() == s).ok_or(UnknownScore)
    }
}

/// What to fit on the training split.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScoreConfig {
    Residual {
        backend: BackendConfig,
    },
    Normalized {
        backend: BackendConfig,
        gamma: f64,
    },
    Cqr {
        backend: BackendConfig,
        lo_level: f64,
        hi_level: f64,
    },
    Cdf {
        backend: BackendConfig,
    },
    Log {
        backend: BackendConfig,
    },
    Zero,
    Randomized {
        c: f64,
    },
}

impl ScoreConfig {
    pub fn kind(&self) -> ScoreKind {
        match self {
            ScoreConfig::Residual { .. } => ScoreKind::Residual,
            ScoreConfig::Normalized { .. } => ScoreKind::Normalized,
            ScoreConfig::Cqr { .. } => ScoreKind::Cqr,
            ScoreConfig::Cdf { .. } => ScoreKind::Cdf,
            ScoreConfig::Log { .. } => ScoreKind::Log,
            ScoreConfig::Zero => ScoreKind::Zero,
            ScoreConfig::Randomized { .. } => ScoreKind::Randomized,
        }
    }

    /// Fits the score on the training slice. Sub-models draw from streams
    /// derived from `seed`: the central or quantile model uses `[0]`, the
    /// spread model `[1]` and the randomized regressor `[2]`.
    pub fn fit(&self, train: &LabeledDataset, seed: u64) -> Result<ScorePair> {
        let sub = |i: u64| derive_seed(seed, &[i]);
        match self {
            ScoreConfig::Residual { backend } => Ok(ScorePair::residual(Arc::new(backend.fit(train, sub(0))?))),
            ScoreConfig::Normalized { backend, gamma } => {
                let center = backend.fit(train, sub(0))?;
                let spread = fit_mad(train, &center, backend, sub(1))?;
                ScorePair::normalized(Arc::new(center), Arc::new(spread), *gamma)
            }
            ScoreConfig::Cqr {
                backend,
                lo_level,
                hi_level,
            } => ScorePair::cqr(Arc::new(backend.fit(train, sub(0))?), *lo_level, *hi_level),
            ScoreConfig::Cdf { backend } => Ok(ScorePair::cdf(Arc::new(backend.fit(train, sub(0))?))),
            ScoreConfig::Log { backend } => {
                let logs = train
                    .iter()
                    .enumerate()
                    .map(|(row, (_, y))| {
                        if y > 0.0 {
                            Ok(libm::log(y))
                        } else {
                            Err(Error::NonPositiveResponse { row, value: y })
                        }
                    })
                    .collect::<Result<_>>()?;
                let center = backend.fit(&train.with_responses(logs)?, sub(0))?;
                Ok(ScorePair::Log {
                    center: Arc::new(center),
                })
            }
            ScoreConfig::Zero => Ok(ScorePair::Zero),
            ScoreConfig::Randomized { c } => RandomizedRegressor::fit(train, *c, sub(2)).map(ScorePair::Randomized),
        }
    }
}

/// The randomized regressor `μ_c(x) = A_x` with `A_x` i.i.d.
/// `N(0, (c·M)^2)` across distinct `x`, `M = max |y|` over training responses.
///
/// `A_x` is a pure function of the bit pattern of `x`: the normal draw comes
/// from a stream keyed by `(seed, hash(x))`, so repeated queries at the same
/// point agree and distinct points get independent draws.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RandomizedRegressor {
    scale: f64,
    seed: u64,
}

impl RandomizedRegressor {
    pub fn fit(train: &LabeledDataset, c: f64, seed: u64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter {
                name: "c",
                value: c,
                expected: "(0, inf)",
            });
        }
        let m = train.responses().iter().fold(0.0f64, |m, y| m.max(libm::fabs(*y)));
        Ok(Self { scale: c * m, seed })
    }

    /// Standard deviation `c·M` of the draws.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut stream(self.seed, &[hash_bits(x)]));
        self.scale * z
    }
}

/// A fitted pair of locally nondecreasing conformity scores.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScorePair {
    Residual {
        center: Arc<Backend>,
    },
    Normalized {
        center: Arc<Backend>,
        spread: Arc<Backend>,
        gamma: f64,
    },
    Cqr {
        model: Arc<Backend>,
        lo_level: f64,
        hi_level: f64,
    },
    Cdf {
        model: Arc<Backend>,
    },
    Log {
        center: Arc<Backend>,
    },
    Zero,
    Randomized(RandomizedRegressor),
}

impl ScorePair {
    pub fn residual(center: Arc<Backend>) -> Self {
        ScorePair::Residual { center }
    }

    pub fn normalized(center: Arc<Backend>, spread: Arc<Backend>, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                expected: "[0, inf)",
            });
        }
        Ok(ScorePair::Normalized { center, spread, gamma })
    }

    pub fn cqr(model: Arc<Backend>, lo_level: f64, hi_level: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lo_level) || !(0.0..=1.0).contains(&hi_level) || lo_level >= hi_level {
            return Err(Error::InvalidParameter {
                name: "lo_level",
                value: lo_level,
                expected: "[0, hi_level)",
            });
        }
        Ok(ScorePair::Cqr {
            model,
            lo_level,
            hi_level,
        })
    }

    pub fn cdf(model: Arc<Backend>) -> Self {
        ScorePair::Cdf { model }
    }

    pub fn kind(&self) -> ScoreKind {
        match self {
            ScorePair::Residual { .. } => ScoreKind::Residual,
            ScorePair::Normalized { .. } => ScoreKind::Normalized,
            ScorePair::Cqr { .. } => ScoreKind::Cqr,
            ScorePair::Cdf { .. } => ScoreKind::Cdf,
            ScorePair::Log { .. } => ScoreKind::Log,
            ScorePair::Zero => ScoreKind::Zero,
            ScorePair::Randomized(_) => ScoreKind::Randomized,
        }
    }

    /// Feature dimension expected by the fitted backends, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ScorePair::Residual { center } | ScorePair::Normalized { center, .. } | ScorePair::Log { center } => {
                Some(center.dim())
            }
            ScorePair::Cqr { model, .. } | ScorePair::Cdf { model } => Some(model.dim()),
            ScorePair::Zero | ScorePair::Randomized(_) => None,
        }
    }

    /// Freezes the score at covariate `x`.
    pub fn at(&self, x: &[f64]) -> Result<LocalScore> {
        Ok(match self {
            ScorePair::Residual { center } => LocalScore::Shift {
                center: center.predict_mean(x)?,
                scale: 1.0,
            },
            ScorePair::Normalized { center, spread, gamma } => LocalScore::Shift {
                center: center.predict_mean(x)?,
                scale: spread.predict_mean(x)? + gamma,
            },
            ScorePair::Cqr {
                model,
                lo_level,
                hi_level,
            } => {
                let law = model.conditional(x)?;
                LocalScore::Band {
                    lo: law.quantile(*lo_level),
                    hi: law.quantile(*hi_level),
                }
            }
            ScorePair::Cdf { model } => LocalScore::Cdf(model.conditional(x)?),
            ScorePair::Log { center } => LocalScore::Log {
                center: center.predict_mean(x)?,
            },
            ScorePair::Zero => LocalScore::Shift {
                center: 0.0,
                scale: 1.0,
            },
            ScorePair::Randomized(reg) => LocalScore::Shift {
                center: reg.value(x),
                scale: 1.0,
            },
        })
    }

    pub fn f_lo(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.at(x)?.scores(y)?.0)
    }

    pub fn f_hi(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.at(x)?.scores(y)?.1)
    }

    pub fn invert(&self, x: &[f64], t_lo: f64, t_hi: f64) -> Result<Interval> {
        Ok(self.at(x)?.invert(t_lo, t_hi))
    }

    /// The central estimate `μ(x)` used by the symmetric median engine.
    pub fn center(&self, x: &[f64]) -> Result<f64> {
        self.at(x)?.center().ok_or(Error::NoCenter(self.kind().name()))
    }
}

/// A score pair frozen at one covariate value: a pair of nondecreasing
/// functions of `y`.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalScore {
    /// `(y - center) / scale` for both sides.
    Shift { center: f64, scale: f64 },
    /// `y - lo` and `y - hi`.
    Band { lo: f64, hi: f64 },
    /// The interpolated conditional CDF for both sides.
    Cdf(ConditionalSample),
    /// `ln y - center` for both sides.
    Log { center: f64 },
}

fn shifted(center: f64, t: f64, scale: f64) -> f64 {
    if t.is_infinite() {
        t
    } else {
        center + t * scale
    }
}

impl LocalScore {
    /// `(f_lo(y), f_hi(y))`. Errors carry row 0; callers scoring a dataset
    /// substitute the real row.
    pub fn scores(&self, y: f64) -> Result<(f64, f64)> {
        match self {
            LocalScore::Shift { center, scale } => {
                if *scale <= 0.0 {
                    return Err(Error::ZeroSpread { row: 0 });
                }
                let s = (y - center) / scale;
                Ok((s, s))
            }
            LocalScore::Band { lo, hi } => Ok((y - lo, y - hi)),
            LocalScore::Cdf(law) => {
                let s = law.cdf(y);
                Ok((s, s))
            }
            LocalScore::Log { center } => {
                if y > 0.0 {
                    let s = libm::log(y) - center;
                    Ok((s, s))
                } else {
                    Err(Error::NonPositiveResponse { row: 0, value: y })
                }
            }
        }
    }

    /// `{y : t_lo <= f_lo(y), f_hi(y) <= t_hi}` as a closed interval.
    ///
    /// The CDF score inverts to `[G⁻¹(a), G⁻¹(b)]` inside the support. A
    /// saturated threshold opens that side: `a <= 0` admits every `y` below
    /// the support and `b >= 1` every `y` above it, as the threshold set
    /// does. Levels below the first atom's weight select the smallest atom.
    pub fn invert(&self, t_lo: f64, t_hi: f64) -> Interval {
        match self {
            LocalScore::Shift { center, scale } => {
                Interval::new(shifted(*center, t_lo, *scale), shifted(*center, t_hi, *scale))
            }
            LocalScore::Band { lo, hi } => Interval::new(lo + t_lo, hi + t_hi),
            LocalScore::Cdf(law) => {
                if t_lo > t_hi || t_lo > 1.0 || t_hi < 0.0 || t_lo.is_nan() || t_hi.is_nan() {
                    return Interval::empty();
                }
                let lo = if t_lo <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    law.inverse_cdf(t_lo)
                };
                let hi = if t_hi >= 1.0 {
                    f64::INFINITY
                } else {
                    law.inverse_cdf(t_hi)
                };
                Interval::new(lo, hi)
            }
            LocalScore::Log { center } => Interval::new(libm::exp(center + t_lo), libm::exp(center + t_hi)),
        }
    }

    pub fn center(&self) -> Option<f64> {
        match self {
            LocalScore::Shift { center, .. } => Some(*center),
            _ => None,
        }
    }
}
