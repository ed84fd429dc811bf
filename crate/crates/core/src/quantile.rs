//! Calibration-index arithmetic and order statistics.
//!
//! Every engine reduces to selecting one order statistic from a multiset of
//! calibration scores. The selected rank is an exact ceiling such as
//! `⌈level · (n2 + 1)⌉`, and an off-by-one here silently breaks the coverage
//! guarantee, so levels are carried as exact ratios whenever possible.
//!
//! A probability given as an `f64` is converted to the ratio of integers
//! denoted by its shortest round-trip decimal form (`0.05` becomes `1/20`).
//! Sums and products of such levels stay exact until a `u128` would overflow,
//! at which point the level degrades to an approximate `f64`. Approximate
//! levels compute `level · m` in floating point and snap to the nearest
//! integer when within `1e-9` (relative) of it before taking the ceiling.

use crate::error::{Error, Result};
use alloc::format;

/// A 1-based rank into an ascending sample, extended with sentinels for
/// thresholds that fall off either end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    /// Selects `-inf`.
    NegInf,
    /// The k-th smallest value, `k >= 1`.
    At(usize),
    /// Selects `+inf`.
    PosInf,
}

/// A probability level, exact when it came from a decimal literal or a ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    Ratio { num: u128, den: u128 },
    Approx(f64),
}

const SNAP_TOLERANCE: f64 = 1e-9;

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Level {
    /// `num / den` in lowest terms. Panics when `den == 0`.
    pub fn ratio(num: u64, den: u64) -> Self {
        assert!(den != 0, "level denominator must be positive");
        Self::reduced(num as u128, den as u128)
    }

    fn reduced(num: u128, den: u128) -> Self {
        let g = gcd(num, den).max(1);
        Level::Ratio {
            num: num / g,
            den: den / g,
        }
    }

    /// Reads `p` as the decimal it prints as.
    pub fn from_f64(p: f64) -> Self {
        if !p.is_finite() || p < 0.0 {
            return Level::Approx(p);
        }
        let text = format!("{p}");
        let (int_part, frac_part) = match text.split_once('.') {
            Some((i, f)) => (i, f),
            None => (text.as_str(), ""),
        };
        let parse = || -> Option<Level> {
            let den = 10u128.checked_pow(u32::try_from(frac_part.len()).ok()?)?;
            let mut num: u128 = 0;
            for c in int_part.bytes().chain(frac_part.bytes()) {
                let digit = u128::from(c.checked_sub(b'0').filter(|d| *d <= 9)?);
                num = num.checked_mul(10)?.checked_add(digit)?;
            }
            Some(Level::reduced(num, den))
        };
        parse().unwrap_or(Level::Approx(p))
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Level::Ratio { num, den } => num as f64 / den as f64,
            Level::Approx(v) => v,
        }
    }

    pub fn mul(self, other: Level) -> Level {
        if let (Level::Ratio { num: a, den: b }, Level::Ratio { num: c, den: d }) = (self, other) {
            // cross-reduce first to keep the products small
            let g1 = gcd(a, d).max(1);
            let g2 = gcd(c, b).max(1);
            if let (Some(num), Some(den)) = ((a / g1).checked_mul(c / g2), (b / g2).checked_mul(d / g1)) {
                return Level::reduced(num, den);
            }
        }
        Level::Approx(self.to_f64() * other.to_f64())
    }

    /// `1 - self`.
    pub fn complement(self) -> Level {
        match self {
            Level::Ratio { num, den } if num <= den => Level::reduced(den - num, den),
            _ => Level::Approx(1.0 - self.to_f64()),
        }
    }

    pub fn half(self) -> Level {
        self.mul(Level::ratio(1, 2))
    }

    /// `⌈self · m⌉`.
    pub fn ceil_scaled(self, m: u64) -> i128 {
        if let Level::Ratio { num, den } = self {
            if let Some(prod) = num.checked_mul(u128::from(m)) {
                let q = prod / den;
                let rounded = if prod % den == 0 { q } else { q + 1 };
                if let Ok(v) = i128::try_from(rounded) {
                    return v;
                }
            }
        }
        let a = self.to_f64() * m as f64;
        let nearest = libm::round(a);
        let snapped = if libm::fabs(a - nearest) <= SNAP_TOLERANCE * libm::fmax(1.0, libm::fabs(a)) {
            nearest
        } else {
            libm::ceil(a)
        };
        snapped as i128
    }
}

impl From<f64> for Level {
    fn from(p: f64) -> Self {
        Level::from_f64(p)
    }
}

fn check_level(name: &'static str, level: Level, allow_zero: bool) -> Result<f64> {
    let v = level.to_f64();
    let ok = if allow_zero {
        (0.0..=1.0).contains(&v)
    } else {
        v > 0.0 && v <= 1.0
    };
    if ok {
        Ok(v)
    } else {
        Err(Error::InvalidParameter {
            name,
            value: v,
            expected: if allow_zero { "[0, 1]" } else { "(0, 1]" },
        })
    }
}

/// Rank `⌈level · (n2 + 1)⌉` of the upper threshold; `PosInf` once it
/// exceeds `n2`.
pub fn upper_calibration_index(n2: usize, level: impl Into<Level>) -> Result<Rank> {
    if n2 == 0 {
        return Err(Error::EmptyCalibration);
    }
    let level = level.into();
    check_level("level", level, false)?;
    let k = level.ceil_scaled(n2 as u64 + 1);
    Ok(if k > n2 as i128 {
        Rank::PosInf
    } else {
        Rank::At(k.max(1) as usize)
    })
}

/// Rank `⌈level · (n2 + 1) - 1⌉` of the lower threshold, where `level` is
/// the product `r · q`; `NegInf` once it drops below 1.
pub fn lower_calibration_rank(n2: usize, level: impl Into<Level>) -> Result<Rank> {
    if n2 == 0 {
        return Err(Error::EmptyCalibration);
    }
    let level = level.into();
    let v = check_level("r*q", level, true)?;
    if v >= 1.0 {
        return Err(Error::InvalidParameter {
            name: "r*q",
            value: v,
            expected: "[0, 1)",
        });
    }
    let k = level.ceil_scaled(n2 as u64 + 1) - 1;
    Ok(if k < 1 { Rank::NegInf } else { Rank::At(k as usize) })
}

/// Lower threshold rank for quantile level `q` and lower miscoverage share `r`.
pub fn lower_calibration_index(n2: usize, q: impl Into<Level>, r: impl Into<Level>) -> Result<Rank> {
    lower_calibration_rank(n2, q.into().mul(r.into()))
}

/// The selected order statistic of an already ascending sample.
pub fn order_statistic_sorted(sorted: &[f64], rank: Rank) -> Result<f64> {
    match rank {
        Rank::NegInf => Ok(f64::NEG_INFINITY),
        Rank::PosInf => Ok(f64::INFINITY),
        Rank::At(_) if sorted.is_empty() => Err(Error::EmptySample),
        Rank::At(k) if k == 0 || k > sorted.len() => Err(Error::RankOutOfRange {
            rank: k,
            len: sorted.len(),
        }),
        Rank::At(k) => Ok(sorted[k - 1]),
    }
}

/// k-th smallest value of a multiset (ties kept), independent of input order.
pub fn kth_smallest(values: &[f64], rank: Rank) -> Result<f64> {
    match rank {
        Rank::At(k) if !values.is_empty() && k >= 1 && k <= values.len() => {
            let mut buf = values.to_vec();
            let (_, v, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
            Ok(*v)
        }
        _ => order_statistic_sorted(values, rank),
    }
}

pub(crate) fn sort_ascending(values: &mut [f64]) {
    values.sort_unstable_by(f64::total_cmp);
}
