use core::fmt;

/// A closed, possibly unbounded, interval of the real line.
///
/// The empty interval is a distinct state; an interval is never stored with
/// `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interval {
    bounds: Option<(f64, f64)>,
}

impl Interval {
    /// `[lo, hi]`, or the empty interval when `lo > hi` or either bound is NaN.
    pub fn new(lo: f64, hi: f64) -> Self {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            Self::empty()
        } else {
            Self { bounds: Some((lo, hi)) }
        }
    }

    pub const fn empty() -> Self {
        Self { bounds: None }
    }

    pub const fn real_line() -> Self {
        Self {
            bounds: Some((f64::NEG_INFINITY, f64::INFINITY)),
        }
    }

    pub fn point(y: f64) -> Self {
        Self::new(y, y)
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_none()
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    pub fn lo(&self) -> Option<f64> {
        self.bounds.map(|b| b.0)
    }

    pub fn hi(&self) -> Option<f64> {
        self.bounds.map(|b| b.1)
    }

    /// Closed membership on finite ends.
    pub fn contains(&self, y: f64) -> bool {
        match self.bounds {
            Some((lo, hi)) => lo <= y && y <= hi,
            None => false,
        }
    }

    /// Length; zero for the empty interval and `+inf` when unbounded.
    pub fn width(&self) -> f64 {
        match self.bounds {
            Some((lo, hi)) => hi - lo,
            None => 0.0,
        }
    }

    /// True when both ends are finite or the interval is empty.
    pub fn is_bounded(&self) -> bool {
        match self.bounds {
            Some((lo, hi)) => lo.is_finite() && hi.is_finite(),
            None => true,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bounds {
            Some((lo, hi)) => {
                write!(f, "[")?;
                write_extended(f, lo)?;
                write!(f, ", ")?;
                write_extended(f, hi)?;
                write!(f, "]")
            }
            None => write!(f, "empty"),
        }
    }
}

/// Writes `inf` / `-inf` for unbounded values and the shortest round-trip
/// form otherwise.
pub fn write_extended(f: &mut impl fmt::Write, v: f64) -> fmt::Result {
    if v == f64::INFINITY {
        f.write_str("inf")
    } else if v == f64::NEG_INFINITY {
        f.write_str("-inf")
    } else {
        write!(f, "{v}")
    }
}
