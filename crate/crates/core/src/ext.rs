//! Values in the closed interval `[0, top]` where `top` is either `1` or
//! infinity, with saturating arithmetic: `x + inf = inf`.

use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, EPS_NUM};

/// The configured maximal distance. Every distance of a run lives in
/// `[0, top]`; systems declare their top in their input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Top {
    /// Distances live in `[0, 1]`.
    One,
    /// Distances live in `[0, inf]`.
    Inf,
}

impl Top {
    /// The numeric value of the maximal element.
    pub fn value(self) -> f64 {
        match self {
            Top::One => 1.0,
            Top::Inf => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Top::One)
    }

    /// The maximal distance as an extended real.
    pub fn max_dist(self) -> ExtReal {
        ExtReal(self.value())
    }
}

impl fmt::Display for Top {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Top::One => write!(f, "1"),
            Top::Inf => write!(f, "inf"),
        }
    }
}

/// A nonnegative extended real number, at most the configured top.
///
/// The wrapped value is never NaN and never negative. Addition saturates:
/// adding infinity to anything yields infinity.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExtReal(f64);

/// The infinite distance.
pub const INF: ExtReal = ExtReal(f64::INFINITY);

/// The zero distance.
pub const ZERO: ExtReal = ExtReal(0.0);

impl ExtReal {
    /// Wraps a raw value, checking only nonnegativity and non-NaN.
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::InvalidValue(format!(
                "extended real must be nonnegative, got {value}"
            )));
        }
        Ok(ExtReal(value))
    }

    /// Wraps a raw value and checks it against the configured top.
    /// Values above top are an error, never clamped.
    pub fn bounded(value: f64, top: Top) -> Result<Self> {
        let v = Self::new(value)?;
        if v.0 > top.value() + EPS_NUM {
            return Err(Error::InvalidValue(format!(
                "value {value} exceeds top {top}"
            )));
        }
        Ok(v)
    }

    /// Unchecked constructor for values known to be valid.
    ///
    /// Panics in debug builds on NaN or negative input.
    pub fn raw(value: f64) -> Self {
        debug_assert!(!value.is_nan() && value >= 0.0, "bad ExtReal {value}");
        ExtReal(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }

    /// Equality up to the global numeric tolerance; exact on infinities.
    pub fn approx_eq(self, other: ExtReal) -> bool {
        if self.0.is_infinite() || other.0.is_infinite() {
            self.0 == other.0
        } else {
            (self.0 - other.0).abs() <= EPS_NUM
        }
    }

    /// `self <= other` up to the global numeric tolerance.
    pub fn approx_le(self, other: ExtReal) -> bool {
        self.0 <= other.0 + EPS_NUM
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        ExtReal(self.0.min(other.0))
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        ExtReal(self.0.max(other.0))
    }

    /// Scales by a nonnegative finite factor.
    pub fn scale(self, factor: f64) -> ExtReal {
        debug_assert!(factor >= 0.0 && factor.is_finite());
        if self.0.is_infinite() && factor == 0.0 {
            // 0 * inf is taken to be 0: scaling by a zero weight uses no mass.
            ZERO
        } else {
            ExtReal(self.0 * factor)
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        ExtReal(self.0 + rhs.0)
    }
}

impl std::iter::Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ZERO, |a, b| a + b)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// The Euclidean distance on `[0, top]`: `|a - b|` on finite values,
/// infinite if exactly one argument is infinite, zero if both are.
pub fn euclid(a: ExtReal, b: ExtReal) -> ExtReal {
    match (a.is_infinite(), b.is_infinite()) {
        (true, true) => ZERO,
        (true, false) | (false, true) => INF,
        (false, false) => ExtReal((a.0 - b.0).abs()),
    }
}
