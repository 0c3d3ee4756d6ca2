//! Kernels over calendar features and their composition.
//!
//! Three atoms are available: a 24-hour periodic Laplacian kernel on the time
//! of day, a yearly periodic Laplacian kernel on the day of year, and a delta
//! kernel on the day type. Atoms combine through sums and products; see
//! [`KernelExpr`] for the textual grammar.

mod expr;
mod gram;

pub use expr::{KernelAtom, KernelExpr, Preset};
pub use gram::{gram, gram_symmetric, GramMatrix};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Period of the time-of-day kernel, in hours.
pub const DAY_HOURS: f64 = 24.0;
/// Period of the day-of-year kernel, in days. Day 366 and day 1 are adjacent.
pub const YEAR_DAYS: f64 = 366.0;
/// Default bandwidth of the time-of-day kernel (hours).
pub const DEFAULT_SIGMA_T: f64 = 4.0;
/// Default bandwidth of the day-of-year kernel (days).
pub const DEFAULT_SIGMA_D: f64 = 120.0;
/// Day-type classes without a holiday calendar: Monday (0) through Sunday (6).
pub const WEEKDAY_CLASSES: u8 = 7;
/// Day-type class assigned to dates listed in a holiday calendar.
pub const HOLIDAY_CLASS: u8 = 7;

/// One input of the regression: time of day, day of year and day type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalendarPoint {
    /// Hours since midnight, in `[0, 24)`.
    pub t: f64,
    /// Day of year, in `[1, 366]`.
    pub d: f64,
    /// Day-type class.
    pub c: u8,
}

impl CalendarPoint {
    pub fn new(t: f64, d: f64, c: u8) -> Result<Self> {
        let p = CalendarPoint { t, d, c };
        p.validate()?;
        Ok(p)
    }

    /// Checks the ranges of `t` and `d`.
    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0 && self.t < DAY_HOURS) {
            return Err(Error::domain(format!(
                "time of day {} outside [0, 24)",
                self.t
            )));
        }
        if !(self.d >= 1.0 && self.d <= YEAR_DAYS) {
            return Err(Error::domain(format!(
                "day of year {} outside [1, 366]",
                self.d
            )));
        }
        Ok(())
    }

    /// Checks the day type against a configured number of classes.
    pub fn validate_classes(&self, classes: u8) -> Result<()> {
        self.validate()?;
        if self.c >= classes {
            return Err(Error::domain(format!(
                "day type {} outside [0, {})",
                self.c, classes
            )));
        }
        Ok(())
    }
}

/// `h_P(x) = min(x, P - x)`, the distance on a circle of circumference `P`.
///
/// `x` must already be reduced into `[0, P]`.
pub fn periodic_distance<T: Scalar>(x: T, period: T) -> Result<T> {
    if period.is_nan() || period <= T::zero() {
        return Err(Error::domain(format!("period {period} must be positive")));
    }
    if !(x >= T::zero() && x <= period) {
        return Err(Error::domain(format!(
            "{x} outside [0, {period}]; reduce modulo the period first"
        )));
    }
    Ok(fold(x, period))
}

#[inline]
pub(crate) fn fold<T: Scalar>(x: T, period: T) -> T {
    let other = period - x;
    if other < x {
        other
    } else {
        x
    }
}

/// Evaluates one atom at a pair of points. The result lies in `[0, 1]`.
pub fn eval_atom<T: Scalar>(atom: &KernelAtom, a: &CalendarPoint, b: &CalendarPoint) -> T {
    atom.eval(a, b)
}
