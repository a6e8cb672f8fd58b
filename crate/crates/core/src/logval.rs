//! Positive reals stored by their natural logarithm.
//!
//! Barrier exponents reach 10^8 for some parameter sets, so every constant in
//! the pipeline underflows `f64`. Products become sums of logarithms.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Mul, MulAssign};

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogValue {
    ln: f64,
}

impl LogValue {
    /// The value zero (`ln = -inf`).
    pub const ZERO: LogValue = LogValue { ln: f64::NEG_INFINITY };
    pub const ONE: LogValue = LogValue { ln: 0.0 };

    pub fn from_ln(ln: f64) -> Self {
        debug_assert!(!ln.is_nan());
        LogValue { ln }
    }

    /// Panics on negative input.
    pub fn new(value: f64) -> Self {
        assert!(value >= 0.0, "LogValue::new called with {value}");
        LogValue { ln: value.ln() }
    }

    pub fn ln(self) -> f64 {
        self.ln
    }

    pub fn log10(self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    /// The plain value; underflows to 0 for tiny constants.
    pub fn value(self) -> f64 {
        self.ln.exp()
    }

    pub fn is_zero(self) -> bool {
        self.ln == f64::NEG_INFINITY
    }

    pub fn is_positive(self) -> bool {
        self.ln.is_finite()
    }

    pub fn powf(self, p: f64) -> Self {
        if self.is_zero() {
            return if p > 0.0 { Self::ZERO } else { Self::ONE };
        }
        LogValue { ln: self.ln * p }
    }

    pub fn powi(self, p: u64) -> Self {
        self.powf(p as f64)
    }

    pub fn max(self, other: Self) -> Self {
        if self.ln >= other.ln {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self.ln <= other.ln {
            self
        } else {
            other
        }
    }

    /// Scientific notation that survives underflow, e.g. `3.1e-41234567`.
    pub fn sci(self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let l = self.log10();
        let exp = l.floor();
        let mantissa = 10f64.powf(l - exp);
        format!("{mantissa:.6}e{}", exp as i64)
    }
}

impl Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        if self.is_zero() || rhs.is_zero() {
            return LogValue::ZERO;
        }
        LogValue { ln: self.ln + rhs.ln }
    }
}

impl MulAssign for LogValue {
    fn mul_assign(&mut self, rhs: LogValue) {
        *self = *self * rhs;
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.sci())
    }
}
