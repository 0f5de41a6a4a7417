//! Scalar abstraction shared by every real-valued quantity in the crate
//! (seconds, cost-model rates, split thresholds, makespan metrics).

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
///
/// `Display` must produce a representation that `FromStr` parses back to the
/// identical value; both std float types guarantee this, and the text file
/// formats rely on it for bit-exact round trips.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Display + FromStr + Debug + Default + Send + Sync + 'static
{
    /// Tag written into model files so a model is never read back at a
    /// different precision than it was trained with.
    const NAME: &'static str;

    fn from_count(v: u64) -> Self {
        <Self as FromPrimitive>::from_u64(v).expect("u64 is representable in every float type")
    }

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 converts to every float type")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("float converts to f64")
    }

    fn parse_decimal(s: &str) -> Option<Self> {
        s.parse::<Self>().ok()
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// Formats `v` with `digits` significant digits, C `%g` style: fixed notation
/// for moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn format_significant(v: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    // Let the scientific formatter do the rounding so the exponent reflects it.
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(1.058576, 6), "1.05858");
        assert_eq!(format_significant(270.0, 6), "270");
        assert_eq!(format_significant(0.302144, 6), "0.302144");
        assert_eq!(format_significant(10.502144, 6), "10.5021");
        assert_eq!(format_significant(999999.7, 6), "1e6");
        assert_eq!(format_significant(1234567.0, 6), "1.23457e6");
        assert_eq!(format_significant(0.00001234, 6), "1.234e-5");
        assert_eq!(format_significant(0.0, 6), "0");
        assert_eq!(format_significant(-2.5, 6), "-2.5");
    }

    #[test]
    fn display_round_trips() {
        for v in [0.1f64, 1.0 / 3.0, 1e-300, 123_456_789.123_456_79, 2.5e17] {
            assert_eq!(f64::parse_decimal(&v.to_string()), Some(v));
        }
        for v in [0.1f32, 1.0 / 3.0, 7.25e9] {
            assert_eq!(f32::parse_decimal(&v.to_string()), Some(v));
        }
    }
}
