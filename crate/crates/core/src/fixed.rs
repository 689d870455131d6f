//! Non-negative fixed-point decimal with three fractional digits.
//!
//! Every real value that crosses the wire (timestamps, speeds, dwell, box coordinates) is
//! held as an integer count of thousandths so that the text encoding is canonical.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid fixed-point literal {0:?}: expected <digits>.<3 digits>")]
pub struct ParseFixedError(pub String);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fixed3(u64);

impl Fixed3 {
    pub const ZERO: Fixed3 = Fixed3(0);

    pub const fn from_millis(millis: u64) -> Self {
        Fixed3(millis)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    /// Rounds to the nearest thousandth. Negative and non-finite inputs saturate to zero.
    pub fn from_f64(value: f64) -> Self {
        if !value.is_finite() || value <= 0.0 {
            return Fixed3::ZERO;
        }
        let scaled = (value * 1000.0).round();
        if scaled >= u64::MAX as f64 {
            Fixed3(u64::MAX)
        } else {
            Fixed3(scaled as u64)
        }
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, other: Fixed3) -> Fixed3 {
        Fixed3(self.0.saturating_sub(other.0))
    }

    pub fn saturating_add(self, other: Fixed3) -> Fixed3 {
        Fixed3(self.0.saturating_add(other.0))
    }
}

impl fmt::Display for Fixed3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl FromStr for Fixed3 {
    type Err = ParseFixedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFixedError(s.to_string());
        let (int, frac) = s.split_once('.').ok_or_else(err)?;
        if int.is_empty()
            || frac.len() != 3
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(err());
        }
        let whole: u64 = int.parse().map_err(|_| err())?;
        let thousandths: u64 = frac.parse().map_err(|_| err())?;
        whole
            .checked_mul(1000)
            .and_then(|w| w.checked_add(thousandths))
            .map(Fixed3)
            .ok_or_else(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_three_places() {
        assert_eq!(Fixed3::from_millis(90_200).to_string(), "90.200");
        assert_eq!(Fixed3::from_millis(5).to_string(), "0.005");
        assert_eq!(Fixed3::from_f64(9.8).to_string(), "9.800");
        assert_eq!(Fixed3::from_f64(-3.0), Fixed3::ZERO);
    }

    #[test]
    fn parse_is_strict() {
        assert_eq!("100.000".parse::<Fixed3>().unwrap().millis(), 100_000);
        for bad in ["100", "100.0", "1.0000", "-1.000", "+1.000", ".500", "1.5e0", "1,000", ""] {
            assert!(bad.parse::<Fixed3>().is_err(), "{bad}");
        }
    }

    #[test]
    fn rounds_half_away() {
        assert_eq!(Fixed3::from_f64(0.0005).millis(), 1);
        assert_eq!(Fixed3::from_f64(1.23449).millis(), 1234);
    }
}
