//! Exact rational quantities used for amounts and time stamps.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

/// Parses a nonnegative decimal literal (`5`, `5.00`, `0.125`) or a fraction
/// (`1/3`) into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = parse_digits(num)?;
        let den: BigInt = parse_digits(den)?;
        if den.is_zero() {
            return None;
        }
        return Some(Rational::new(num, den));
    }
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() {
        return None;
    }
    let mut digits = String::with_capacity(int_part.len() + frac_part.len());
    digits.push_str(int_part);
    digits.push_str(frac_part);
    let num = parse_digits(&digits)?;
    if text.contains('.') && frac_part.is_empty() {
        return None;
    }
    let den = BigInt::from(10u32).pow(frac_part.len() as u32);
    Some(Rational::new(num, den))
}

fn parse_digits(s: &str) -> Option<BigInt> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Renders a rational as a terminating decimal when possible, otherwise as
/// `num/den`. The output always parses back to the same value.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        return r.to_integer().to_string();
    }
    let den = r.denom().clone();
    let mut rest = den.clone();
    let (mut twos, mut fives) = (0u32, 0u32);
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&rest % &two).is_zero() {
        rest /= &two;
        twos += 1;
    }
    while (&rest % &five).is_zero() {
        rest /= &five;
        fives += 1;
    }
    if !rest.is_one() || r.is_negative() {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let places = twos.max(fives);
    let scaled = (r * Rational::from_integer(BigInt::from(10u32).pow(places))).to_integer();
    let s = scaled.to_string();
    let places = places as usize;
    let padded = if s.len() <= places {
        format!("{}{}", "0".repeat(places - s.len() + 1), s)
    } else {
        s
    };
    let (i, f) = padded.split_at(padded.len() - places);
    format!("{i}.{f}")
}

pub fn rational_from_u64(n: u64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// A point on the nonnegative time line extended with infinity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TimePoint {
    At(Rational),
    Infinity,
}

impl TimePoint {
    pub fn zero() -> Self {
        TimePoint::At(Rational::zero())
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            TimePoint::At(r) => Some(r),
            TimePoint::Infinity => None,
        }
    }
}

impl PartialOrd for TimePoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimePoint {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (TimePoint::At(a), TimePoint::At(b)) => a.cmp(b),
            (TimePoint::At(_), TimePoint::Infinity) => Ordering::Less,
            (TimePoint::Infinity, TimePoint::At(_)) => Ordering::Greater,
            (TimePoint::Infinity, TimePoint::Infinity) => Ordering::Equal,
        }
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimePoint::At(r) => f.write_str(&format_rational(r)),
            TimePoint::Infinity => f.write_str("inf"),
        }
    }
}

/// Lossy conversion for diagnostics and JSON output only.
pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(parse_rational("5.00"), Some(q(5, 1)));
        assert_eq!(parse_rational("0.125"), Some(q(1, 8)));
        assert_eq!(parse_rational("1/3"), Some(q(1, 3)));
        assert_eq!(parse_rational("12"), Some(q(12, 1)));
        assert_eq!(parse_rational("5."), None);
        assert_eq!(parse_rational(".5"), None);
        assert_eq!(parse_rational("-1"), None);
        assert_eq!(parse_rational("1/0"), None);
    }

    #[test]
    fn formatting_round_trips() {
        for r in [q(5, 1), q(1, 8), q(1, 3), q(7, 20), q(0, 1), q(1001, 1000)] {
            assert_eq!(parse_rational(&format_rational(&r)), Some(r.clone()), "{r}");
        }
        assert_eq!(format_rational(&q(1, 8)), "0.125");
        assert_eq!(format_rational(&q(11, 2)), "5.5");
    }

    #[test]
    fn infinity_is_greatest() {
        assert!(TimePoint::At(q(1_000_000, 1)) < TimePoint::Infinity);
        assert!(TimePoint::zero() < TimePoint::At(q(1, 1000)));
    }
}
