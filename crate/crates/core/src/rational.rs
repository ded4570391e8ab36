//! Exact rational numbers and their string forms.
//!
//! Every probability, outcome and payoff in this crate is a [`Rational`].
//! Values are read from `"a/b"` fractions, integers, or plain decimals
//! (`"1.051"` is exactly `1051/1000`) and written back in canonical reduced
//! form, so a parse/serialize round trip is stable.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

/// Parses `"a/b"`, `"-7"`, `"1.051"` or `"-.5"` into an exact rational.
pub fn parse(text: &str) -> Result<Rational> {
    let bad = || Error::UnparsableNumber(text.to_string());
    let s = text.trim();
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = parse_integer(num.trim()).ok_or_else(bad)?;
        let den = parse_integer(den.trim()).ok_or_else(bad)?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(num, den));
    }
    let (negative, body) = match s.as_bytes()[0] {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{whole}{frac}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| bad())?
    };
    let denom = num_traits::pow(BigInt::from(10), frac.len());
    let value = Rational::new(numer, denom);
    Ok(if negative { -value } else { value })
}

fn parse_integer(s: &str) -> Option<BigInt> {
    let digits = s.strip_prefix(['-', '+']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Canonical form: `"a/b"` in lowest terms, or `"a"` for integers.
pub fn format(value: &Rational) -> String {
    value.to_string()
}

/// Exact decimal string when the denominator has only factors 2 and 5,
/// otherwise `None`.
pub fn exact_decimal(value: &Rational) -> Option<String> {
    let mut den = value.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut twos, mut fives) = (0usize, 0usize);
    while den.is_multiple_of(&two) {
        den /= &two;
        twos += 1;
    }
    while den.is_multiple_of(&five) {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return None;
    }
    let places = twos.max(fives);
    let scaled = value * Rational::from_integer(num_traits::pow(BigInt::from(10), places));
    let digits = scaled.to_integer().abs().to_string();
    let sign = if value.is_negative() { "-" } else { "" };
    if places == 0 {
        return Some(format!("{sign}{digits}"));
    }
    let padded = format!("{digits:0>width$}", width = places + 1);
    let (int_part, frac_part) = padded.split_at(padded.len() - places);
    Some(format!("{sign}{int_part}.{frac_part}"))
}

/// Human rendering: exact decimal when one exists, else the fraction.
pub fn display(value: &Rational) -> String {
    exact_decimal(value).unwrap_or_else(|| format(value))
}

/// Approximate rendering with six decimal places, prefixed by `~`.
pub fn approx(value: &Rational) -> String {
    match value.to_f64() {
        Some(v) => format!("~{v:.6}"),
        None => format!("~{}", format(value)),
    }
}

pub fn sum<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Rational {
    values.into_iter().fold(zero(), |acc, v| acc + v)
}

pub fn max_of<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Option<Rational> {
    values.into_iter().max().cloned()
}

pub fn min_of<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Option<Rational> {
    values.into_iter().min().cloned()
}

pub fn in_unit_interval(value: &Rational) -> bool {
    !value.is_negative() && *value <= one()
}

/// Serde adapter: a rational as its canonical string.
pub mod as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Rational;

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        super::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<Rational>`.
pub mod vec_as_strings {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Rational;

    pub fn serialize<S: Serializer>(values: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&super::format(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let texts = Vec::<String>::deserialize(d)?;
        texts
            .iter()
            .map(|t| super::parse(t).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Serde adapter for `Option<Rational>`.
pub mod opt_as_string {
    use serde::Serializer;

    use super::Rational;

    pub fn serialize<S: Serializer>(value: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.serialize_some(&super::format(v)),
            None => s.serialize_none(),
        }
    }
}
