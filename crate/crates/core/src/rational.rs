//! Exact rationals for the diophantine side of the library.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::QcsError;

/// Reduced fraction with arbitrary-precision numerator and positive denominator.
///
/// Serialized as the string `"p/q"`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactRational(BigRational);

impl ExactRational {
    pub fn new(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> Result<Self, QcsError> {
        let d: BigInt = denom.into();
        if d.is_zero() {
            return Err(QcsError::InvalidArgument("zero denominator".into()));
        }
        Ok(Self(BigRational::new(numer.into(), d)))
    }

    pub fn from_integer(n: impl Into<BigInt>) -> Self {
        Self(BigRational::from_integer(n.into()))
    }

    pub fn zero() -> Self {
        Self(BigRational::zero())
    }

    pub fn one() -> Self {
        Self(BigRational::one())
    }

    /// The exact binary value of a finite double.
    pub fn from_f64(x: f64) -> Result<Self, QcsError> {
        BigRational::from_float(x)
            .map(Self)
            .ok_or_else(|| QcsError::InvalidArgument(format!("non-finite value {x}")))
    }

    /// `10^{-n}`.
    pub fn pow10_inv(n: u32) -> Self {
        Self(BigRational::new(BigInt::one(), pow10(n)))
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Self {
        Self(self.0.abs())
    }

    pub fn floor(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    pub fn ceil(&self) -> BigInt {
        self.0.ceil().to_integer()
    }

    /// Nearest integer, ties rounded down.
    pub fn nearest_integer(&self) -> BigInt {
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let shifted = &self.0 + half;
        let c = shifted.ceil().to_integer();
        // shifted is an integer exactly at a tie; take the lower neighbour there
        c - BigInt::one()
    }

    /// Fractional part in `[0, 1)`.
    pub fn fract(&self) -> Self {
        let (n, d) = (self.0.numer(), self.0.denom());
        Self(BigRational::new(n.mod_floor(d), d.clone()))
    }

    /// Distance to the nearest integer, in `[0, 1/2]`.
    pub fn frac_dist(&self) -> Self {
        let f = self.fract();
        let other = Self::one() - f.clone();
        if f <= other {
            f
        } else {
            other
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or_else(|| {
            if self.0.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        })
    }

    /// `sin(2π t)` with the period removed exactly before the floating evaluation.
    /// Returns exactly zero when `2t` is an integer.
    pub fn sin_two_pi(&self) -> f64 {
        let f = self.fract();
        let two_f = &f.0 * BigInt::from(2);
        if two_f.is_integer() {
            return 0.0;
        }
        // shift into (-1/2, 1/2] for accuracy near the upper end
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let centered = if f.0 > half { f.0 - BigRational::one() } else { f.0 };
        let r = centered.to_f64().unwrap_or(0.0);
        (2.0 * std::f64::consts::PI * r).sin()
    }

    /// Decimal digit count of the larger of numerator and denominator.
    pub fn digit_count(&self) -> usize {
        let bits = self.0.numer().bits().max(self.0.denom().bits());
        ((bits as f64) * std::f64::consts::LOG10_2).ceil() as usize + 1
    }

    pub fn pow(&self, e: i32) -> Self {
        Self(num_traits::Pow::pow(&self.0, e))
    }
}

pub fn pow10(n: u32) -> BigInt {
    num_traits::pow(BigInt::from(10), n as usize)
}

impl From<i64> for ExactRational {
    fn from(n: i64) -> Self {
        Self::from_integer(n)
    }
}

impl From<BigInt> for ExactRational {
    fn from(n: BigInt) -> Self {
        Self::from_integer(n)
    }
}

impl From<BigRational> for ExactRational {
    fn from(r: BigRational) -> Self {
        Self(r)
    }
}

impl fmt::Display for ExactRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl FromStr for ExactRational {
    type Err = QcsError;

    /// Accepts `p/q`, an integer, or a finite decimal such as `-0.125`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || QcsError::Parse(format!("not a rational: {s:?}"));
        if let Some((p, q)) = s.split_once('/') {
            let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
            let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
            return Self::new(p, q);
        }
        if let Some((int, frac)) = s.split_once('.') {
            let neg = int.starts_with('-');
            let int_part = int.trim_start_matches(['-', '+']);
            if !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let digits = format!("{int_part}{frac}");
            let digits = if digits.is_empty() { "0".to_string() } else { digits };
            let mut n = BigInt::from_str(&digits).map_err(|_| bad())?;
            if neg {
                n = -n;
            }
            return Self::new(n, pow10(frac.len() as u32));
        }
        BigInt::from_str(s).map(Self::from_integer).map_err(|_| bad())
    }
}

impl Serialize for ExactRational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExactRational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($tr:ident, $m:ident) => {
        impl $tr for ExactRational {
            type Output = ExactRational;
            fn $m(self, rhs: ExactRational) -> ExactRational {
                ExactRational(self.0.$m(rhs.0))
            }
        }
        impl<'a> $tr<&'a ExactRational> for &'a ExactRational {
            type Output = ExactRational;
            fn $m(self, rhs: &'a ExactRational) -> ExactRational {
                ExactRational((&self.0).$m(&rhs.0))
            }
        }
        impl<'a> $tr<&'a ExactRational> for ExactRational {
            type Output = ExactRational;
            fn $m(self, rhs: &'a ExactRational) -> ExactRational {
                ExactRational(self.0.$m(&rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for ExactRational {
    type Output = ExactRational;
    fn neg(self) -> ExactRational {
        ExactRational(-self.0)
    }
}

impl Mul<&BigInt> for &ExactRational {
    type Output = ExactRational;
    fn mul(self, rhs: &BigInt) -> ExactRational {
        ExactRational(&self.0 * rhs)
    }
}

/// Exact distance to the nearest integer.
pub fn frac_dist(theta: &ExactRational) -> ExactRational {
    theta.frac_dist()
}

/// Serde helpers writing big integers as decimal strings.
pub mod bigint_str {
    use num_bigint::BigInt;
    use serde::ser::SerializeSeq;
    use serde::Serializer;

    pub fn vec<S: Serializer>(v: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&x.to_string())?;
        }
        seq.end()
    }

    pub fn pair_opt<S: Serializer>(v: &Option<(Vec<BigInt>, Vec<i64>)>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some((p, q)) => {
                let p: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                s.serialize_some(&(p, q))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> ExactRational {
        s.parse().unwrap()
    }

    #[test]
    fn frac_dist_examples() {
        assert_eq!(frac_dist(&r("3/4")), r("1/4"));
        assert_eq!(frac_dist(&r("7")), ExactRational::zero());
        let a = ExactRational::pow10_inv(1) + ExactRational::pow10_inv(4);
        let ten = ExactRational::from_integer(10);
        assert_eq!(frac_dist(&(ten * a)), r("1/1000"));
    }

    #[test]
    fn negative_fract_is_in_unit_interval() {
        assert_eq!(r("-1/4").fract(), r("3/4"));
        assert_eq!(r("-1/4").frac_dist(), r("1/4"));
        assert_eq!(r("-5/2").frac_dist(), r("1/2"));
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(r("6/4").to_string(), "3/2");
        assert_eq!(r("-0.125"), r("-1/8"));
        assert_eq!(r("12").to_string(), "12/1");
        assert!("1/0".parse::<ExactRational>().is_err());
        assert!("abc".parse::<ExactRational>().is_err());
    }

    #[test]
    fn nearest_integer_ties_down() {
        assert_eq!(r("5/2").nearest_integer(), BigInt::from(2));
        assert_eq!(r("-5/2").nearest_integer(), BigInt::from(-3));
        assert_eq!(r("7/3").nearest_integer(), BigInt::from(2));
        assert_eq!(r("8/3").nearest_integer(), BigInt::from(3));
    }

    #[test]
    fn sin_two_pi_exact_zeros() {
        assert_eq!(r("3/2").sin_two_pi(), 0.0);
        assert_eq!(r("-4").sin_two_pi(), 0.0);
        assert!((r("1/4").sin_two_pi() - 1.0).abs() < 1e-15);
        assert!((r("1000001/4").sin_two_pi() - 1.0).abs() < 1e-15);
        assert!((r("-1/12").sin_two_pi() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn from_f64_is_exact() {
        let x = std::f64::consts::SQRT_2;
        let q = ExactRational::from_f64(x).unwrap();
        assert_eq!(q.to_f64(), x);
        assert!(ExactRational::from_f64(f64::NAN).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let q = r("-22/7");
        let s = serde_json::to_string(&q).unwrap();
        assert_eq!(s, "\"-22/7\"");
        let back: ExactRational = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
    }
}
