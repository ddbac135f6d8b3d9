//! Scalar abstraction shared by the exact and floating-point code paths.
//!
//! Everything that produces a certificate is instantiated with [`Rational`]
//! (arbitrary precision). The same code runs over `f64`/`f32` for quick
//! exploratory numbers; those instantiations never feed a certificate.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational, the scalar of every certificate.
pub type Rational = BigRational;

/// Field-like scalar used by the generic code.
pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Whether arithmetic on this type is exact.
    const EXACT: bool;

    /// Lossless text rendering (`num/den` for rationals).
    fn to_text(&self) -> String;

    /// Inverse of [`Scalar::to_text`]; also accepts plain integers.
    fn from_text(s: &str) -> Option<Self>;

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("every scalar represents u64 counts")
    }

    fn ratio(num: i64, den: u64) -> Self {
        Self::from_i64(num).expect("i64 numerator") / Self::from_count(den)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn to_text(&self) -> String {
        format!("{self:?}")
    }

    fn from_text(s: &str) -> Option<Self> {
        parse_float_or_ratio(s)
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn to_text(&self) -> String {
        format!("{self:?}")
    }

    fn from_text(s: &str) -> Option<Self> {
        parse_float_or_ratio(s).map(|v| v as f32)
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn to_text(&self) -> String {
        format!("{}/{}", self.numer(), self.denom())
    }

    fn from_text(s: &str) -> Option<Self> {
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let n: BigInt = n.trim().parse().ok()?;
                let d: BigInt = d.trim().parse().ok()?;
                if d.is_zero() {
                    return None;
                }
                Some(BigRational::new(n, d))
            }
            None => s.parse::<BigInt>().ok().map(BigRational::from_integer),
        }
    }
}

impl Scalar for Rational64 {
    const EXACT: bool = true;

    fn to_text(&self) -> String {
        format!("{}/{}", self.numer(), self.denom())
    }

    fn from_text(s: &str) -> Option<Self> {
        let r = Rational::from_text(s)?;
        Some(Rational64::new(r.numer().to_i64()?, r.denom().to_i64()?))
    }
}

fn parse_float_or_ratio(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => Some(n.trim().parse::<f64>().ok()? / d.trim().parse::<f64>().ok()?),
        None => s.parse().ok(),
    }
}

/// Exact rational from an integer pair.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub(crate) fn max_of<S: Scalar>(a: S, b: S) -> S {
    if a >= b {
        a
    } else {
        b
    }
}

pub(crate) fn min_of<S: Scalar>(a: S, b: S) -> S {
    if a <= b {
        a
    } else {
        b
    }
}

/// `1 / product(cuts)` computed in `S`.
pub(crate) fn reciprocal_product<S: Scalar>(cuts: impl IntoIterator<Item = usize>) -> S {
    let mut w = S::one();
    for r in cuts {
        w = w / S::from_count(r as u64);
    }
    w
}

/// Serde adapter rendering exact rationals as `"num/den"` strings.
pub mod rational_text {
    use super::{Rational, Scalar};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_text())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        Rational::from_text(&s).ok_or_else(|| D::Error::custom(format!("not a rational: {s:?}")))
    }
}

/// Exact value of `"7"`, `"-5/2"` or a terminating decimal such as `"2.5"`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    if let Some(r) = Rational::from_text(text) {
        return Some(r);
    }
    let (whole, frac) = text.trim().split_once('.')?;
    if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let num: BigInt = format!("{whole}{frac}").parse().ok()?;
    Some(Rational::new(num, BigInt::from(10).pow(frac.len() as u32)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn decimal_text() {
        assert_eq!(parse_rational("2.5"), Some(rat(5, 2)));
        assert_eq!(parse_rational("-0.05"), Some(rat(-1, 20)));
        assert_eq!(parse_rational("3/4"), Some(rat(3, 4)));
        assert_eq!(parse_rational("1.x"), None);
        assert_eq!(parse_rational("1."), None);
    }

    #[test]
    fn rational_text_round_trip() {
        let r = rat(-22, 8);
        assert_eq!(r.to_text(), "-11/4");
        assert_eq!(Rational::from_text("-11/4"), Some(r));
        assert_eq!(Rational::from_text("7"), Some(rat(7, 1)));
        assert_eq!(Rational::from_text("1/0"), None);
        assert_eq!(Rational::from_text("x"), None);
    }

    #[test]
    fn reciprocal_product_is_exact() {
        let w: Rational = reciprocal_product([2, 3, 4]);
        assert_eq!(w, rat(1, 24));
        let wf: f64 = reciprocal_product([2, 3, 4]);
        assert!((wf - 1.0 / 24.0).abs() < 1e-15);
        assert!(Rational::one() > Rational::zero());
    }
}
