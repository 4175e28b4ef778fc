//! Rational scalars and vectors used throughout the exact geometry.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};

pub type Rational = BigRational;
pub type QVec = Vec<Rational>;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn frac(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn qvec(xs: &[i64]) -> QVec {
    xs.iter().map(|&x| int(x)).collect()
}

/// Parses `"p/q"` or `"p"`.
pub fn parse(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || invalid(format!("malformed rational {s:?}"));
    match s.split_once('/') {
        Some((p, q)) => {
            let (Ok(p), Ok(q)) = (p.trim().parse::<BigInt>(), q.trim().parse::<BigInt>()) else {
                return bad();
            };
            if q.is_zero() {
                return invalid(format!("zero denominator in {s:?}"));
            }
            Ok(Rational::new(p, q))
        }
        None => match s.parse::<BigInt>() {
            Ok(p) => Ok(Rational::from_integer(p)),
            Err(_) => bad(),
        },
    }
}

/// Reduced `"p/q"`, or `"p"` when the denominator is one.
pub fn format(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

pub fn vec_to_f64(v: &[Rational]) -> Vec<f64> {
    v.iter().map(to_f64).collect()
}

/// Exact value of a finite double.
pub fn from_f64(x: f64) -> Result<Rational> {
    Rational::from_float(x).ok_or_else(|| crate::Error::InvalidInput(format!("non-finite value {x}")))
}

/// Best rational approximation with denominator at most `max_den` (continued fractions).
pub fn approximate(x: f64, max_den: u64) -> Result<Rational> {
    let exact = from_f64(x)?;
    Ok(best_approximation(&exact, &BigInt::from(max_den)))
}

pub fn best_approximation(x: &Rational, max_den: &BigInt) -> Rational {
    if x.denom() <= max_den {
        return x.clone();
    }
    let (mut p0, mut q0, mut p1, mut q1) = (BigInt::zero(), BigInt::one(), BigInt::one(), BigInt::zero());
    let mut rest = x.clone();
    loop {
        let a = rest.floor().to_integer();
        let q2 = &q0 + &a * &q1;
        if &q2 > max_den {
            // semiconvergent check between the last convergent and the bounded one
            let k = (max_den - &q0) / &q1;
            let cand = Rational::new(&p0 + &k * &p1, &q0 + &k * &q1);
            let last = Rational::new(p1.clone(), q1.clone());
            return if (&cand - x).abs() < (&last - x).abs() { cand } else { last };
        }
        let p2 = &p0 + &a * &p1;
        p0 = std::mem::replace(&mut p1, p2);
        q0 = std::mem::replace(&mut q1, q2);
        let f = &rest - Rational::from_integer(a);
        if f.is_zero() {
            return Rational::new(p1, q1);
        }
        rest = f.recip();
    }
}

/// The rational with the smallest denominator in the closed interval `[lo, hi]`.
pub fn simplest_between(lo: &Rational, hi: &Rational) -> Rational {
    assert!(lo <= hi);
    if lo.is_negative() && hi.is_positive() || lo.is_zero() || hi.is_zero() {
        return Rational::zero();
    }
    if hi.is_negative() {
        return -simplest_between(&-hi, &-lo);
    }
    let fl = lo.floor();
    if fl == *lo {
        return fl;
    }
    if fl.clone() + Rational::one() <= *hi {
        return fl + Rational::one();
    }
    // lo and hi share the integer part; recurse on reciprocals of the fractional parts
    let a = lo - &fl;
    let b = hi - &fl;
    fl + simplest_between(&b.recip(), &a.recip()).recip()
}

pub fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).fold(Rational::zero(), |acc, (x, y)| acc + x * y)
}

pub fn sub(a: &[Rational], b: &[Rational]) -> QVec {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[Rational], b: &[Rational]) -> QVec {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(s: &Rational, a: &[Rational]) -> QVec {
    a.iter().map(|x| s * x).collect()
}

pub fn mat_vec(m: &[QVec], v: &[Rational]) -> QVec {
    m.iter().map(|row| dot(row, v)).collect()
}

pub fn transpose(m: &[QVec], cols: usize) -> Vec<QVec> {
    (0..cols).map(|j| m.iter().map(|row| row[j].clone()).collect()).collect()
}

pub fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

pub fn factorial_q(n: usize) -> Rational {
    Rational::from_integer(factorial(n))
}

pub fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Scales a rational vector by a positive factor to a primitive integer vector.
pub fn primitive(v: &[Rational]) -> Vec<BigInt> {
    let l = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<BigInt> = v.iter().map(|x| (x * Rational::from_integer(l.clone())).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if g.is_zero() {
        return ints;
    }
    ints.into_iter().map(|x| x / &g).collect()
}

/// Serde adapter: a rational as a `"p/q"` string.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Q(pub Rational);

impl Serialize for Q {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format(&self.0))
    }
}

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Int(i64),
        }
        match Raw::deserialize(d)? {
            Raw::Str(s) => parse(&s).map(Q).map_err(serde::de::Error::custom),
            Raw::Int(i) => Ok(Q(int(i))),
        }
    }
}

pub(crate) fn wrap(v: &[Rational]) -> Vec<Q> {
    v.iter().cloned().map(Q).collect()
}

pub(crate) fn unwrap(v: Vec<Q>) -> QVec {
    v.into_iter().map(|q| q.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        assert_eq!(format(&parse("6/-4").unwrap()), "-3/2");
        assert_eq!(format(&parse("10/5").unwrap()), "2");
        assert_eq!(parse("-7").unwrap(), int(-7));
        assert!(parse("1/0").is_err());
        assert!(parse("x").is_err());
    }

    #[test]
    fn continued_fraction_bound() {
        let r = approximate(std::f64::consts::PI, 1000).unwrap();
        assert_eq!(r, frac(355, 113));
        assert_eq!(approximate(0.5, 10).unwrap(), frac(1, 2));
    }

    #[test]
    fn simplest_rational_in_interval() {
        assert_eq!(simplest_between(&frac(-2, 3), &int(0)), int(0));
        assert_eq!(simplest_between(&frac(1, 3), &frac(1, 2)), frac(1, 2));
        assert_eq!(simplest_between(&frac(3, 10), &frac(4, 10)), frac(1, 3));
        assert_eq!(simplest_between(&frac(-4, 10), &frac(-3, 10)), frac(-1, 3));
    }

    #[test]
    fn primitive_vectors() {
        assert_eq!(primitive(&[frac(2, 3), frac(-4, 3)]), vec![BigInt::from(1), BigInt::from(-2)]);
    }
}
