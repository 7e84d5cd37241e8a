//! Dense polynomials with exact rational coefficients.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::binomial::binom;

/// `coeffs[i]` multiplies `t^i`; trailing zeros are trimmed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalPoly {
    pub coeffs: Vec<BigRational>,
}

impl Serialize for RationalPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        v.serialize(s)
    }
}

impl RationalPoly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        RationalPoly { coeffs }
    }

    pub fn zero() -> Self {
        RationalPoly { coeffs: Vec::new() }
    }

    pub fn constant(c: BigRational) -> Self {
        Self::new(vec![c])
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeff(&self, i: usize) -> BigRational {
        self.coeffs
            .get(i)
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new((0..n).map(|i| self.coeff(i) + other.coeff(i)).collect())
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self::new(self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Self::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// `p(t + h)`.
    pub fn shift(&self, h: i64) -> Self {
        let h = BigRational::from_integer(BigInt::from(h));
        let mut out = vec![BigRational::zero(); self.coeffs.len()];
        for (k, c) in self.coeffs.iter().enumerate() {
            let mut hp = BigRational::one();
            for i in (0..=k).rev() {
                let bin = BigRational::from_integer(BigInt::from(binom(k as u64, i as u64)));
                out[i] += c * &bin * &hp;
                hp *= &h;
            }
        }
        Self::new(out)
    }

    pub fn eval(&self, t: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    pub fn eval_int(&self, t: i64) -> BigRational {
        self.eval(&BigRational::from_integer(BigInt::from(t)))
    }
}

/// Integer polynomial `sum c_i t^i`, used once denominators are cleared.
pub(crate) fn int_mul(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![BigInt::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if !y.is_zero() {
                out[i + j] += x * y;
            }
        }
    }
    out
}

pub(crate) fn int_eval(p: &[BigInt], t: i64) -> BigInt {
    let t = BigInt::from(t);
    let mut acc = BigInt::zero();
    for c in p.iter().rev() {
        acc = acc * &t + c;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn shift_matches_direct_evaluation() {
        let p = RationalPoly::new(vec![r(1, 2), r(-3, 1), r(0, 1), r(5, 7)]);
        let q = p.shift(-1);
        for t in -5..6 {
            assert_eq!(q.eval_int(t), p.eval_int(t - 1));
        }
    }

    #[test]
    fn product_and_trim() {
        let p = RationalPoly::new(vec![r(1, 1), r(1, 1)]);
        let q = RationalPoly::new(vec![r(-1, 1), r(1, 1), r(0, 1)]);
        assert_eq!(q.degree(), Some(1));
        assert_eq!(
            p.mul(&q),
            RationalPoly::new(vec![r(-1, 1), r(0, 1), r(1, 1)])
        );
        assert_eq!(p.add(&p.scale(&r(-1, 1))).degree(), None);
    }
}
