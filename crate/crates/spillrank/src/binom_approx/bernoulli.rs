//! Bernoulli numbers with `B_1 = +1/2` and power sums.
//!
//! # Convention
//!
//! With `B_1 = +1/2` the numbers satisfy `sum_(j<=k) C(k+1, j) B_j = k + 1`,
//! and the power sum `1^j + ... + t^j` equals
//! `1/(j+1) sum_(k<=j) C(j+1, k) B_k t^(j+1-k)`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::poly::RationalPoly;
use crate::binomial::binom;

fn big(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// `B_0 ..= B_max`.
#[derive(Clone, Debug)]
pub struct BernoulliTable {
    pub values: Vec<BigRational>,
}

impl BernoulliTable {
    pub fn new(max: usize) -> Self {
        let mut values: Vec<BigRational> = Vec::with_capacity(max + 1);
        for k in 0..=max as u64 {
            let mut acc = big(k + 1);
            for (j, b) in values.iter().enumerate() {
                acc -= BigRational::from_integer(BigInt::from(binom(k + 1, j as u64))) * b;
            }
            values.push(acc / big(k + 1));
        }
        BernoulliTable { values }
    }

    pub fn get(&self, k: usize) -> &BigRational {
        &self.values[k]
    }
}

/// `B_k` under the `B_1 = +1/2` convention.
pub fn bernoulli(k: usize) -> BigRational {
    BernoulliTable::new(k)
        .values
        .pop()
        .expect("table is nonempty")
}

/// The power-sum polynomial `S_j(t) = 1^j + 2^j + ... + t^j`.
pub fn faulhaber_poly(j: usize) -> RationalPoly {
    faulhaber_with(j, &BernoulliTable::new(j))
}

pub(crate) fn faulhaber_with(j: usize, table: &BernoulliTable) -> RationalPoly {
    let mut coeffs = vec![BigRational::zero(); j + 2];
    let inv = big(1) / big(j as u64 + 1);
    for k in 0..=j {
        let c = BigRational::from_integer(BigInt::from(binom(j as u64 + 1, k as u64)));
        coeffs[j + 1 - k] = &inv * c * table.get(k);
    }
    RationalPoly::new(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn first_values() {
        assert_eq!(bernoulli(0), BigRational::one());
        assert_eq!(bernoulli(1), r(1, 2));
        assert_eq!(bernoulli(2), r(1, 6));
        assert_eq!(bernoulli(4), r(-1, 30));
        for k in [3, 5, 7, 9, 11] {
            assert!(bernoulli(k).is_zero());
        }
    }

    #[test]
    fn power_sums_match_direct_summation() {
        for j in 1..=12usize {
            let s = faulhaber_poly(j);
            assert_eq!(s.degree(), Some(j + 1));
            let mut acc = BigInt::zero();
            assert!(s.eval_int(0).is_zero());
            assert!(s.eval_int(-1).is_zero(), "S_{j}(-1)");
            for t in 1..=20i64 {
                acc += BigInt::from(t).pow(j as u32);
                assert_eq!(s.eval_int(t), BigRational::from_integer(acc.clone()));
            }
        }
        assert_eq!(faulhaber_poly(1).eval_int(4), r(10, 1));
        assert_eq!(faulhaber_poly(2).eval_int(3), r(14, 1));
        assert!(faulhaber_poly(5).eval_int(-1).is_zero());
    }
}
