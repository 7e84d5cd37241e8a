//! Exact binomial coefficients and combinatorial ranking of fixed-weight words.
//!
//! # Colex order
//!
//! A word of length `n` with `k` ones is identified with the set of its one
//! positions `c_1 < ... < c_k`. Its rank is `sum_j C(c_j, j)`, which enumerates
//! all such words in colexicographic order starting from `0`.

use std::sync::{OnceLock, RwLock};

use num_bigint::BigUint;
use num_traits::{One, Zero};

/// Pascal's triangle up to a fixed row, owned.
#[derive(Clone, Debug)]
pub struct BinomTable {
    rows: Vec<Vec<BigUint>>,
}

impl BinomTable {
    pub fn new(max_n: u64) -> Self {
        let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(max_n as usize + 1);
        rows.push(vec![BigUint::one()]);
        for n in 1..=max_n as usize {
            let prev = &rows[n - 1];
            let mut row = Vec::with_capacity(n + 1);
            row.push(BigUint::one());
            for k in 1..n {
                row.push(&prev[k - 1] + &prev[k]);
            }
            row.push(BigUint::one());
            rows.push(row);
        }
        BinomTable { rows }
    }

    pub fn max_n(&self) -> u64 {
        self.rows.len() as u64 - 1
    }

    /// `C(n, k)`, zero when `k > n`.
    pub fn get(&self, n: u64, k: u64) -> BigUint {
        if k > n {
            return BigUint::zero();
        }
        self.rows[n as usize][k as usize].clone()
    }

    pub fn row(&self, n: u64) -> &[BigUint] {
        &self.rows[n as usize]
    }
}

fn shared() -> &'static RwLock<BinomTable> {
    static TABLE: OnceLock<RwLock<BinomTable>> = OnceLock::new();
    TABLE.get_or_init(|| RwLock::new(BinomTable::new(64)))
}

/// `C(n, k)` from a process-wide table that grows on demand.
pub fn binom(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    {
        let t = shared().read().expect("binomial table poisoned");
        if n <= t.max_n() {
            return t.get(n, k);
        }
    }
    let mut t = shared().write().expect("binomial table poisoned");
    if n > t.max_n() {
        *t = BinomTable::new(n.max(2 * t.max_n()));
    }
    t.get(n, k)
}

/// Signed variant: zero outside `0..=n`.
pub fn binom_i(n: u64, k: i64) -> BigUint {
    if k < 0 {
        BigUint::zero()
    } else {
        binom(n, k as u64)
    }
}

/// Colex rank of a word among the words of the same length and weight.
pub fn colex_rank(bits: &[bool]) -> BigUint {
    let mut r = BigUint::zero();
    let mut j = 0;
    for (pos, &b) in bits.iter().enumerate() {
        if b {
            j += 1;
            r += binom(pos as u64, j);
        }
    }
    r
}

/// Inverse of [`colex_rank`]: the length-`n` word of weight `k` with rank `r`.
pub fn colex_unrank(n: u64, k: u64, r: &BigUint) -> Vec<bool> {
    let mut bits = vec![false; n as usize];
    let mut r = r.clone();
    let mut j = k;
    let mut pos = n;
    while j > 0 {
        pos -= 1;
        let c = binom(pos, j);
        if c <= r {
            bits[pos as usize] = true;
            r -= c;
            j -= 1;
        }
    }
    bits
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pascal_matches_multiplicative_formula() {
        for n in 0..70u64 {
            for k in 0..=n {
                let mut m = BigUint::one();
                for i in 0..k {
                    m = m * (n - i) / (i + 1);
                }
                assert_eq!(binom(n, k), m);
            }
        }
        assert_eq!(binom(3, 5), BigUint::zero());
        assert_eq!(binom(200, 100).bits(), 196);
    }

    #[test]
    fn colex_enumerates_every_weight_class() {
        let n = 10u64;
        let mut seen = [0u64; 11];
        for word in 0u32..(1 << n) {
            let bits: Vec<bool> = (0..n).map(|i| (word >> i) & 1 == 1).collect();
            let k = bits.iter().filter(|b| **b).count() as u64;
            let r = colex_rank(&bits);
            assert!(r < binom(n, k));
            assert_eq!(colex_unrank(n, k, &r), bits);
            seen[k as usize] += 1;
        }
        for k in 0..=n {
            assert_eq!(BigUint::from(seen[k as usize]), binom(n, k));
        }
    }
}
