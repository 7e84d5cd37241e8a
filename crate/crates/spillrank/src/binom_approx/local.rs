//! Polynomial approximation of a binomial row near one anchor.
//!
//! With `A = alpha l` the ratio `C(l, A + t) / (C(l, A) ((l - A)/A)^t)` is a
//! product of `t` factors whose logarithm expands through power sums. The
//! first `d - 1` orders give a polynomial `P_1`, the exponential is truncated
//! after `d` terms, and a `1 - eps/2` safety factor pushes the result below
//! the true ratio.
//!
//! # Products
//!
//! `P(x + y)` is expanded into monomials `x^a y^b`. Positive monomials are
//! grouped by `a`. A negative monomial `-n x^a y^b` is paid for out of the
//! constant term through
//!
//! ```text
//! M^(a+b) - x^a y^b = 1/2 (M^a - x^a)(M^b + y^b) + 1/2 (M^a + x^a)(M^b - y^b)
//! ```
//!
//! which is nonnegative on `[0, M]^2`. All tables are integers over the
//! common denominator `2 * den`.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use super::bernoulli::{faulhaber_with, BernoulliTable};
use super::poly::{int_eval, int_mul, RationalPoly};
use crate::binomial::binom;
use crate::error::{Error, Result};

/// Default window scale when none is configured.
pub const DEFAULT_WINDOW_SCALE: f64 = 0.35;

/// A nonnegative separable product `q(x) r(y)` over `[0, M]^2`.
#[derive(Clone, Debug, Serialize)]
pub struct IntProduct {
    pub q: Vec<BigUint>,
    pub r: Vec<BigUint>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalApprox {
    pub l: u64,
    /// The anchor `alpha l`.
    pub anchor: u64,
    pub d: u32,
    pub window: u64,
    /// `eps = 2^-eps_log2` with `eps_log2 = d - 8`.
    pub eps_log2: u32,
    pub poly: RationalPoly,
    /// `P = num / den`.
    #[serde(skip)]
    pub num: Vec<BigInt>,
    #[serde(skip)]
    pub den: BigUint,
    /// `sum_i q_i(x) r_i(y) = 2 num(x + y)`.
    #[serde(skip)]
    pub products: Vec<IntProduct>,
}

impl LocalApprox {
    pub fn alpha(&self) -> BigRational {
        BigRational::new(BigInt::from(self.anchor), BigInt::from(self.l))
    }

    pub fn eps(&self) -> BigRational {
        BigRational::new(BigInt::one(), BigInt::one() << self.eps_log2)
    }

    /// Common denominator of the product tables.
    pub fn table_den(&self) -> BigUint {
        &self.den * 2u32
    }

    /// Rational value tables `(Q_i, R_i)` with `sum Q_i(x) R_i(y) = P(x + y)`.
    pub fn rational_products(&self) -> Vec<(Vec<BigRational>, Vec<BigRational>)> {
        let den = BigInt::from(self.table_den());
        self.products
            .iter()
            .map(|p| {
                let q =
                    p.q.iter()
                        .map(|v| BigRational::from_integer(BigInt::from(v.clone())))
                        .collect();
                let r =
                    p.r.iter()
                        .map(|v| BigRational::new(BigInt::from(v.clone()), den.clone()))
                        .collect();
                (q, r)
            })
            .collect()
    }

    pub fn num_at(&self, t: i64) -> BigInt {
        int_eval(&self.num, t)
    }

    pub fn product_bound(&self) -> u64 {
        let d = u64::from(self.d);
        d.pow(4) + d * d + 1
    }

    /// Checks `(1 - eps) C(l, A + t) <= C(l, A) rho^t P(t) <= C(l, A + t)` for
    /// every `t` in `[0, 2M]`. Returns the first failing `t`.
    pub fn sandwich_witness(&self) -> Option<i64> {
        (0..=2 * self.window as i64).find(|&t| !self.sandwich_at(t))
    }

    pub(crate) fn sandwich_at(&self, t: i64) -> bool {
        let (mid, exact) = self.scaled_pair(t);
        if mid.sign() == Sign::Minus {
            return false;
        }
        let mid = mid.magnitude();
        let lo_scale = (BigUint::one() << self.eps_log2) - 1u32;
        mid <= &exact && (&exact * lo_scale) <= (mid << self.eps_log2)
    }

    /// `(C(l, A) (l-A)^t num(t), C(l, A+t) A^t den)`; their ratio is the
    /// approximation quality at `t`.
    pub(crate) fn scaled_pair(&self, t: i64) -> (BigInt, BigUint) {
        let tu = t as u32;
        let mid =
            BigInt::from(binom(self.l, self.anchor) * BigUint::from(self.l - self.anchor).pow(tu))
                * self.num_at(t);
        let exact =
            binom(self.l, self.anchor + t as u64) * BigUint::from(self.anchor).pow(tu) * &self.den;
        (mid, exact)
    }

    /// Largest `1 - approx/exact` over the window, as a float for reports.
    pub fn max_rel_dev(&self) -> f64 {
        (0..=2 * self.window as i64)
            .map(|t| {
                let (mid, exact) = self.scaled_pair(t);
                let r = BigRational::new(mid, BigInt::from(exact));
                1.0 - r.to_f64().unwrap_or(f64::NAN)
            })
            .fold(0.0, f64::max)
    }
}

/// Window bound `floor(c sqrt(alpha l))`.
pub fn window_for(anchor: u64, c: f64) -> u64 {
    (c * (anchor as f64).sqrt()).floor().max(0.0) as u64
}

/// Builds the approximation with window `floor(c sqrt(alpha l))`.
pub fn local_approx(l: u64, alpha: &BigRational, d: u32, c: f64) -> Result<LocalApprox> {
    let a = alpha * BigRational::from_integer(BigInt::from(l));
    if !a.is_integer() || !a.is_positive() {
        return Err(Error::Parameter(format!(
            "alpha * l = {a} must be a positive integer"
        )));
    }
    if alpha > &BigRational::new(1.into(), 2.into()) {
        return Err(Error::Parameter("alpha must be at most 1/2".into()));
    }
    let anchor = a
        .to_integer()
        .to_u64()
        .ok_or_else(|| Error::Parameter("anchor too large".into()))?;
    let window = window_for(anchor, c);
    if window < 1 {
        return Err(Error::Parameter(format!(
            "window c*sqrt(alpha l) = {c}*sqrt({anchor}) is below 1"
        )));
    }
    local_approx_at(l, anchor, d, window)
}

/// Builds the approximation for anchor `A` and an explicit window bound.
pub fn local_approx_at(l: u64, anchor: u64, d: u32, window: u64) -> Result<LocalApprox> {
    if d < 9 {
        return Err(Error::Parameter(format!(
            "degree parameter d = {d} must be at least 9"
        )));
    }
    if anchor == 0 || 2 * anchor > l {
        return Err(Error::Parameter(format!(
            "anchor {anchor} outside (0, l/2] for l = {l}"
        )));
    }
    if 2 * window + anchor > l {
        return Err(Error::Parameter(format!(
            "window {window} too wide for l = {l}"
        )));
    }
    let eps_log2 = d - 8;
    let p1 = log_poly(l, anchor, d);
    let (num, den) = truncated_exp(&p1, d, eps_log2);
    let poly = RationalPoly::new(
        num.iter()
            .map(|c| BigRational::new(c.clone(), BigInt::from(den.clone())))
            .collect(),
    );
    let products = split_products(&num, window).map_err(|need| {
        Error::cert(
            "constant-term budget",
            format!(
                "l={l} anchor={anchor} d={d} window={window}: constant term {} short by {need}; shrink the window",
                num[0]
            ),
        )
    })?;
    Ok(LocalApprox {
        l,
        anchor,
        d,
        window,
        eps_log2,
        poly,
        num,
        den,
        products,
    })
}

/// `P_1(t) = sum_(j<d) 1/j (-S_j(t-1) (l-A)^-j + S_j(t) (-A)^-j)`.
fn log_poly(l: u64, anchor: u64, d: u32) -> RationalPoly {
    let table = BernoulliTable::new(d as usize);
    let lo = BigRational::from_integer(BigInt::from(l - anchor));
    let neg_a = BigRational::from_integer(-BigInt::from(anchor));
    let mut acc = RationalPoly::zero();
    for j in 1..d as usize {
        let s = faulhaber_with(j, &table);
        let jj = BigRational::from_integer(BigInt::from(j));
        let c_lo = -(lo.pow(j as i32) * &jj).recip();
        let c_a = (neg_a.pow(j as i32) * &jj).recip();
        acc = acc.add(&s.shift(-1).scale(&c_lo)).add(&s.scale(&c_a));
    }
    acc
}

/// Integer numerator and denominator of `(1 - 2^-(e+1)) sum_(i<=d) p^i / i!`.
fn truncated_exp(p1: &RationalPoly, d: u32, eps_log2: u32) -> (Vec<BigInt>, BigUint) {
    let mut lcm = BigInt::one();
    for c in &p1.coeffs {
        lcm = lcm.lcm(c.denom());
    }
    let mut n1: Vec<BigInt> = p1
        .coeffs
        .iter()
        .map(|c| c.numer() * (&lcm / c.denom()))
        .collect();
    let content = n1.iter().fold(lcm.clone(), |g, c| g.gcd(c));
    if !content.is_one() {
        n1.iter_mut().for_each(|c| *c /= &content);
        lcm /= &content;
    }
    let d = d as usize;
    let mut fact = vec![BigInt::one(); d + 1];
    for i in 1..=d {
        fact[i] = &fact[i - 1] * BigInt::from(i);
    }
    let mut lcm_pow = vec![BigInt::one(); d + 1];
    for i in 1..=d {
        lcm_pow[i] = &lcm_pow[i - 1] * &lcm;
    }
    let mut sum: Vec<BigInt> = Vec::new();
    let mut power = vec![BigInt::one()];
    for i in 0..=d {
        let k = &lcm_pow[d - i] * (&fact[d] / &fact[i]);
        if sum.len() < power.len() {
            sum.resize(power.len(), BigInt::zero());
        }
        for (s, p) in sum.iter_mut().zip(&power) {
            *s += p * &k;
        }
        if i < d {
            power = int_mul(&power, &n1);
        }
    }
    let half = eps_log2 + 1;
    let keep = (BigInt::one() << half) - 1;
    let mut num: Vec<BigInt> = sum.into_iter().map(|c| c * &keep).collect();
    let mut den = (BigInt::one() << half) * &fact[d] * &lcm_pow[d];
    if den.is_negative() {
        den = -den;
        num.iter_mut().for_each(|c| *c = -c.clone());
    }
    let mut g = den.clone();
    for c in &num {
        g = g.gcd(c);
    }
    if !g.is_one() {
        num.iter_mut().for_each(|c| *c /= &g);
        den /= &g;
    }
    while num.last().is_some_and(|c| c.is_zero()) {
        num.pop();
    }
    (num, den.to_biguint().expect("positive"))
}

/// `sum_(k>=1) |num_k| (2M)^k`, the mass of every non-constant monomial at
/// the far corner of the window.
pub(crate) fn budget_need(num: &[BigInt], m: u64) -> BigInt {
    let two_m = BigInt::from(2 * m);
    num.iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| c.abs() * two_m.pow(k as u32))
        .sum()
}

/// Splits `2 num(x + y)` into nonnegative products on `[0, M]^2`. On a
/// budget shortfall returns the missing amount.
fn split_products(num: &[BigInt], m: u64) -> std::result::Result<Vec<IntProduct>, BigInt> {
    let deg = num.len().saturating_sub(1);
    let two_m = BigInt::from(2 * m);
    let c0 = num.first().cloned().unwrap_or_default();
    let need = budget_need(num, m);
    if need > c0 {
        return Err(need - c0);
    }
    let mut debt = BigInt::zero();
    for (k, c) in num.iter().enumerate().skip(1) {
        if c.is_negative() {
            debt += -c * two_m.pow(k as u32);
        }
    }
    let spare = &c0 - &debt;
    let pts: Vec<BigInt> = (0..=m).map(BigInt::from).collect();
    let pw: Vec<Vec<BigInt>> = pts
        .iter()
        .map(|x| {
            let mut row = Vec::with_capacity(deg + 1);
            let mut acc = BigInt::one();
            for _ in 0..=deg {
                row.push(acc.clone());
                acc *= x;
            }
            row
        })
        .collect();
    let mpow = &pw[m as usize];
    let to_u = |v: BigInt| v.to_biguint().expect("nonnegative table");
    let width = (m + 1) as usize;
    let mut out = Vec::new();
    if !spare.is_zero() {
        out.push(IntProduct {
            q: vec![BigUint::one(); width],
            r: vec![to_u(spare * 2); width],
        });
    }
    let mut binrow = vec![BigInt::one()];
    let mut binoms: Vec<Vec<BigInt>> = Vec::with_capacity(deg + 1);
    for k in 0..=deg {
        if k > 0 {
            let mut next = vec![BigInt::one(); k + 1];
            for i in 1..k {
                next[i] = &binrow[i - 1] + &binrow[i];
            }
            binrow = next;
        }
        binoms.push(binrow.clone());
    }
    let eval = |coef: &[BigInt], y: usize, shift: Option<bool>| -> BigInt {
        coef.iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(b, c)| match shift {
                None => c * &pw[y][b],
                Some(true) => c * (&mpow[b] + &pw[y][b]),
                Some(false) => c * (&mpow[b] - &pw[y][b]),
            })
            .sum()
    };
    for a in 0..=deg {
        let mut pos = vec![BigInt::zero(); deg - a + 1];
        let mut neg = vec![BigInt::zero(); deg - a + 1];
        for b in 0..=deg - a {
            if a + b == 0 || num[a + b].is_zero() {
                continue;
            }
            let beta = &num[a + b] * &binoms[a + b][a];
            if beta.is_positive() {
                pos[b] = beta;
            } else {
                neg[b] = -beta;
            }
        }
        if pos.iter().any(|v| !v.is_zero()) {
            out.push(IntProduct {
                q: (0..width).map(|x| to_u(pw[x][a].clone())).collect(),
                r: (0..width).map(|y| to_u(eval(&pos, y, None) * 2)).collect(),
            });
        }
        if neg.iter().any(|v| !v.is_zero()) {
            let ma = &mpow[a];
            if a > 0 {
                out.push(IntProduct {
                    q: (0..width).map(|x| to_u(ma - &pw[x][a])).collect(),
                    r: (0..width)
                        .map(|y| to_u(eval(&neg, y, Some(true))))
                        .collect(),
                });
            }
            out.push(IntProduct {
                q: (0..width).map(|x| to_u(ma + &pw[x][a])).collect(),
                r: (0..width)
                    .map(|y| to_u(eval(&neg, y, Some(false))))
                    .collect(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> BigRational {
        BigRational::new(1.into(), 2.into())
    }

    #[test]
    fn constant_term_is_one_minus_half_eps() {
        let la = local_approx(400, &half(), 10, DEFAULT_WINDOW_SCALE).unwrap();
        assert_eq!(la.poly.coeff(0), BigRational::new(7.into(), 8.into()));
        assert_eq!(la.eps(), BigRational::new(1.into(), 4.into()));
        assert!(la.sandwich_at(0));
    }

    #[test]
    fn log_poly_has_no_constant_term() {
        let p = log_poly(100, 40, 9);
        assert!(p.coeff(0).is_zero());
    }

    #[test]
    fn products_reproduce_the_polynomial() {
        let la = local_approx(400, &half(), 10, DEFAULT_WINDOW_SCALE).unwrap();
        assert!(la.products.len() as u64 <= la.product_bound());
        let m = la.window as usize;
        for x in 0..=m {
            for y in 0..=m {
                let s: BigUint = la.products.iter().map(|p| &p.q[x] * &p.r[y]).sum();
                assert_eq!(BigInt::from(s), la.num_at((x + y) as i64) * 2);
            }
        }
        let rat = la.rational_products();
        let v: BigRational = rat.iter().map(|(q, r)| &q[1] * &r[2]).sum();
        assert_eq!(v, la.poly.eval_int(3));
    }

    #[test]
    fn sandwich_holds_on_window() {
        let la = local_approx(400, &half(), 10, DEFAULT_WINDOW_SCALE).unwrap();
        assert_eq!(la.sandwich_witness(), None);
        let dev = la.max_rel_dev();
        assert!(dev > 0.0 && dev < 0.25, "{dev}");
    }

    #[test]
    fn oversized_window_breaks_the_budget() {
        let err = local_approx_at(400, 200, 10, 60).unwrap_err();
        assert!(matches!(err, Error::Certification { .. }), "{err}");
    }

    #[test]
    fn bad_anchor_rejected() {
        let third = BigRational::new(1.into(), 3.into());
        assert!(local_approx(400, &third, 10, 0.35).is_err());
    }
}
