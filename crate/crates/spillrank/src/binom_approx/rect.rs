//! Tiling a centered binomial grid with local approximations.
//!
//! The target is `2^-l C(l, l/2 + x + y)` on `[-M_x, M_x] x [-M_y, M_y]`.
//! The grid is cut into squares of side `M + 1`. A square whose lower corner
//! has `a_x + a_y <= 0` is anchored there, otherwise at its upper corner, so
//! the anchor never exceeds `l/2` and local offsets grow away from the center.
//!
//! # Scaling
//!
//! Each product is rescaled so its `y` factor peaks at exactly `1`:
//!
//! ```text
//! R~(y') = (l-A)^y' A^(M-y') r(y') / G      G = max over the side
//! Q~(x') = C(l,A) (l-A)^x' q(x') G / (2^l A^x' A^M den2)
//! ```
//!
//! so `Q~ R~ = 2^-l C(l,A) rho^t q r / den2` with `rho = (l-A)/A`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use super::local::{local_approx_at, LocalApprox, DEFAULT_WINDOW_SCALE};
use crate::binomial::binom;
use crate::error::{Error, Result};
use crate::model::Mode;

/// Tuning for the rectangle tiling.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ApproxConfig {
    pub window_scale: f64,
    /// How many times the window may shrink by 3/4 after a failed square.
    pub shrink_steps: u32,
    /// Allowed multiple of `(M_x M_y / l) d^4` for the product count.
    pub term_factor: u64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            window_scale: DEFAULT_WINDOW_SCALE,
            shrink_steps: 6,
            term_factor: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Rect {
    pub ax: i64,
    pub bx: i64,
    pub ay: i64,
    pub by: i64,
    pub upper: bool,
    pub anchor: i64,
    /// No approximation: the whole mass stays in the residual.
    pub skipped: bool,
    /// Peak of each rescaled `y` factor, one per local product.
    #[serde(skip)]
    pub scale: Arc<Vec<BigUint>>,
}

impl Rect {
    pub fn contains(&self, x: i64, y: i64) -> bool {
        (self.ax..=self.bx).contains(&x) && (self.ay..=self.by).contains(&y)
    }

    /// Squares with equal keys have identical local factor tables.
    pub fn shape_key(&self) -> (i64, i64, i64) {
        (self.anchor, self.bx - self.ax, self.by - self.ay)
    }

    pub fn local_x(&self, x: i64) -> u64 {
        (if self.upper { self.bx - x } else { x - self.ax }) as u64
    }

    pub fn local_y(&self, y: i64) -> u64 {
        (if self.upper { self.by - y } else { y - self.ay }) as u64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RectDecomp {
    pub l: u64,
    pub mx: i64,
    pub my: i64,
    pub eps_log2: u32,
    pub d: u32,
    pub window: u64,
    pub config: ApproxConfig,
    pub rects: Vec<Rect>,
    /// Nonzero products over all squares.
    pub r: u64,
    pub skipped: usize,
    #[serde(skip)]
    pub approx: BTreeMap<i64, Arc<LocalApprox>>,
}

/// A value `num / den` with nonnegative parts.
pub type Frac = (BigUint, BigUint);

impl RectDecomp {
    fn side(&self) -> i64 {
        self.window as i64 + 1
    }

    pub fn rect_of(&self, x: i64, y: i64) -> Option<&Rect> {
        if x.abs() > self.mx || y.abs() > self.my {
            return None;
        }
        let ny = (2 * self.my) / self.side() + 1;
        let i = ((x + self.mx) / self.side()) * ny + (y + self.my) / self.side();
        self.rects.get(i as usize).filter(|r| r.contains(x, y))
    }

    pub fn local(&self, rect: &Rect) -> Option<&LocalApprox> {
        if rect.skipped {
            return None;
        }
        self.approx.get(&rect.anchor).map(|a| a.as_ref())
    }

    /// `(C(l,A) (l-A)^x', 2^l A^(x'+M) den2)`, shared by every product of
    /// the square: `Q~_i(x) = frame.0 q_i(x') G_i / frame.1`.
    pub fn q_frame(&self, rect: &Rect, x: i64) -> Frac {
        let la = self.local(rect).expect("approximated square");
        let xl = rect.local_x(x);
        let num = binom(self.l, rect.anchor as u64)
            * BigUint::from(self.l - rect.anchor as u64).pow(xl as u32);
        let den = (BigUint::one() << self.l)
            * BigUint::from(rect.anchor as u64).pow((xl + la.window) as u32)
            * la.table_den();
        (num, den)
    }

    /// `Q~_i(x)` for product `i` of `rect`.
    pub fn q_tilde(&self, rect: &Rect, i: usize, x: i64) -> Frac {
        let (num, den) = self.q_frame(rect, x);
        self.q_tilde_in(rect, i, x, &num, den)
    }

    pub(crate) fn q_tilde_in(
        &self,
        rect: &Rect,
        i: usize,
        x: i64,
        num: &BigUint,
        den: BigUint,
    ) -> Frac {
        let la = self.local(rect).expect("approximated square");
        let q = &la.products[i].q[rect.local_x(x) as usize];
        (num * q * &rect.scale[i], den)
    }

    /// `R~_i(y)`, at most one.
    pub fn r_tilde(&self, rect: &Rect, i: usize, y: i64) -> Frac {
        let la = self.local(rect).expect("approximated square");
        let yl = rect.local_y(y);
        let num =
            r_weight(self.l, rect.anchor as u64, la.window, yl) * &la.products[i].r[yl as usize];
        (num, rect.scale[i].clone())
    }

    /// `sum_i Q~_i(x) R~_i(y)`.
    pub fn approx_at(&self, x: i64, y: i64) -> BigRational {
        let (num, den) = self.approx_parts(x, y);
        BigRational::new(num, den)
    }

    /// Unreduced numerator and denominator of [`Self::approx_at`].
    pub fn approx_parts(&self, x: i64, y: i64) -> (BigInt, BigInt) {
        let local = self
            .rect_of(x, y)
            .and_then(|rect| Some((rect, self.local(rect)?)));
        let Some((rect, la)) = local else {
            return (BigInt::zero(), BigInt::one());
        };
        let t = rect.local_x(x) + rect.local_y(y);
        let a = rect.anchor as u64;
        let num = BigInt::from(binom(self.l, a) * BigUint::from(self.l - a).pow(t as u32))
            * la.num_at(t as i64);
        let den =
            BigInt::from((BigUint::one() << self.l) * BigUint::from(a).pow(t as u32) * &la.den);
        (num, den)
    }

    pub fn target(&self, x: i64, y: i64) -> BigRational {
        scaled_binom_at(self.l, x + y)
    }

    /// `E(x, y)`; the target minus the approximation.
    pub fn residual(&self, x: i64, y: i64) -> BigRational {
        self.target(x, y) - self.approx_at(x, y)
    }

    pub fn eps(&self) -> BigRational {
        BigRational::new(BigInt::one(), BigInt::one() << self.eps_log2)
    }

    /// `term_factor (max(M_x M_y, 1) / l) d^4`, rounded up.
    pub fn term_budget(&self) -> u64 {
        let area = (self.mx * self.my).max(1) as u64;
        let d4 = u64::from(self.d).pow(4);
        (self.config.term_factor * area * d4).div_ceil(self.l)
    }
}

/// `2^-l C(l, l/2 + s)`, zero outside the row.
pub fn scaled_binom_at(l: u64, s: i64) -> BigRational {
    let k = l as i64 / 2 + s;
    if k < 0 || k > l as i64 {
        return BigRational::zero();
    }
    BigRational::new(BigInt::from(binom(l, k as u64)), BigInt::one() << l)
}

fn r_weight(l: u64, a: u64, m: u64, yl: u64) -> BigUint {
    BigUint::from(l - a).pow(yl as u32) * BigUint::from(a).pow((m - yl) as u32)
}

fn window_bound(l: u64, c: f64) -> u64 {
    ((c * (l as f64 / 4.0).sqrt()).floor() as u64).max(1)
}

/// Tiles the grid and attaches a certified local approximation to every
/// square. With `eps = 2^-eps_log2` the local degree is `eps_log2 + 8`.
pub fn rect_decompose(
    l: u64,
    mx: i64,
    my: i64,
    eps_log2: u32,
    config: &ApproxConfig,
    mode: Mode,
) -> Result<RectDecomp> {
    if !l.is_multiple_of(2) || l < 4 {
        return Err(Error::Parameter(format!(
            "row length {l} must be even and at least 4"
        )));
    }
    if mx < 0 || my < 0 {
        return Err(Error::Parameter("grid bounds must be nonnegative".into()));
    }
    if mode == Mode::Strict && (l as i64 <= 8 * mx || l as i64 <= 8 * my) {
        return Err(Error::Parameter(format!(
            "row length {l} must exceed 8*M_x = {} and 8*M_y = {}",
            8 * mx,
            8 * my
        )));
    }
    let d = eps_log2 + 8;
    let mut c = config.window_scale;
    let mut last_err = None;
    for step in 0..=config.shrink_steps {
        let window = window_bound(l, c);
        match attempt(l, mx, my, d, window) {
            Ok((approx, failed)) if failed.is_empty() => {
                return Ok(finish(
                    l, mx, my, eps_log2, d, window, *config, approx, &failed,
                ));
            }
            Ok((approx, failed)) => {
                let last = step == config.shrink_steps || window == 1;
                if last {
                    if mode == Mode::Strict {
                        let (a, e) = failed.into_iter().next().expect("nonempty");
                        return Err(Error::cert(
                            "local approximation",
                            format!("anchor {a} at window {window}: {e}"),
                        ));
                    }
                    return Ok(finish(
                        l, mx, my, eps_log2, d, window, *config, approx, &failed,
                    ));
                }
                last_err = failed.into_iter().next();
            }
            Err(e) => return Err(e),
        }
        c *= 0.75;
    }
    let detail = last_err
        .map(|(a, e)| format!("anchor {a}: {e}"))
        .unwrap_or_default();
    Err(Error::cert("local approximation", detail))
}

type Attempt = (BTreeMap<i64, Arc<LocalApprox>>, BTreeMap<i64, String>);

fn attempt(l: u64, mx: i64, my: i64, d: u32, window: u64) -> Result<Attempt> {
    let mut anchors = std::collections::BTreeSet::new();
    for (ax, bx, ay, by) in tiles(mx, my, window) {
        anchors.insert(anchor_of(l, ax, bx, ay, by).0);
    }
    let mut approx = BTreeMap::new();
    let mut failed = BTreeMap::new();
    for a in anchors {
        if a <= 0 || 2 * a > l as i64 || a as u64 + 2 * window > l {
            failed.insert(a, "anchor outside the row".to_string());
            continue;
        }
        match local_approx_at(l, a as u64, d, window) {
            Ok(la) => match la.sandwich_witness() {
                None => {
                    approx.insert(a, Arc::new(la));
                }
                Some(t) => {
                    failed.insert(a, format!("sandwich fails at offset {t}"));
                }
            },
            Err(Error::Certification { detail, .. }) => {
                failed.insert(a, detail);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((approx, failed))
}

fn tiles(mx: i64, my: i64, window: u64) -> Vec<(i64, i64, i64, i64)> {
    let side = window as i64 + 1;
    let mut out = Vec::new();
    let mut ax = -mx;
    while ax <= mx {
        let bx = (ax + side - 1).min(mx);
        let mut ay = -my;
        while ay <= my {
            let by = (ay + side - 1).min(my);
            out.push((ax, bx, ay, by));
            ay += side;
        }
        ax += side;
    }
    out
}

fn anchor_of(l: u64, ax: i64, bx: i64, ay: i64, by: i64) -> (i64, bool) {
    let half = l as i64 / 2;
    if ax + ay <= 0 {
        (half + ax + ay, false)
    } else {
        (half - bx - by, true)
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    l: u64,
    mx: i64,
    my: i64,
    eps_log2: u32,
    d: u32,
    window: u64,
    config: ApproxConfig,
    approx: BTreeMap<i64, Arc<LocalApprox>>,
    failed: &BTreeMap<i64, String>,
) -> RectDecomp {
    let mut rects = Vec::new();
    let mut r = 0u64;
    let mut skipped = 0;
    let mut scales: BTreeMap<(i64, u64), Arc<Vec<BigUint>>> = BTreeMap::new();
    for (ax, bx, ay, by) in tiles(mx, my, window) {
        let (anchor, upper) = anchor_of(l, ax, bx, ay, by);
        let mut rect = Rect {
            ax,
            bx,
            ay,
            by,
            upper,
            anchor,
            skipped: failed.contains_key(&anchor) || !approx.contains_key(&anchor),
            scale: Arc::default(),
        };
        if rect.skipped {
            skipped += 1;
        } else {
            let la = &approx[&anchor];
            let ylen = (by - ay) as u64;
            rect.scale = scales
                .entry((anchor, ylen))
                .or_insert_with(|| {
                    let weights: Vec<BigUint> = (0..=ylen)
                        .map(|yl| r_weight(l, anchor as u64, la.window, yl))
                        .collect();
                    Arc::new(
                        la.products
                            .iter()
                            .map(|p| {
                                weights
                                    .iter()
                                    .zip(&p.r)
                                    .map(|(w, r)| w * r)
                                    .max()
                                    .unwrap_or_default()
                            })
                            .collect(),
                    )
                })
                .clone();
            r += rect.scale.iter().filter(|g| !g.is_zero()).count() as u64;
        }
        rects.push(rect);
    }
    RectDecomp {
        l,
        mx,
        my,
        eps_log2,
        d,
        window,
        config,
        rects,
        r,
        skipped,
        approx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_partition_the_grid() {
        let rd = rect_decompose(256, 9, 7, 2, &ApproxConfig::default(), Mode::Strict).unwrap();
        for x in -9..=9 {
            for y in -7..=7 {
                let n = rd.rects.iter().filter(|r| r.contains(x, y)).count();
                assert_eq!(n, 1);
                assert!(rd.rect_of(x, y).unwrap().contains(x, y));
                let r = rd.rect_of(x, y).unwrap();
                assert!(r.anchor <= 128);
                assert_eq!(r.upper, r.ax + r.ay > 0);
            }
        }
        assert_eq!(rd.skipped, 0);
    }

    #[test]
    fn degenerate_single_point() {
        let rd = rect_decompose(64, 0, 0, 2, &ApproxConfig::default(), Mode::Strict).unwrap();
        assert_eq!(rd.rects.len(), 1);
        let e = rd.residual(0, 0);
        assert!(e >= BigRational::zero());
        assert!(e <= rd.eps() * rd.target(0, 0));
        assert_eq!(rd.approx_at(0, 0) + e, rd.target(0, 0));
    }

    #[test]
    fn factors_multiply_to_the_approximation() {
        let rd = rect_decompose(256, 8, 8, 2, &ApproxConfig::default(), Mode::Strict).unwrap();
        for (x, y) in [(-8, -8), (3, -5), (8, 8), (0, 1)] {
            let rect = rd.rect_of(x, y).unwrap();
            let mut acc = BigRational::zero();
            for i in 0..rect.scale.len() {
                if rect.scale[i].is_zero() {
                    continue;
                }
                let (qn, qd) = rd.q_tilde(rect, i, x);
                let (rn, rdn) = rd.r_tilde(rect, i, y);
                assert!(rn <= rdn);
                acc += BigRational::new((qn * rn).into(), (qd * rdn).into());
            }
            assert_eq!(acc, rd.approx_at(x, y));
        }
    }

    #[test]
    fn strict_rejects_wide_grid() {
        assert!(rect_decompose(64, 8, 2, 2, &ApproxConfig::default(), Mode::Strict).is_err());
        assert!(rect_decompose(64, 8, 2, 2, &ApproxConfig::default(), Mode::Relaxed).is_ok());
    }
}
