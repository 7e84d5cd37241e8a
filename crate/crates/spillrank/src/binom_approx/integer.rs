//! Integer floors of the rescaled factors.
//!
//! Every factor is scaled by `2^(w/2)` and floored, so each product of floors
//! is at most `2^w` times the rational product and the residual stays
//! nonnegative. In dyadic mode each floor table is further split by bits:
//! bit `j` of `floor(2^(w/2) Q~(x))` gives an indicator set `X_j`, and a term
//! is a pair of bit sets with weight `2^(jx + jy)`. Direct mode keeps the
//! floor tables as they are.

use std::ops::Range;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::Serialize;

use super::rect::{Rect, RectDecomp};
use crate::combiner::Product;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TermMode {
    Dyadic,
    Direct,
}

/// `weight * 1_X(x) * 1_Y(y)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Term {
    pub weight: BigUint,
    pub xs: Vec<i64>,
    pub ys: Vec<i64>,
}

/// Products of one square, in `products[range]`.
#[derive(Clone, Debug, Serialize)]
pub struct Group {
    pub ax: i64,
    pub bx: i64,
    pub ay: i64,
    pub by: i64,
    pub range: Range<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegerDecomp {
    pub l: u64,
    pub w: u32,
    pub mode: TermMode,
    pub mx: i64,
    pub my: i64,
    pub eps_log2: u32,
    side: i64,
    pub groups: Vec<Group>,
    #[serde(skip)]
    pub products: Vec<Product>,
    /// Term count: bit pairs in dyadic mode, products in direct mode.
    pub r: u64,
    /// Product count of the rational decomposition.
    pub r_rect: u64,
}

impl IntegerDecomp {
    fn group_of(&self, x: i64, y: i64) -> Option<&Group> {
        if x.abs() > self.mx || y.abs() > self.my {
            return None;
        }
        let ny = (2 * self.my) / self.side + 1;
        let i = ((x + self.mx) / self.side) * ny + (y + self.my) / self.side;
        self.groups.get(i as usize)
    }

    /// `sum` of all terms at `(x, y)`.
    pub fn value_at(&self, x: i64, y: i64) -> BigUint {
        let Some(g) = self.group_of(x, y) else {
            return BigUint::zero();
        };
        let end = g.range.end.min(self.products.len());
        self.products[g.range.start.min(end)..end]
            .iter()
            .filter_map(|p| Some(p.q(x)? * p.r(y)?))
            .sum()
    }

    /// Dyadic expansion of every product.
    pub fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        self.products.iter().flat_map(|p| {
            let xb = bit_sets(p.x0, &p.qx);
            let yb = bit_sets(p.y0, &p.ry);
            xb.into_iter().flat_map(move |(jx, xs)| {
                yb.clone().into_iter().map(move |(jy, ys)| Term {
                    weight: BigUint::from(1u8) << (jx + jy),
                    xs: xs.clone(),
                    ys,
                })
            })
        })
    }

    /// A decomposition with no terms over the same grid.
    pub fn empty(rd: &RectDecomp, w: u32, mode: TermMode) -> Self {
        let mut out = integer_terms_inner(rd, w, mode, false);
        out.products.clear();
        out.groups.iter_mut().for_each(|g| g.range = 0..0);
        out.r = 0;
        out
    }
}

fn bit_sets(x0: i64, vals: &[BigUint]) -> Vec<(u64, Vec<i64>)> {
    let top = vals.iter().map(|v| v.bits()).max().unwrap_or(0);
    (0..top)
        .filter_map(|j| {
            let xs: Vec<i64> = vals
                .iter()
                .enumerate()
                .filter(|(_, v)| v.bit(j))
                .map(|(i, _)| x0 + i as i64)
                .collect();
            (!xs.is_empty()).then_some((j, xs))
        })
        .collect()
}

fn or_bits(vals: &[BigUint]) -> u64 {
    vals.iter().fold(BigUint::zero(), |a, v| a | v).count_ones()
}

type Tables = Vec<(Vec<BigUint>, Vec<BigUint>)>;

/// Floor tables of one square in local coordinates, zero pairs removed.
fn local_floors(rd: &RectDecomp, rect: &Rect, half: u32) -> Tables {
    let xs: Vec<i64> = (0..=rect.bx - rect.ax)
        .map(|i| if rect.upper { rect.bx - i } else { rect.ax + i })
        .collect();
    let ys: Vec<i64> = (0..=rect.by - rect.ay)
        .map(|i| if rect.upper { rect.by - i } else { rect.ay + i })
        .collect();
    let frames: Vec<_> = xs.iter().map(|&x| rd.q_frame(rect, x)).collect();
    let mut out = Vec::new();
    for (i, g) in rect.scale.iter().enumerate() {
        if g.is_zero() {
            continue;
        }
        let qx: Vec<BigUint> = xs
            .iter()
            .zip(&frames)
            .map(|(&x, (fnum, fden))| {
                let (n, d) = rd.q_tilde_in(rect, i, x, fnum, fden.clone());
                (n << half) / d
            })
            .collect();
        let ry: Vec<BigUint> = ys
            .iter()
            .map(|&y| {
                let (n, d) = rd.r_tilde(rect, i, y);
                (n << half) / d
            })
            .collect();
        if qx.iter().all(Zero::is_zero) || ry.iter().all(Zero::is_zero) {
            continue;
        }
        out.push((qx, ry));
    }
    out
}

/// Floors every factor at scale `2^(w/2)`.
pub fn integer_terms(rd: &RectDecomp, w: u32, mode: TermMode) -> Result<IntegerDecomp> {
    if !w.is_multiple_of(2) {
        return Err(Error::Parameter(format!("word width {w} must be even")));
    }
    Ok(integer_terms_inner(rd, w, mode, true))
}

fn integer_terms_inner(rd: &RectDecomp, w: u32, mode: TermMode, fill: bool) -> IntegerDecomp {
    let half = w / 2;
    let mut products = Vec::new();
    let mut groups = Vec::new();
    let mut cache = std::collections::BTreeMap::new();
    for rect in &rd.rects {
        let start = products.len();
        if fill && !rect.skipped {
            let tables = cache
                .entry(rect.shape_key())
                .or_insert_with(|| local_floors(rd, rect, half));
            for (qx, ry) in tables.iter() {
                let (qx, ry) = if rect.upper {
                    (
                        qx.iter().rev().cloned().collect(),
                        ry.iter().rev().cloned().collect(),
                    )
                } else {
                    (qx.clone(), ry.clone())
                };
                products.push(Product {
                    x0: rect.ax,
                    qx,
                    y0: rect.ay,
                    ry,
                });
            }
        }
        groups.push(Group {
            ax: rect.ax,
            bx: rect.bx,
            ay: rect.ay,
            by: rect.by,
            range: start..products.len(),
        });
    }
    let r = match mode {
        TermMode::Dyadic => products
            .iter()
            .map(|p| or_bits(&p.qx) * or_bits(&p.ry))
            .sum(),
        TermMode::Direct => products.len() as u64,
    };
    IntegerDecomp {
        l: rd.l,
        w,
        mode,
        mx: rd.mx,
        my: rd.my,
        eps_log2: rd.eps_log2,
        side: rd.window as i64 + 1,
        groups,
        products,
        r,
        r_rect: rd.r,
    }
}

#[cfg(test)]
impl IntegerDecomp {
    pub(crate) fn group_of_for_tests(&self, x: i64, y: i64) -> Range<usize> {
        self.group_of(x, y).expect("inside the grid").range.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binom_approx::{rect_decompose, ApproxConfig};
    use crate::model::Mode;

    #[test]
    fn dyadic_terms_sum_to_the_floors() {
        let rd = rect_decompose(128, 4, 4, 2, &ApproxConfig::default(), Mode::Strict).unwrap();
        let id = integer_terms(&rd, 16, TermMode::Dyadic).unwrap();
        let terms: Vec<Term> = id.terms().collect();
        assert_eq!(terms.len() as u64, id.r);
        for (x, y) in [(-4, -4), (0, 0), (2, -3), (4, 4)] {
            let s: BigUint = terms
                .iter()
                .filter(|t| t.xs.contains(&x) && t.ys.contains(&y))
                .map(|t| t.weight.clone())
                .sum();
            assert_eq!(s, id.value_at(x, y));
        }
    }

    #[test]
    fn odd_width_rejected() {
        let rd = rect_decompose(128, 1, 1, 2, &ApproxConfig::default(), Mode::Strict).unwrap();
        assert!(integer_terms(&rd, 15, TermMode::Direct).is_err());
    }

    #[test]
    fn zero_pairs_are_dropped() {
        let rd = rect_decompose(128, 2, 2, 2, &ApproxConfig::default(), Mode::Strict).unwrap();
        let id = integer_terms(&rd, 2, TermMode::Direct).unwrap();
        assert!(id
            .products
            .iter()
            .all(|p| p.qx.iter().any(|v| !v.is_zero())));
        assert!(id.r <= id.r_rect);
    }
}
