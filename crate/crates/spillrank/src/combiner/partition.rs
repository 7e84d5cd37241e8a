//! Partition of a child's spillover domain into separable blocks.
//!
//! # Coordinates
//!
//! At relative position `q` of a run, with prefix sum `T_(q-1)` before the
//! child and `T_q` after it:
//!
//! ```text
//! x = (q-1) l/2 - T_(q-1)        y = T_q - q l/2        s = l/2 + x + y
//! ```
//!
//! # Blocks
//!
//! A [`Product`] is a pair of nonnegative integer tables `q(x)`, `r(y)`. For a
//! fixed `x`, the first `sum_p q_p(x) r_p(y)` values of each sum class
//! `SUM^-1(s)` are split into blocks in product order; within a product the
//! bits of `q(x)` and `r(y)` split it further into dyadic blocks of size
//! `2^(bx+by)`. Everything left over at the tail of the class belongs to the
//! residual block `K_0`.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::Serialize;

use super::SumLayout;
use crate::binomial::binom;
use crate::error::{Error, Result};
use crate::model::Mode;

/// Nonnegative separable term `q(x) r(y)` with tables over contiguous ranges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Product {
    pub x0: i64,
    pub qx: Vec<BigUint>,
    pub y0: i64,
    pub ry: Vec<BigUint>,
}

impl Product {
    pub fn q(&self, x: i64) -> Option<&BigUint> {
        let i = x - self.x0;
        (i >= 0).then(|| self.qx.get(i as usize)).flatten()
    }

    pub fn r(&self, y: i64) -> Option<&BigUint> {
        let i = y - self.y0;
        (i >= 0).then(|| self.ry.get(i as usize)).flatten()
    }
}

/// One dyadic block family: bit `bx` of `q_p` times bit `by` of `r_p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TermRef {
    pub p: u32,
    pub bx: u16,
    pub by: u16,
}

impl TermRef {
    pub fn exponent(&self) -> u64 {
        self.bx as u64 + self.by as u64
    }
}

/// A dyadic term with its index sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TermInfo {
    pub term: TermRef,
    pub xs: Vec<i64>,
    pub ys: Vec<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Zero,
    Term(TermRef),
}

/// Where one child spillover falls.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Located {
    pub s: u64,
    pub block: Block,
    pub rank: BigUint,
}

#[derive(Clone, Debug, Default)]
struct CellRow {
    nb: BigUint,
    active: Vec<(u32, BigUint)>,
}

/// Per-position partition `{K_(q,j)}` of the child domain, for every `x`.
#[derive(Clone, Debug)]
pub struct Partition {
    pub position: u32,
    pub l: u64,
    pub h: u64,
    pub mx: i64,
    pub my: i64,
    products: Vec<Product>,
    child: Arc<SumLayout>,
    rows: Vec<Vec<CellRow>>,
    zero_prefix: Vec<Vec<BigUint>>,
    /// `(x, s)` cells whose terms exceeded the class size and were dropped.
    pub dropped: Vec<(i64, u64)>,
}

/// Half-width of the sum band for a child of length `l`: `isqrt(l * L)` with
/// `L = ceil(log2(1/eps))`.
pub fn band_half_width(l: u64, eps_log2: u64) -> u64 {
    (l * eps_log2).isqrt()
}

/// `ceil(log2(1/eps))` for `eps = sigma 2^(-w-2)`.
pub fn eps_log2_for(w: u32, sigma: &BigUint) -> u64 {
    if sigma.is_zero() {
        return w as u64 + 2;
    }
    (w as u64 + 2).saturating_sub(sigma.bits() - 1).max(1)
}

/// One product per `x` row holding `floor(C(l, l/2+x+y) 2^(w-l))` on the band.
pub fn rows_products(position: u32, l: u64, w: u32, h: u64) -> Vec<Product> {
    let mx = (position as i64 - 1) * h as i64;
    let my = position as i64 * h as i64;
    let half = (l / 2) as i64;
    (-mx..=mx)
        .map(|x| {
            let ry = (-my..=my)
                .map(|y| {
                    let s = half + x + y;
                    if (x + y).unsigned_abs() > h || s < 0 || s > l as i64 {
                        return BigUint::zero();
                    }
                    scaled_binom(l, s as u64, w)
                })
                .collect();
            Product {
                x0: x,
                qx: vec![BigUint::one()],
                y0: -my,
                ry,
            }
        })
        .collect()
}

/// `floor(C(l, s) 2^(w-l))`.
pub fn scaled_binom(l: u64, s: u64, w: u32) -> BigUint {
    let c = binom(l, s);
    if (w as u64) >= l {
        c << (w as u64 - l)
    } else {
        c >> (l - w as u64)
    }
}

fn bits_of(v: &BigUint) -> impl Iterator<Item = u16> + '_ {
    (0..v.bits()).filter(move |&b| v.bit(b)).map(|b| b as u16)
}

impl Partition {
    /// Build from explicit products. Cells whose term mass exceeds the class
    /// size are fatal in strict mode and dropped into `K_0` otherwise.
    pub fn from_products(
        position: u32,
        h: u64,
        products: Vec<Product>,
        child: Arc<SumLayout>,
        mode: Mode,
    ) -> Result<Self> {
        let l = child.len;
        let mx = (position as i64 - 1) * h as i64;
        let my = position as i64 * h as i64;
        let half = (l / 2) as i64;
        let width = (2 * mx + 1) as usize;
        let mut rows = vec![vec![CellRow::default(); l as usize + 1]; width];
        for (p, prod) in products.iter().enumerate() {
            for (xi, q) in prod.qx.iter().enumerate() {
                let x = prod.x0 + xi as i64;
                if q.is_zero() || x.abs() > mx {
                    continue;
                }
                for (yi, r) in prod.ry.iter().enumerate() {
                    let y = prod.y0 + yi as i64;
                    let s = half + x + y;
                    if r.is_zero() || y.abs() > my || s < 0 || s > l as i64 {
                        continue;
                    }
                    let cell = &mut rows[(x + mx) as usize][s as usize];
                    let wgt = q * r;
                    cell.nb += &wgt;
                    cell.active.push((p as u32, wgt));
                }
            }
        }
        let mut dropped = Vec::new();
        for (xi, row) in rows.iter_mut().enumerate() {
            for (s, cell) in row.iter_mut().enumerate() {
                if &cell.nb > child.count(s as u64) {
                    let x = xi as i64 - mx;
                    if mode == Mode::Strict {
                        return Err(Error::cert(
                            "partition feasibility",
                            format!(
                                "position {position}, x = {x}, s = {s}: terms need {} but the class has {}",
                                cell.nb,
                                child.count(s as u64)
                            ),
                        ));
                    }
                    dropped.push((x, s as u64));
                    *cell = CellRow::default();
                }
            }
        }
        let zero_prefix = rows
            .iter()
            .map(|row| {
                let mut acc = BigUint::zero();
                let mut pre = Vec::with_capacity(row.len() + 1);
                pre.push(acc.clone());
                for (s, cell) in row.iter().enumerate() {
                    acc += child.count(s as u64) - &cell.nb;
                    pre.push(acc.clone());
                }
                pre
            })
            .collect();
        Ok(Partition {
            position,
            l,
            h,
            mx,
            my,
            products,
            child,
            rows,
            zero_prefix,
            dropped,
        })
    }

    /// Row decomposition on the band `|s - l/2| <= h`.
    pub fn rows(position: u32, w: u32, h: u64, child: Arc<SumLayout>, mode: Mode) -> Result<Self> {
        let products = rows_products(position, child.len, w, h);
        Self::from_products(position, h, products, child, mode)
    }

    pub fn child(&self) -> &Arc<SumLayout> {
        &self.child
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn x_of(&self, t_prev: u64) -> i64 {
        (self.position as i64 - 1) * (self.l / 2) as i64 - t_prev as i64
    }

    pub fn y_of(&self, t: u64) -> i64 {
        t as i64 - self.position as i64 * (self.l / 2) as i64
    }

    fn row(&self, t_prev: u64) -> Option<&Vec<CellRow>> {
        let x = self.x_of(t_prev);
        (x.abs() <= self.mx).then(|| &self.rows[(x + self.mx) as usize])
    }

    /// Size of the non-residual part of `SUM^-1(s)` given `T_(q-1)`.
    pub fn nb(&self, t_prev: u64, s: u64) -> BigUint {
        match self.row(t_prev) {
            Some(row) if s <= self.l => row[s as usize].nb.clone(),
            _ => BigUint::zero(),
        }
    }

    pub fn zero_count(&self, t_prev: u64, s: u64) -> BigUint {
        if s > self.l {
            return BigUint::zero();
        }
        self.child.count(s) - self.nb(t_prev, s)
    }

    /// `|K_0|` for the given `T_(q-1)`.
    pub fn zero_size(&self, t_prev: u64) -> BigUint {
        match self.row(t_prev) {
            Some(_) => {
                let x = self.x_of(t_prev);
                self.zero_prefix[(x + self.mx) as usize]
                    .last()
                    .unwrap()
                    .clone()
            }
            None => self.child.size().clone(),
        }
    }

    /// Largest `|K_0|` over every `x` inside the band.
    pub fn max_zero_size(&self) -> BigUint {
        self.zero_prefix
            .iter()
            .map(|p| p.last().unwrap().clone())
            .max()
            .unwrap_or_else(|| self.child.size().clone())
    }

    /// Block and in-block rank of child spillover `k`.
    pub fn locate(&self, t_prev: u64, k: &BigUint) -> Result<Located> {
        let (s, pos) = self.child.split(k)?;
        let Some(row) = self.row(t_prev) else {
            return Ok(Located {
                s,
                block: Block::Zero,
                rank: pos,
            });
        };
        let cell = &row[s as usize];
        if pos >= cell.nb {
            let rank = pos - &cell.nb;
            return Ok(Located {
                s,
                block: Block::Zero,
                rank,
            });
        }
        let x = self.x_of(t_prev);
        let y = s as i64 - (self.l / 2) as i64 - x;
        let mut rem = pos;
        for (p, wgt) in &cell.active {
            if &rem >= wgt {
                rem -= wgt;
                continue;
            }
            let prod = &self.products[*p as usize];
            let q = prod.q(x).expect("active product covers x");
            let r = prod.r(y).expect("active product covers y");
            for bx in bits_of(q) {
                for by in bits_of(r) {
                    let size = BigUint::one() << (bx as u64 + by as u64);
                    if rem < size {
                        return Ok(Located {
                            s,
                            block: Block::Term(TermRef { p: *p, bx, by }),
                            rank: rem,
                        });
                    }
                    rem -= size;
                }
            }
            unreachable!("dyadic blocks cover the product weight");
        }
        unreachable!("active products cover nb");
    }

    /// Offset of `term`'s block inside `SUM^-1(s)`, if the term is active.
    pub fn term_offset(&self, t_prev: u64, s: u64, term: TermRef) -> Option<BigUint> {
        let row = self.row(t_prev)?;
        let cell = row.get(s as usize)?;
        let x = self.x_of(t_prev);
        let y = s as i64 - (self.l / 2) as i64 - x;
        let mut off = BigUint::zero();
        for (p, wgt) in &cell.active {
            if *p != term.p {
                off += wgt;
                continue;
            }
            let prod = &self.products[*p as usize];
            let q = prod.q(x)?;
            let r = prod.r(y)?;
            if !q.bit(term.bx as u64) || !r.bit(term.by as u64) {
                return None;
            }
            for bx in bits_of(q) {
                for by in bits_of(r) {
                    if (bx, by) == (term.bx, term.by) {
                        return Some(off);
                    }
                    off += BigUint::one() << (bx as u64 + by as u64);
                }
            }
        }
        None
    }

    /// Inverse of [`Partition::locate`].
    pub fn index(&self, t_prev: u64, s: u64, block: Block, rank: &BigUint) -> Result<BigUint> {
        if s > self.l {
            return Err(Error::Integrity(format!(
                "sum {s} above child length {}",
                self.l
            )));
        }
        let nb = self.nb(t_prev, s);
        let pos = match block {
            Block::Zero => {
                if rank >= &(self.child.count(s) - &nb) {
                    return Err(Error::Integrity(format!("residual rank {rank} too large")));
                }
                nb + rank
            }
            Block::Term(t) => {
                let off = self.term_offset(t_prev, s, t).ok_or_else(|| {
                    Error::Integrity(format!("term {t:?} inactive at T = {t_prev}, s = {s}"))
                })?;
                if rank >= &(BigUint::one() << t.exponent()) {
                    return Err(Error::Integrity(format!(
                        "rank {rank} exceeds block of {t:?}"
                    )));
                }
                off + rank
            }
        };
        Ok(self.child.join(s, &pos))
    }

    /// Rank of `k` inside the whole residual block, ordered by sum then position.
    pub fn zero_rank(&self, t_prev: u64, k: &BigUint) -> Result<BigUint> {
        let loc = self.locate(t_prev, k)?;
        if loc.block != Block::Zero {
            return Err(Error::Encoding("value is not in the residual block".into()));
        }
        Ok(match self.row(t_prev) {
            Some(_) => {
                let x = self.x_of(t_prev);
                &self.zero_prefix[(x + self.mx) as usize][loc.s as usize] + loc.rank
            }
            None => k.clone(),
        })
    }

    pub fn zero_unrank(&self, t_prev: u64, r: &BigUint) -> Result<BigUint> {
        let Some(_) = self.row(t_prev) else {
            if r >= self.child.size() {
                return Err(Error::Integrity(
                    "residual rank outside child domain".into(),
                ));
            }
            return Ok(r.clone());
        };
        let pre = &self.zero_prefix[(self.x_of(t_prev) + self.mx) as usize];
        if r >= pre.last().unwrap() {
            return Err(Error::Integrity(format!("residual rank {r} outside K_0")));
        }
        let s = pre.partition_point(|v| v <= r) - 1;
        let rank = r - &pre[s];
        self.index(t_prev, s as u64, Block::Zero, &rank)
    }

    /// Every dyadic term with its `x` and `y` index sets, in block order.
    pub fn terms(&self) -> Vec<TermInfo> {
        let mut out = Vec::new();
        for (p, prod) in self.products.iter().enumerate() {
            let qbits = prod.qx.iter().map(|v| v.bits()).max().unwrap_or(0);
            let rbits = prod.ry.iter().map(|v| v.bits()).max().unwrap_or(0);
            for bx in 0..qbits {
                let xs: Vec<i64> = prod
                    .qx
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.bit(bx))
                    .map(|(i, _)| prod.x0 + i as i64)
                    .filter(|x| x.abs() <= self.mx)
                    .collect();
                if xs.is_empty() {
                    continue;
                }
                for by in 0..rbits {
                    let ys: Vec<i64> = prod
                        .ry
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| v.bit(by))
                        .map(|(i, _)| prod.y0 + i as i64)
                        .filter(|y| y.abs() <= self.my)
                        .collect();
                    if ys.is_empty() {
                        continue;
                    }
                    out.push(TermInfo {
                        term: TermRef {
                            p: p as u32,
                            bx: bx as u16,
                            by: by as u16,
                        },
                        xs: xs.clone(),
                        ys,
                    });
                }
            }
        }
        out
    }

    /// Whether `term` is active at `(x, y)`: both bits set and the cell kept.
    pub fn term_active(&self, term: TermRef, x: i64, y: i64) -> bool {
        let s = (self.l / 2) as i64 + x + y;
        if x.abs() > self.mx || s < 0 || s > self.l as i64 {
            return false;
        }
        let cell = &self.rows[(x + self.mx) as usize][s as usize];
        if !cell.active.iter().any(|(p, _)| *p == term.p) {
            return false;
        }
        let prod = &self.products[term.p as usize];
        match (prod.q(x), prod.r(y)) {
            (Some(q), Some(r)) => q.bit(term.bx as u64) && r.bit(term.by as u64),
            _ => false,
        }
    }

    /// Structural checks over every `x` in the band.
    pub fn audit(&self, exhaustive_limit: u64) -> PartitionAudit {
        let mut a = PartitionAudit {
            position: self.position,
            conservation: true,
            disjoint_covering: None,
            max_zero: self.max_zero_size(),
            sigma: self.child.sigma_nominal.clone(),
            zero_within_two_sigma: true,
            dropped_cells: self.dropped.len(),
            witness: None,
        };
        let two_sigma = &self.child.sigma_nominal * 2u32;
        a.zero_within_two_sigma = a.max_zero <= two_sigma;
        for (xi, row) in self.rows.iter().enumerate() {
            let x = xi as i64 - self.mx;
            let t_prev = ((self.position as i64 - 1) * (self.l / 2) as i64 - x) as u64;
            for (s, cell) in row.iter().enumerate() {
                let blocks: BigUint = cell.active.iter().map(|(_, w)| w.clone()).sum();
                let zero = self.zero_count(t_prev, s as u64);
                if blocks != cell.nb || &blocks + &zero != *self.child.count(s as u64) {
                    a.conservation = false;
                    a.witness.get_or_insert(format!("x = {x}, s = {s}"));
                }
            }
        }
        let total = self.child.size();
        if total <= &BigUint::from(exhaustive_limit) {
            let n: u64 = total.try_into().unwrap();
            let mut ok = true;
            'outer: for xi in 0..self.rows.len() {
                let x = xi as i64 - self.mx;
                let t_prev = ((self.position as i64 - 1) * (self.l / 2) as i64 - x) as u64;
                let mut seen = std::collections::HashSet::new();
                for k in 0..n {
                    let k = BigUint::from(k);
                    let loc = match self.locate(t_prev, &k) {
                        Ok(l) => l,
                        Err(_) => {
                            ok = false;
                            break 'outer;
                        }
                    };
                    let back = self.index(t_prev, loc.s, loc.block, &loc.rank);
                    if back.as_ref().ok() != Some(&k)
                        || !seen.insert((loc.s, loc.block, loc.rank.clone()))
                    {
                        ok = false;
                        a.witness.get_or_insert(format!("x = {x}, k = {k}"));
                        break 'outer;
                    }
                }
            }
            a.disjoint_covering = Some(ok);
        }
        a
    }
}

/// Result of [`Partition::audit`].
#[derive(Clone, Debug, Serialize)]
pub struct PartitionAudit {
    pub position: u32,
    pub conservation: bool,
    /// `None` when the child domain is too large to enumerate.
    pub disjoint_covering: Option<bool>,
    pub max_zero: BigUint,
    pub sigma: BigUint,
    pub zero_within_two_sigma: bool,
    pub dropped_cells: usize,
    pub witness: Option<String>,
}

impl PartitionAudit {
    pub fn pass(&self) -> bool {
        self.conservation && self.disjoint_covering != Some(false) && self.dropped_cells == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combiner::synthetic_child;

    fn child() -> Arc<SumLayout> {
        Arc::new(synthetic_child(8, 8, &BigUint::from(64u32), 5))
    }

    #[test]
    fn zero_products_leave_everything_residual() {
        let c = child();
        let p = Partition::from_products(1, 2, vec![], c.clone(), Mode::Strict).unwrap();
        assert_eq!(&p.zero_size(0), c.size());
        for k in 0..20u32 {
            let loc = p.locate(0, &BigUint::from(k)).unwrap();
            assert_eq!(loc.block, Block::Zero);
        }
    }

    #[test]
    fn rows_partition_is_a_bijection() {
        let c = child();
        let sigma = BigUint::from(64u32);
        let h = band_half_width(8, eps_log2_for(8, &sigma));
        for q in 1..=3 {
            let p = Partition::rows(q, 8, h, c.clone(), Mode::Strict).unwrap();
            let a = p.audit(1 << 16);
            assert!(a.pass(), "{a:?}");
            assert_eq!(a.disjoint_covering, Some(true));
            assert!(a.zero_within_two_sigma);
        }
    }

    #[test]
    fn zero_rank_round_trip() {
        let c = child();
        let p = Partition::rows(2, 8, 4, c.clone(), Mode::Strict).unwrap();
        for t_prev in 0..=8u64 {
            let size: u64 = (&p.zero_size(t_prev)).try_into().unwrap();
            for r in 0..size {
                let k = p.zero_unrank(t_prev, &BigUint::from(r)).unwrap();
                assert_eq!(p.zero_rank(t_prev, &k).unwrap(), BigUint::from(r));
            }
        }
    }

    #[test]
    fn infeasible_terms_are_fatal_in_strict_mode() {
        let c = child();
        let big = Product {
            x0: 0,
            qx: vec![BigUint::from(1000u32)],
            y0: -4,
            ry: vec![BigUint::one(); 9],
        };
        assert!(
            Partition::from_products(1, 4, vec![big.clone()], c.clone(), Mode::Strict).is_err()
        );
        let p = Partition::from_products(1, 4, vec![big], c, Mode::Relaxed).unwrap();
        assert!(!p.dropped.is_empty());
    }
}
