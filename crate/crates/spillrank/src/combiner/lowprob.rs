//! Raw layout for tuples with two residual steps.
//!
//! ```text
//! [i1][i2][z1][z2][flags: B-2][slot]*(B-2)
//! ```
//!
//! `i1`, `i2` are the break positions and `z1`, `z2` the ranks of the two
//! residual children inside their `K_0`. The other `B-2` children form up to
//! three runs (before, between and after the breaks), each with totals
//! relative to the run start. A child whose sum is far from `l/2` is *low*:
//! its slot holds the run total after it and its rank among all low values.
//! A *high* child's slot holds the total gained since the last low child of
//! its run, minus the minimum possible, and its rank inside its sum class.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::Serialize;

use super::partition::Partition;
use super::SumLayout;
use crate::error::{Error, Result};
use crate::model::{bit_width, domain_width, to_u64, MemView, ProbeMeter};

#[derive(Clone, Debug, Serialize)]
pub struct LowLayout {
    pub b: usize,
    pub l: u64,
    pub pos_width: u64,
    pub zero_width: u64,
    pub t_width: u64,
    pub low_rank_width: u64,
    pub diff_width: u64,
    pub high_rank_width: u64,
    pub nominal_slot: u64,
    pub slot: u64,
    pub bumped: bool,
    pub total_bits: u64,
    pub band_lo: u64,
    pub band_hi: u64,
    #[serde(skip)]
    low_prefix: Vec<BigUint>,
}

/// Bits of a raw code split between `m` memory bits and a spill part.
pub(crate) struct RawView<'a, 'b> {
    pub mem: &'b MemView<'a>,
    pub m: u64,
    pub high: BigUint,
}

impl RawView<'_, '_> {
    fn read(&self, off: u64, width: u64, meter: &mut ProbeMeter) -> Result<u64> {
        if width == 0 {
            return Ok(0);
        }
        let end = off + width;
        let v = if end <= self.m {
            self.mem.read(off, width, meter)?
        } else if off >= self.m {
            (&self.high >> (off - self.m)) & ((BigUint::one() << width) - 1u32)
        } else {
            let lowpart = self.mem.read(off, self.m - off, meter)?;
            let hi = &self.high & ((BigUint::one() << (end - self.m)) - 1u32);
            lowpart | (hi << (self.m - off))
        };
        to_u64(&v, "raw field")
    }
}

fn put(raw: &mut BigUint, off: u64, width: u64, v: u64) -> Result<()> {
    if width < 64 && v >> width != 0 {
        return Err(Error::Encoding(format!(
            "value {v} does not fit {width} bits"
        )));
    }
    *raw |= BigUint::from(v) << off;
    Ok(())
}

struct Header {
    i1: usize,
    i2: usize,
    z1: BigUint,
    z2: BigUint,
    flags: u64,
}

impl LowLayout {
    pub fn new(b: usize, w: u32, parts: &[Arc<Partition>], child: &SumLayout) -> Self {
        let l = child.len;
        let hw = (l * w as u64).isqrt();
        let band_lo = (l / 2).saturating_sub(hw);
        let band_hi = (l / 2 + hw).min(l);
        let in_band = |s: u64| s >= band_lo && s <= band_hi;
        let mut low_prefix = Vec::with_capacity(l as usize + 2);
        let mut acc = BigUint::zero();
        for s in 0..=l {
            low_prefix.push(acc.clone());
            if !in_band(s) {
                acc += child.count(s);
            }
        }
        low_prefix.push(acc.clone());
        let high_max = (band_lo..=band_hi)
            .map(|s| child.count(s).clone())
            .max()
            .unwrap_or_default();
        let pos_width = domain_width(&BigUint::from(b));
        let zero_width = parts
            .iter()
            .map(|p| domain_width(&p.max_zero_size()))
            .max()
            .unwrap_or(0);
        let t_width = bit_width(b as u64 * l);
        let low_rank_width = domain_width(&acc);
        let diff_width = bit_width(b as u64 * (band_hi - band_lo));
        let high_rank_width = domain_width(&high_max);
        let nominal_slot = w as u64 + (31 - w.leading_zeros()) as u64 - 1;
        let slot = nominal_slot
            .max(t_width + low_rank_width)
            .max(diff_width + high_rank_width);
        let free = b.saturating_sub(2) as u64;
        LowLayout {
            b,
            l,
            pos_width,
            zero_width,
            t_width,
            low_rank_width,
            diff_width,
            high_rank_width,
            nominal_slot,
            slot,
            bumped: slot > nominal_slot,
            total_bits: 2 * pos_width + 2 * zero_width + free + free * slot,
            band_lo,
            band_hi,
            low_prefix,
        }
    }

    fn is_low(&self, s: u64) -> bool {
        s < self.band_lo || s > self.band_hi
    }

    fn flags_off(&self) -> u64 {
        2 * self.pos_width + 2 * self.zero_width
    }

    fn slot_off(&self, idx: usize) -> u64 {
        self.flags_off() + (self.b as u64 - 2) + idx as u64 * self.slot
    }

    fn slot_index(p: usize, i1: usize, i2: usize) -> usize {
        p - 1 - (p > i1) as usize - (p > i2) as usize
    }

    /// First position of the run containing non-break position `p`.
    fn run_start(p: usize, i1: usize, i2: usize) -> usize {
        if p > i2 {
            i2 + 1
        } else if p > i1 {
            i1 + 1
        } else {
            1
        }
    }

    /// Raw code of a low-probability tuple.
    pub fn encode(
        &self,
        parts: &[Arc<Partition>],
        child: &SumLayout,
        children: &[BigUint],
        sums: &[u64],
        i1: usize,
        i2: usize,
    ) -> Result<BigUint> {
        let b = self.b;
        let mut tot = vec![0u64; b + 1];
        for i in 0..b {
            tot[i + 1] = tot[i] + sums[i];
        }
        let z1 = parts[i1 - 1].zero_rank(tot[i1 - 1], &children[i1 - 1])?;
        let z2 = parts[i2 - i1 - 1].zero_rank(tot[i2 - 1] - tot[i1], &children[i2 - 1])?;
        let mut raw = BigUint::zero();
        put(&mut raw, 0, self.pos_width, i1 as u64 - 1)?;
        put(&mut raw, self.pos_width, self.pos_width, i2 as u64 - 1)?;
        for (k, z) in [z1, z2].iter().enumerate() {
            if z.bits() > self.zero_width {
                return Err(Error::Encoding(format!(
                    "residual rank {z} above {} bits",
                    self.zero_width
                )));
            }
            raw |= z << (2 * self.pos_width + k as u64 * self.zero_width);
        }
        let mut last_low = 0usize;
        for p in 1..=b {
            if p == i1 || p == i2 {
                continue;
            }
            let start = Self::run_start(p, i1, i2);
            if p == start {
                last_low = start - 1;
            }
            let idx = Self::slot_index(p, i1, i2);
            let off = self.slot_off(idx);
            let base = tot[start - 1];
            let s = sums[p - 1];
            let (_, pos) = child.split(&children[p - 1])?;
            if self.is_low(s) {
                put(&mut raw, self.flags_off() + idx as u64, 1, 1)?;
                put(&mut raw, off, self.t_width, tot[p] - base)?;
                let r = &self.low_prefix[s as usize] + pos;
                raw |= r << (off + self.t_width);
                last_low = p;
            } else {
                let diff = tot[p] - tot[last_low] - (p - last_low) as u64 * self.band_lo;
                put(&mut raw, off, self.diff_width, diff)?;
                raw |= pos << (off + self.diff_width);
            }
        }
        Ok(raw)
    }

    fn header(&self, raw: &RawView, meter: &mut ProbeMeter) -> Result<Header> {
        let i1 = raw.read(0, self.pos_width, meter)? as usize + 1;
        let i2 = raw.read(self.pos_width, self.pos_width, meter)? as usize + 1;
        if !(1 <= i1 && i1 < i2 && i2 <= self.b) {
            return Err(Error::Integrity(format!(
                "break positions {i1}, {i2} invalid"
            )));
        }
        let z1 = BigUint::from(raw.read(2 * self.pos_width, self.zero_width, meter)?);
        let z2 = BigUint::from(raw.read(
            2 * self.pos_width + self.zero_width,
            self.zero_width,
            meter,
        )?);
        let flags = raw.read(self.flags_off(), self.b as u64 - 2, meter)?;
        Ok(Header {
            i1,
            i2,
            z1,
            z2,
            flags,
        })
    }

    /// Total of non-break position `p` relative to its run start.
    fn run_total(
        &self,
        raw: &RawView,
        h: &Header,
        p: usize,
        meter: &mut ProbeMeter,
    ) -> Result<u64> {
        let start = Self::run_start(p, h.i1, h.i2);
        let low = |q: usize| (h.flags >> Self::slot_index(q, h.i1, h.i2)) & 1 == 1;
        if low(p) {
            return raw.read(
                self.slot_off(Self::slot_index(p, h.i1, h.i2)),
                self.t_width,
                meter,
            );
        }
        let pred = (start..p).rev().find(|&q| low(q));
        let (pred_pos, pred_t) = match pred {
            Some(q) => (
                q,
                raw.read(
                    self.slot_off(Self::slot_index(q, h.i1, h.i2)),
                    self.t_width,
                    meter,
                )?,
            ),
            None => (start - 1, 0),
        };
        let diff = raw.read(
            self.slot_off(Self::slot_index(p, h.i1, h.i2)),
            self.diff_width,
            meter,
        )?;
        Ok(pred_t + (p - pred_pos) as u64 * self.band_lo + diff)
    }

    /// Absolute total after position `c` (`0..=B`), plus the residual child
    /// when `c` is a break.
    fn total(
        &self,
        parts: &[Arc<Partition>],
        child: &SumLayout,
        raw: &RawView,
        h: &Header,
        c: usize,
        meter: &mut ProbeMeter,
    ) -> Result<(u64, Option<BigUint>)> {
        if c == 0 {
            return Ok((0, None));
        }
        let before1 = |meter: &mut ProbeMeter| -> Result<u64> {
            if h.i1 == 1 {
                Ok(0)
            } else {
                self.run_total(raw, h, h.i1 - 1, meter)
            }
        };
        if c < h.i1 {
            return Ok((self.run_total(raw, h, c, meter)?, None));
        }
        let t_prev1 = before1(meter)?;
        let k1 = parts[h.i1 - 1].zero_unrank(t_prev1, &h.z1)?;
        let t1 = t_prev1 + child.sum_of(&k1)?;
        if c == h.i1 {
            return Ok((t1, Some(k1)));
        }
        if c < h.i2 {
            return Ok((t1 + self.run_total(raw, h, c, meter)?, None));
        }
        let rel_prev2 = if h.i2 == h.i1 + 1 {
            0
        } else {
            self.run_total(raw, h, h.i2 - 1, meter)?
        };
        let k2 = parts[h.i2 - h.i1 - 1].zero_unrank(rel_prev2, &h.z2)?;
        let t2 = t1 + rel_prev2 + child.sum_of(&k2)?;
        if c == h.i2 {
            return Ok((t2, Some(k2)));
        }
        Ok((t2 + self.run_total(raw, h, c, meter)?, None))
    }

    /// `(T_c, k_c)` for 0-based child `c`.
    pub(crate) fn decode(
        &self,
        parts: &[Arc<Partition>],
        child: &SumLayout,
        raw: &RawView,
        c: usize,
        meter: &mut ProbeMeter,
    ) -> Result<(u64, BigUint)> {
        let h = self.header(raw, meter)?;
        let (t_prev, _) = self.total(parts, child, raw, &h, c, meter)?;
        let (t_next, residual) = self.total(parts, child, raw, &h, c + 1, meter)?;
        if let Some(k) = residual {
            return Ok((t_prev, k));
        }
        let p = c + 1;
        let s = t_next
            .checked_sub(t_prev)
            .filter(|s| *s <= self.l)
            .ok_or_else(|| Error::Integrity("run totals decrease".into()))?;
        let off = self.slot_off(Self::slot_index(p, h.i1, h.i2));
        let k = if self.is_low(s) {
            let w = self.low_rank_width;
            let r = if w <= 64 {
                BigUint::from(raw.read(off + self.t_width, w, meter)?)
            } else {
                return Err(Error::Parameter("low rank field wider than 64 bits".into()));
            };
            let first = &self.low_prefix[s as usize];
            if &r < first {
                return Err(Error::Integrity("low rank below its class".into()));
            }
            child.join(s, &(r - first))
        } else {
            let r = raw.read(off + self.diff_width, self.high_rank_width, meter)?;
            child.join(s, &BigUint::from(r))
        };
        Ok((t_prev, k))
    }

    /// Spill domain per raw code given `m` memory bits.
    pub fn cell_size(&self, m: u64) -> BigUint {
        BigUint::one() << self.total_bits.saturating_sub(m)
    }
}
