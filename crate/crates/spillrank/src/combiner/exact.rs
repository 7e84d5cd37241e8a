//! Exact ranking inside each `(prefix total, class)` key.
//!
//! A pattern fixes, per position, which children are allowed: non-residual
//! (`Good`), residual (`Break`) or anything (`Any`). Completion counts depend
//! only on the position and the total relative to the current run, so one
//! table per pattern serves every run offset.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::Zero;

use super::classify::{classify, Class};
use super::{BuildCtx, ClassSizes, LevelCodec};
use crate::error::{Error, Result};
use crate::mixed_radix::{sum_align, AlignedLayout};
use crate::model::{LevelPath, MemView, ProbeMeter};
use std::sync::Arc;

use super::partition::Partition;
use super::SumLayout;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Step {
    Good(u32),
    Break(u32),
    Any,
}

pub(crate) fn pattern_of(class: Class, b: usize, small: bool) -> Vec<Step> {
    if small {
        return vec![Step::Any; b];
    }
    let run = |from: usize, to: usize| (from..to).map(move |i| Step::Good((i - from + 1) as u32));
    match class {
        Class::Good => run(1, b + 1).collect(),
        Class::OneBad { i_star } => run(1, i_star)
            .chain(std::iter::once(Step::Break(i_star as u32)))
            .chain(run(i_star + 1, b + 1))
            .collect(),
        Class::LowProb { i1, i2 } => run(1, i1)
            .chain(std::iter::once(Step::Break(i1 as u32)))
            .chain(run(i1 + 1, i2))
            .chain(std::iter::once(Step::Break((i2 - i1) as u32)))
            .chain(std::iter::repeat_n(Step::Any, b - i2))
            .collect(),
    }
}

/// Every class in code order: good, one-bad by position, low-probability by
/// position pair.
pub(crate) fn all_classes(b: usize) -> Vec<Class> {
    let mut out = vec![Class::Good];
    out.extend((1..=b).map(|i_star| Class::OneBad { i_star }));
    for i1 in 1..=b {
        for i2 in i1 + 1..=b {
            out.push(Class::LowProb { i1, i2 });
        }
    }
    out
}

/// Children allowed at a step, given the total `u` relative to the run.
pub(crate) fn allowed(
    parts: &[Arc<Partition>],
    child: &SumLayout,
    step: Step,
    u: u64,
    s: u64,
) -> BigUint {
    match step {
        Step::Good(q) => parts[q as usize - 1].nb(u, s),
        Step::Break(q) => parts[q as usize - 1].zero_count(u, s),
        Step::Any => child.count(s).clone(),
    }
}

/// Completion counts of one pattern.
pub(crate) struct PatternTable {
    pub steps: Vec<Step>,
    pub mode: usize,
    /// `table[i][u][d]`: ways to finish from step `i` at relative total `u`
    /// gaining `d` more ones.
    table: Vec<Vec<Vec<BigUint>>>,
    /// Tuples per final total.
    pub totals: Vec<BigUint>,
}

impl PatternTable {
    pub fn build(steps: Vec<Step>, mode: usize, ctx: &BuildCtx) -> Self {
        let b = steps.len();
        let l = ctx.l;
        let mut table: Vec<Vec<Vec<BigUint>>> = vec![Vec::new(); b + 1];
        table[b] = (0..=b as u64 * l)
            .map(|_| vec![BigUint::from(1u32)])
            .collect();
        for i in (0..b).rev() {
            let width = (b - i) as u64 * l + 1;
            let mut rows = Vec::with_capacity(i * l as usize + 1);
            for u in 0..=i as u64 * l {
                let mut row = vec![BigUint::zero(); width as usize];
                for s in 0..=l {
                    let a = allowed(ctx.parts, ctx.child, steps[i], u, s);
                    if a.is_zero() {
                        continue;
                    }
                    let next_u = match steps[i] {
                        Step::Break(_) => 0,
                        _ => u + s,
                    };
                    for (d2, c) in table[i + 1][next_u as usize].iter().enumerate() {
                        if !c.is_zero() {
                            row[s as usize + d2] += &a * c;
                        }
                    }
                }
                rows.push(row);
            }
            table[i] = rows;
        }
        let totals = table[0][0].clone();
        PatternTable {
            steps,
            mode,
            table,
            totals,
        }
    }

    fn next(&self, i: usize, u: u64, s: u64, d: u64) -> BigUint {
        if s > d {
            return BigUint::zero();
        }
        let next_u = match self.steps[i] {
            Step::Break(_) => 0,
            _ => u + s,
        };
        self.table[i + 1]
            .get(next_u as usize)
            .and_then(|row| row.get((d - s) as usize))
            .cloned()
            .unwrap_or_default()
    }

    /// Lex rank over `(s_1, p_1, s_2, p_2, ...)` among tuples ending at `v`.
    fn rank(&self, ctx: &Ctx, sums: &[u64], picks: &[BigUint]) -> BigUint {
        let v: u64 = sums.iter().sum();
        let mut r = BigUint::zero();
        let mut u = 0u64;
        let mut d = v;
        for (i, (&s, p)) in sums.iter().zip(picks).enumerate() {
            for s2 in 0..s {
                let a = allowed(&ctx.parts, &ctx.child, self.steps[i], u, s2);
                if !a.is_zero() {
                    r += a * self.next(i, u, s2, d);
                }
            }
            r += p * self.next(i, u, s, d);
            d -= s;
            u = match self.steps[i] {
                Step::Break(_) => 0,
                _ => u + s,
            };
        }
        r
    }

    fn unrank(&self, ctx: &Ctx, v: u64, mut r: BigUint) -> Result<(Vec<u64>, Vec<BigUint>)> {
        let mut u = 0u64;
        let mut d = v;
        let mut sums = Vec::with_capacity(self.steps.len());
        let mut picks = Vec::with_capacity(self.steps.len());
        for i in 0..self.steps.len() {
            let mut chosen = None;
            for s in 0..=ctx.l.min(d) {
                let a = allowed(&ctx.parts, &ctx.child, self.steps[i], u, s);
                if a.is_zero() {
                    continue;
                }
                let c = self.next(i, u, s, d);
                if c.is_zero() {
                    continue;
                }
                let block = &a * &c;
                if r < block {
                    let (p, rest) = r.div_rem(&c);
                    r = rest;
                    chosen = Some((s, p));
                    break;
                }
                r -= block;
            }
            let (s, p) = chosen.ok_or_else(|| {
                Error::Integrity(format!(
                    "rank outside pattern at step {} for total {v}",
                    i + 1
                ))
            })?;
            sums.push(s);
            picks.push(p);
            d -= s;
            u = match self.steps[i] {
                Step::Break(_) => 0,
                _ => u + s,
            };
        }
        Ok((sums, picks))
    }
}

struct Ctx {
    l: u64,
    parts: Vec<Arc<Partition>>,
    child: Arc<SumLayout>,
}

pub(crate) struct ExactEngine {
    b: usize,
    m: u64,
    modes: usize,
    classes: Vec<Class>,
    patterns: Vec<PatternTable>,
    layout: AlignedLayout,
    ctx: Ctx,
}

impl ExactEngine {
    pub fn build(ctx: &BuildCtx) -> Result<Self> {
        let b = ctx.b as usize;
        let small = ctx.path == LevelPath::Small;
        let classes = if small {
            vec![Class::Good]
        } else {
            all_classes(b)
        };
        let modes = if small { 1 } else { 3 };
        let patterns: Vec<PatternTable> = classes
            .iter()
            .map(|c| PatternTable::build(pattern_of(*c, b, small), c.mode_index(), ctx))
            .collect();
        let vmax = b as u64 * ctx.l;
        let mut counts = vec![BigUint::zero(); (vmax as usize + 1) * modes];
        for p in &patterns {
            for (v, n) in p.totals.iter().enumerate() {
                counts[v * modes + p.mode] += n;
            }
        }
        let layout = sum_align(&counts, ctx.m);
        Ok(ExactEngine {
            b,
            m: ctx.m,
            modes,
            classes,
            patterns,
            layout,
            ctx: Ctx {
                l: ctx.l,
                parts: ctx.parts.to_vec(),
                child: ctx.child.clone(),
            },
        })
    }

    pub fn own_counts(&self) -> Vec<BigUint> {
        let vmax = self.b as u64 * self.ctx.l;
        (0..=vmax as usize)
            .map(|v| {
                (0..self.modes)
                    .map(|md| self.layout.width(v * self.modes + md))
                    .sum()
            })
            .collect()
    }

    pub fn class_sizes(&self) -> ClassSizes {
        let mut out = ClassSizes::default();
        for key in 0..self.layout.keys() {
            let md = key % self.modes;
            let wd = self.layout.width(key);
            match md {
                0 => out.good += wd,
                1 => out.one_bad += wd,
                _ => out.lowprob += wd,
            }
        }
        for p in &self.patterns {
            let n: BigUint = p.totals.iter().sum();
            out.tuples[p.mode] += n;
        }
        out
    }

    fn pattern_offset(&self, pi: usize, v: u64) -> BigUint {
        let mode = self.patterns[pi].mode;
        self.patterns[..pi]
            .iter()
            .filter(|p| p.mode == mode)
            .map(|p| p.totals[v as usize].clone())
            .sum()
    }

    pub fn encode(&self, codec: &LevelCodec, children: &[BigUint]) -> Result<(BigUint, BigUint)> {
        let small = self.modes == 1;
        let child = &self.ctx.child;
        let (pi, sums, picks) = if small {
            let mut sums = Vec::with_capacity(self.b);
            let mut picks = Vec::with_capacity(self.b);
            for k in children {
                let (s, pos) = child.split(k)?;
                sums.push(s);
                picks.push(pos);
            }
            (0, sums, picks)
        } else {
            let (class, steps) = classify(&self.ctx.parts, child, children)?;
            let pi = self
                .classes
                .iter()
                .position(|c| *c == class)
                .expect("class listed");
            let mut sums = Vec::with_capacity(self.b);
            let mut picks = Vec::with_capacity(self.b);
            for (i, (st, k)) in steps.iter().zip(children).enumerate() {
                let (s, pos) = child.split(k)?;
                let pick = match self.patterns[pi].steps[i] {
                    Step::Break(q) => {
                        pos - self.ctx.parts[q as usize - 1].nb(self.rel_total(&sums, st.base), s)
                    }
                    _ => pos,
                };
                sums.push(s);
                picks.push(pick);
            }
            (pi, sums, picks)
        };
        let v: u64 = sums.iter().sum();
        let r = self.pattern_offset(pi, v) + self.patterns[pi].rank(&self.ctx, &sums, &picks);
        let key = v as usize * self.modes + self.patterns[pi].mode;
        let spill = self.layout.start(key) + (&r >> self.m);
        let mem = r & ((BigUint::from(1u32) << self.m) - 1u32);
        debug_assert!(spill < *codec.own.size());
        Ok((spill, mem))
    }

    fn rel_total(&self, sums: &[u64], base: u64) -> u64 {
        sums.iter().sum::<u64>() - base
    }

    pub fn decode_step(
        &self,
        codec: &LevelCodec,
        mem: &MemView,
        spill: &BigUint,
        c: usize,
        meter: &mut ProbeMeter,
    ) -> Result<(u64, BigUint)> {
        meter.charge_spill();
        let (v, _) = codec.own.split(spill)?;
        let key = self
            .layout
            .key_of_high(spill)
            .ok_or_else(|| Error::Integrity("spillover outside aligned layout".into()))?;
        let mode = key % self.modes;
        let low = mem.read(0, self.m, meter)?;
        let mut r = ((spill - self.layout.start(key)) << self.m) | low;
        let mut chosen = None;
        for (pi, p) in self.patterns.iter().enumerate() {
            if p.mode != mode {
                continue;
            }
            let n = &p.totals[v as usize];
            if &r < n {
                chosen = Some(pi);
                break;
            }
            r -= n;
        }
        let pi = chosen
            .ok_or_else(|| Error::Integrity(format!("code beyond class {mode} at total {v}")))?;
        let (sums, picks) = self.patterns[pi].unrank(&self.ctx, v, r)?;
        let t: u64 = sums[..c].iter().sum();
        let pos = match self.patterns[pi].steps[c] {
            Step::Break(q) => {
                let base = self.run_base(pi, &sums, c);
                picks[c].clone() + self.ctx.parts[q as usize - 1].nb(t - base, sums[c])
            }
            _ => picks[c].clone(),
        };
        Ok((t, self.ctx.child.join(sums[c], &pos)))
    }

    /// Total at the start of the run containing step `c`.
    fn run_base(&self, pi: usize, sums: &[u64], c: usize) -> u64 {
        let mut base = 0;
        let mut t = 0;
        for i in 0..c {
            t += sums[i];
            if matches!(self.patterns[pi].steps[i], Step::Break(_)) {
                base = t;
            }
        }
        base
    }
}
