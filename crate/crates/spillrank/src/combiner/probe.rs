//! Product-form cells: constant-probe decoding at any level.
//!
//! # Cells
//!
//! - Small path: one cell per sum vector `S`, coordinates are the positions
//!   of each child inside its sum class.
//! - Good: one cell per chain of dyadic terms and final total. Coordinates
//!   alternate between a rank inside a term block (`2^e` values) and the
//!   index of the intermediate total inside the chain's allowed set `D_i`.
//! - One bad: a good prefix chain, the residual child (fixed sum, rank inside
//!   its residual class) and a good suffix chain with totals relative to the
//!   total after the residual child.
//! - Low probability: one raw cell per final total, see [`LowLayout`].
//!
//! Cells with the same final total are laid out back to back inside that
//! total's spillover interval.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use super::classify::{classify, Class};
use super::exact::{all_classes, pattern_of, PatternTable};
use super::lowprob::{LowLayout, RawView};
use super::partition::{Block, Partition, TermRef};
use super::{BuildCtx, ClassSizes, LevelCodec, SumLayout};
use crate::error::{Error, Result};
use crate::mixed_radix::{plan_radix_unchecked, radix_decode_element, radix_encode, RadixPlan};
use crate::model::{LevelPath, MemView, ProbeMeter};

/// Where an intermediate total comes from.
#[derive(Clone, Debug)]
enum TotalSrc {
    Fixed(u64),
    /// Radix coordinate `elem` indexes `values`, shifted by `shift`.
    Domain {
        elem: usize,
        values: Arc<Vec<u64>>,
        shift: u64,
    },
}

#[derive(Clone, Debug)]
struct StepSpec {
    q: u32,
    block: Block,
    base: u64,
    elem: usize,
}

#[derive(Clone, Debug)]
enum CellKind {
    Sums(Vec<u64>),
    Chain {
        totals: Vec<TotalSrc>,
        steps: Vec<StepSpec>,
    },
    Low,
}

struct Cell {
    kind: CellKind,
    mode: usize,
    plan: Option<Arc<RadixPlan>>,
    size: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct ChainKey {
    terms: Vec<Option<TermRef>>,
    fixed: Vec<u64>,
}

/// A run of good steps with totals relative to its start.
#[derive(Clone, Debug)]
struct SegChain {
    terms: Vec<TermRef>,
    /// Allowed totals after each step but the last.
    dsets: Vec<Arc<Vec<u64>>>,
    t_end: u64,
}

pub(crate) struct ProbeEngine {
    b: usize,
    m: u64,
    cells: Vec<Cell>,
    /// Cell ids per final total, in layout order, with offsets.
    by_total: Vec<Vec<usize>>,
    offsets: Vec<Vec<BigUint>>,
    /// Index of each cell inside its total's list.
    slot: Vec<usize>,
    sums_index: HashMap<Vec<u64>, usize>,
    chain_index: HashMap<ChainKey, usize>,
    low_index: HashMap<u64, usize>,
    low: Option<LowLayout>,
    parts: Vec<Arc<Partition>>,
    child: Arc<SumLayout>,
    tuples: [BigUint; 3],
}

struct Planner {
    m: u64,
    w: u32,
    plans: HashMap<Vec<BigUint>, Arc<RadixPlan>>,
}

impl Planner {
    fn plan(&mut self, domains: Vec<BigUint>) -> Result<Arc<RadixPlan>> {
        if let Some(p) = self.plans.get(&domains) {
            return Ok(p.clone());
        }
        let p = Arc::new(plan_radix_unchecked(&domains, self.m, self.w)?);
        self.plans.insert(domains, p.clone());
        Ok(p)
    }
}

fn seg_chains(parts: &[Arc<Partition>], len: usize, l: u64, cap: u64) -> Result<Vec<SegChain>> {
    if len == 0 {
        return Ok(vec![SegChain {
            terms: vec![],
            dsets: vec![],
            t_end: 0,
        }]);
    }
    let infos: Vec<_> = parts.iter().take(len).map(|p| p.terms()).collect();
    let mut out = Vec::new();
    let mut terms = Vec::with_capacity(len);
    let mut dsets = Vec::with_capacity(len);
    fn dfs(
        q: usize,
        cand: Vec<u64>,
        ctx: (
            &[Arc<Partition>],
            &[Vec<super::partition::TermInfo>],
            usize,
            u64,
            u64,
        ),
        terms: &mut Vec<TermRef>,
        dsets: &mut Vec<Arc<Vec<u64>>>,
        out: &mut Vec<SegChain>,
    ) -> Result<()> {
        let (parts, infos, len, l, cap) = ctx;
        let part = &parts[q - 1];
        for info in &infos[q - 1] {
            let allowed: Vec<u64> = cand
                .iter()
                .copied()
                .filter(|&t| info.xs.binary_search(&part.x_of(t)).is_ok())
                .collect();
            if allowed.is_empty() {
                continue;
            }
            let lo = allowed[0];
            let hi = *allowed.last().unwrap() + l;
            let next: Vec<u64> = {
                let mut v: Vec<u64> = info
                    .ys
                    .iter()
                    .map(|&y| y + q as i64 * (l / 2) as i64)
                    .filter(|&t| t >= lo as i64 && t <= hi as i64)
                    .map(|t| t as u64)
                    .collect();
                v.sort_unstable();
                v
            };
            if next.is_empty() {
                continue;
            }
            terms.push(info.term);
            if q > 1 {
                dsets.push(Arc::new(allowed));
            }
            if q == len {
                for &t in &next {
                    out.push(SegChain {
                        terms: terms.clone(),
                        dsets: dsets.clone(),
                        t_end: t,
                    });
                    if out.len() as u64 > cap {
                        return Err(Error::Config(format!(
                            "probe engine needs more than max_j_tuples = {cap} cells"
                        )));
                    }
                }
            } else {
                dfs(q + 1, next, ctx, terms, dsets, out)?;
            }
            terms.pop();
            if q > 1 {
                dsets.pop();
            }
        }
        Ok(())
    }
    dfs(
        1,
        vec![0],
        (parts, &infos, len, l, cap),
        &mut terms,
        &mut dsets,
        &mut out,
    )?;
    Ok(out)
}

/// Append a run's coordinates and step specs starting at absolute `base`.
fn push_run(
    chain: &SegChain,
    base: u64,
    domains: &mut Vec<BigUint>,
    totals: &mut Vec<TotalSrc>,
    steps: &mut Vec<StepSpec>,
) {
    let len = chain.terms.len();
    for (i, term) in chain.terms.iter().enumerate() {
        steps.push(StepSpec {
            q: i as u32 + 1,
            block: Block::Term(*term),
            base,
            elem: domains.len(),
        });
        domains.push(BigUint::one() << term.exponent());
        if i + 1 < len {
            let values = chain.dsets[i].clone();
            totals.push(TotalSrc::Domain {
                elem: domains.len(),
                values: values.clone(),
                shift: base,
            });
            domains.push(BigUint::from(values.len()));
        } else {
            totals.push(TotalSrc::Fixed(base + chain.t_end));
        }
    }
}

impl ProbeEngine {
    pub fn build(ctx: &BuildCtx) -> Result<Self> {
        let b = ctx.b as usize;
        let l = ctx.l;
        let vmax = b as u64 * l;
        let mut planner = Planner {
            m: ctx.m,
            w: ctx.w,
            plans: HashMap::new(),
        };
        let mut cells: Vec<(u64, Cell)> = Vec::new();
        let mut sums_index = HashMap::new();
        let mut chain_index = HashMap::new();
        let mut low_index = HashMap::new();
        let mut low = None;
        let mut tuples: [BigUint; 3] = Default::default();
        match ctx.path {
            LevelPath::Small => {
                let n = (l + 1)
                    .checked_pow(b as u32)
                    .filter(|n| *n <= ctx.caps.max_s_tuples)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "probe engine small path needs (l+1)^B sum vectors, above max_s_tuples = {}",
                            ctx.caps.max_s_tuples
                        ))
                    })?;
                let mut s = vec![0u64; b];
                for _ in 0..n {
                    let domains: Vec<BigUint> =
                        s.iter().map(|&x| ctx.child.count(x).clone()).collect();
                    if domains.iter().all(|d| !d.is_zero()) {
                        let n_t: BigUint = domains.iter().product();
                        tuples[0] += n_t;
                        let plan = planner.plan(domains)?;
                        let v = s.iter().sum();
                        sums_index.insert(s.clone(), cells.len());
                        cells.push((
                            v,
                            Cell {
                                kind: CellKind::Sums(s.clone()),
                                mode: 0,
                                size: plan.k.clone(),
                                plan: Some(plan),
                            },
                        ));
                    }
                    for x in s.iter_mut().rev() {
                        *x += 1;
                        if *x <= l {
                            break;
                        }
                        *x = 0;
                    }
                }
            }
            LevelPath::Large => {
                let cap = ctx.caps.max_j_tuples;
                let parts = ctx.parts;
                let runs: Vec<Vec<SegChain>> = (0..=b)
                    .map(|len| seg_chains(parts, len, l, cap))
                    .collect::<Result<_>>()?;
                let mut chain_cells = 0u64;
                let mut bump = |n: u64| -> Result<()> {
                    chain_cells += n;
                    if chain_cells > cap {
                        return Err(Error::Config(format!(
                            "probe engine needs more than max_j_tuples = {cap} cells"
                        )));
                    }
                    Ok(())
                };
                for chain in &runs[b] {
                    bump(1)?;
                    let mut domains = Vec::new();
                    let mut totals = vec![TotalSrc::Fixed(0)];
                    let mut steps = Vec::new();
                    push_run(chain, 0, &mut domains, &mut totals, &mut steps);
                    let plan = planner.plan(domains)?;
                    let key = ChainKey {
                        terms: chain.terms.iter().map(|t| Some(*t)).collect(),
                        fixed: vec![chain.t_end],
                    };
                    chain_index.insert(key, cells.len());
                    cells.push((
                        chain.t_end,
                        Cell {
                            kind: CellKind::Chain { totals, steps },
                            mode: 0,
                            size: plan.k.clone(),
                            plan: Some(plan),
                        },
                    ));
                }
                for i_star in 1..=b {
                    let zpart = &parts[i_star - 1];
                    for pre in &runs[i_star - 1] {
                        for s_star in 0..=l {
                            let z = zpart.zero_count(pre.t_end, s_star);
                            if z.is_zero() {
                                continue;
                            }
                            let t_star = pre.t_end + s_star;
                            for suf in &runs[b - i_star] {
                                bump(1)?;
                                let mut domains = Vec::new();
                                let mut totals = vec![TotalSrc::Fixed(0)];
                                let mut steps = Vec::new();
                                push_run(pre, 0, &mut domains, &mut totals, &mut steps);
                                steps.push(StepSpec {
                                    q: i_star as u32,
                                    block: Block::Zero,
                                    base: 0,
                                    elem: domains.len(),
                                });
                                domains.push(z.clone());
                                totals.push(TotalSrc::Fixed(t_star));
                                push_run(suf, t_star, &mut domains, &mut totals, &mut steps);
                                let t_b = t_star + suf.t_end;
                                let plan = planner.plan(domains)?;
                                let mut terms: Vec<Option<TermRef>> =
                                    pre.terms.iter().map(|t| Some(*t)).collect();
                                terms.push(None);
                                terms.extend(suf.terms.iter().map(|t| Some(*t)));
                                let key = ChainKey {
                                    terms,
                                    fixed: vec![pre.t_end, s_star, t_b],
                                };
                                chain_index.insert(key, cells.len());
                                cells.push((
                                    t_b,
                                    Cell {
                                        kind: CellKind::Chain { totals, steps },
                                        mode: 1,
                                        size: plan.k.clone(),
                                        plan: Some(plan),
                                    },
                                ));
                            }
                        }
                    }
                }
                let layout = LowLayout::new(b, ctx.w, parts, ctx.child);
                let mut low_totals = vec![BigUint::zero(); vmax as usize + 1];
                for class in all_classes(b) {
                    let table =
                        PatternTable::build(pattern_of(class, b, false), class.mode_index(), ctx);
                    let n: BigUint = table.totals.iter().sum();
                    tuples[class.mode_index()] += n;
                    if matches!(class, Class::LowProb { .. }) {
                        for (v, c) in table.totals.iter().enumerate() {
                            low_totals[v] += c;
                        }
                    }
                }
                let size = layout.cell_size(ctx.m);
                for (v, c) in low_totals.iter().enumerate() {
                    if c.is_zero() {
                        continue;
                    }
                    low_index.insert(v as u64, cells.len());
                    cells.push((
                        v as u64,
                        Cell {
                            kind: CellKind::Low,
                            mode: 2,
                            plan: None,
                            size: size.clone(),
                        },
                    ));
                }
                low = Some(layout);
            }
        }
        let mut by_total: Vec<Vec<usize>> = vec![Vec::new(); vmax as usize + 1];
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by_key(|&i| (cells[i].0, cells[i].1.mode, i));
        for &i in &order {
            by_total[cells[i].0 as usize].push(i);
        }
        let offsets = by_total
            .iter()
            .map(|ids| {
                let mut acc = BigUint::zero();
                let mut out = Vec::with_capacity(ids.len() + 1);
                for &i in ids {
                    out.push(acc.clone());
                    acc += &cells[i].1.size;
                }
                out.push(acc);
                out
            })
            .collect();
        let mut cell_vec = Vec::with_capacity(cells.len());
        for (_, c) in cells {
            cell_vec.push(c);
        }
        let mut pos_in_total = vec![0usize; cell_vec.len()];
        for ids in &by_total {
            for (j, &i) in ids.iter().enumerate() {
                pos_in_total[i] = j;
            }
        }
        Ok(ProbeEngine {
            b,
            m: ctx.m,
            cells: cell_vec,
            by_total,
            offsets,
            sums_index,
            chain_index,
            low_index,
            low,
            parts: ctx.parts.to_vec(),
            child: ctx.child.clone(),
            tuples,
            slot: pos_in_total,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn own_counts(&self) -> Vec<BigUint> {
        self.offsets
            .iter()
            .map(|o| o.last().unwrap().clone())
            .collect()
    }

    pub fn class_sizes(&self) -> ClassSizes {
        let mut out = ClassSizes {
            tuples: self.tuples.clone(),
            ..Default::default()
        };
        for c in &self.cells {
            match c.mode {
                0 => out.good += &c.size,
                1 => out.one_bad += &c.size,
                _ => out.lowprob += &c.size,
            }
        }
        out
    }

    /// Radix cells above `ceil(prod / 2^m) + 1`.
    pub fn cells_over_bound(&self) -> usize {
        self.cells
            .iter()
            .filter_map(|c| c.plan.as_ref())
            .filter(|p| !p.within_bound())
            .count()
    }

    fn place(&self, codec: &LevelCodec, id: usize, v: u64, cell_spill: BigUint) -> BigUint {
        codec.own.start(v) + &self.offsets[v as usize][self.slot[id]] + cell_spill
    }

    pub fn encode(&self, codec: &LevelCodec, children: &[BigUint]) -> Result<(BigUint, BigUint)> {
        let child = &self.child;
        let mut sums = Vec::with_capacity(self.b);
        let mut pos = Vec::with_capacity(self.b);
        for k in children {
            let (s, p) = child.split(k)?;
            sums.push(s);
            pos.push(p);
        }
        let v: u64 = sums.iter().sum();
        if self.low.is_none() {
            let id = *self
                .sums_index
                .get(&sums)
                .ok_or_else(|| Error::Encoding("sum vector without a cell".into()))?;
            let plan = self.cells[id].plan.as_ref().expect("sum cell has a plan");
            let enc = radix_encode(plan, &pos)?;
            return Ok((self.place(codec, id, v, enc.spill), enc.memory));
        }
        let (class, steps) = classify(&self.parts, child, children)?;
        let mut tot = vec![0u64; self.b + 1];
        for i in 0..self.b {
            tot[i + 1] = tot[i] + sums[i];
        }
        match class {
            Class::LowProb { i1, i2 } => {
                let layout = self.low.as_ref().unwrap();
                let raw = layout.encode(&self.parts, child, children, &sums, i1, i2)?;
                let id = self.low_index[&v];
                let mem = &raw & ((BigUint::one() << self.m) - 1u32);
                Ok((self.place(codec, id, v, raw >> self.m), mem))
            }
            _ => {
                let terms: Vec<Option<TermRef>> = steps
                    .iter()
                    .map(|st| match st.located.as_ref().map(|l| l.block) {
                        Some(Block::Term(t)) => Some(t),
                        _ => None,
                    })
                    .collect();
                let fixed = match class {
                    Class::OneBad { i_star } => vec![tot[i_star - 1], sums[i_star - 1], v],
                    _ => vec![v],
                };
                let id = *self
                    .chain_index
                    .get(&ChainKey { terms, fixed })
                    .ok_or_else(|| Error::Encoding("tuple has no product cell".into()))?;
                let cell = &self.cells[id];
                let CellKind::Chain {
                    totals,
                    steps: specs,
                } = &cell.kind
                else {
                    unreachable!("chain key maps to a chain cell")
                };
                let plan = cell.plan.as_ref().unwrap();
                let mut coords = vec![BigUint::zero(); plan.original_domains.len()];
                for (i, spec) in specs.iter().enumerate() {
                    coords[spec.elem] = steps[i].located.as_ref().unwrap().rank.clone();
                    if let TotalSrc::Domain {
                        elem,
                        values,
                        shift,
                    } = &totals[i + 1]
                    {
                        let idx = values.binary_search(&(tot[i + 1] - shift)).map_err(|_| {
                            Error::Encoding(format!("total {} outside its cell set", tot[i + 1]))
                        })?;
                        coords[*elem] = BigUint::from(idx);
                    }
                }
                let enc = radix_encode(plan, &coords)?;
                Ok((self.place(codec, id, v, enc.spill), enc.memory))
            }
        }
    }

    fn total(
        &self,
        plan: &RadixPlan,
        mem: &MemView,
        spill: &BigUint,
        src: &TotalSrc,
        meter: &mut ProbeMeter,
    ) -> Result<u64> {
        match src {
            TotalSrc::Fixed(t) => Ok(*t),
            TotalSrc::Domain {
                elem,
                values,
                shift,
            } => {
                let idx = radix_decode_element(plan, mem, spill, *elem, meter)?
                    .to_usize()
                    .filter(|i| *i < values.len())
                    .ok_or_else(|| Error::Integrity("total index outside its set".into()))?;
                Ok(values[idx] + shift)
            }
        }
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
        let (v, pos) = codec.own.split(spill)?;
        let offs = &self.offsets[v as usize];
        let j = offs.partition_point(|o| o <= &pos) - 1;
        let id = *self.by_total[v as usize]
            .get(j)
            .ok_or_else(|| Error::Integrity(format!("no cell at total {v}")))?;
        let cell = &self.cells[id];
        let cell_spill = pos - &offs[j];
        match &cell.kind {
            CellKind::Sums(s) => {
                let plan = cell.plan.as_ref().unwrap();
                let p = radix_decode_element(plan, mem, &cell_spill, c, meter)?;
                Ok((s[..c].iter().sum(), self.child.join(s[c], &p)))
            }
            CellKind::Chain { totals, steps } => {
                let plan = cell.plan.as_ref().unwrap();
                let t_prev = self.total(plan, mem, &cell_spill, &totals[c], meter)?;
                let t_next = self.total(plan, mem, &cell_spill, &totals[c + 1], meter)?;
                let s = t_next
                    .checked_sub(t_prev)
                    .ok_or_else(|| Error::Integrity("totals decrease inside a cell".into()))?;
                let spec = &steps[c];
                let rank = radix_decode_element(plan, mem, &cell_spill, spec.elem, meter)?;
                let k = self.parts[spec.q as usize - 1].index(
                    t_prev - spec.base,
                    s,
                    spec.block,
                    &rank,
                )?;
                Ok((t_prev, k))
            }
            CellKind::Low => {
                let layout = self.low.as_ref().unwrap();
                let raw = RawView {
                    mem,
                    m: self.m,
                    high: cell_spill,
                };
                layout.decode(&self.parts, &self.child, &raw, c, meter)
            }
        }
    }
}
