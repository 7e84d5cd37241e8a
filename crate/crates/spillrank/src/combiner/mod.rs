//! Per-level codes that merge `B` child spillovers into `(B-1)w` bits of
//! memory plus one parent spillover.
//!
//! # Sum-major layout
//!
//! Every spillover domain in the tree is a [`SumLayout`]: values are grouped
//! by the number of ones below them, so `SUM(k)` comes from `k` alone with no
//! memory access. A parent code keeps the same shape: its spillover interval
//! for prefix total `v` holds every code whose children sum to `v`.
//!
//! # Paths
//!
//! - Small: the sum vector `S` is cheap to enumerate, so codes are built per
//!   sum vector and only rounding loss is paid.
//! - Large: each child domain is partitioned by the current prefix total;
//!   tuples are classified as good, one bad step, or low probability, and
//!   each class is coded separately.
//!
//! # Engines
//!
//! [`Engine::Enum`] ranks tuples exactly inside each `(v, class)` key by
//! dynamic programming; decoding reads all memory words of the node.
//! [`Engine::Probe`] splits the keys into product-form cells coded by
//! [`mixed_radix`](crate::mixed_radix), so a decode touches a constant number
//! of words regardless of the level.

mod classify;
mod exact;
mod ledger;
mod lowprob;
pub mod partition;
mod probe;

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::binomial::binom;
use crate::error::{Error, Result};
use crate::model::{DecompKind, Engine, LevelPath, LevelSpec, MemView, Params, ProbeMeter};

pub use classify::{classify, Class};
pub use ledger::{Ledger, LedgerEntry};
pub use lowprob::LowLayout;
pub use partition::{Block, Partition, PartitionAudit, Product, TermRef};

/// A spillover domain grouped by sum: `cnt[s]` values carry sum `s`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SumLayout {
    pub len: u64,
    pub w: u32,
    pub cnt: Vec<BigUint>,
    /// `starts[s]` is the first value with sum `s`; one extra entry is the size.
    pub starts: Vec<BigUint>,
    /// Excess over `2^w` promised to the parent; at least the actual excess.
    pub sigma_nominal: BigUint,
    #[serde(skip)]
    zero: BigUint,
}

impl SumLayout {
    pub fn from_counts(len: u64, w: u32, cnt: Vec<BigUint>, sigma_nominal: BigUint) -> Self {
        assert_eq!(cnt.len() as u64, len + 1, "one count per sum");
        let mut starts = Vec::with_capacity(cnt.len() + 1);
        let mut acc = BigUint::zero();
        for c in &cnt {
            starts.push(acc.clone());
            acc += c;
        }
        starts.push(acc);
        let mut out = SumLayout {
            len,
            w,
            cnt,
            starts,
            sigma_nominal,
            zero: BigUint::zero(),
        };
        let actual = out.actual_sigma();
        if actual > out.sigma_nominal {
            out.sigma_nominal = actual;
        }
        out
    }

    /// Leaf domain: the `2^w` words of length `w` grouped by weight.
    pub fn leaf(w: u32, pad: BigUint) -> Self {
        let cnt = (0..=w as u64).map(|s| binom(w as u64, s)).collect();
        Self::from_counts(w as u64, w, cnt, pad)
    }

    pub fn size(&self) -> &BigUint {
        self.starts.last().expect("layout has a size")
    }

    /// `K - 2^w`, clamped at zero.
    pub fn actual_sigma(&self) -> BigUint {
        let full = BigUint::one() << self.w;
        if self.size() > &full {
            self.size() - full
        } else {
            BigUint::zero()
        }
    }

    pub fn count(&self, s: u64) -> &BigUint {
        self.cnt.get(s as usize).unwrap_or(&self.zero)
    }

    pub fn start(&self, s: u64) -> &BigUint {
        &self.starts[s as usize]
    }

    /// `(SUM(k), position of k inside its sum class)`.
    pub fn split(&self, k: &BigUint) -> Result<(u64, BigUint)> {
        if k >= self.size() {
            return Err(Error::Range(format!(
                "spillover {k} outside domain of size {}",
                self.size()
            )));
        }
        let s = self.starts[..=self.len as usize].partition_point(|v| v <= k) - 1;
        Ok((s as u64, k - &self.starts[s]))
    }

    pub fn sum_of(&self, k: &BigUint) -> Result<u64> {
        Ok(self.split(k)?.0)
    }

    pub fn join(&self, s: u64, pos: &BigUint) -> BigUint {
        &self.starts[s as usize] + pos
    }
}

/// A child layout with a chosen excess: `cnt[s]` starts at
/// `ceil(C(l,s) 2^(w-l))` and the remaining excess is spread over the sums.
pub fn synthetic_child(w: u32, l: u64, sigma: &BigUint, seed: u64) -> SumLayout {
    let mut cnt: Vec<BigUint> = (0..=l)
        .map(|s| {
            let c = binom(l, s);
            if w as u64 >= l {
                c << (w as u64 - l)
            } else {
                crate::mixed_radix::ceil_shr(&c, l - w as u64)
            }
        })
        .collect();
    let target = (BigUint::one() << w) + sigma;
    let have: BigUint = cnt.iter().sum();
    if have < target {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extra = target - have;
        let slots = BigUint::from(l + 1);
        let share = &extra / &slots;
        let mut rest: u64 = (&extra % &slots).try_into().expect("remainder below l+1");
        for c in cnt.iter_mut() {
            *c += &share;
        }
        while rest > 0 {
            let s = rng.gen_range(0..=l) as usize;
            cnt[s] += 1u32;
            rest -= 1;
        }
    }
    SumLayout::from_counts(l, w, cnt, sigma.clone())
}

pub(crate) enum Imp {
    Exact(exact::ExactEngine),
    Probe(probe::ProbeEngine),
}

/// The code of one tree level: shared by every node at that level.
pub struct LevelCodec {
    pub level: u32,
    pub w: u32,
    pub b: u32,
    pub child_len: u64,
    pub own_len: u64,
    pub path: LevelPath,
    pub engine: Engine,
    pub mem_bits: u64,
    pub child: Arc<SumLayout>,
    pub own: Arc<SumLayout>,
    pub ledger: Ledger,
    partitions: Vec<Arc<Partition>>,
    imp: Imp,
}

impl std::fmt::Debug for LevelCodec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LevelCodec")
            .field("level", &self.level)
            .field("path", &self.path)
            .field("engine", &self.engine)
            .field("own_size", self.own.size())
            .finish()
    }
}

impl LevelCodec {
    pub fn partitions(&self) -> &[Arc<Partition>] {
        &self.partitions
    }

    /// `(spillover, memory)` for `B` child spillovers.
    pub fn encode(&self, children: &[BigUint]) -> Result<(BigUint, BigUint)> {
        if children.len() != self.b as usize {
            return Err(Error::Encoding(format!(
                "level {} takes {} children, got {}",
                self.level,
                self.b,
                children.len()
            )));
        }
        match &self.imp {
            Imp::Exact(e) => e.encode(self, children),
            Imp::Probe(p) => p.encode(self, children),
        }
    }

    /// Prefix total `T_c` of the first `c` children.
    pub fn decode_prefix_sum(
        &self,
        mem: &MemView,
        spill: &BigUint,
        c: usize,
        meter: &mut ProbeMeter,
    ) -> Result<u64> {
        if c == 0 {
            return Ok(0);
        }
        if c == self.b as usize {
            return self.own.sum_of(spill);
        }
        Ok(self.decode_step(mem, spill, c, meter)?.0)
    }

    /// Spillover of child `c` (0-based).
    pub fn decode_child_spill(
        &self,
        mem: &MemView,
        spill: &BigUint,
        c: usize,
        meter: &mut ProbeMeter,
    ) -> Result<BigUint> {
        Ok(self.decode_step(mem, spill, c, meter)?.1)
    }

    /// `(T_c, k_c)`: prefix total before child `c` and that child's spillover.
    pub fn decode_step(
        &self,
        mem: &MemView,
        spill: &BigUint,
        c: usize,
        meter: &mut ProbeMeter,
    ) -> Result<(u64, BigUint)> {
        if c >= self.b as usize {
            return Err(Error::Range(format!("child {c} of {}", self.b)));
        }
        if spill >= self.own.size() {
            return Err(Error::Integrity(format!(
                "spillover {spill} outside level {} domain {}",
                self.level,
                self.own.size()
            )));
        }
        match &self.imp {
            Imp::Exact(e) => e.decode_step(self, mem, spill, c, meter),
            Imp::Probe(p) => p.decode_step(self, mem, spill, c, meter),
        }
    }

    /// Number of product cells, for the probe engine.
    pub fn cell_count(&self) -> usize {
        match &self.imp {
            Imp::Exact(_) => 0,
            Imp::Probe(p) => p.cell_count(),
        }
    }
}

/// Partition for relative position `q` of a level with child layout `child`.
pub fn build_partition(params: &Params, q: u32, child: &Arc<SumLayout>) -> Result<Partition> {
    let l = child.len;
    let eps = params
        .eps_log2
        .map(u64::from)
        .unwrap_or_else(|| partition::eps_log2_for(params.w, &child.sigma_nominal));
    let h = partition::band_half_width(l, eps);
    match params.decomposition {
        DecompKind::Rows => Partition::rows(q, params.w, h, child.clone(), params.mode),
        DecompKind::Polynomial => {
            let mx = (q as i64 - 1) * h as i64;
            let my = q as i64 * h as i64;
            let products = crate::binom_approx::partition_products(
                l,
                params.w,
                mx,
                my,
                eps,
                params.mode,
                &params.caps,
                params.window_scale,
            )?;
            Partition::from_products(q, h, products, child.clone(), params.mode)
        }
    }
}

/// Build the code for one level above `child`.
pub fn combine(params: &Params, spec: &LevelSpec, child: Arc<SumLayout>) -> Result<LevelCodec> {
    if child.len != spec.child_len {
        return Err(Error::Parameter(format!(
            "child layout covers {} bits, level {} expects {}",
            child.len, spec.level, spec.child_len
        )));
    }
    let b = params.b;
    let w = params.w;
    let mem_bits = (b as u64 - 1) * w as u64;
    let partitions: Vec<Arc<Partition>> = match spec.path {
        LevelPath::Small => Vec::new(),
        LevelPath::Large => (1..=b)
            .map(|q| build_partition(params, q, &child).map(Arc::new))
            .collect::<Result<_>>()?,
    };
    let ctx = BuildCtx {
        b,
        w,
        l: child.len,
        m: mem_bits,
        path: spec.path,
        child: &child,
        parts: &partitions,
        caps: &params.caps,
    };
    let (imp, own_cnt, classes) = match params.engine {
        Engine::Enum => {
            let e = exact::ExactEngine::build(&ctx)?;
            let cnt = e.own_counts();
            let classes = e.class_sizes();
            (Imp::Exact(e), cnt, classes)
        }
        Engine::Probe => {
            let p = probe::ProbeEngine::build(&ctx)?;
            let cnt = p.own_counts();
            let classes = p.class_sizes();
            (Imp::Probe(p), cnt, classes)
        }
    };
    let growth = params.growth(spec.path, spec.child_len);
    let nominal = &growth * &child.sigma_nominal;
    let own = Arc::new(SumLayout::from_counts(spec.own_len, w, own_cnt, nominal));
    let ledger = ledger::certify(params, spec, &child, &own, &partitions, &classes)?;
    let mut ledger = ledger;
    if let Imp::Probe(p) = &imp {
        ledger.cells = p.cell_count();
        let over = BigUint::from(p.cells_over_bound());
        ledger.entries.push(LedgerEntry {
            check: "cells within radix bound".into(),
            pass: over.is_zero(),
            lhs: over,
            rhs: BigUint::zero(),
        });
    }
    Ok(LevelCodec {
        level: spec.level,
        w,
        b,
        child_len: spec.child_len,
        own_len: spec.own_len,
        path: spec.path,
        engine: params.engine,
        mem_bits,
        child,
        own,
        ledger,
        partitions,
        imp,
    })
}

/// Shared inputs of both engines.
pub(crate) struct BuildCtx<'a> {
    pub b: u32,
    pub w: u32,
    pub l: u64,
    pub m: u64,
    pub path: LevelPath,
    pub child: &'a Arc<SumLayout>,
    pub parts: &'a [Arc<Partition>],
    pub caps: &'a crate::model::Caps,
}

/// Spillover mass per class, summed over all prefix totals.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ClassSizes {
    pub good: BigUint,
    pub one_bad: BigUint,
    pub lowprob: BigUint,
    /// Tuple counts per class (before division by `2^m`).
    pub tuples: [BigUint; 3],
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Caps, Mode};
    use num_traits::ToPrimitive;

    #[test]
    fn leaf_layout_is_weight_grouped() {
        let l = SumLayout::leaf(8, BigUint::from(16u32));
        assert_eq!(l.size(), &BigUint::from(256u32));
        assert_eq!(l.sigma_nominal, BigUint::from(16u32));
        let (s, pos) = l.split(&BigUint::from(9u32)).unwrap();
        assert_eq!((s, pos.to_u64().unwrap()), (2, 0));
        assert_eq!(l.join(2, &BigUint::zero()), BigUint::from(9u32));
        assert!(l.split(&BigUint::from(256u32)).is_err());
    }

    #[test]
    fn synthetic_child_hits_its_excess() {
        let sigma = BigUint::from(1000u32);
        let c = synthetic_child(16, 32, &sigma, 3);
        assert_eq!(c.size(), &((BigUint::one() << 16) + &sigma));
        for s in 0..=32 {
            assert!(c.count(s) >= &crate::combiner::partition::scaled_binom(32, s, 16));
        }
    }

    fn exhaustive(params: &Params, child: Arc<SumLayout>, level: u32) -> LevelCodec {
        let spec = params.level_specs()[level as usize - 1].clone();
        let codec = combine(params, &spec, child.clone()).unwrap();
        let n: u64 = child.size().to_u64().unwrap();
        let b = params.b as usize;
        let mut seen = std::collections::HashSet::new();
        let total = n.pow(b as u32);
        for idx in 0..total {
            let mut rest = idx;
            let tuple: Vec<BigUint> = (0..b)
                .map(|_| {
                    let d = rest % n;
                    rest /= n;
                    BigUint::from(d)
                })
                .collect();
            let (spill, mem) = codec.encode(&tuple).unwrap();
            assert!(spill < *codec.own.size());
            assert!(mem.bits() <= codec.mem_bits);
            assert!(seen.insert((spill.clone(), mem.clone())));
            let mut arena = crate::model::BitArena::new(params.w);
            arena.append_bits(&mem, codec.mem_bits).unwrap();
            let view = MemView::new(&arena, 0, codec.mem_bits);
            let mut t = 0u64;
            for c in 0..b {
                let mut meter = ProbeMeter::new();
                let (tc, k) = codec.decode_step(&view, &spill, c, &mut meter).unwrap();
                assert_eq!(tc, t);
                assert_eq!(k, tuple[c]);
                t += child.sum_of(&tuple[c]).unwrap();
            }
            assert_eq!(codec.own.sum_of(&spill).unwrap(), t);
        }
        codec
    }

    fn tiny(engine: Engine, caps: Caps) -> Params {
        let mut p = Params::relaxed(64, 4, 2, 2)
            .with_engine(engine)
            .with_caps(caps)
            .with_base_pad(BigUint::zero());
        p.mode = Mode::Relaxed;
        p
    }

    #[test]
    fn small_path_round_trips_both_engines() {
        for engine in [Engine::Enum, Engine::Probe] {
            let p = tiny(engine, Caps::default());
            let child = Arc::new(SumLayout::leaf(4, BigUint::zero()));
            exhaustive(&p, child, 1);
        }
    }

    #[test]
    fn large_path_round_trips_both_engines() {
        let caps = Caps {
            max_s_tuples: 1,
            ..Caps::default()
        };
        for engine in [Engine::Enum, Engine::Probe] {
            let p = tiny(engine, caps);
            let child = Arc::new(synthetic_child(4, 4, &BigUint::from(3u32), 1));
            exhaustive(&p, child, 1);
        }
    }

    #[test]
    fn three_children_reach_every_class() {
        let caps = Caps {
            max_s_tuples: 1,
            ..Caps::default()
        };
        for engine in [Engine::Enum, Engine::Probe] {
            let mut p = Params::relaxed(256, 4, 3, 2)
                .with_engine(engine)
                .with_caps(caps)
                .with_base_pad(BigUint::zero());
            p.eps_log2 = Some(1);
            let child = Arc::new(synthetic_child(4, 4, &BigUint::from(5u32), 2));
            let codec = exhaustive(&p, child, 1);
            let c = &codec.ledger.classes;
            assert!(c.tuples.iter().all(|t| !t.is_zero()), "{c:?}");
        }
    }
}
