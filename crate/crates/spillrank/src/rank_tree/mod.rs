//! Rank over a bit array, one spillover tree per block.
//!
//! The array is cut into blocks of `B^t w` bits. Each block is a complete
//! `B`-ary tree of depth `t` whose leaves are single words. A leaf turns its
//! word into a spillover directly; every inner node merges its children's
//! spillovers with the shared [`LevelCodec`] of its level, keeping
//! `(B-1)w` memory bits and passing one spillover up. Only the root
//! spillover is written out, in `w + 1` bits when it fits.
//!
//! # Memory layout
//!
//! ```text
//! [prefix table: blocks-1 entries][block 0][block 1]...
//! block   = [subtree memory][root spillover]
//! subtree = [child 0 subtree]...[child B-1 subtree][own (B-1)w bits]
//! ```
//!
//! The prefix table holds the number of ones before each block after the
//! first. A final partial block is padded with zeros.
//!
//! # Query
//!
//! `rank(u)` reads one prefix entry and the root spillover, then walks down:
//! at each level it decodes the prefix total and spillover of the child that
//! contains `u`, and stops early when `u` falls on a child boundary.

mod audit;
mod format;

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;

use crate::binomial::{colex_rank, colex_unrank};
use crate::combiner::{combine, LevelCodec, SumLayout};
use crate::error::{Error, Result};
use crate::model::{domain_width, read_field, BitArena, MemView, Mode, Params, ProbeMeter};

pub use audit::{BlockAudit, LevelAudit, SpaceAudit};
pub use format::{load, save, FORMAT_MAGIC, FORMAT_VERSION};

/// A built rank structure.
#[derive(Debug)]
pub struct RankStructure {
    pub params: Params,
    pub leaf: Arc<SumLayout>,
    /// `codecs[i]` builds level `i + 1` from level `i`.
    pub codecs: Vec<LevelCodec>,
    pub arena: BitArena,
    pub blocks: u64,
    /// Zero bits appended to fill the last block.
    pub pad_bits: u64,
    pub top_width: u64,
}

/// The level chain for `params`, independent of any data.
pub fn build_codecs(params: &Params) -> Result<(Arc<SumLayout>, Vec<LevelCodec>)> {
    let leaf = Arc::new(SumLayout::leaf(params.w, params.base_pad.clone()));
    let mut child = leaf.clone();
    let mut codecs = Vec::with_capacity(params.t as usize);
    for spec in params.level_specs() {
        let codec = combine(params, &spec, child)?;
        child = codec.own.clone();
        codecs.push(codec);
    }
    Ok((leaf, codecs))
}

/// Width of the root spillover field for a root domain of size `k`.
pub fn top_width_for(params: &Params, k: &BigUint) -> Result<u64> {
    let w = u64::from(params.w);
    if k <= &(BigUint::one() << (w + 1)) {
        return Ok(w + 1);
    }
    if params.mode == Mode::Strict {
        return Err(Error::cert(
            "root spillover width",
            format!("root domain {k} exceeds 2^(w+1)"),
        ));
    }
    Ok(domain_width(k))
}

pub fn build(bits: &[bool], params: Params) -> Result<RankStructure> {
    if bits.len() as u64 != params.n {
        return Err(Error::Parameter(format!(
            "array has {} bits, parameters say n = {}",
            bits.len(),
            params.n
        )));
    }
    params.validate()?;
    let (leaf, codecs) = build_codecs(&params)?;
    assemble(bits, params, leaf, codecs)
}

fn assemble(
    bits: &[bool],
    params: Params,
    leaf: Arc<SumLayout>,
    codecs: Vec<LevelCodec>,
) -> Result<RankStructure> {
    let block_len = params.block_len();
    let blocks = params.block_count();
    let pad_bits = blocks * block_len - params.n;
    let root = codecs
        .last()
        .map(|c| c.own.clone())
        .unwrap_or_else(|| leaf.clone());
    let top_width = top_width_for(&params, root.size())?;
    let mut arena = BitArena::new(params.w);
    let pw = params.prefix_width();
    let mut ones = 0u64;
    let mut padded = bits.to_vec();
    padded.resize((blocks * block_len) as usize, false);
    for chunk in padded.chunks(block_len as usize).take(blocks as usize - 1) {
        ones += chunk.iter().filter(|&&b| b).count() as u64;
        arena.append_u64(ones, pw)?;
    }
    let ctx = Ctx {
        params: &params,
        leaf: &leaf,
        codecs: &codecs,
    };
    for chunk in padded.chunks(block_len as usize) {
        let (spill, mem) = ctx.encode(params.t, chunk)?;
        arena.extend_from(&mem);
        arena.append_bits(&spill, top_width)?;
    }
    Ok(RankStructure {
        params,
        leaf,
        codecs,
        arena,
        blocks,
        pad_bits,
        top_width,
    })
}

struct Ctx<'a> {
    params: &'a Params,
    leaf: &'a SumLayout,
    codecs: &'a [LevelCodec],
}

impl Ctx<'_> {
    fn encode(&self, level: u32, bits: &[bool]) -> Result<(BigUint, BitArena)> {
        let w = self.params.w;
        if level == 0 {
            let s = bits.iter().filter(|&&b| b).count() as u64;
            return Ok((self.leaf.join(s, &colex_rank(bits)), BitArena::new(w)));
        }
        let codec = &self.codecs[level as usize - 1];
        let mut mem = BitArena::new(w);
        let mut spills = Vec::with_capacity(self.params.b as usize);
        for part in bits.chunks(codec.child_len as usize) {
            let (k, m) = self.encode(level - 1, part)?;
            mem.extend_from(&m);
            spills.push(k);
        }
        let (spill, own) = codec.encode(&spills)?;
        mem.append_bits(&own, codec.mem_bits)?;
        Ok((spill, mem))
    }
}

impl RankStructure {
    pub fn n(&self) -> u64 {
        self.params.n
    }

    pub fn prefix_bits(&self) -> u64 {
        (self.blocks - 1) * self.params.prefix_width()
    }

    /// Memory plus root spillover of one block.
    pub fn block_bits(&self) -> u64 {
        self.params.memory_bits(self.params.t) + self.top_width
    }

    fn block_base(&self, i: u64) -> u64 {
        self.prefix_bits() + i * self.block_bits()
    }

    /// Root spillover of block `i`, unmetered.
    pub fn root_spill(&self, i: u64) -> Result<BigUint> {
        let off = self.block_base(i) + self.params.memory_bits(self.params.t);
        self.arena.peek(off, self.top_width)
    }

    pub fn space_audit(&self) -> SpaceAudit {
        audit::space_audit(self)
    }

    /// `array[i]` for every `i`, by rank differences.
    pub fn reconstruct(&self) -> Result<Vec<bool>> {
        let mut meter = ProbeMeter::new();
        let mut prev = 0;
        let mut out = Vec::with_capacity(self.params.n as usize);
        for u in 1..=self.params.n {
            let r = rank(self, u, &mut meter)?;
            out.push(r > prev);
            prev = r;
        }
        Ok(out)
    }
}

/// Number of ones among the first `u` bits.
pub fn rank(rs: &RankStructure, u: u64, meter: &mut ProbeMeter) -> Result<u64> {
    let p = &rs.params;
    if u > p.n {
        return Err(Error::Range(format!("position {u} beyond n = {}", p.n)));
    }
    let block_len = p.block_len();
    let bi = (u / block_len).min(rs.blocks - 1);
    let mut off = u - bi * block_len;
    let mut acc = if bi == 0 {
        0
    } else {
        let pw = p.prefix_width();
        let v = read_field(&rs.arena, (bi - 1) * pw, pw, meter)?;
        crate::model::to_u64(&v, "prefix entry")?
    };
    if off == 0 {
        return Ok(acc);
    }
    let base = rs.block_base(bi);
    let mem_len = p.memory_bits(p.t);
    let mut spill = read_field(&rs.arena, base + mem_len, rs.top_width, meter)?;
    meter.charge_spill();
    let mut view = MemView::new(&rs.arena, base, mem_len);
    for level in (1..=p.t).rev() {
        let codec = &rs.codecs[level as usize - 1];
        let child_mem = p.memory_bits(level - 1);
        let own = view.sub(u64::from(p.b) * child_mem, codec.mem_bits);
        let c = (off / codec.child_len) as usize;
        let r = off % codec.child_len;
        if r == 0 {
            return Ok(acc + codec.decode_prefix_sum(&own, &spill, c, meter)?);
        }
        let (t, k) = codec.decode_step(&own, &spill, c, meter)?;
        acc += t;
        spill = k;
        view = view.sub(c as u64 * child_mem, child_mem);
        off = r;
    }
    let (s, pos) = rs.leaf.split(&spill)?;
    let word = colex_unrank(u64::from(p.w), s, &pos);
    Ok(acc + word[..off as usize].iter().filter(|&&b| b).count() as u64)
}

/// Linear-scan reference.
pub fn oracle_rank(bits: &[bool], u: u64) -> u64 {
    bits[..u as usize].iter().filter(|&&b| b).count() as u64
}

/// Cumulative-table reference: entry `u` is `rank(u)`.
pub fn oracle_table(bits: &[bool]) -> Vec<u64> {
    let mut out = Vec::with_capacity(bits.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &b in bits {
        acc += u64::from(b);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Engine;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(n: usize, seed: u64, density: f64) -> Vec<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_bool(density)).collect()
    }

    fn sweep(bits: &[bool], params: Params) -> RankStructure {
        let rs = build(bits, params).unwrap();
        let table = oracle_table(bits);
        let mut meter = ProbeMeter::new();
        for u in 0..=bits.len() as u64 {
            assert_eq!(
                rank(&rs, u, &mut meter).unwrap(),
                table[u as usize],
                "u={u}"
            );
        }
        rs
    }

    #[test]
    fn oracles() {
        let a = [true, false, true, true];
        assert_eq!(oracle_rank(&a, 0), 0);
        assert_eq!(oracle_rank(&a, 3), 2);
        let bits = random_bits(300, 1, 0.3);
        let t = oracle_table(&bits);
        for u in 0..=300 {
            assert_eq!(t[u as usize], oracle_rank(&bits, u));
        }
    }

    #[test]
    fn single_tree_one_bit_redundancy() {
        let bits = random_bits(64, 7, 0.5);
        let rs = sweep(&bits, Params::relaxed(64, 16, 2, 2));
        let a = rs.space_audit();
        assert_eq!(a.total_bits, 65);
        assert_eq!(a.redundancy_bits, 1);
    }

    #[test]
    fn constant_arrays() {
        for engine in [Engine::Enum, Engine::Probe] {
            let p = Params::relaxed(128, 16, 2, 2).with_engine(engine);
            let rs = sweep(&[false; 128], p.clone());
            let mut m = ProbeMeter::new();
            assert_eq!(rank(&rs, 77, &mut m).unwrap(), 0);
            let rs = sweep(&[true; 128], p);
            assert_eq!(rank(&rs, 77, &mut m).unwrap(), 77);
        }
    }

    #[test]
    fn random_sweeps_both_engines() {
        for engine in [Engine::Enum, Engine::Probe] {
            for seed in 0..3 {
                let bits = random_bits(1 << 10, seed, 0.4);
                let rs = sweep(
                    &bits,
                    Params::relaxed(1 << 10, 16, 2, 2).with_engine(engine),
                );
                assert_eq!(rs.reconstruct().unwrap(), bits);
            }
        }
    }

    #[test]
    fn padded_final_block() {
        let bits = random_bits(200, 3, 0.5);
        let rs = sweep(&bits, Params::relaxed(200, 16, 2, 2));
        assert_eq!(rs.pad_bits, 56);
        let mut m = ProbeMeter::new();
        assert!(matches!(rank(&rs, 201, &mut m), Err(Error::Range(_))));
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(build(&[true; 10], Params::relaxed(64, 16, 2, 2)).is_err());
    }
}
