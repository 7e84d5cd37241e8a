//! Exact space accounting of a built structure.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use super::RankStructure;
use crate::combiner::Ledger;
use crate::model::{Engine, LevelPath};

#[derive(Clone, Debug, Serialize)]
pub struct LevelAudit {
    pub level: u32,
    pub path: LevelPath,
    pub engine: Engine,
    pub child_len: u64,
    /// Size of this level's spillover domain.
    pub k: BigUint,
    /// Memory bits of one subtree rooted at this level.
    pub mem_bits: u64,
    pub sigma_actual: BigUint,
    pub sigma_nominal: BigUint,
    pub growth_nominal: BigUint,
    /// `(K_i - 2^w) / (K_(i-1) - 2^w)`; the leaf excess is the padding.
    pub growth_measured: Option<f64>,
    pub ledger: Ledger,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockAudit {
    pub index: u64,
    pub mem_bits: u64,
    pub top_bits: u64,
    pub ones: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpaceAudit {
    pub n: u64,
    pub total_bits: u64,
    pub redundancy_bits: i64,
    pub blocks: u64,
    pub prefix_bits: u64,
    pub pad_bits: u64,
    pub top_width: u64,
    /// `n' + (n' - 1) ceil(log2(n + 1))`.
    pub redundancy_bound: u64,
    pub within_bound: bool,
    /// `log(n / redundancy) / (t log w)`: the exponent `c` in `n / w^(ct)`.
    pub exponent: Option<f64>,
    pub levels: Vec<LevelAudit>,
    pub per_block: Vec<BlockAudit>,
    pub ledgers_pass: bool,
}

fn ratio(a: &BigUint, b: &BigUint) -> Option<f64> {
    if b.is_zero() {
        return None;
    }
    Some(a.to_f64()? / b.to_f64()?)
}

pub(crate) fn space_audit(rs: &RankStructure) -> SpaceAudit {
    let p = &rs.params;
    let total_bits = rs.arena.len();
    let redundancy = total_bits as i64 - p.n as i64;
    let nb = rs.blocks;
    let bound = nb + (nb - 1) * p.prefix_width();
    let mut prev = p.base_pad.clone();
    let levels = rs
        .codecs
        .iter()
        .map(|c| {
            let sigma = c.own.actual_sigma();
            let g = ratio(&sigma, &prev);
            prev = sigma.clone();
            LevelAudit {
                level: c.level,
                path: c.path,
                engine: c.engine,
                child_len: c.child_len,
                k: c.own.size().clone(),
                mem_bits: p.memory_bits(c.level),
                sigma_actual: sigma,
                sigma_nominal: c.own.sigma_nominal.clone(),
                growth_nominal: p.growth(c.path, c.child_len),
                growth_measured: g,
                ledger: c.ledger.clone(),
            }
        })
        .collect::<Vec<_>>();
    let root = rs
        .codecs
        .last()
        .map(|c| c.own.clone())
        .unwrap_or_else(|| rs.leaf.clone());
    let per_block = (0..nb)
        .map(|i| BlockAudit {
            index: i,
            mem_bits: p.memory_bits(p.t),
            top_bits: rs.top_width,
            ones: rs
                .root_spill(i)
                .ok()
                .and_then(|k| root.sum_of(&k).ok())
                .unwrap_or(0),
        })
        .collect();
    let exponent = (redundancy > 0)
        .then(|| ((p.n as f64) / redundancy as f64).ln() / (f64::from(p.t) * f64::from(p.w).ln()));
    SpaceAudit {
        n: p.n,
        total_bits,
        redundancy_bits: redundancy,
        blocks: nb,
        prefix_bits: rs.prefix_bits(),
        pad_bits: rs.pad_bits,
        top_width: rs.top_width,
        redundancy_bound: bound,
        within_bound: redundancy >= 0 && redundancy as u64 <= bound + rs.pad_bits,
        exponent,
        ledgers_pass: levels.iter().all(|l| l.ledger.pass()),
        levels,
        per_block,
    }
}
