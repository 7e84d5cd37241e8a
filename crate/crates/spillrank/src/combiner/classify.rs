//! Good, one-bad and low-probability tuples.
//!
//! A step is bad when its child lands in the residual block `K_0`. After a
//! bad step the run restarts: positions count from one again and prefix
//! totals are taken relative to the total right after the bad child.

use std::sync::Arc;

use num_bigint::BigUint;

use super::partition::{Block, Located, Partition};
use super::SumLayout;
use crate::error::Result;

/// Class of a child tuple; positions are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Class {
    Good,
    OneBad { i_star: usize },
    LowProb { i1: usize, i2: usize },
}

impl Class {
    pub fn mode_index(&self) -> usize {
        match self {
            Class::Good => 0,
            Class::OneBad { .. } => 1,
            Class::LowProb { .. } => 2,
        }
    }
}

/// One child as seen by the classifier.
#[derive(Clone, Debug)]
pub struct StepInfo {
    pub s: u64,
    /// Relative position used for the partition, `0` once past the second break.
    pub q: u32,
    /// Prefix total at the start of the current run.
    pub base: u64,
    pub located: Option<Located>,
}

/// Classify `tuple` and report each step's sum and block.
pub fn classify(
    parts: &[Arc<Partition>],
    child: &SumLayout,
    tuple: &[BigUint],
) -> Result<(Class, Vec<StepInfo>)> {
    let mut breaks: Vec<usize> = Vec::new();
    let mut base = 0u64;
    let mut run_start = 0usize;
    let mut t = 0u64;
    let mut steps = Vec::with_capacity(tuple.len());
    for (idx, k) in tuple.iter().enumerate() {
        let i = idx + 1;
        if breaks.len() >= 2 {
            let s = child.sum_of(k)?;
            steps.push(StepInfo {
                s,
                q: 0,
                base,
                located: None,
            });
            t += s;
            continue;
        }
        let q = (i - run_start) as u32;
        let loc = parts[q as usize - 1].locate(t - base, k)?;
        let s = loc.s;
        let is_break = loc.block == Block::Zero;
        steps.push(StepInfo {
            s,
            q,
            base,
            located: Some(loc),
        });
        t += s;
        if is_break {
            breaks.push(i);
            base = t;
            run_start = i;
        }
    }
    let class = match breaks.as_slice() {
        [] => Class::Good,
        [i] => Class::OneBad { i_star: *i },
        [i1, i2] => Class::LowProb { i1: *i1, i2: *i2 },
        _ => unreachable!("classification stops after two breaks"),
    };
    Ok((class, steps))
}
