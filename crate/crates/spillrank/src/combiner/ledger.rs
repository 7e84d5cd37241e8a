//! Space checks recorded for every level.
//!
//! In strict mode a failed bound aborts the build; in relaxed mode it is
//! recorded and the build goes on.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;
use serde::Serialize;

use super::partition::Partition;
use super::{ClassSizes, SumLayout};
use crate::error::{Error, Result};
use crate::model::{Engine, LevelPath, LevelSpec, Mode, Params};

#[derive(Clone, Debug, Serialize)]
pub struct LedgerEntry {
    pub check: String,
    pub lhs: BigUint,
    pub rhs: BigUint,
    pub pass: bool,
}

/// Measured spillover sizes of one level against their bounds.
#[derive(Clone, Debug, Serialize)]
pub struct Ledger {
    pub level: u32,
    pub path: LevelPath,
    pub engine: Engine,
    pub mode: Mode,
    pub child_len: u64,
    pub k: BigUint,
    pub sigma_child: BigUint,
    pub sigma_actual: BigUint,
    pub sigma_nominal: BigUint,
    pub classes: ClassSizes,
    pub cells: usize,
    pub dropped_cells: usize,
    pub entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    fn check(
        &mut self,
        mode: Mode,
        fatal: bool,
        check: &str,
        lhs: BigUint,
        rhs: BigUint,
    ) -> Result<()> {
        let pass = lhs <= rhs;
        if !pass && fatal && mode == Mode::Strict {
            return Err(Error::cert(
                check,
                format!("level {}: {lhs} > {rhs}", self.level),
            ));
        }
        self.entries.push(LedgerEntry {
            check: check.to_string(),
            lhs,
            rhs,
            pass,
        });
        Ok(())
    }
}

pub(crate) fn certify(
    params: &Params,
    spec: &LevelSpec,
    child: &SumLayout,
    own: &SumLayout,
    parts: &[Arc<Partition>],
    classes: &ClassSizes,
) -> Result<Ledger> {
    let w = params.w;
    let b = BigUint::from(params.b);
    let sigma = child.sigma_nominal.clone();
    let full = BigUint::one() << w;
    let mut led = Ledger {
        level: spec.level,
        path: spec.path,
        engine: params.engine,
        mode: params.mode,
        child_len: spec.child_len,
        k: own.size().clone(),
        sigma_child: sigma.clone(),
        sigma_actual: own.actual_sigma(),
        sigma_nominal: own.sigma_nominal.clone(),
        classes: classes.clone(),
        cells: 0,
        dropped_cells: parts.iter().map(|p| p.dropped.len()).sum(),
        entries: Vec::new(),
    };
    let mode = params.mode;
    let k = own.size().clone();
    match spec.path {
        LevelPath::Small => {
            led.check(
                mode,
                true,
                "small path size",
                k.clone(),
                &full + &b * 2u32 * &sigma,
            )?;
        }
        LevelPath::Large => {
            let bs = &b * &sigma;
            led.check(
                mode,
                false,
                "bad class size",
                classes.one_bad.clone(),
                &bs * 32u32,
            )?;
            let w_pow = BigUint::from(w).pow(params.b);
            let lowprob_bound = ((&bs * &bs * w_pow) << 8u32) >> w;
            led.check(
                mode,
                false,
                "low-probability class size",
                classes.lowprob.clone(),
                lowprob_bound,
            )?;
            led.check(
                mode,
                false,
                "large path size",
                k.clone(),
                &full + &bs * 33u32,
            )?;
            for p in parts {
                let a = p.audit(0);
                led.check(
                    mode,
                    false,
                    &format!("residual block at position {}", p.position),
                    a.max_zero,
                    &sigma * 2u32,
                )?;
            }
        }
    }
    led.check(mode, true, "level growth", k, &full + &spec.growth * &sigma)?;
    Ok(led)
}
