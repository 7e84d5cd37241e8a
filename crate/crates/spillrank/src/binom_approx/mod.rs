//! Certified nonnegative approximations of binomial rows.

mod bernoulli;
mod integer;
mod local;
mod poly;
mod rect;
mod report;

pub use bernoulli::{bernoulli, faulhaber_poly, BernoulliTable};
pub use integer::{integer_terms, Group, IntegerDecomp, Term, TermMode};
pub use local::{
    local_approx, local_approx_at, window_for, IntProduct, LocalApprox, DEFAULT_WINDOW_SCALE,
};
pub use poly::RationalPoly;
pub use rect::{rect_decompose, scaled_binom_at, ApproxConfig, Frac, Rect, RectDecomp};

pub use report::{
    verify_decomp, verify_integer, verify_local, verify_rect, CertReport, CheckResult, Decomp,
};

use crate::combiner::Product;
use crate::error::{Error, Result};
use crate::model::{Caps, Mode};

/// Integer products approximating `2^(w-l) C(l, l/2 + x + y)` on the grid,
/// in the form the partition builder consumes.
pub fn partition_products(
    l: u64,
    w: u32,
    mx: i64,
    my: i64,
    eps_log2: u64,
    mode: Mode,
    caps: &Caps,
    window_scale: f64,
) -> Result<Vec<Product>> {
    let grid = (2 * mx as u64 + 1) * (2 * my as u64 + 1);
    if grid > caps.max_grid {
        return Err(Error::Config(format!(
            "grid of {grid} points exceeds max_grid = {}",
            caps.max_grid
        )));
    }
    let eps_log2 =
        u32::try_from(eps_log2).map_err(|_| Error::Parameter("eps exponent too large".into()))?;
    let config = ApproxConfig {
        window_scale,
        ..ApproxConfig::default()
    };
    let rd = rect_decompose(l, mx, my, eps_log2, &config, mode)?;
    if mode == Mode::Strict {
        let rep = verify_rect(&rd);
        if let Some(c) = rep.checks.iter().find(|c| !c.pass) {
            return Err(Error::cert(
                c.check.clone(),
                c.witness.clone().unwrap_or_default(),
            ));
        }
    }
    Ok(integer_terms(&rd, w - w % 2, TermMode::Direct)?.products)
}
