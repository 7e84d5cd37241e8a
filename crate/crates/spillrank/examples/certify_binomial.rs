//! Certifies the binomial approximation chain on a few grids.
//!
//! For each `(l, M, eps)` the example builds the local polynomials, tiles the
//! grid, floors the factors to integers and checks every inequality on the
//! full grid with exact arithmetic. One JSON line per object is printed.
//!
//! ```text
//! cargo run --release --example certify_binomial
//! ```

use std::time::Instant;

use spillrank::binom_approx::{
    integer_terms, rect_decompose, verify_integer, verify_rect, ApproxConfig, TermMode,
};
use spillrank::model::Mode;

fn main() -> Result<(), spillrank::Error> {
    let cfg = ApproxConfig::default();
    for (l, m, eps_log2, w) in [
        (400u64, 24i64, 2u32, 32u32),
        (512, 32, 8, 32),
        (256, 16, 4, 24),
    ] {
        let start = Instant::now();
        let rd = rect_decompose(l, m, m, eps_log2, &cfg, Mode::Strict)?;
        let rect = verify_rect(&rd);
        println!("{}", serde_json::to_string(&rect).expect("serializable"));
        let id = integer_terms(&rd, w, TermMode::Dyadic)?;
        let int = verify_integer(&id);
        println!("{}", serde_json::to_string(&int).expect("serializable"));
        eprintln!(
            "l={l} M={m} eps=2^-{eps_log2}: rect {} integer {} ({:.1?})",
            if rect.pass() { "pass" } else { "FAIL" },
            if int.pass() { "pass" } else { "FAIL" },
            start.elapsed()
        );
    }
    Ok(())
}
