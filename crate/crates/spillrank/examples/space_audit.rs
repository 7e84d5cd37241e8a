//! Prints the space accounting of a built structure.
//!
//! Total bits, redundancy against its bound, and the measured growth of the
//! spillover domain at each level.
//!
//! ```text
//! cargo run --release --example space_audit
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spillrank::model::Params;
use spillrank::rank_tree::build;

fn main() -> Result<(), spillrank::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, params) in [
        (64u64, Params::relaxed(64, 16, 2, 2)),
        (224, Params::strict(224, 56, 1)),
        (1 << 14, Params::relaxed(1 << 14, 16, 2, 2)),
    ] {
        let bits: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let audit = build(&bits, params)?.space_audit();
        println!(
            "n={n} blocks={} total_bits={} redundancy={} bound={} within_bound={}",
            audit.blocks,
            audit.total_bits,
            audit.redundancy_bits,
            audit.redundancy_bound,
            audit.within_bound
        );
        for lv in &audit.levels {
            println!(
                "  level={} path={:?} domain={} growth={:?} ledger={}",
                lv.level,
                lv.path,
                lv.k,
                lv.growth_measured,
                if lv.ledger.pass() { "pass" } else { "FAIL" }
            );
        }
    }
    Ok(())
}
