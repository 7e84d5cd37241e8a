//! Audits the partition of one child position into product blocks.
//!
//! For each position the audit checks that block sizes add up, that the
//! blocks tile every row exactly, and that the leftover block stays within
//! twice the spread of the child layout.
//!
//! ```text
//! cargo run --release --example partition_blocks
//! ```

use std::sync::Arc;

use num_bigint::BigUint;
use spillrank::combiner::{build_partition, synthetic_child};
use spillrank::model::{Mode, Params};

fn main() -> Result<(), spillrank::Error> {
    for (w, spread_log2) in [(16u32, 8u32), (20, 10)] {
        let mut params = Params::relaxed(1 << 10, w, 2, 1);
        params.mode = Mode::Strict;
        let child = Arc::new(synthetic_child(
            w,
            w as u64,
            &(BigUint::from(1u32) << spread_log2),
            3,
        ));
        for q in 1..=params.b {
            let part = build_partition(&params, q, &child)?;
            let audit = part.audit(1 << 18);
            println!("{}", serde_json::to_string(&audit).expect("serializable"));
            eprintln!(
                "w={w} position={q} leftover={} limit={} {}",
                audit.max_zero,
                &audit.sigma * 2u32,
                if audit.pass() { "pass" } else { "FAIL" }
            );
        }
    }
    Ok(())
}
