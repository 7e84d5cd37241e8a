//! Stores a tuple from mixed domains in a fixed memory budget.
//!
//! Shows the plan, the spillover domain against its bound and the fields
//! touched when a single coordinate is decoded.
//!
//! ```text
//! cargo run --release --example mixed_radix_codec
//! ```

use num_bigint::BigUint;
use spillrank::mixed_radix::{decode_from, plan_radix, radix_encode};
use spillrank::model::ProbeMeter;

fn main() -> Result<(), spillrank::Error> {
    let w = 8;
    let domains: Vec<BigUint> = [
        1000u32, 37, 65_521, 3, 40_000, 999, 12, 1_000_003, 77, 250_000,
    ]
    .iter()
    .map(|&d| BigUint::from(d))
    .collect();
    let total_bits: u64 = domains.iter().map(|d| d.bits()).sum();
    let m = total_bits - 4;
    let plan = plan_radix(&domains, m, w)?;
    println!(
        "m={m} merged={} spill_domain={} bound={} within_bound={}",
        plan.merged_count(),
        plan.k,
        plan.bound(),
        plan.within_bound()
    );

    let tuple: Vec<BigUint> = [999u32, 5, 12_345, 2, 39_999, 0, 11, 1_000_002, 40, 123_456]
        .iter()
        .map(|&d| BigUint::from(d))
        .collect();
    let enc = radix_encode(&plan, &tuple)?;
    println!("memory={:#x} spill={}", enc.memory, enc.spill);
    for (i, want) in tuple.iter().enumerate() {
        let mut meter = ProbeMeter::tracing();
        let got = decode_from(&plan, &enc, i, &mut meter)?;
        assert_eq!(&got, want);
        println!("coordinate {i} = {got} fields={:?}", meter.touched());
    }
    Ok(())
}
