//! Merges two child spillovers into one level code and prints its ledger.
//!
//! The child layout is synthetic, with a chosen spread of spillovers per
//! prefix total. Every pair of child spillovers is encoded and decoded back.
//!
//! ```text
//! cargo run --release --example combine_levels
//! ```

use std::sync::Arc;

use num_bigint::BigUint;
use spillrank::combiner::{combine, synthetic_child};
use spillrank::model::{BitArena, Caps, Engine, MemView, Params, ProbeMeter};

fn main() -> Result<(), spillrank::Error> {
    for engine in [Engine::Enum, Engine::Probe] {
        let params = Params::relaxed(64, 4, 2, 2)
            .with_engine(engine)
            .with_caps(Caps {
                max_s_tuples: 1,
                ..Caps::default()
            })
            .with_base_pad(BigUint::from(0u32));
        let spec = params.level_specs()[0].clone();
        let child = Arc::new(synthetic_child(4, 4, &BigUint::from(3u32), 1));
        let codec = combine(&params, &spec, child.clone())?;
        println!(
            "{}",
            serde_json::to_string(&codec.ledger).expect("serializable")
        );

        let size: u64 = child.size().try_into().expect("small child domain");
        for a in 0..size {
            for b in 0..size {
                let kids = [BigUint::from(a), BigUint::from(b)];
                let (spill, mem) = codec.encode(&kids)?;
                let mut arena = BitArena::new(params.w);
                arena.append_bits(&mem, codec.mem_bits)?;
                let view = MemView::new(&arena, 0, codec.mem_bits);
                for (c, want) in kids.iter().enumerate() {
                    let (_, got) = codec.decode_step(&view, &spill, c, &mut ProbeMeter::new())?;
                    assert_eq!(&got, want);
                }
            }
        }
        eprintln!(
            "engine={engine} path={:?} own_domain={} pairs_checked={}",
            codec.path,
            codec.own.size(),
            size * size
        );
    }
    Ok(())
}
