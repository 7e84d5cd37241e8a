//! Builds a rank structure over a random bit array and answers every query.
//!
//! Each answer is compared with a plain prefix count, and the worst-case
//! number of word reads per query is reported.
//!
//! ```text
//! cargo run --release --example build_and_query
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spillrank::model::{Engine, Params, ProbeMeter};
use spillrank::rank_tree::{build, oracle_table, rank};

fn main() -> Result<(), spillrank::Error> {
    let n = 4096u64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bits: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
    let expect = oracle_table(&bits);

    for engine in [Engine::Enum, Engine::Probe] {
        let rs = build(&bits, Params::relaxed(n, 16, 2, 2).with_engine(engine))?;
        let mut worst = 0;
        for u in 0..=n {
            let mut meter = ProbeMeter::new();
            let r = rank(&rs, u, &mut meter)?;
            assert_eq!(r, expect[u as usize], "rank({u})");
            worst = worst.max(meter.word_reads);
        }
        let audit = rs.space_audit();
        println!(
            "engine={engine} n={n} total_bits={} redundancy={} max_word_reads={worst}",
            audit.total_bits, audit.redundancy_bits
        );
    }
    Ok(())
}
