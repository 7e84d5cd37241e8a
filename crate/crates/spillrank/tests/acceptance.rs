//! Acceptance suite: one `PASS`/`FAIL` line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the output.
//! Exits nonzero if any criterion fails.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use spillrank::binom_approx::{
    integer_terms, rect_decompose, verify_integer, verify_rect, ApproxConfig, TermMode,
};
use spillrank::combiner::{build_partition, combine, synthetic_child, LevelCodec, SumLayout};
use spillrank::mixed_radix::{decode_from, plan_radix, radix_encode};
use spillrank::model::{
    BitArena, Caps, DecompKind, Engine, LevelPath, MemView, Mode, Params, PathRule, ProbeMeter,
};
use spillrank::rank_tree::{build, build_codecs, oracle_table, rank};

type Outcome = (bool, String);
type Criterion = (&'static str, &'static str, fn() -> Outcome);

const ENGINES: [Engine; 2] = [Engine::Enum, Engine::Probe];

fn random_bits(n: u64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = rng.gen_range(0.05..0.95);
    (0..n).map(|_| rng.gen_bool(density)).collect()
}

fn tiny(engine: Engine, caps: Caps) -> Params {
    Params::relaxed(64, 4, 2, 2)
        .with_engine(engine)
        .with_caps(caps)
        .with_base_pad(BigUint::zero())
}

fn forced_large() -> Caps {
    Caps {
        max_s_tuples: 1,
        ..Caps::default()
    }
}

fn strict_synthetic(w: u32, engine: Engine) -> Params {
    let mut p = Params::relaxed(1 << (w / 4), w, 2, 1)
        .with_engine(engine)
        .with_caps(forced_large());
    p.mode = Mode::Strict;
    p
}

fn tuple_of(mut idx: u64, n: u64, b: usize) -> Vec<BigUint> {
    (0..b)
        .map(|_| {
            let d = idx % n;
            idx /= n;
            BigUint::from(d)
        })
        .collect()
}

/// `(T_c, k_c)` for every child of an encoded tuple.
fn decode_all(
    codec: &LevelCodec,
    tuple: &[BigUint],
) -> Result<(BigUint, Vec<(u64, BigUint)>), String> {
    let (spill, mem) = codec.encode(tuple).map_err(|e| e.to_string())?;
    let mut arena = BitArena::new(codec.w);
    arena
        .append_bits(&mem, codec.mem_bits)
        .map_err(|e| e.to_string())?;
    let view = MemView::new(&arena, 0, codec.mem_bits);
    let mut out = Vec::with_capacity(tuple.len());
    for c in 0..tuple.len() {
        let step = codec
            .decode_step(&view, &spill, c, &mut ProbeMeter::new())
            .map_err(|e| e.to_string())?;
        out.push(step);
    }
    Ok((spill, out))
}

/// Encodes every child tuple and checks decoding and injectivity.
fn exhaustive_round_trip(codec: &LevelCodec) -> Result<u64, String> {
    let child = &codec.child;
    let n = child.size().to_u64().ok_or("child domain too large")?;
    let b = codec.b as usize;
    let total = n.pow(b as u32);
    let mut seen = HashSet::with_capacity(total as usize);
    for idx in 0..total {
        let tuple = tuple_of(idx, n, b);
        let (spill, steps) = decode_all(codec, &tuple)?;
        let mut t = 0;
        for (c, (tc, k)) in steps.iter().enumerate() {
            if *tc != t || *k != tuple[c] {
                return Err(format!("level {} tuple {idx} child {c}", codec.level));
            }
            t += child.sum_of(&tuple[c]).map_err(|e| e.to_string())?;
        }
        if codec.own.sum_of(&spill).map_err(|e| e.to_string())? != t {
            return Err(format!("level {} tuple {idx}: wrong sum", codec.level));
        }
        let (_, mem) = codec.encode(&tuple).map_err(|e| e.to_string())?;
        if !seen.insert((spill, mem)) {
            return Err(format!("level {} tuple {idx}: collision", codec.level));
        }
    }
    Ok(total)
}

fn c1_correctness() -> Outcome {
    let jobs: Vec<(u64, u64, Engine)> = [1u64 << 10, 1 << 12, 1 << 14]
        .iter()
        .flat_map(|&n| (0..20u64).flat_map(move |s| ENGINES.map(|e| (n, s, e))))
        .collect();
    let bad: Vec<String> = jobs
        .par_iter()
        .filter_map(|&(n, seed, engine)| {
            let bits = random_bits(n, seed);
            let expect = oracle_table(&bits);
            let rs = match build(&bits, Params::relaxed(n, 16, 2, 2).with_engine(engine)) {
                Ok(rs) => rs,
                Err(e) => return Some(format!("n={n} seed={seed} {engine}: {e}")),
            };
            (0..=n).find_map(|u| match rank(&rs, u, &mut ProbeMeter::new()) {
                Ok(r) if r == expect[u as usize] => None,
                other => Some(format!("n={n} seed={seed} {engine} u={u}: {other:?}")),
            })
        })
        .collect();
    (
        bad.is_empty(),
        format!(
            "{} builds, every u checked; mismatches: {:?}",
            jobs.len(),
            bad.first()
        ),
    )
}

fn c2_one_bit() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (n, params) in [
        (64u64, Params::relaxed(64, 16, 2, 2)),
        (224, Params::strict(224, 56, 1)),
    ] {
        let want = (params.b as u64).pow(params.t) * params.w as u64 + 1;
        for seed in 0..5 {
            let bits = random_bits(n, seed);
            match build(&bits, params.clone()) {
                Ok(rs) => {
                    let total = rs.space_audit().total_bits;
                    ok &= total == want;
                    if seed == 0 {
                        lines.push(format!(
                            "w={} B={} t={}: {total} bits (want {want})",
                            params.w, params.b, params.t
                        ));
                    }
                }
                Err(e) => {
                    ok = false;
                    lines.push(format!("w={}: {e}", params.w));
                }
            }
        }
    }
    (ok, lines.join("; "))
}

fn c3_small_path() -> Outcome {
    let mut ok = true;
    let mut bounded = 0;
    let mut outside = 0;
    let mut exhaustive = 0u64;
    let mut notes = Vec::new();
    let mut codecs = Vec::new();
    let mut configs = vec![
        Params::relaxed(1 << 12, 16, 2, 2),
        Params::strict(224, 56, 1),
        Params::relaxed(1 << 10, 8, 2, 2).with_path_rule(PathRule::Caps),
    ];
    for e in ENGINES {
        configs.push(tiny(e, Caps::default()));
        configs.push(Params::relaxed(64, 16, 2, 2).with_engine(e));
    }
    for params in configs {
        match build_codecs(&params) {
            Ok((_, c)) => codecs.extend(c),
            Err(e) => {
                ok = false;
                notes.push(e.to_string());
            }
        }
    }
    for e in ENGINES {
        for sigma in [16u32, 32, 64, 128] {
            let p = Params::relaxed(64, 8, 2, 1)
                .with_engine(e)
                .with_path_rule(PathRule::Caps);
            let child = Arc::new(synthetic_child(8, 8, &BigUint::from(sigma), 7));
            match combine(&p, &p.level_specs()[0], child) {
                Ok(c) => codecs.push(c),
                Err(err) => {
                    ok = false;
                    notes.push(err.to_string());
                }
            }
        }
    }
    for codec in codecs.iter().filter(|c| c.path == LevelPath::Small) {
        let sigma = &codec.child.sigma_nominal;
        let hypothesis = sigma >= &(BigUint::one() << (codec.w / 2 + 1))
            && sigma <= &(BigUint::one() << (codec.w - 1));
        if hypothesis {
            bounded += 1;
            let bound = (BigUint::one() << codec.w) + BigUint::from(2 * codec.b) * sigma;
            if codec.own.size() > &bound {
                ok = false;
                notes.push(format!(
                    "w={} level {}: K={} > {bound}",
                    codec.w,
                    codec.level,
                    codec.own.size()
                ));
            }
        } else {
            outside += 1;
        }
        if codec.child.size().pow(codec.b) <= BigUint::one() << 20u32 {
            match exhaustive_round_trip(codec) {
                Ok(n) => exhaustive += n,
                Err(e) => {
                    ok = false;
                    notes.push(e);
                }
            }
        }
    }
    (
        ok && bounded > 0 && exhaustive > 0,
        format!(
            "{bounded} small-path levels with 2^(w/2+1) <= sigma <= 2^(w-1) within 2^w + 2B*sigma, \
             {outside} outside that window round-trip only, {exhaustive} tuples round-tripped {notes:?}"
        ),
    )
}

fn c4_large_path() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for w in [16u32, 20, 24] {
        let params = strict_synthetic(w, Engine::Enum);
        let spec = params.level_specs()[0].clone();
        let sigma = BigUint::one() << (w / 2);
        let child = Arc::new(synthetic_child(w, w as u64, &sigma, 5));
        match combine(&params, &spec, child) {
            Ok(codec) => {
                let bound = (BigUint::one() << w) + BigUint::from(33 * params.b) * &sigma;
                let pass = codec.own.size() <= &bound && codec.ledger.pass();
                ok &= pass;
                lines.push(format!(
                    "w={w}: K-2^w={} <= {}",
                    codec.own.size() - (BigUint::one() << w),
                    bound - (BigUint::one() << w)
                ));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("w={w}: {e}"));
            }
        }
    }
    for engine in ENGINES {
        for (params, child) in [
            (
                tiny(engine, forced_large()),
                Arc::new(synthetic_child(4, 4, &BigUint::from(3u32), 1)),
            ),
            (
                Params::relaxed(64, 8, 2, 2)
                    .with_engine(engine)
                    .with_caps(forced_large()),
                Arc::new(synthetic_child(8, 8, &BigUint::from(16u32), 2)),
            ),
        ] {
            let spec = params.level_specs()[0].clone();
            match combine(&params, &spec, child.clone()) {
                Ok(codec) => {
                    let excess = codec.own.size() - (BigUint::one() << params.w);
                    let measured = excess.to_f64().unwrap_or(f64::INFINITY)
                        / child.sigma_nominal.to_f64().unwrap_or(1.0);
                    let documented = params.growth(LevelPath::Large, child.len);
                    let pass = excess <= &documented * &child.sigma_nominal;
                    ok &= pass;
                    lines.push(format!(
                        "relaxed w={} {engine}: G={measured:.2} <= {documented}",
                        params.w
                    ));
                }
                Err(e) => {
                    ok = false;
                    lines.push(format!("relaxed w={} {engine}: {e}", params.w));
                }
            }
        }
    }
    (ok, lines.join("; "))
}

fn c5_approximation() -> Outcome {
    let cfg = ApproxConfig::default();
    let triples = [
        (400u64, 24i64, 2u32, 32u32),
        (512, 32, 8, 32),
        (256, 16, 4, 24),
    ];
    let results: Vec<(bool, String)> = triples
        .par_iter()
        .map(|&(l, m, eps_log2, w)| {
            let rd = match rect_decompose(l, m, m, eps_log2, &cfg, Mode::Strict) {
                Ok(rd) => rd,
                Err(e) => return (false, format!("l={l}: {e}")),
            };
            let rect = verify_rect(&rd);
            let id = match integer_terms(&rd, w, TermMode::Dyadic) {
                Ok(id) => id,
                Err(e) => return (false, format!("l={l}: {e}")),
            };
            let int = verify_integer(&id);
            let terms = id.terms().count() as u64;
            let cap = rd.r as u64 * (w as u64 / 2).pow(2);
            let pass = rect.pass() && int.pass() && terms <= cap;
            (
                pass,
                format!(
                    "l={l} d={} eps=2^-{eps_log2}: rects={} terms={terms}<={cap}",
                    rd.d, rd.r
                ),
            )
        })
        .collect();
    (
        results.iter().all(|r| r.0),
        results
            .into_iter()
            .map(|r| r.1)
            .collect::<Vec<_>>()
            .join("; "),
    )
}

fn c6_mixed_radix() -> Outcome {
    let results: Vec<Result<bool, String>> = (0..1000u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = [8u32, 16, 32][rng.gen_range(0..3)];
            let len = rng.gen_range(1..=8);
            let domains: Vec<BigUint> = (0..len)
                .map(|_| {
                    let bits = rng.gen_range(1..=2 * w as u64);
                    let hi = (BigUint::one() << bits) - 1u32;
                    BigUint::from(1u32) + rng.gen::<u64>() % hi.to_u64().unwrap_or(u64::MAX)
                })
                .collect();
            let prod: BigUint = domains.iter().product();
            let lo = prod.bits().saturating_sub(w as u64);
            let m = rng.gen_range(lo.max(1)..=prod.bits() + 2);
            let plan = plan_radix(&domains, m, w).map_err(|e| format!("seed {seed}: {e}"))?;
            if !plan.within_bound() {
                return Err(format!("seed {seed}: K={} above {}", plan.k, plan.bound()));
            }
            let exhaustive = prod <= BigUint::one() << 20u32;
            let count = if exhaustive {
                prod.to_u64().unwrap()
            } else {
                64
            };
            for idx in 0..count {
                let tuple: Vec<BigUint> = if exhaustive {
                    let mut rest = idx;
                    domains
                        .iter()
                        .map(|d| {
                            let d = d.to_u64().unwrap();
                            let v = rest % d;
                            rest /= d;
                            BigUint::from(v)
                        })
                        .collect()
                } else {
                    domains
                        .iter()
                        .map(|d| BigUint::from(rng.gen::<u64>()) % d)
                        .collect()
                };
                let enc = radix_encode(&plan, &tuple).map_err(|e| format!("seed {seed}: {e}"))?;
                if enc.spill >= plan.k || enc.memory.bits() > m {
                    return Err(format!("seed {seed}: code out of range"));
                }
                for (i, want) in tuple.iter().enumerate() {
                    let mut meter = ProbeMeter::tracing();
                    let got = decode_from(&plan, &enc, i, &mut meter).map_err(|e| e.to_string())?;
                    let fields: HashSet<_> = meter.touched().iter().collect();
                    if &got != want || fields.len() > 2 {
                        return Err(format!(
                            "seed {seed} coordinate {i}: {got} vs {want}, {} fields",
                            fields.len()
                        ));
                    }
                }
            }
            Ok(exhaustive)
        })
        .collect();
    let errors: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    let exhaustive = results.iter().filter(|r| matches!(r, Ok(true))).count();
    (
        errors.is_empty(),
        format!(
            "1000 plans, {exhaustive} exhaustive; first error: {:?}",
            errors.first()
        ),
    )
}

fn max_reads(n: u64, seed: u64) -> Result<u64, String> {
    let bits = random_bits(n, seed);
    let rs = build(
        &bits,
        Params::relaxed(n, 16, 2, 2).with_engine(Engine::Probe),
    )
    .map_err(|e| e.to_string())?;
    let mut worst = 0;
    for u in 0..=n {
        let mut meter = ProbeMeter::new();
        rank(&rs, u, &mut meter).map_err(|e| e.to_string())?;
        worst = worst.max(meter.word_reads);
    }
    Ok(worst)
}

fn c7_probes() -> Outcome {
    let small = max_reads(1 << 12, 3);
    let large = max_reads(1 << 14, 3);
    let mut ok = matches!((&small, &large), (Ok(a), Ok(b)) if a == b);
    let mut zero_reads = true;
    for params in [
        Params::relaxed(1 << 12, 16, 2, 2),
        tiny(Engine::Probe, forced_large()),
    ] {
        let params = params.with_engine(Engine::Probe);
        let Ok((_, codecs)) = build_codecs(&params) else {
            zero_reads = false;
            continue;
        };
        for codec in &codecs {
            let arena = {
                let mut a = BitArena::new(codec.w);
                a.append_bits(&BigUint::zero(), codec.mem_bits.max(codec.w as u64))
                    .expect("zeros");
                a
            };
            let view = MemView::new(&arena, 0, codec.mem_bits);
            let step = (codec.own.size() / 7u32).max(BigUint::one());
            let mut k = BigUint::zero();
            while &k < codec.own.size() {
                let mut meter = ProbeMeter::new();
                let t = codec.decode_prefix_sum(&view, &k, codec.b as usize, &mut meter);
                zero_reads &=
                    meter.word_reads == 0 && t.is_ok_and(|t| t == codec.own.sum_of(&k).unwrap());
                k += &step;
            }
        }
    }
    ok &= zero_reads;
    (
        ok,
        format!("max word reads n=2^12: {small:?}, n=2^14: {large:?}; prefix sum at B reads no words: {zero_reads}"),
    )
}

fn c8_cross_engine() -> Outcome {
    let mut ok = true;
    let mut compared = 0u64;
    let mut notes = Vec::new();
    let pairs: Vec<(Params, Option<Arc<SumLayout>>)> = vec![
        (tiny(Engine::Enum, Caps::default()), None),
        (tiny(Engine::Enum, forced_large()), None),
        (
            tiny(Engine::Enum, forced_large()),
            Some(Arc::new(synthetic_child(4, 4, &BigUint::from(3u32), 1))),
        ),
        (
            Params::relaxed(64, 8, 2, 1).with_caps(forced_large()),
            Some(Arc::new(synthetic_child(8, 8, &BigUint::from(16u32), 2))),
        ),
    ];
    for (params, child) in pairs {
        let children: Vec<Arc<SumLayout>> = match child {
            Some(c) => vec![c],
            None => build_codecs(&params)
                .expect("codecs")
                .1
                .iter()
                .map(|c| c.child.clone())
                .collect(),
        };
        let codecs: Vec<Vec<LevelCodec>> = ENGINES
            .iter()
            .map(|&e| {
                let p = params.clone().with_engine(e);
                p.level_specs()
                    .iter()
                    .zip(&children)
                    .map(|(spec, c)| combine(&p, spec, c.clone()).expect("combine"))
                    .collect()
            })
            .collect();
        for (a, b) in codecs[0].iter().zip(&codecs[1]) {
            let n = a.child.size().to_u64().unwrap();
            let total = n.pow(a.b);
            let stride = (total / 4096).max(1);
            for idx in (0..total).step_by(stride as usize) {
                let tuple = tuple_of(idx, n, a.b as usize);
                let da = decode_all(a, &tuple).map(|d| d.1);
                let db = decode_all(b, &tuple).map(|d| d.1);
                compared += 1;
                if da != db || da.is_err() {
                    ok = false;
                    notes.push(format!("level {} tuple {idx}", a.level));
                    break;
                }
            }
        }
    }
    for n in [1u64 << 10, 1 << 12] {
        for seed in 0..3 {
            let bits = random_bits(n, 100 + seed);
            let built: Vec<_> = ENGINES
                .iter()
                .map(|&e| build(&bits, Params::relaxed(n, 16, 2, 2).with_engine(e)).expect("build"))
                .collect();
            for u in 0..=n {
                let ra = rank(&built[0], u, &mut ProbeMeter::new()).ok();
                let rb = rank(&built[1], u, &mut ProbeMeter::new()).ok();
                compared += 1;
                if ra != rb || ra.is_none() {
                    ok = false;
                    notes.push(format!("n={n} seed={seed} u={u}"));
                    break;
                }
            }
        }
    }
    (
        ok,
        format!("{compared} decodes and ranks identical across engines {notes:?}"),
    )
}

fn c9_partition() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for (w, limit) in [(16u32, 1u64 << 18), (20, 0)] {
        let params = strict_synthetic(w, Engine::Enum);
        let child = Arc::new(synthetic_child(
            w,
            w as u64,
            &(BigUint::one() << (w / 2)),
            3,
        ));
        for q in 1..=params.b {
            match build_partition(&params, q, &child) {
                Ok(part) => {
                    let a = part.audit(limit);
                    ok &= a.pass()
                        && a.zero_within_two_sigma
                        && (limit == 0 || a.disjoint_covering == Some(true));
                    lines.push(format!(
                        "strict w={w} q={q}: conserved={} tiled={:?} zero={}<=2*{}",
                        a.conservation, a.disjoint_covering, a.max_zero, a.sigma
                    ));
                }
                Err(e) => {
                    ok = false;
                    lines.push(format!("strict w={w} q={q}: {e}"));
                }
            }
        }
    }
    let relaxed = tiny(Engine::Enum, forced_large()).with_decomposition(DecompKind::Rows);
    let child = Arc::new(synthetic_child(4, 4, &BigUint::from(3u32), 1));
    for q in 1..=relaxed.b {
        match build_partition(&relaxed, q, &child) {
            Ok(part) => {
                let a = part.audit(1 << 20);
                ok &= a.pass() && a.disjoint_covering == Some(true);
            }
            Err(e) => {
                ok = false;
                lines.push(format!("relaxed q={q}: {e}"));
            }
        }
    }
    (ok, lines.join("; "))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("C1", "rank equals oracle", c1_correctness),
        ("C2", "single tree costs B^t*w + 1 bits", c2_one_bit),
        ("C3", "small-path size bound and bijectivity", c3_small_path),
        ("C4", "large-path size ledger", c4_large_path),
        ("C5", "approximation certificates", c5_approximation),
        (
            "C6",
            "mixed-radix bound, round trip, locality",
            c6_mixed_radix,
        ),
        ("C7", "probe count independent of n", c7_probes),
        ("C8", "engines decode identically", c8_cross_engine),
        ("C9", "partition blocks", c9_partition),
    ];
    let start = Instant::now();
    let outcomes: Vec<(Outcome, f64)> = criteria
        .par_iter()
        .map(|(_, _, f)| {
            let t = Instant::now();
            let o = f();
            (o, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut failed = 0;
    for ((id, name, _), ((pass, detail), secs)) in criteria.iter().zip(outcomes) {
        if !pass {
            failed += 1;
        }
        println!(
            "{id} {} {name} ({secs:.1}s): {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
