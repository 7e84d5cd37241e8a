//! Batch front-end behind the `spillrank` binary.
//!
//! # Commands
//!
//! - `build --in BITS --config CFG --out RK`: encode a bit file.
//! - `query --in RK (--u U | --sweep)`: rank queries with probe counts.
//! - `audit --in RK`: space accounting and per-level ledgers.
//! - `verify-approx --l L [--alpha A --d D | --m M --eps-log2 E --w W]`:
//!   certify a binomial approximation.
//! - `bench --config CFG [--n N --seed S]`: build and sweep a random array.
//! - `selftest`: a short end-to-end check of every component.
//!
//! Every command prints one record per result: `key=value` pairs by default,
//! JSON with `--json`. `--ledger PATH` also writes the detailed ledgers or
//! certification reports as JSON lines.
//!
//! # Exit status
//!
//! `0` on success, `1` when a certification check fails, `2` for usage,
//! configuration, input or format errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::binom_approx::{
    integer_terms, local_approx, rect_decompose, verify_integer, verify_local, verify_rect,
    ApproxConfig, CertReport, TermMode, DEFAULT_WINDOW_SCALE,
};
use crate::config::{parse_engine, Config};
use crate::error::{Error, Result};
use crate::model::{read_bit_file, Engine, Mode, Params, ProbeMeter};
use crate::rank_tree::{self, oracle_table, rank, RankStructure};

#[derive(Parser, Debug)]
#[command(
    name = "spillrank",
    version,
    about = "Succinct rank built from spillover trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode a bit file into a structure file.
    Build(BuildArgs),
    /// Answer rank queries from a structure file.
    Query(QueryArgs),
    /// Report the space accounting of a structure file.
    Audit(AuditArgs),
    /// Certify a polynomial or rectangle approximation of a binomial row.
    VerifyApprox(ApproxArgs),
    /// Build and sweep a random array.
    Bench(BenchArgs),
    /// Run a short end-to-end check.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct Output {
    /// Emit JSON records.
    #[arg(long)]
    json: bool,
    /// Write detailed ledgers as JSON lines to this file.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = engine_arg)]
    engine: Option<Engine>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
    u: Option<u64>,
    /// Query every position and report probe statistics.
    #[arg(long)]
    sweep: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct ApproxArgs {
    /// Row length.
    #[arg(long = "l")]
    l: u64,
    /// Anchor fraction for the local polynomial.
    #[arg(long, default_value = "1/2")]
    alpha: String,
    /// Degree parameter of the local polynomial.
    #[arg(long = "d", default_value_t = 10)]
    d: u32,
    /// Window scale.
    #[arg(long = "c", default_value_t = DEFAULT_WINDOW_SCALE)]
    c: f64,
    /// Certify the rectangle decomposition of `[-M, M]^2` instead.
    #[arg(long = "m")]
    m: Option<i64>,
    /// Approximation exponent `eps = 2^-E` for the rectangle decomposition.
    #[arg(long = "eps-log2", default_value_t = 8)]
    eps_log2: u32,
    /// Also certify integer terms at this word size.
    #[arg(long = "w", requires = "m")]
    w: Option<u32>,
    #[arg(long)]
    relaxed: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 4096)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = engine_arg)]
    engine: Option<Engine>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

fn engine_arg(s: &str) -> std::result::Result<Engine, String> {
    parse_engine(s).map_err(|e| e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Certification { .. } => 1,
                _ => 2,
            }
        }
    }
}

/// `Ok(false)` means a certification check failed.
fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<bool> {
    match cmd {
        Command::Build(a) => build_cmd(a, out),
        Command::Query(a) => query_cmd(a, out),
        Command::Audit(a) => audit_cmd(a, out),
        Command::VerifyApprox(a) => approx_cmd(a, out),
        Command::Bench(a) => bench_cmd(a, out),
        Command::Selftest(a) => selftest_cmd(a, out),
    }
}

fn emit(out: &mut dyn Write, json: bool, record: &Value) -> Result<()> {
    if json {
        writeln!(out, "{record}")?;
    } else {
        let Value::Object(map) = record else {
            writeln!(out, "{record}")?;
            return Ok(());
        };
        let line: Vec<String> = map
            .iter()
            .filter(|(_, v)| !v.is_object() && !v.is_array())
            .map(|(k, v)| match v {
                Value::String(s) => format!("{k}={s}"),
                other => format!("{k}={other}"),
            })
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

fn write_ledger<T: serde::Serialize>(path: Option<&Path>, records: &[T]) -> Result<()> {
    let Some(path) = path else { return Ok(()) };
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("records serialize"));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn existing(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Usage(format!("no such file: {}", path.display())))
    }
}

fn load_config(path: &Path) -> Result<Config> {
    existing(path)?;
    Config::load(path)
}

fn load_structure(path: &Path) -> Result<RankStructure> {
    existing(path)?;
    rank_tree::load(&std::fs::read(path)?)
}

fn build_cmd(a: BuildArgs, out: &mut dyn Write) -> Result<bool> {
    existing(&a.input)?;
    let bits = read_bit_file(&a.input)?;
    let cfg = load_config(&a.config)?;
    let mut params = cfg.params(bits.len() as u64)?;
    if let Some(e) = a.engine {
        params.engine = e;
    }
    let start = Instant::now();
    let rs = rank_tree::build(&bits, params)?;
    let elapsed = start.elapsed();
    std::fs::write(&a.out, rank_tree::save(&rs))?;
    let audit = rs.space_audit();
    write_ledger(a.output.ledger.as_deref(), &audit.levels)?;
    emit(
        out,
        a.output.json,
        &json!({
            "command": "build",
            "out": a.out.display().to_string(),
            "n": rs.n(),
            "engine": rs.params.engine,
            "mode": rs.params.mode,
            "total_bits": audit.total_bits,
            "redundancy_bits": audit.redundancy_bits,
            "ledgers_pass": audit.ledgers_pass,
            "build_ms": elapsed.as_millis() as u64,
        }),
    )?;
    Ok(audit.ledgers_pass)
}

struct Sweep {
    queries: u64,
    max_word_reads: u64,
    total_word_reads: u64,
    ones: u64,
    monotone: bool,
}

fn sweep(rs: &RankStructure) -> Result<Sweep> {
    let mut meter = ProbeMeter::new();
    let mut s = Sweep {
        queries: 0,
        max_word_reads: 0,
        total_word_reads: 0,
        ones: 0,
        monotone: true,
    };
    let mut prev = 0;
    for u in 0..=rs.n() {
        meter.reset();
        let r = rank(rs, u, &mut meter)?;
        if r < prev || r > prev + 1 || (u == 0 && r != 0) {
            s.monotone = false;
        }
        prev = r;
        s.ones = r;
        s.queries += 1;
        s.max_word_reads = s.max_word_reads.max(meter.word_reads);
        s.total_word_reads += meter.word_reads;
    }
    Ok(s)
}

fn query_cmd(a: QueryArgs, out: &mut dyn Write) -> Result<bool> {
    let rs = load_structure(&a.input)?;
    if let Some(u) = a.u {
        let mut meter = ProbeMeter::new();
        let r = rank(&rs, u, &mut meter)?;
        emit(
            out,
            a.output.json,
            &json!({"command": "query", "u": u, "rank": r, "word_reads": meter.word_reads}),
        )?;
        return Ok(true);
    }
    let s = sweep(&rs)?;
    emit(
        out,
        a.output.json,
        &json!({
            "command": "sweep",
            "queries": s.queries,
            "ones": s.ones,
            "consistent": s.monotone,
            "max_word_reads": s.max_word_reads,
            "mean_word_reads": s.total_word_reads as f64 / s.queries as f64,
        }),
    )?;
    Ok(s.monotone)
}

fn audit_cmd(a: AuditArgs, out: &mut dyn Write) -> Result<bool> {
    let rs = load_structure(&a.input)?;
    let audit = rs.space_audit();
    write_ledger(a.output.ledger.as_deref(), &audit.levels)?;
    let mut record = serde_json::to_value(&audit).expect("audit serializes");
    record["command"] = json!("audit");
    emit(out, a.output.json, &record)?;
    Ok(audit.ledgers_pass && audit.total_bits >= audit.n)
}

fn report_record(rep: &CertReport) -> Value {
    let mut v = serde_json::to_value(rep).expect("report serializes");
    v["command"] = json!("verify-approx");
    v["pass"] = json!(rep.pass());
    if let Some(fail) = rep.checks.iter().find(|c| !c.pass) {
        v["failed"] = json!(fail.check);
        v["witness"] = json!(fail.witness);
    }
    v
}

fn approx_cmd(a: ApproxArgs, out: &mut dyn Write) -> Result<bool> {
    let mode = if a.relaxed {
        Mode::Relaxed
    } else {
        Mode::Strict
    };
    let reports = match a.m {
        None => {
            let alpha: BigRational = a
                .alpha
                .parse()
                .map_err(|_| Error::Usage(format!("bad --alpha {}", a.alpha)))?;
            vec![verify_local(&local_approx(a.l, &alpha, a.d, a.c)?)]
        }
        Some(m) => {
            let cfg = ApproxConfig {
                window_scale: a.c,
                ..ApproxConfig::default()
            };
            let rd = rect_decompose(a.l, m, m, a.eps_log2, &cfg, mode)?;
            let mut reps = vec![verify_rect(&rd)];
            if let Some(w) = a.w {
                reps.push(verify_integer(&integer_terms(&rd, w, TermMode::Dyadic)?));
            }
            reps
        }
    };
    write_ledger(a.output.ledger.as_deref(), &reports)?;
    for rep in &reports {
        let mut record = report_record(rep);
        if !a.output.json {
            if let Some(Value::Object(stats)) =
                record.as_object_mut().and_then(|m| m.remove("stats"))
            {
                for (k, v) in stats {
                    record[k] = v;
                }
            }
        }
        emit(out, a.output.json, &record)?;
    }
    Ok(reports.iter().all(CertReport::pass))
}

fn random_bits(n: u64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_bool(0.5)).collect()
}

fn bench_cmd(a: BenchArgs, out: &mut dyn Write) -> Result<bool> {
    let cfg = load_config(&a.config)?;
    let mut params = cfg.params(a.n)?;
    if let Some(e) = a.engine {
        params.engine = e;
    }
    let bits = random_bits(a.n, a.seed);
    let start = Instant::now();
    let rs = rank_tree::build(&bits, params)?;
    let build_ms = start.elapsed().as_millis() as u64;
    let start = Instant::now();
    let s = sweep(&rs)?;
    let sweep_ms = start.elapsed().as_millis() as u64;
    let table = oracle_table(&bits);
    let mut meter = ProbeMeter::new();
    let correct = (0..=a.n).all(|u| rank(&rs, u, &mut meter).ok() == Some(table[u as usize]));
    let audit = rs.space_audit();
    emit(
        out,
        a.output.json,
        &json!({
            "command": "bench",
            "n": a.n,
            "seed": a.seed,
            "engine": rs.params.engine,
            "build_ms": build_ms,
            "sweep_ms": sweep_ms,
            "queries": s.queries,
            "max_word_reads": s.max_word_reads,
            "mean_word_reads": s.total_word_reads as f64 / s.queries as f64,
            "total_bits": audit.total_bits,
            "redundancy_bits": audit.redundancy_bits,
            "correct": correct,
        }),
    )?;
    Ok(correct)
}

fn selftest_cmd(a: SelftestArgs, out: &mut dyn Write) -> Result<bool> {
    let mut all = true;
    let mut record = |name: &str, pass: bool, detail: Value, out: &mut dyn Write| -> Result<()> {
        all &= pass;
        emit(
            out,
            a.output.json,
            &json!({"command": "selftest", "check": name, "pass": pass, "detail": detail}),
        )
    };
    for engine in [Engine::Enum, Engine::Probe] {
        let bits = random_bits(1024, a.seed);
        let rs = rank_tree::build(&bits, Params::relaxed(1024, 16, 2, 2).with_engine(engine))?;
        let table = oracle_table(&bits);
        let mut meter = ProbeMeter::new();
        let ok = (0..=1024).all(|u| rank(&rs, u, &mut meter).ok() == Some(table[u as usize]));
        record(
            &format!("rank sweep ({engine})"),
            ok,
            json!({"n": 1024}),
            out,
        )?;
    }
    let bits = random_bits(224, a.seed + 1);
    let rs = rank_tree::build(&bits, Params::strict(224, 56, 1))?;
    let red = rs.space_audit().redundancy_bits;
    record(
        "one bit of redundancy",
        red == 1,
        json!({"redundancy_bits": red}),
        out,
    )?;
    let half = BigRational::new(1.into(), 2.into());
    let rep = verify_local(&local_approx(400, &half, 10, DEFAULT_WINDOW_SCALE)?);
    record("local approximation", rep.pass(), rep.stats.clone(), out)?;
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("spillrank").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["query", "--in", "x.rk", "--bogus"]).0, 2);
        assert_eq!(call(&["query", "--in", "/nonexistent.rk", "--u", "0"]).0, 2);
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn verify_approx_passes() {
        let (code, out, _) = call(&[
            "verify-approx",
            "--l",
            "400",
            "--alpha",
            "1/2",
            "--d",
            "10",
            "--json",
        ]);
        assert_eq!(code, 0, "{out}");
        let v: Value = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(v["pass"], json!(true));
        assert!(v["stats"]["max_rel_dev"].as_f64().unwrap() < 0.25);
    }

    #[test]
    fn verify_approx_budget_failure_exits_one() {
        let (code, _, err) = call(&["verify-approx", "--l", "400", "--d", "10", "--c", "4.0"]);
        assert_eq!(code, 1, "{err}");
    }
}
