//! End-to-end runs of the `spillrank` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use spillrank::model::write_bit_file;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spillrank"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spillrank-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> (i32, String) {
    let Output { status, stdout, .. } = cmd.output().unwrap();
    (status.code().unwrap(), String::from_utf8(stdout).unwrap())
}

fn json_lines(text: &str) -> Vec<serde_json::Value> {
    text.lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            if let Some(obj) = v.as_object_mut() {
                obj.retain(|k, _| !k.ends_with("_ms"));
            }
            v
        })
        .collect()
}

#[test]
fn build_query_audit_round_trip() {
    let dir = scratch("round");
    let bits: Vec<bool> = (0..300).map(|i| (i * 7 + i / 5) % 3 == 0).collect();
    let input = dir.join("bits.hex");
    write_bit_file(&input, &bits).unwrap();
    std::fs::write(dir.join("c.cfg"), "w = 16\nb = 2\nt = 2\nengine = probe\n").unwrap();
    let out = dir.join("s.bin");

    let (code, _) = run(bin()
        .args(["build", "--json", "--in"])
        .arg(&input)
        .arg("--config")
        .arg(dir.join("c.cfg"))
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 0);
    let first = std::fs::read(&out).unwrap();
    assert_eq!(&first[..4], b"SPRK");

    let (code, text) = run(bin()
        .args(["query", "--json", "--u", "150", "--in"])
        .arg(&out));
    assert_eq!(code, 0);
    let want = bits[..150].iter().filter(|&&b| b).count() as u64;
    assert_eq!(json_lines(&text)[0]["rank"], want);

    let (code, text) = run(bin().args(["query", "--sweep", "--json", "--in"]).arg(&out));
    assert_eq!(code, 0);
    assert_eq!(json_lines(&text)[0]["consistent"], true);

    let (code, text) = run(bin().args(["audit", "--in"]).arg(&out));
    assert_eq!(code, 0);
    assert!(text.contains("within_bound=true"), "{text}");

    let (code, _) = run(bin().args(["query", "--u", "301", "--in"]).arg(&out));
    assert_eq!(code, 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn runs_are_deterministic() {
    let dir = scratch("det");
    let cfg = dir.join("c.cfg");
    std::fs::write(&cfg, "w = 16\nb = 2\nt = 2\n").unwrap();
    let bench = || {
        run(bin()
            .args(["bench", "--json", "--n", "1024", "--seed", "9", "--config"])
            .arg(&cfg))
    };
    let (a, b) = (bench(), bench());
    assert_eq!((a.0, b.0), (0, 0));
    assert_eq!(json_lines(&a.1), json_lines(&b.1));

    let bits: Vec<bool> = (0..512).map(|i| i % 5 < 2).collect();
    let input = dir.join("bits.raw");
    write_bit_file(&input, &bits).unwrap();
    let build = |name: &str| {
        let out = dir.join(name);
        let (code, _) = run(bin()
            .args(["build", "--in"])
            .arg(&input)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out));
        assert_eq!(code, 0);
        std::fs::read(out).unwrap()
    };
    assert_eq!(build("x.bin"), build("y.bin"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn exit_codes() {
    assert_eq!(run(bin().arg("frobnicate")).0, 2);
    assert_eq!(
        run(bin().args(["query", "--in", "/nonexistent/s.bin", "--u", "1"])).0,
        2
    );
    assert_eq!(
        run(bin().args(["verify-approx", "--l", "200", "--d", "10"])).0,
        0
    );
    assert_eq!(
        run(bin().args(["verify-approx", "--l", "200", "--d", "10", "--c", "4.0"])).0,
        1
    );
    assert_eq!(run(bin().args(["selftest", "--seed", "1"])).0, 0);
}
