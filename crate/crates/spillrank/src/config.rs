//! Flat `key = value` configuration files.
//!
//! # Format
//!
//! One setting per line. `#` starts a comment, blank lines are ignored, keys
//! are case-insensitive and may appear once.
//!
//! ```text
//! # relaxed tree, two levels
//! mode = relaxed
//! w = 16
//! b = 2
//! t = 2
//! engine = probe
//! ```
//!
//! # Keys
//!
//! | key | meaning |
//! |-----|---------|
//! | `mode` | `strict` or `relaxed` (default `relaxed`) |
//! | `w`, `b`, `t` | word size, branching factor, depth; `b` is derived in strict mode |
//! | `engine` | `enum` or `probe` |
//! | `max_s_tuples`, `max_j_tuples`, `max_grid` | enumeration caps |
//! | `eps_log2` | override for the approximation exponent on large levels |
//! | `window_scale` | polynomial window scale |
//! | `decomposition` | `rows` or `polynomial` |
//! | `path_rule` | `halfword` or `caps` |
//! | `base_pad` | leaf domain padding, decimal |

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::model::{round_cbrt, DecompKind, Engine, Mode, Params, PathRule};

const KEYS: &[&str] = &[
    "mode",
    "w",
    "b",
    "t",
    "engine",
    "max_s_tuples",
    "max_j_tuples",
    "max_grid",
    "eps_log2",
    "window_scale",
    "decomposition",
    "path_rule",
    "base_pad",
];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl FromStr for Config {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = k.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{key}`",
                    i + 1
                )));
            }
            let value = v.trim().to_string();
            if value.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: empty value for `{key}`",
                    i + 1
                )));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    i + 1
                )));
            }
        }
        Ok(Config { entries })
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

fn choice<T: Copy>(key: &str, v: &str, options: &[(&str, T)]) -> Result<T> {
    options
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(v))
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("bad value `{v}` for `{key}`")))
}

pub fn parse_engine(v: &str) -> Result<Engine> {
    choice(
        "engine",
        v,
        &[("enum", Engine::Enum), ("probe", Engine::Probe)],
    )
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|v| parse(key, v)).transpose()
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.num(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    /// Parameters for an array of `n` bits.
    pub fn params(&self, n: u64) -> Result<Params> {
        let mode = match self.get("mode") {
            Some(v) => choice(
                "mode",
                v,
                &[("strict", Mode::Strict), ("relaxed", Mode::Relaxed)],
            )?,
            None => Mode::Relaxed,
        };
        let w: u32 = self.required("w")?;
        let t: u32 = self.required("t")?;
        let mut p = match mode {
            Mode::Strict => {
                if let Some(b) = self.num::<u32>("b")? {
                    if b != round_cbrt(w) {
                        return Err(Error::Config(format!(
                            "strict mode fixes b = {} for w = {w}",
                            round_cbrt(w)
                        )));
                    }
                }
                Params::strict(n, w, t)
            }
            Mode::Relaxed => Params::relaxed(n, w, self.required("b")?, t),
        };
        if let Some(v) = self.get("engine") {
            p.engine = parse_engine(v)?;
        }
        if let Some(v) = self.num("max_s_tuples")? {
            p.caps.max_s_tuples = v;
        }
        if let Some(v) = self.num("max_j_tuples")? {
            p.caps.max_j_tuples = v;
        }
        if let Some(v) = self.num("max_grid")? {
            p.caps.max_grid = v;
        }
        p.eps_log2 = self.num("eps_log2")?;
        if let Some(v) = self.num::<f64>("window_scale")? {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "window_scale must be positive, got {v}"
                )));
            }
            p.window_scale = v;
        }
        if let Some(v) = self.get("decomposition") {
            p.decomposition = choice(
                "decomposition",
                v,
                &[
                    ("rows", DecompKind::Rows),
                    ("polynomial", DecompKind::Polynomial),
                ],
            )?;
        }
        if let Some(v) = self.get("path_rule") {
            p.path_rule = choice(
                "path_rule",
                v,
                &[("halfword", PathRule::HalfWord), ("caps", PathRule::Caps)],
            )?;
        }
        if let Some(v) = self.get("base_pad") {
            p.base_pad = BigUint::parse_bytes(v.as_bytes(), 10)
                .ok_or_else(|| Error::Config(format!("bad value `{v}` for `base_pad`")))?;
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relaxed_with_overrides() {
        let c: Config =
            "# comment\nmode = relaxed\nW = 16\nb=2\nt = 2 # trailing\nengine=probe\nmax_grid=99\n"
                .parse()
                .unwrap();
        let p = c.params(64).unwrap();
        assert_eq!(
            (p.w, p.b, p.t, p.engine, p.caps.max_grid),
            (16, 2, 2, Engine::Probe, 99)
        );
        assert_eq!(p.mode, Mode::Relaxed);
    }

    #[test]
    fn strict_derives_branching() {
        let c: Config = "mode=strict\nw=56\nt=1".parse().unwrap();
        assert_eq!(c.params(224).unwrap().b, 4);
        let c: Config = "mode=strict\nw=56\nb=3\nt=1".parse().unwrap();
        assert!(c.params(224).is_err());
    }

    #[test]
    fn malformed_files_rejected() {
        for text in ["w 16", "w=16\nw=18", "colour=red", "w=", "w=16\nt=x\nb=2"] {
            let r = text.parse::<Config>().and_then(|c| c.params(64));
            assert!(matches!(r, Err(Error::Config(_))), "{text}");
        }
        let c: Config = "w=16\nt=2".parse().unwrap();
        assert!(c.params(64).is_err());
    }
}
