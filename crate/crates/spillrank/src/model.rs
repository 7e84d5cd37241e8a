//! Storage and access model shared by every other module.
//!
//! # Memory
//!
//! A [`BitArena`] is a flat, append-only bit string. Fields are appended one
//! after another and each field is stored least-significant bit first, so a
//! value `v` of width `k` written at offset `o` occupies bits `o..o+k` with
//! bit `o` holding `v & 1`.
//!
//! # Probes
//!
//! Reads go through [`read_word`], which returns the raw `w`-bit window at an
//! arbitrary bit offset and charges exactly one probe. Decoders do their own
//! field arithmetic on top of it via [`read_field`]: a field of width `k` costs
//! `ceil(k / w)` probes no matter where it sits, so probe counts depend only on
//! field widths and never on alignment.
//!
//! Spillover values are handed to decoders as numbers. Each time a decoder
//! consumes one it bumps `spill_reads`, so a report can charge them or not.
//!
//! # Parameters
//!
//! [`Params`] carries the word size, branching factor and depth plus the
//! regime. Strict mode insists on `w >= 7 log2 n` and `B = round(w^(1/3))`; relaxed mode
//! accepts any word size that passes the growth audit in [`Params::validate`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strict,
    Relaxed,
}

/// Which combiner packs each level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// One exact ranking per sum class; tightest space, `O(B)` probes per level.
    Enum,
    /// Per-cell mixed-radix gluing; element-local decoding.
    Probe,
}

/// Source of the separable terms that drive the partition on large levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompKind {
    /// One term per `x` row holding the floored scaled binomial.
    Rows,
    /// Rectangle approximation followed by integer quantization.
    Polynomial,
}

/// How a level picks between the small and the large construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathRule {
    /// Small iff `B log(l+1) <= w/2`.
    HalfWord,
    /// Small iff `(l+1)^B <= caps.max_s_tuples`.
    Caps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelPath {
    Small,
    Large,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Strict => "strict",
            Mode::Relaxed => "relaxed",
        })
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Enum => "enum",
            Engine::Probe => "probe",
        })
    }
}

impl fmt::Display for DecompKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecompKind::Rows => "rows",
            DecompKind::Polynomial => "polynomial",
        })
    }
}

impl fmt::Display for PathRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathRule::HalfWord => "halfword",
            PathRule::Caps => "caps",
        })
    }
}

/// Enumeration limits. Exceeding one is a configuration error naming the cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub max_s_tuples: u64,
    pub max_j_tuples: u64,
    pub max_grid: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_s_tuples: 1 << 20,
            max_j_tuples: 1 << 18,
            max_grid: 1 << 22,
        }
    }
}

/// Shape and regime of one structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: u64,
    pub w: u32,
    pub b: u32,
    pub t: u32,
    pub mode: Mode,
    pub engine: Engine,
    pub caps: Caps,
    /// Unused values notionally added to the leaf spillover domain.
    pub base_pad: BigUint,
    pub decomposition: DecompKind,
    pub path_rule: PathRule,
    /// Override for `ceil(log2(1/eps))` on large levels.
    pub eps_log2: Option<u32>,
    /// Window scale for the polynomial approximation.
    pub window_scale: f64,
}

/// What one tree level looks like before any data is encoded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub level: u32,
    pub child_len: u64,
    pub own_len: u64,
    pub path: LevelPath,
    pub growth: BigUint,
    pub sigma_child: BigUint,
    pub sigma: BigUint,
}

impl Params {
    /// Asymptotic regime: `B = round(w^(1/3))`, leaf padding `n 2^(w/2)`.
    pub fn strict(n: u64, w: u32, t: u32) -> Self {
        let b = round_cbrt(w);
        Params {
            n,
            w,
            b,
            t,
            mode: Mode::Strict,
            engine: Engine::Enum,
            caps: Caps::default(),
            base_pad: BigUint::from(n) << (w / 2),
            decomposition: DecompKind::Rows,
            path_rule: PathRule::HalfWord,
            eps_log2: None,
            window_scale: 0.35,
        }
    }

    /// Free branching factor, leaf padding `2^(w/2)`, cap-driven path choice.
    pub fn relaxed(n: u64, w: u32, b: u32, t: u32) -> Self {
        Params {
            n,
            w,
            b,
            t,
            mode: Mode::Relaxed,
            engine: Engine::Enum,
            caps: Caps::default(),
            base_pad: BigUint::one() << (w / 2),
            decomposition: DecompKind::Rows,
            path_rule: PathRule::Caps,
            eps_log2: None,
            window_scale: 0.35,
        }
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_caps(mut self, caps: Caps) -> Self {
        self.caps = caps;
        self
    }

    pub fn with_base_pad(mut self, pad: BigUint) -> Self {
        self.base_pad = pad;
        self
    }

    pub fn with_path_rule(mut self, rule: PathRule) -> Self {
        self.path_rule = rule;
        self
    }

    pub fn with_decomposition(mut self, kind: DecompKind) -> Self {
        self.decomposition = kind;
        self
    }

    /// Bits covered by one tree.
    pub fn block_len(&self) -> u64 {
        (self.b as u64).pow(self.t) * self.w as u64
    }

    pub fn block_count(&self) -> u64 {
        self.n.div_ceil(self.block_len()).max(1)
    }

    /// Memory bits of a subtree at `level` (leaves are level 0).
    pub fn memory_bits(&self, level: u32) -> u64 {
        (self.b as u64).pow(level) * self.w as u64 - self.w as u64
    }

    /// Width of one entry of the block prefix table.
    pub fn prefix_width(&self) -> u64 {
        bit_width(self.n)
    }

    pub fn level_path(&self, child_len: u64) -> LevelPath {
        let tuples = BigUint::from(child_len + 1).pow(self.b);
        let small = match self.path_rule {
            PathRule::HalfWord => tuples <= BigUint::one() << (self.w / 2),
            PathRule::Caps => tuples <= BigUint::from(self.caps.max_s_tuples),
        };
        if small {
            LevelPath::Small
        } else {
            LevelPath::Large
        }
    }

    /// Nominal growth of the spillover excess across one level.
    pub fn growth(&self, path: LevelPath, child_len: u64) -> BigUint {
        let b = BigUint::from(self.b);
        match path {
            LevelPath::Small => &b * 2u32,
            LevelPath::Large => {
                let base = &b * 34u32;
                if self.mode == Mode::Strict || self.engine == Engine::Enum {
                    return base;
                }
                let per_sum = &b * 32u32 * BigUint::from(child_len + 1);
                let lowprob = &b * &b * BigUint::from(self.w).pow(self.b) * 512u32;
                base.max(per_sum).max(lowprob)
            }
        }
    }

    /// Per-level plan with the nominal excess chain.
    pub fn level_specs(&self) -> Vec<LevelSpec> {
        let mut sigma = self.base_pad.clone();
        let mut out = Vec::with_capacity(self.t as usize);
        for level in 1..=self.t {
            let child_len = (self.b as u64).pow(level - 1) * self.w as u64;
            let path = self.level_path(child_len);
            let growth = self.growth(path, child_len);
            let next = &growth * &sigma;
            out.push(LevelSpec {
                level,
                child_len,
                own_len: child_len * self.b as u64,
                path,
                growth,
                sigma_child: sigma.clone(),
                sigma: next.clone(),
            });
            sigma = next;
        }
        out
    }

    /// Check every precondition of the chosen regime.
    pub fn validate(&self) -> Result<()> {
        if self.w < 2 || !self.w.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "word size must be even and at least 2, got {}",
                self.w
            )));
        }
        if self.b < 2 {
            return Err(Error::Parameter(format!(
                "branching factor must be at least 2, got {}",
                self.b
            )));
        }
        if self.t < 1 {
            return Err(Error::Parameter("depth must be at least 1".into()));
        }
        let block = (self.b as u64)
            .checked_pow(self.t)
            .and_then(|p| p.checked_mul(self.w as u64))
            .ok_or_else(|| Error::Parameter("B^t * w overflows".into()))?;
        if block > self.n {
            return Err(Error::Parameter(format!(
                "one tree covers B^t*w = {block} bits but n = {}",
                self.n
            )));
        }
        if self.prefix_width() > self.w as u64 {
            return Err(Error::Parameter(format!(
                "prefix entries need {} bits, more than one word",
                self.prefix_width()
            )));
        }
        match self.mode {
            Mode::Strict => {
                if BigUint::from(self.n).pow(7) > BigUint::one() << self.w {
                    return Err(Error::Parameter(format!(
                        "strict mode needs w >= 7 log2 n; w = {}, n = {}",
                        self.w, self.n
                    )));
                }
                if self.b != round_cbrt(self.w) {
                    return Err(Error::Parameter(format!(
                        "strict mode needs B = round(w^(1/3)) = {}, got {}",
                        round_cbrt(self.w),
                        self.b
                    )));
                }
                let pad = BigUint::from(self.n) << (self.w / 2);
                if self.base_pad != pad {
                    return Err(Error::Parameter(format!(
                        "strict mode pads the leaf domain by n 2^(w/2) = {pad}"
                    )));
                }
                if self.path_rule != PathRule::HalfWord {
                    return Err(Error::Parameter(
                        "strict mode selects level paths by the B log(l+1) <= w/2 rule".into(),
                    ));
                }
            }
            Mode::Relaxed => {
                let top = self
                    .level_specs()
                    .last()
                    .map(|s| s.sigma.clone())
                    .unwrap_or_default();
                if top > BigUint::one() << self.w {
                    let hint = relaxed_w_min(self)
                        .map(|w| format!("smallest passing w with default padding is {w}"))
                        .unwrap_or_else(|| "no passing w below 1024".into());
                    return Err(Error::Parameter(format!(
                        "growth audit fails: nominal top excess {top} exceeds 2^w; {hint}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Smallest even word size passing the relaxed growth audit with the default
/// `2^(w/2)` padding, everything else held fixed.
pub fn relaxed_w_min(p: &Params) -> Option<u32> {
    (2..=1024).step_by(2).find(|&w| {
        let mut q = p.clone();
        q.w = w;
        q.base_pad = BigUint::one() << (w / 2);
        let top = q
            .level_specs()
            .last()
            .map(|s| s.sigma.clone())
            .unwrap_or_default();
        top <= BigUint::one() << w
    })
}

/// `round(w^(1/3))`, computed exactly: `B` is the unique integer with
/// `(2B-1)^3 <= 8w < (2B+1)^3`.
pub fn round_cbrt(w: u32) -> u32 {
    let target = 8u64 * w as u64;
    let mut b = 0u32;
    while (2 * b as u64 + 1).pow(3) <= target {
        b += 1;
    }
    b
}

/// Bits needed to write any value in `0..=x`.
pub fn bit_width(x: u64) -> u64 {
    (64 - x.leading_zeros()) as u64
}

/// `ceil(log2(k))` for `k >= 1`: the width of a field holding a value in `[k]`.
pub fn domain_width(k: &BigUint) -> u64 {
    if k.is_zero() || k.is_one() {
        return 0;
    }
    (k - 1u32).bits()
}

/// Flat bit memory of one encoded structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitArena {
    w: u32,
    words: Vec<u64>,
    len: u64,
}

impl BitArena {
    pub fn new(w: u32) -> Self {
        BitArena {
            w,
            words: Vec::new(),
            len: 0,
        }
    }

    pub fn word_size(&self) -> u32 {
        self.w
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Append `value` as a `width`-bit field; returns the field's offset.
    pub fn append_bits(&mut self, value: &BigUint, width: u64) -> Result<u64> {
        if value.bits() > width {
            return Err(Error::Encoding(format!(
                "value needs {} bits but the field is {width} wide",
                value.bits()
            )));
        }
        let start = self.len;
        let digits = value.to_u64_digits();
        let mut left = width;
        let mut i = 0;
        while left > 0 {
            let take = left.min(64);
            let chunk = digits.get(i).copied().unwrap_or(0);
            self.push_u64(chunk, take);
            left -= take;
            i += 1;
        }
        Ok(start)
    }

    /// Append the low `width` (at most 64) bits of `value`.
    pub fn append_u64(&mut self, value: u64, width: u64) -> Result<u64> {
        if width < 64 && value >> width != 0 {
            return Err(Error::Encoding(format!(
                "value {value} does not fit {width} bits"
            )));
        }
        let start = self.len;
        self.push_u64(value, width);
        Ok(start)
    }

    fn push_u64(&mut self, value: u64, width: u64) {
        if width == 0 {
            return;
        }
        let bit = (self.len % 64) as u32;
        if bit == 0 {
            self.words.push(0);
        }
        let last = self.words.len() - 1;
        self.words[last] |= value << bit;
        let room = 64 - bit as u64;
        if width > room {
            self.words.push(value >> room);
        }
        self.len += width;
        let needed = self.len.div_ceil(64) as usize;
        self.words.truncate(needed);
        if let Some(top) = self.words.last_mut() {
            let used = self.len % 64;
            if used != 0 {
                *top &= (1u64 << used) - 1;
            }
        }
    }

    /// Append another arena's bits.
    pub fn extend_from(&mut self, other: &BitArena) {
        let mut left = other.len;
        let mut i = 0;
        while left > 0 {
            let take = left.min(64);
            self.push_u64(other.words[i], take);
            left -= take;
            i += 1;
        }
    }

    /// Up to 64 bits at `offset`, unmetered.
    pub fn peek_u64(&self, offset: u64, width: u64) -> u64 {
        debug_assert!(width <= 64 && offset + width <= self.len);
        if width == 0 {
            return 0;
        }
        let idx = (offset / 64) as usize;
        let bit = (offset % 64) as u32;
        let mut v = self.words[idx] >> bit;
        if bit != 0 && (64 - bit as u64) < width {
            v |= self.words[idx + 1] << (64 - bit);
        }
        if width < 64 {
            v &= (1u64 << width) - 1;
        }
        v
    }

    /// Bits `offset..offset+width` as a number, unmetered. Used by the
    /// builder and the serializer, never by query paths.
    pub fn peek(&self, offset: u64, width: u64) -> Result<BigUint> {
        if offset.checked_add(width).is_none_or(|end| end > self.len) {
            return Err(Error::Range(format!(
                "bits {offset}..{} outside arena of {} bits",
                offset.saturating_add(width),
                self.len
            )));
        }
        let mut digits = Vec::with_capacity(width.div_ceil(64) as usize);
        let mut pos = offset;
        let end = offset + width;
        while pos < end {
            let take = (end - pos).min(64);
            digits.push(self.peek_u64(pos, take));
            pos += take;
        }
        Ok(biguint_from_u64_digits(&digits))
    }

    pub fn bit(&self, i: u64) -> bool {
        (self.words[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    /// Bytes, 8 bits per byte, least significant bit first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len.div_ceil(8) as usize);
        for word in &self.words {
            out.extend_from_slice(&word.to_le_bytes());
        }
        out.truncate(self.len.div_ceil(8) as usize);
        out
    }

    pub fn from_bytes(w: u32, bytes: &[u8], len: u64) -> Result<Self> {
        if (bytes.len() as u64) < len.div_ceil(8) {
            return Err(Error::Format(format!(
                "{} bytes cannot hold {len} bits",
                bytes.len()
            )));
        }
        let mut arena = BitArena::new(w);
        let mut left = len;
        for chunk in bytes.chunks(8) {
            if left == 0 {
                break;
            }
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            let take = left.min(64);
            let mut v = u64::from_le_bytes(buf);
            if take < 64 {
                v &= (1u64 << take) - 1;
            }
            arena.push_u64(v, take);
            left -= take;
        }
        Ok(arena)
    }
}

pub(crate) fn biguint_from_u64_digits(digits: &[u64]) -> BigUint {
    let mut u32s = Vec::with_capacity(digits.len() * 2);
    for d in digits {
        u32s.push(*d as u32);
        u32s.push((*d >> 32) as u32);
    }
    BigUint::new(u32s)
}

/// Probe counters for one query.
#[derive(Clone, Debug, Default)]
pub struct ProbeMeter {
    pub word_reads: u64,
    pub spill_reads: u64,
    trace: Option<Vec<(u64, u64)>>,
}

/// Snapshot of a [`ProbeMeter`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterReport {
    pub word_reads: u64,
    pub spill_reads: u64,
}

impl ProbeMeter {
    pub fn new() -> Self {
        Self::default()
    }

    /// A meter that also records every field touched through a [`MemView`].
    pub fn tracing() -> Self {
        ProbeMeter {
            trace: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn reset(&mut self) {
        self.word_reads = 0;
        self.spill_reads = 0;
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
    }

    pub fn charge_spill(&mut self) {
        self.spill_reads += 1;
    }

    /// `(offset, width)` of each field read, relative to its view.
    pub fn touched(&self) -> &[(u64, u64)] {
        self.trace.as_deref().unwrap_or(&[])
    }

    fn record(&mut self, offset: u64, width: u64) {
        if let Some(t) = self.trace.as_mut() {
            t.push((offset, width));
        }
    }
}

pub fn meter_report(meter: &ProbeMeter) -> MeterReport {
    MeterReport {
        word_reads: meter.word_reads,
        spill_reads: meter.spill_reads,
    }
}

/// The `w`-bit window starting at `offset`. Costs one probe.
pub fn read_word(arena: &BitArena, offset: u64, meter: &mut ProbeMeter) -> Result<BigUint> {
    let w = arena.w as u64;
    if offset.checked_add(w).is_none_or(|end| end > arena.len) {
        return Err(Error::Range(format!(
            "word at bit {offset} runs past arena end {}",
            arena.len
        )));
    }
    meter.word_reads += 1;
    arena.peek(offset, w)
}

/// A field of arbitrary width, read one `w`-bit window at a time.
///
/// Windows that would run past the end of the arena are slid back so they
/// end at the last bit; each window still costs exactly one probe.
pub fn read_field(
    arena: &BitArena,
    offset: u64,
    width: u64,
    meter: &mut ProbeMeter,
) -> Result<BigUint> {
    if width == 0 {
        return Ok(BigUint::zero());
    }
    let w = arena.w as u64;
    if offset.checked_add(width).is_none_or(|end| end > arena.len) || arena.len < w {
        return Err(Error::Range(format!(
            "field {offset}..{} outside arena of {} bits",
            offset.saturating_add(width),
            arena.len
        )));
    }
    let mut value = BigUint::zero();
    let mut done = 0u64;
    while done < width {
        let take = (width - done).min(w);
        let want = offset + done;
        let start = want.min(arena.len - w);
        let window = read_word(arena, start, meter)?;
        let part = (window >> (want - start)) & ((BigUint::one() << take) - 1u32);
        value |= part << done;
        done += take;
    }
    Ok(value)
}

/// A memory region handed to one decoder.
#[derive(Clone, Copy, Debug)]
pub struct MemView<'a> {
    pub arena: &'a BitArena,
    pub base: u64,
    pub len: u64,
}

impl<'a> MemView<'a> {
    pub fn new(arena: &'a BitArena, base: u64, len: u64) -> Self {
        MemView { arena, base, len }
    }

    pub fn sub(&self, offset: u64, len: u64) -> MemView<'a> {
        MemView {
            arena: self.arena,
            base: self.base + offset,
            len,
        }
    }

    pub fn read(&self, offset: u64, width: u64, meter: &mut ProbeMeter) -> Result<BigUint> {
        if offset + width > self.len {
            return Err(Error::Range(format!(
                "field {offset}..{} outside view of {} bits",
                offset + width,
                self.len
            )));
        }
        meter.record(offset, width);
        read_field(self.arena, self.base + offset, width, meter)
    }
}

/// A spillover together with its domain size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpilloverValue {
    pub k: BigUint,
    pub size: BigUint,
}

impl SpilloverValue {
    pub fn new(k: BigUint, size: BigUint) -> Result<Self> {
        if k >= size {
            return Err(Error::Range(format!("spillover {k} outside [{size}]")));
        }
        Ok(SpilloverValue { k, size })
    }
}

/// Pack bits 8 per byte, least significant first.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], n: u64) -> Result<Vec<bool>> {
    if (bytes.len() as u64) * 8 < n {
        return Err(Error::Format(format!(
            "{} bytes hold fewer than n = {n} bits",
            bytes.len()
        )));
    }
    Ok((0..n as usize)
        .map(|i| (bytes[i / 8] >> (i % 8)) & 1 == 1)
        .collect())
}

/// Sidecar holding the `n=<int>` header of a bit file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

fn is_hex_path(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("hex"))
}

/// Read a bit array: raw packed bytes, or hex text when the name ends in
/// `.hex`. The length comes from the sidecar header.
pub fn read_bit_file(path: &Path) -> Result<Vec<bool>> {
    let header = fs::read_to_string(sidecar_path(path)).map_err(|e| {
        Error::Usage(format!(
            "missing sidecar {}: {e}",
            sidecar_path(path).display()
        ))
    })?;
    let n = parse_header(&header)?;
    let bytes = if is_hex_path(path) {
        let text = fs::read_to_string(path)?;
        decode_hex(&text)?
    } else {
        fs::read(path)?
    };
    unpack_bits(&bytes, n)
}

pub fn write_bit_file(path: &Path, bits: &[bool]) -> Result<()> {
    let bytes = pack_bits(bits);
    if is_hex_path(path) {
        let text: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        fs::write(path, text + "\n")?;
    } else {
        fs::write(path, bytes)?;
    }
    fs::write(sidecar_path(path), format!("n={}\n", bits.len()))?;
    Ok(())
}

fn parse_header(text: &str) -> Result<u64> {
    for line in text.lines() {
        if let Some(v) = line.trim().strip_prefix("n=") {
            return v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad length header {line:?}")));
        }
    }
    Err(Error::Format("sidecar has no n=<int> line".into()))
}

fn decode_hex(text: &str) -> Result<Vec<u8>> {
    let digits: Vec<u8> = text.bytes().filter(|c| !c.is_ascii_whitespace()).collect();
    if !digits.len().is_multiple_of(2) {
        return Err(Error::Format("odd number of hex digits".into()));
    }
    digits
        .chunks(2)
        .map(|pair| {
            let s = std::str::from_utf8(pair).map_err(|_| Error::Format("bad hex".into()))?;
            u8::from_str_radix(s, 16).map_err(|_| Error::Format(format!("bad hex byte {s:?}")))
        })
        .collect()
}

/// Lossless conversion for counters that are known to be small.
pub(crate) fn to_u64(x: &BigUint, what: &str) -> Result<u64> {
    x.to_u64()
        .ok_or_else(|| Error::Range(format!("{what} = {x} does not fit 64 bits")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arena_of(bits: &[bool], w: u32) -> BitArena {
        let mut a = BitArena::new(w);
        for &b in bits {
            a.append_u64(b as u64, 1).unwrap();
        }
        a
    }

    #[test]
    fn zero_word_reads_zero_and_counts_one_probe() {
        let a = arena_of(&[false; 8], 8);
        let mut m = ProbeMeter::new();
        assert_eq!(read_word(&a, 0, &mut m).unwrap(), BigUint::zero());
        assert_eq!(
            meter_report(&m),
            MeterReport {
                word_reads: 1,
                spill_reads: 0
            }
        );
    }

    #[test]
    fn all_ones_word() {
        let a = arena_of(&[true; 70], 70);
        let mut m = ProbeMeter::new();
        let v = read_word(&a, 0, &mut m).unwrap();
        assert_eq!(v, (BigUint::one() << 70) - 1u32);
    }

    #[test]
    fn straddling_window_matches_bit_slice() {
        let mut a = BitArena::new(8);
        for _ in 0..4 {
            a.append_u64(0xA5, 8).unwrap();
        }
        let mut m = ProbeMeter::new();
        let v = read_word(&a, 4, &mut m).unwrap();
        // bit-slice oracle over the raw string
        let raw: Vec<bool> = (0..32).map(|i| (0xA5u32 >> (i % 8)) & 1 == 1).collect();
        let oracle: u32 = (0..8).map(|j| (raw[4 + j] as u32) << j).sum();
        assert_eq!(v, BigUint::from(oracle));
        assert_eq!(oracle, 0x5A);
    }

    #[test]
    fn out_of_range_word_is_an_error() {
        let a = arena_of(&[true; 8], 8);
        let mut m = ProbeMeter::new();
        assert!(matches!(read_word(&a, 1, &mut m), Err(Error::Range(_))));
        assert_eq!(m.word_reads, 0);
    }

    #[test]
    fn append_round_trip_and_empty_field() {
        let mut a = BitArena::new(8);
        let off = a.append_bits(&BigUint::from(5u32), 3).unwrap();
        assert_eq!(a.peek(off, 3).unwrap(), BigUint::from(5u32));
        let before = a.len();
        assert_eq!(a.append_bits(&BigUint::zero(), 0).unwrap(), before);
        assert_eq!(a.len(), before);
        assert!(a.append_bits(&BigUint::from(8u32), 3).is_err());
    }

    #[test]
    fn random_append_sequences_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut a = BitArena::new(16);
            let mut fields = Vec::new();
            for _ in 0..rng.gen_range(1..20) {
                let width = [3u64, 5, 9, 64, 65, 130][rng.gen_range(0..6)];
                let digits: Vec<u64> = (0..width.div_ceil(64)).map(|_| rng.gen()).collect();
                let v = biguint_from_u64_digits(&digits) & ((BigUint::one() << width) - 1u32);
                let off = a.append_bits(&v, width).unwrap();
                fields.push((off, width, v));
            }
            let mut pos = 0;
            for (off, width, v) in &fields {
                assert_eq!(*off, pos);
                assert_eq!(&a.peek(*off, *width).unwrap(), v);
                pos += width;
            }
        }
    }

    #[test]
    fn field_cost_depends_only_on_width() {
        let mut a = BitArena::new(8);
        for i in 0..10u64 {
            a.append_u64(i * 17 % 256, 8).unwrap();
        }
        for off in 0..(80 - 12) {
            let mut m = ProbeMeter::new();
            let v = read_field(&a, off, 12, &mut m).unwrap();
            assert_eq!(v, a.peek(off, 12).unwrap());
            assert_eq!(m.word_reads, 2);
        }
        let mut m = ProbeMeter::new();
        assert_eq!(
            read_field(&a, 76, 4, &mut m).unwrap(),
            a.peek(76, 4).unwrap()
        );
        assert_eq!(m.word_reads, 1);
    }

    #[test]
    fn bytes_round_trip() {
        let mut a = BitArena::new(8);
        a.append_u64(0x1234_5678_9abc, 47).unwrap();
        a.append_u64(3, 2).unwrap();
        let b = BitArena::from_bytes(8, &a.to_bytes(), a.len()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cube_root_rounding() {
        assert_eq!(round_cbrt(56), 4);
        assert_eq!(round_cbrt(64), 4);
        assert_eq!(round_cbrt(16), 3);
        assert_eq!(round_cbrt(8), 2);
        assert_eq!(round_cbrt(91), 4);
        assert_eq!(round_cbrt(92), 5);
    }

    #[test]
    fn strict_params_need_large_word_size() {
        assert!(Params::strict(224, 56, 1).validate().is_ok());
        assert!(Params::strict(1024, 56, 1).validate().is_err());
        let mut p = Params::strict(224, 56, 1);
        p.b = 3;
        assert!(p.validate().is_err());
    }

    #[test]
    fn relaxed_growth_audit() {
        let p = Params::relaxed(64, 16, 2, 2);
        p.validate().unwrap();
        let specs = p.level_specs();
        assert_eq!(specs[1].sigma, BigUint::from(256u32 * 16));
        let mut big = Params::relaxed(64, 16, 2, 2);
        big.base_pad = BigUint::one() << 14;
        assert!(big.validate().is_err());
        assert_eq!(relaxed_w_min(&p), Some(8));
    }

    #[test]
    fn bit_files_round_trip() {
        let dir = std::env::temp_dir().join(format!("spillrank-model-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let bits: Vec<bool> = (0..77).map(|i| i % 3 == 0).collect();
        for name in ["a.bits", "a.hex"] {
            let p = dir.join(name);
            write_bit_file(&p, &bits).unwrap();
            assert_eq!(read_bit_file(&p).unwrap(), bits);
        }
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn spillover_value_bounds() {
        assert!(SpilloverValue::new(BigUint::from(3u32), BigUint::from(3u32)).is_err());
        assert!(SpilloverValue::new(BigUint::from(2u32), BigUint::from(3u32)).is_ok());
    }
}
