//! Tuples from mixed domains stored in `m` bits plus a small spillover.
//!
//! # Construction
//!
//! Adjacent domains are merged left to right while the running product stays
//! at most `2^(6w)`. Every merged element but the last is split into a high
//! digit `u` and a low carry `v`; the carry of element `g` rides along with
//! the high digit of element `g+1`:
//!
//! ```text
//! z_0 = u_0
//! z_g = v_(g-1) * U_g + u_g              (fixed-width memory field)
//! z_L = y_L * V_(L-1) + v_(L-1)          (low bits in memory, rest spills)
//! ```
//!
//! Decoding original coordinate `i` reads the field of its merged element and
//! the next one, never more.
//!
//! # Alignment
//!
//! [`sum_align`] lays out keyed code intervals so each key starts at a
//! multiple of `2^low`; the high part of a codeword then names its key.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BitArena, MemView, ProbeMeter};

/// Digit maps of one mixed-radix code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RadixPlan {
    pub w: u32,
    pub m: u64,
    pub original_domains: Vec<BigUint>,
    pub merged_domains: Vec<BigUint>,
    /// Merged element holding each original coordinate.
    pub group_of: Vec<usize>,
    /// Product of the earlier domains inside the same merged element.
    pub scale: Vec<BigUint>,
    pub digit_widths: Vec<u64>,
    pub unit_sizes: Vec<BigUint>,
    /// `carry_sizes[0] = 1`, `carry_sizes[g+1]` is the carry range of element `g`.
    pub carry_sizes: Vec<BigUint>,
    pub field_offsets: Vec<u64>,
    /// Memory bits left for the low part of the final element.
    pub low_width: u64,
    pub k: BigUint,
}

/// Memory bits plus spillover of one encoded tuple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedTuple {
    pub memory: BigUint,
    pub m: u64,
    pub spill: BigUint,
}

impl EncodedTuple {
    /// Memory bits as an arena, padded to at least one word so windows fit.
    pub fn to_arena(&self, w: u32) -> BitArena {
        let mut a = BitArena::new(w);
        a.append_bits(&self.memory, self.m)
            .expect("memory fits its width");
        if a.len() < w as u64 {
            let pad = w as u64 - a.len();
            a.append_bits(&BigUint::zero(), pad).expect("zero pad");
        }
        a
    }
}

fn floor_log2(x: &BigUint) -> u64 {
    x.bits() - 1
}

/// `floor(log2(v) + 1.5 w)`, exact for every `w`.
fn digit_width(v: &BigUint, w: u32) -> u64 {
    (floor_log2(&(v * v)) + 3 * w as u64) / 2
}

impl RadixPlan {
    pub fn merged_count(&self) -> usize {
        self.merged_domains.len()
    }

    pub fn last(&self) -> usize {
        self.merged_domains.len() - 1
    }

    /// Whether `K <= ceil(prod M / 2^m) + 1`.
    pub fn within_bound(&self) -> bool {
        self.k <= self.bound()
    }

    pub fn bound(&self) -> BigUint {
        let prod: BigUint = self.original_domains.iter().product();
        ceil_shr(&prod, self.m) + 1u32
    }

    fn low_offset(&self) -> u64 {
        self.m - self.low_width
    }

    fn vprev(&self, g: usize) -> &BigUint {
        &self.carry_sizes[g]
    }
}

pub(crate) fn ceil_shr(x: &BigUint, s: u64) -> BigUint {
    let q = x >> s;
    if (&q << s) == *x {
        q
    } else {
        q + 1u32
    }
}

/// Plan a code for `domains` using `m` memory bits and word size `w`.
pub fn plan_radix(domains: &[BigUint], m: u64, w: u32) -> Result<RadixPlan> {
    let prod: BigUint = domains.iter().product();
    if domains.iter().any(|d| d.is_zero()) {
        return Err(Error::Parameter("radix domain of size 0".into()));
    }
    if prod > BigUint::one() << (m + w as u64) {
        return Err(Error::Parameter(format!(
            "memory budget m = {m} is below sum(log M) - w for a product of {} bits",
            prod.bits()
        )));
    }
    plan_radix_unchecked(domains, m, w)
}

/// As [`plan_radix`] but accepts any budget; the spillover absorbs the excess.
pub(crate) fn plan_radix_unchecked(domains: &[BigUint], m: u64, w: u32) -> Result<RadixPlan> {
    if domains.is_empty() {
        return Err(Error::Parameter(
            "radix plan needs at least one domain".into(),
        ));
    }
    if domains.iter().any(|d| d.is_zero()) {
        return Err(Error::Parameter("radix domain of size 0".into()));
    }
    let cap = BigUint::one() << (6 * w as u64);
    let mut merged: Vec<BigUint> = Vec::new();
    let mut group_of = Vec::with_capacity(domains.len());
    let mut scale = Vec::with_capacity(domains.len());
    for d in domains {
        match merged.last_mut() {
            Some(cur) if (&*cur * d) <= cap => {
                scale.push(cur.clone());
                *cur *= d;
            }
            _ => {
                merged.push(d.clone());
                scale.push(BigUint::one());
            }
        }
        group_of.push(merged.len() - 1);
    }
    let last = merged.len() - 1;
    let mut widths = Vec::with_capacity(last);
    let mut units = Vec::with_capacity(last);
    let mut carries = vec![BigUint::one()];
    let mut offsets = Vec::with_capacity(last);
    let mut used = 0u64;
    for n_g in merged.iter().take(last) {
        let vprev = carries.last().unwrap().clone();
        let width = digit_width(&vprev, w);
        let unit = (BigUint::one() << width) / &vprev;
        let carry = n_g.div_ceil(&unit);
        offsets.push(used);
        used += width;
        widths.push(width);
        units.push(unit);
        carries.push(carry);
    }
    if used > m {
        return Err(Error::Parameter(format!(
            "digit fields need {used} bits but only m = {m} are available"
        )));
    }
    let low_width = m - used;
    let top = &merged[last] * &carries[last];
    let k = ceil_shr(&top, low_width);
    Ok(RadixPlan {
        w,
        m,
        original_domains: domains.to_vec(),
        merged_domains: merged,
        group_of,
        scale,
        digit_widths: widths,
        unit_sizes: units,
        carry_sizes: carries,
        field_offsets: offsets,
        low_width,
        k,
    })
}

/// Encode `tuple` under `plan`.
pub fn radix_encode(plan: &RadixPlan, tuple: &[BigUint]) -> Result<EncodedTuple> {
    if tuple.len() != plan.original_domains.len() {
        return Err(Error::Encoding(format!(
            "tuple has {} coordinates, plan expects {}",
            tuple.len(),
            plan.original_domains.len()
        )));
    }
    let mut ys = vec![BigUint::zero(); plan.merged_count()];
    for (i, t) in tuple.iter().enumerate() {
        if t >= &plan.original_domains[i] {
            return Err(Error::Encoding(format!(
                "coordinate {i} = {t} outside domain {}",
                plan.original_domains[i]
            )));
        }
        ys[plan.group_of[i]] += t * &plan.scale[i];
    }
    let last = plan.last();
    let mut memory = BigUint::zero();
    let mut carry = BigUint::zero();
    for (g, y) in ys.iter().enumerate().take(last) {
        let (u, v) = y.div_rem(&plan.carry_sizes[g + 1]);
        let z = &carry * &plan.unit_sizes[g] + u;
        memory |= z << plan.field_offsets[g];
        carry = v;
    }
    let z_last = &ys[last] * plan.vprev(last) + carry;
    let mask = (BigUint::one() << plan.low_width) - 1u32;
    memory |= (&z_last & mask) << plan.low_offset();
    let spill = z_last >> plan.low_width;
    Ok(EncodedTuple {
        memory,
        m: plan.m,
        spill,
    })
}

fn read_last(
    plan: &RadixPlan,
    mem: &MemView,
    spill: &BigUint,
    meter: &mut ProbeMeter,
) -> Result<BigUint> {
    meter.charge_spill();
    let low = mem.read(plan.low_offset(), plan.low_width, meter)?;
    Ok((spill << plan.low_width) | low)
}

fn read_digit(
    plan: &RadixPlan,
    mem: &MemView,
    g: usize,
    meter: &mut ProbeMeter,
) -> Result<BigUint> {
    let z = mem.read(plan.field_offsets[g], plan.digit_widths[g], meter)?;
    if z >= plan.vprev(g) * &plan.unit_sizes[g] {
        return Err(Error::Integrity(format!(
            "digit field {g} holds {z}, above its radix"
        )));
    }
    Ok(z)
}

/// Merged element `g` of the tuple stored in `mem` with spillover `spill`.
pub fn radix_decode_merged(
    plan: &RadixPlan,
    mem: &MemView,
    spill: &BigUint,
    g: usize,
    meter: &mut ProbeMeter,
) -> Result<BigUint> {
    let last = plan.last();
    let y = if g == last {
        let z = read_last(plan, mem, spill, meter)?;
        z / plan.vprev(last)
    } else {
        let u = read_digit(plan, mem, g, meter)? % &plan.unit_sizes[g];
        let v = if g + 1 == last {
            read_last(plan, mem, spill, meter)? % plan.vprev(last)
        } else {
            read_digit(plan, mem, g + 1, meter)? / &plan.unit_sizes[g + 1]
        };
        u * &plan.carry_sizes[g + 1] + v
    };
    if y >= plan.merged_domains[g] {
        return Err(Error::Integrity(format!(
            "merged element {g} decodes to {y}, outside {}",
            plan.merged_domains[g]
        )));
    }
    Ok(y)
}

/// Original coordinate `i` of the tuple stored in `mem` with spillover `spill`.
pub fn radix_decode_element(
    plan: &RadixPlan,
    mem: &MemView,
    spill: &BigUint,
    i: usize,
    meter: &mut ProbeMeter,
) -> Result<BigUint> {
    if i >= plan.original_domains.len() {
        return Err(Error::Range(format!("coordinate {i} outside the plan")));
    }
    let y = radix_decode_merged(plan, mem, spill, plan.group_of[i], meter)?;
    Ok((y / &plan.scale[i]) % &plan.original_domains[i])
}

/// Decode coordinate `i` straight from an [`EncodedTuple`].
pub fn decode_from(
    plan: &RadixPlan,
    enc: &EncodedTuple,
    i: usize,
    meter: &mut ProbeMeter,
) -> Result<BigUint> {
    let arena = enc.to_arena(plan.w);
    let view = MemView::new(&arena, 0, plan.m);
    radix_decode_element(plan, &view, &enc.spill, i, meter)
}

/// Keyed intervals aligned to multiples of `2^low_width`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AlignedLayout {
    pub low_width: u64,
    /// Start of each key in high units; one extra entry holds the total.
    pub starts: Vec<BigUint>,
}

impl AlignedLayout {
    /// Size of the high part, `K'`.
    pub fn total(&self) -> &BigUint {
        self.starts.last().expect("layout has a total")
    }

    pub fn keys(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn start(&self, key: usize) -> &BigUint {
        &self.starts[key]
    }

    pub fn width(&self, key: usize) -> BigUint {
        &self.starts[key + 1] - &self.starts[key]
    }

    /// Key owning high part `high`, by binary search.
    pub fn key_of_high(&self, high: &BigUint) -> Option<usize> {
        if high >= self.total() {
            return None;
        }
        let p = self.starts[..self.keys()].partition_point(|s| s <= high);
        Some(p - 1)
    }

    pub fn key_of_code(&self, code: &BigUint) -> Option<usize> {
        self.key_of_high(&(code >> self.low_width))
    }
}

/// Align keyed counts so every key's interval starts at a multiple of
/// `2^low_width` and spans `ceil(count / 2^low_width)` high units.
pub fn sum_align(counts: &[BigUint], low_width: u64) -> AlignedLayout {
    let mut starts = Vec::with_capacity(counts.len() + 1);
    let mut acc = BigUint::zero();
    for c in counts {
        starts.push(acc.clone());
        acc += ceil_shr(c, low_width);
    }
    starts.push(acc);
    AlignedLayout { low_width, starts }
}
