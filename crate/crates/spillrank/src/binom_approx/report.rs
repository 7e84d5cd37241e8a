//! Exhaustive grid checks for the three approximation objects.
//!
//! Every comparison is exact. Floats appear only in the `stats` fields.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use super::integer::{IntegerDecomp, TermMode};
use super::local::{budget_need, LocalApprox};
use super::rect::RectDecomp;
use crate::binomial::binom;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub pass: bool,
    /// First failing grid point or index.
    pub witness: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertReport {
    pub object: String,
    pub params: Value,
    pub checks: Vec<CheckResult>,
    pub stats: Value,
}

impl CertReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check == name)
    }

    fn push(&mut self, check: &str, witness: Option<String>) {
        self.checks.push(CheckResult {
            check: check.to_string(),
            pass: witness.is_none(),
            witness,
        });
    }
}

pub enum Decomp<'a> {
    Local(&'a LocalApprox),
    Rect(&'a RectDecomp),
    Integer(&'a IntegerDecomp),
}

pub fn verify_decomp(obj: Decomp<'_>) -> CertReport {
    match obj {
        Decomp::Local(la) => verify_local(la),
        Decomp::Rect(rd) => verify_rect(rd),
        Decomp::Integer(id) => verify_integer(id),
    }
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn verify_local(la: &LocalApprox) -> CertReport {
    let mut rep = CertReport {
        object: "local".into(),
        params: json!({"l": la.l, "anchor": la.anchor, "d": la.d, "window": la.window, "eps_log2": la.eps_log2}),
        checks: Vec::new(),
        stats: Value::Null,
    };
    let count = la.products.len() as u64;
    rep.push(
        "product count",
        (count > la.product_bound()).then(|| format!("{count} > {}", la.product_bound())),
    );
    let width = la.window as usize + 1;
    let shape = la
        .products
        .iter()
        .position(|p| p.q.len() != width || p.r.len() != width);
    rep.push("nonnegative factors", shape.map(|i| format!("product {i}")));
    let mut ident = None;
    'outer: for x in 0..width {
        for y in 0..width {
            let s: BigUint = la.products.iter().map(|p| &p.q[x] * &p.r[y]).sum();
            if BigInt::from(s) != la.num_at((x + y) as i64) * 2 {
                ident = Some(format!("x={x} y={y}"));
                break 'outer;
            }
        }
    }
    rep.push("product identity", ident);
    let need = budget_need(&la.num, la.window);
    let c0 = la.num.first().cloned().unwrap_or_default();
    rep.push(
        "constant-term budget",
        (need > c0).then(|| format!("need {need} > {c0}")),
    );
    rep.push(
        "sandwich",
        la.sandwich_witness().map(|t| format!("x+y={t}")),
    );
    let p0 = to_f64(&la.poly.coeff(0));
    rep.stats = json!({
        "products": count,
        "degree": la.poly.degree(),
        "p0": p0,
        "max_rel_dev": la.max_rel_dev(),
        "eps": to_f64(&la.eps()),
    });
    rep
}

pub fn verify_rect(rd: &RectDecomp) -> CertReport {
    let mut rep = CertReport {
        object: "rect".into(),
        params: json!({"l": rd.l, "mx": rd.mx, "my": rd.my, "eps_log2": rd.eps_log2, "d": rd.d, "window": rd.window}),
        checks: Vec::new(),
        stats: Value::Null,
    };
    let local_fail = rd
        .approx
        .iter()
        .find(|(_, la)| !verify_local(la).pass())
        .map(|(a, _)| format!("anchor {a}"));
    rep.push("local approximations", local_fail);

    let mut range = None;
    let mut seen = std::collections::BTreeSet::new();
    'rects: for (k, rect) in rd.rects.iter().enumerate() {
        if rd.local(rect).is_none() || !seen.insert(rect.shape_key()) {
            continue;
        }
        let caps: Vec<BigUint> = (rect.ax..=rect.bx)
            .map(|x| {
                let (n, d) = rd.q_frame(rect, x);
                d / n
            })
            .collect();
        for i in 0..rect.scale.len() {
            if rect.scale[i].is_zero() {
                continue;
            }
            for y in rect.ay..=rect.by {
                let (n, d) = rd.r_tilde(rect, i, y);
                if n > d {
                    range = Some(format!("square {k} product {i} y={y}"));
                    break 'rects;
                }
            }
            let la = rd.local(rect).expect("approximated square");
            for (x, cap) in (rect.ax..=rect.bx).zip(&caps) {
                let q = &la.products[i].q[rect.local_x(x) as usize];
                if &(q * &rect.scale[i]) > cap {
                    range = Some(format!("square {k} product {i} x={x}"));
                    break 'rects;
                }
            }
        }
    }
    rep.push("factor range", range);

    // Row masses are first bounded with dyadic upper bounds at precision
    // 2^-(l + GUARD); only a row that fails the bound is summed exactly.
    const GUARD: u64 = 64;
    let eps = rd.eps();
    let prec = rd.l + GUARD;
    let mut neg = None;
    let mut row = None;
    let mut max_row = BigInt::zero();
    let mut min_e = None::<BigInt>;
    let mut cache: std::collections::HashMap<(i64, u64), (bool, BigInt)> =
        std::collections::HashMap::new();
    let row_cap = BigInt::one() << (prec - u64::from(rd.eps_log2));
    for x in -rd.mx..=rd.mx {
        let mut mass = BigInt::zero();
        for y in -rd.my..=rd.my {
            let target = rd.target(x, y);
            let t_scaled = target.numer() * (BigInt::one() << prec) / target.denom();
            let (ok, a_scaled) = match rd.rect_of(x, y) {
                Some(rect) if !rect.skipped => {
                    let t = rect.local_x(x) + rect.local_y(y);
                    cache
                        .entry((rect.anchor, t))
                        .or_insert_with(|| {
                            let (n, d) = rd.approx_parts(x, y);
                            let ok = &n * target.denom() <= target.numer() * &d;
                            (ok, (n << prec) / d)
                        })
                        .clone()
                }
                _ => (true, BigInt::zero()),
            };
            if neg.is_none() && !ok {
                neg = Some(format!("x={x} y={y}"));
            }
            let e = t_scaled - a_scaled;
            if min_e.as_ref().is_none_or(|m| &e < m) {
                min_e = Some(e.clone());
            }
            mass += e;
        }
        if row.is_none() && mass > row_cap {
            let exact: BigRational = (-rd.my..=rd.my).map(|y| rd.residual(x, y)).sum();
            if exact > eps {
                row = Some(format!("x={x}"));
            }
        }
        if mass > max_row {
            max_row = mass;
        }
    }
    let unit = BigInt::one() << prec;
    let max_row = BigRational::new(max_row, unit.clone());
    let min_e = min_e.map(|m| BigRational::new(m, unit));
    rep.push("residual nonnegative", neg);
    rep.push("row residual mass", row);
    let budget = rd.term_budget();
    rep.push(
        "product count",
        (rd.r > budget).then(|| format!("{} > {budget}", rd.r)),
    );
    rep.stats = json!({
        "r": rd.r,
        "term_budget": budget,
        "squares": rd.rects.len(),
        "skipped": rd.skipped,
        "anchors": rd.approx.len(),
        "max_row_mass": to_f64(&max_row),
        "min_residual": min_e.as_ref().map(to_f64),
        "eps": to_f64(&eps),
    });
    rep
}

pub fn verify_integer(id: &IntegerDecomp) -> CertReport {
    let mut rep = CertReport {
        object: "integer".into(),
        params: json!({"l": id.l, "w": id.w, "mode": id.mode, "mx": id.mx, "my": id.my, "eps_log2": id.eps_log2}),
        checks: Vec::new(),
        stats: Value::Null,
    };
    let full = BigInt::one() << id.w;
    let scale = BigInt::one() << id.l;
    let row_bound = (BigInt::one() << (id.l + u64::from(id.w)))
        .checked_div(&(BigInt::one() << id.eps_log2))
        .unwrap_or_default()
        + BigInt::from(4 * id.r)
            * BigInt::from(id.my)
            * (BigInt::one() << (u64::from(id.w / 2) + id.l));
    let mut neg = None;
    let mut row = None;
    let mut max_row = BigInt::zero();
    for x in -id.mx..=id.mx {
        let mut mass = BigInt::zero();
        for y in -id.my..=id.my {
            let k = id.l as i64 / 2 + x + y;
            let c = if (0..=id.l as i64).contains(&k) {
                BigInt::from(binom(id.l, k as u64))
            } else {
                BigInt::zero()
            };
            let e = c * &full - BigInt::from(id.value_at(x, y)) * &scale;
            if neg.is_none() && e < BigInt::zero() {
                neg = Some(format!("x={x} y={y}"));
            }
            mass += e;
        }
        if row.is_none() && mass > row_bound {
            row = Some(format!("x={x}"));
        }
        if mass > max_row {
            max_row = mass;
        }
    }
    rep.push("residual nonnegative", neg);
    rep.push("row residual mass", row);
    let half = u64::from(id.w / 2);
    if id.mode == TermMode::Dyadic {
        let bound = id.r_rect * half * half;
        rep.push(
            "dyadic term count",
            (id.r > bound).then(|| format!("{} > {bound}", id.r)),
        );
    }
    let per_word = BigRational::new(max_row, full * scale);
    rep.stats = json!({
        "r": id.r,
        "r_rect": id.r_rect,
        "max_row_mass_over_2w": to_f64(&per_word),
        "row_bound_over_2w": to_f64(&BigRational::new(row_bound, (BigInt::one() << id.w) << id.l)),
    });
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binom_approx::{integer_terms, local_approx, rect_decompose, ApproxConfig};
    use crate::model::Mode;

    #[test]
    fn valid_local_passes() {
        let la = local_approx(400, &BigRational::new(1.into(), 2.into()), 10, 0.35).unwrap();
        let rep = verify_decomp(Decomp::Local(&la));
        assert!(rep.pass(), "{rep:?}");
    }

    #[test]
    fn small_rect_and_integer_pass() {
        let rd = rect_decompose(256, 12, 12, 4, &ApproxConfig::default(), Mode::Strict).unwrap();
        let rep = verify_rect(&rd);
        assert!(rep.pass(), "{}", serde_json::to_string(&rep).unwrap());
        let id = integer_terms(&rd, 32, TermMode::Dyadic).unwrap();
        let rep = verify_integer(&id);
        assert!(rep.pass(), "{}", serde_json::to_string(&rep).unwrap());
    }

    #[test]
    fn corrupted_weight_is_caught() {
        let rd = rect_decompose(128, 3, 3, 2, &ApproxConfig::default(), Mode::Strict).unwrap();
        let mut id = integer_terms(&rd, 24, TermMode::Direct).unwrap();
        let (x, y) = (1, -2);
        let c = binom(128, (64 + x + y) as u64) << 24u32 >> 128u32;
        let slack = c - id.value_at(x, y);
        let g = id.group_of_for_tests(x, y);
        let p = id.products[g.clone()]
            .iter()
            .position(|p| p.r(y).is_some_and(|v| !v.is_zero()))
            .unwrap()
            + g.start;
        let rv = id.products[p].r(y).unwrap().clone();
        let bump = slack / &rv + 1u32;
        let xi = (x - id.products[p].x0) as usize;
        id.products[p].qx[xi] += bump;
        let rep = verify_integer(&id);
        let chk = rep.check("residual nonnegative").unwrap();
        assert!(!chk.pass);
        assert_eq!(chk.witness.as_deref(), Some("x=1 y=-2"));
    }

    #[test]
    fn empty_integer_decomp_fails_row_mass() {
        let rd = rect_decompose(128, 3, 3, 4, &ApproxConfig::default(), Mode::Strict).unwrap();
        let id = IntegerDecomp::empty(&rd, 24, TermMode::Direct);
        let rep = verify_integer(&id);
        assert!(rep.check("residual nonnegative").unwrap().pass);
        assert!(!rep.check("row residual mass").unwrap().pass);
    }
}
