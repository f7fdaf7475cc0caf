//! Tiled cube families, the nested family construction and the chessboard
//! perturbation built on it.
//!
//! A family is stored as rows of `e₁`-consecutive cubes, so a level with
//! `10^30` cubes costs one row. Cube `t` of a family with side `λ` occupies
//! `origin + t·λ + [0,λ]^d`.

use crate::hp::{self, Hp};
use crate::moduli::Modulus;
use crate::params::{self, Count, ParamError, ParamTrace, RSearch};
use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("level {level}: the admissible offset grid is empty")]
    OffsetGrid { level: usize },
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("{what} = {needed} exceeds the budget {budget}; use a smaller custom schedule")]
    Budget {
        what: &'static str,
        needed: String,
        budget: String,
    },
    #[error("smoothing δ = {delta} must be below half the deepest side {side}")]
    Smoothing { delta: f64, side: f64 },
    #[error(
        "property (2) fails at level {level} for the pair starting at {tuple:?}: \
         normalized difference {value} < ξ = {xi} (margin {})", value - xi
    )]
    Margin {
        level: usize,
        tuple: Vec<i64>,
        value: f64,
        xi: f64,
    },
    #[error("invalid density: {0}")]
    Invalid(String),
}

const LN_2: f64 = std::f64::consts::LN_2;

/// Natural logarithm of a positive big integer.
pub fn ln_big(x: &BigUint) -> f64 {
    let b = x.bits();
    if b <= 1000 {
        x.to_f64().unwrap_or(f64::INFINITY).ln()
    } else {
        let s = b - 64;
        (x >> s).to_f64().unwrap_or(f64::NAN).ln() + s as f64 * LN_2
    }
}

fn big_value(x: &BigInt) -> Value {
    match x.to_i64() {
        Some(v) => json!(v),
        None => json!(x.to_string()),
    }
}

fn ubig_value(x: &BigUint) -> Value {
    match x.to_u64() {
        Some(v) => json!(v),
        None => json!(x.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Schedules

/// Integer counts `N_i`, `M_i` with `c_{i+1} = c_i / (N_i M_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub c: f64,
    pub n: Vec<BigUint>,
    pub m: Vec<BigUint>,
}

fn count_int(c: &Count, hp: &mut Hp) -> BigUint {
    match c.exact {
        Some(v) => BigUint::from(v),
        None => {
            let v = hp.exp(&hp.f(c.ln));
            hp::to_biguint(&v.floor()).unwrap_or_default() + 1u32
        }
    }
}

impl Schedule {
    pub fn custom(c: f64, n: &[u64], m: &[u64]) -> Result<Self, DensityError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(DensityError::Schedule(format!("c = {c} must be positive")));
        }
        if n.is_empty() || n.len() != m.len() {
            return Err(DensityError::Schedule(format!(
                "need equally many N and M values, got {} and {}",
                n.len(),
                m.len()
            )));
        }
        if n.iter().chain(m).any(|&v| v == 0) {
            return Err(DensityError::Schedule("counts must be positive".into()));
        }
        Ok(Schedule {
            c,
            n: n.iter().map(|&v| v.into()).collect(),
            m: m.iter().map(|&v| v.into()).collect(),
        })
    }

    /// Integer counts for a computed trace. Counts known only by their
    /// logarithm are rounded up; `M` stays a multiple of its unit.
    pub fn from_trace(t: &ParamTrace) -> Self {
        let mut hp = Hp::new(256);
        let mut n = Vec::with_capacity(t.levels.len());
        let mut m = Vec::with_capacity(t.levels.len());
        for l in &t.levels {
            n.push(count_int(&l.n, &mut hp));
            m.push(match l.m.exact {
                Some(v) => BigUint::from(v),
                None => {
                    let unit = count_int(&l.m_unit, &mut hp);
                    let q = hp.exp(&hp.f(l.m.ln - l.m_unit.ln));
                    let q = hp::to_biguint(&hp.add(&q, &hp.f(0.5)).floor())
                        .unwrap_or_default()
                        .max(BigUint::one());
                    unit * q
                }
            });
        }
        Schedule { c: t.c, n, m }
    }

    pub fn levels(&self) -> usize {
        self.n.len()
    }

    /// `λ_i / λ_{i+1} = M_i N_{i+1}` for 1-based `i`.
    pub fn ratio(&self, i: usize) -> BigUint {
        &self.m[i - 1] * &self.n[i]
    }

    pub fn ln_c(&self, i: usize) -> f64 {
        let mut v = self.c.ln();
        for j in 0..i - 1 {
            v -= ln_big(&self.n[j]) + ln_big(&self.m[j]);
        }
        v
    }

    /// `ln(c_i / N_i)`.
    pub fn ln_lambda(&self, i: usize) -> f64 {
        self.ln_c(i) - ln_big(&self.n[i - 1])
    }

    /// `c_i / c` as an exact fraction.
    pub fn c_rel(&self, i: usize) -> BigRational {
        let mut den = BigUint::one();
        for j in 0..i - 1 {
            den *= &self.n[j] * &self.m[j];
        }
        BigRational::new(BigInt::one(), den.into())
    }
}

// ---------------------------------------------------------------------------
// Families

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub start: Vec<BigInt>,
    pub len: BigUint,
}

impl Row {
    fn contains(&self, t: &[BigInt]) -> bool {
        t.len() == self.start.len()
            && t[1..] == self.start[1..]
            && t[0] >= self.start[0]
            && t[0] < &self.start[0] + BigInt::from(self.len.clone())
    }
}

#[derive(Clone, Debug)]
pub struct TiledFamily {
    pub level: usize,
    pub lambda: f64,
    pub ln_lambda: f64,
    pub origin: Vec<f64>,
    pub rows: Vec<Row>,
}

impl TiledFamily {
    /// Groups distinct tuples into maximal rows.
    pub fn from_tuples(
        level: usize,
        lambda: f64,
        origin: Vec<f64>,
        tuples: &[Vec<i64>],
    ) -> Result<Self, DensityError> {
        let d = origin.len();
        if let Some(t) = tuples.iter().find(|t| t.len() != d) {
            return Err(DensityError::Dimension {
                expected: d,
                got: t.len(),
            });
        }
        if !(lambda > 0.0) {
            return Err(DensityError::Invalid(format!(
                "side {lambda} must be positive"
            )));
        }
        let mut keyed: Vec<(Vec<i64>, i64)> =
            tuples.iter().map(|t| (t[1..].to_vec(), t[0])).collect();
        keyed.sort();
        keyed.dedup();
        let mut rows: Vec<Row> = Vec::new();
        let mut prev: Option<(Vec<i64>, i64)> = None;
        for (rest, x) in keyed {
            let extend = matches!(&prev, Some((r, px)) if *r == rest && *px + 1 == x);
            if extend {
                rows.last_mut().unwrap().len += 1u32;
            } else {
                let mut start = vec![BigInt::from(x)];
                start.extend(rest.iter().map(|&v| BigInt::from(v)));
                rows.push(Row {
                    start,
                    len: BigUint::one(),
                });
            }
            prev = Some((rest, x));
        }
        Ok(TiledFamily {
            level,
            lambda,
            ln_lambda: lambda.ln(),
            origin,
            rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn len(&self) -> BigUint {
        self.rows.iter().map(|r| r.len.clone()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, t: &[BigInt]) -> bool {
        self.rows.iter().any(|r| r.contains(t))
    }

    /// All tuples, if there are at most `cap` of them.
    pub fn tuples(&self, cap: usize) -> Option<Vec<Vec<BigInt>>> {
        if self.len() > BigUint::from(cap) {
            return None;
        }
        let mut out = Vec::new();
        for r in &self.rows {
            let n = r.len.to_u64()?;
            for l in 0..n {
                let mut t = r.start.clone();
                t[0] += l;
                out.push(t);
            }
        }
        Some(out)
    }

    /// `true` iff both cubes belong to the family and `s2 = s + e₁`.
    pub fn e1_adjacent(&self, s: &[BigInt], s2: &[BigInt]) -> bool {
        if s.len() != s2.len() || s.is_empty() || !self.contains(s) || !self.contains(s2) {
            return false;
        }
        s2[0] == &s[0] + 1 && s2[1..] == s[1..]
    }

    pub fn json(&self, tuple_cap: usize) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "start": r.start.iter().map(big_value).collect::<Vec<_>>(),
                    "len": ubig_value(&r.len),
                })
            })
            .collect();
        let tuples = self.tuples(tuple_cap).map(|ts| {
            ts.iter()
                .map(|t| t.iter().map(big_value).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        });
        json!({
            "level": self.level,
            "lambda": self.lambda,
            "ln_lambda": self.ln_lambda,
            "origin": self.origin,
            "count": ubig_value(&self.len()),
            "rows": rows,
            "tuples": tuples,
        })
    }
}

pub fn e1_adjacent(family: &TiledFamily, s: &[BigInt], s2: &[BigInt]) -> bool {
    family.e1_adjacent(s, s2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Offsets {
    Zero,
    Seeded(u64),
}

#[derive(Clone, Debug)]
pub struct NestedFamilies {
    pub d: usize,
    pub schedule: Schedule,
    /// `z_i` in units of `c_i`, with `z_1 = 0`.
    pub offsets: Vec<Vec<BigInt>>,
    pub families: Vec<TiledFamily>,
    pub warnings: Vec<String>,
}

impl NestedFamilies {
    pub fn json(&self, tuple_cap: usize) -> Value {
        json!({
            "d": self.d,
            "c": self.schedule.c,
            "n": self.schedule.n.iter().map(ubig_value).collect::<Vec<_>>(),
            "m": self.schedule.m.iter().map(ubig_value).collect::<Vec<_>>(),
            "offsets": self.offsets.iter()
                .map(|z| z.iter().map(big_value).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "families": self.families.iter().map(|f| f.json(tuple_cap)).collect::<Vec<_>>(),
            "warnings": self.warnings,
        })
    }
}

/// Families `𝓢_1, …, 𝓢_levels` for an explicit schedule: level `i` is a row
/// of `N_i` cubes of side `c_i/N_i` starting at `z_1 + … + z_i`.
pub fn build_from_schedule(
    d: usize,
    schedule: &Schedule,
    levels: usize,
    rule: Offsets,
    origin: &[f64],
) -> Result<NestedFamilies, DensityError> {
    if d == 0 {
        return Err(ParamError::Dimension(d).into());
    }
    if origin.len() != d {
        return Err(DensityError::Dimension {
            expected: d,
            got: origin.len(),
        });
    }
    if levels == 0 || levels > schedule.levels() {
        return Err(DensityError::Schedule(format!(
            "levels = {levels} must lie in 1..={}",
            schedule.levels()
        )));
    }
    let mut rng = match rule {
        Offsets::Seeded(s) => Some(ChaCha8Rng::seed_from_u64(s)),
        Offsets::Zero => None,
    };
    let mut offsets = vec![vec![BigInt::zero(); d]];
    let mut start = vec![BigInt::zero(); d];
    let mut families = Vec::with_capacity(levels);
    for i in 1..=levels {
        if i > 1 {
            let n_prev = &schedule.n[i - 2];
            let m_prev = &schedule.m[i - 2];
            if m_prev.is_zero() {
                return Err(DensityError::OffsetGrid { level: i });
            }
            let z: Vec<BigInt> = match rng.as_mut() {
                None => vec![BigInt::zero(); d],
                Some(r) => (0..d)
                    .map(|k| {
                        let bound = if k == 0 {
                            n_prev * m_prev
                        } else {
                            m_prev.clone()
                        };
                        BigInt::from(r.gen_biguint_below(&bound))
                    })
                    .collect(),
            };
            let k = BigInt::from(schedule.ratio(i - 1));
            let n_here = BigInt::from(schedule.n[i - 1].clone());
            for a in 0..d {
                start[a] = &start[a] * &k + &z[a] * &n_here;
            }
            offsets.push(z);
        }
        let ln_lambda = schedule.ln_lambda(i);
        families.push(TiledFamily {
            level: i,
            lambda: ln_lambda.exp(),
            ln_lambda,
            origin: origin.to_vec(),
            rows: vec![Row {
                start: start.clone(),
                len: schedule.n[i - 1].clone(),
            }],
        });
    }
    Ok(NestedFamilies {
        d,
        schedule: schedule.clone(),
        offsets,
        families,
        warnings: Vec::new(),
    })
}

/// Families for the computed parameter sequence of `(d, ω, ε, c)`. Asking for
/// more levels than the termination index `r` only adds a warning.
#[allow(clippy::too_many_arguments)]
pub fn build_nested_families(
    d: usize,
    m: &Modulus,
    eps: f64,
    c: f64,
    levels: usize,
    rule: Offsets,
    origin: &[f64],
    opts: &RSearch,
) -> Result<NestedFamilies, DensityError> {
    let trace = params::param_sequence(d, m, eps, c, levels)?;
    let schedule = Schedule::from_trace(&trace);
    let mut out = build_from_schedule(d, &schedule, levels, rule, origin)?;
    match params::compute_r(d, m, eps, c, opts) {
        Ok(cert) => {
            if cert.r_u64.is_some_and(|r| levels as u64 > r) {
                out.warnings
                    .push(format!("levels = {levels} exceeds r = {}", cert.r));
            }
        }
        Err(e) => out.warnings.push(format!("r unavailable: {e}")),
    }
    if trace.clamped {
        out.warnings
            .push("an inverse argument was clamped to ω(a_ω)/2".into());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Nesting and overlap

#[derive(Clone, Debug, Serialize)]
pub struct LevelOverlap {
    pub level: usize,
    /// `max_S 𝓛(S ∩ ∪𝓢_{i+1}) / 𝓛(S)` over `S ∈ 𝓢_i`, as a fraction.
    pub max_ratio: String,
    pub max_ratio_f64: f64,
    pub argmax: Option<Vec<String>>,
    /// `2^d / N_{i+1}`; absent at the deepest level.
    pub bound: Option<String>,
    pub within_bound: bool,
    #[serde(skip)]
    pub ratio: BigRational,
    #[serde(skip)]
    pub bound_exact: Option<BigRational>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NestingReport {
    pub nested: bool,
    /// Cubes of `𝓢_{i+1}` found outside `∪𝓢_i`, as `(i + 1, tuple)`.
    pub escapes: Vec<(usize, Vec<String>)>,
    pub levels: Vec<LevelOverlap>,
}

impl NestingReport {
    pub fn passed(&self) -> bool {
        self.nested && self.levels.iter().all(|l| l.within_bound)
    }
}

fn rat_f64(r: &BigRational) -> f64 {
    let n = r.numer();
    let d = r.denom();
    if n.is_zero() {
        return 0.0;
    }
    let ln = ln_big(n.magnitude()) - ln_big(d.magnitude());
    let s = if *n < BigInt::zero() { -1.0 } else { 1.0 };
    s * ln.exp()
}

const OVERLAP_CELL_BUDGET: u64 = 1_000_000;

/// Exact nesting and per-level overlap ratios, computed row by row.
pub fn nesting_measure_report(nf: &NestedFamilies) -> Result<NestingReport, DensityError> {
    let d = nf.d;
    let mut nested = true;
    let mut escapes = Vec::new();
    let mut levels = Vec::new();
    let r = nf.families.len();
    for i in 1..=r {
        if i == r {
            levels.push(LevelOverlap {
                level: i,
                max_ratio: "0".into(),
                max_ratio_f64: 0.0,
                argmax: None,
                bound: None,
                within_bound: true,
                ratio: BigRational::zero(),
                bound_exact: None,
            });
            continue;
        }
        let upper = &nf.families[i - 1];
        let lower = &nf.families[i];
        let k = BigInt::from(nf.schedule.ratio(i));
        let mut acc: BTreeMap<Vec<BigInt>, BigInt> = BTreeMap::new();
        for row in &lower.rows {
            let a = &row.start[0];
            let b = a + BigInt::from(row.len.clone());
            let first = a.div_floor(&k);
            let last = (&b - BigInt::one()).div_floor(&k);
            let count = (&last - &first + BigInt::one())
                .to_u64()
                .unwrap_or(u64::MAX);
            if count > OVERLAP_CELL_BUDGET {
                return Err(DensityError::Budget {
                    what: "cells met by one row",
                    needed: count.to_string(),
                    budget: OVERLAP_CELL_BUDGET.to_string(),
                });
            }
            let mut u = vec![BigInt::zero(); d];
            for a_ in 1..d {
                u[a_] = row.start[a_].div_floor(&k);
            }
            let mut u0 = first;
            while u0 <= last {
                let lo = (&u0 * &k).max(a.clone());
                let hi = ((&u0 + BigInt::one()) * &k).min(b.clone());
                u[0] = u0.clone();
                if !upper.contains(&u) {
                    nested = false;
                    if escapes.len() < 16 {
                        escapes.push((i + 1, u.iter().map(|v| v.to_string()).collect()));
                    }
                }
                *acc.entry(u.clone()).or_insert_with(BigInt::zero) += hi - lo;
                u0 += BigInt::one();
            }
        }
        let vol = num_traits::pow(k.clone(), d);
        let mut best = BigRational::zero();
        let mut arg = None;
        for (u, len) in acc {
            let q = BigRational::new(len, vol.clone());
            if arg.is_none() || q > best {
                best = q;
                arg = Some(u);
            }
        }
        let bound = BigRational::new(
            BigInt::from(1u32) << d,
            BigInt::from(nf.schedule.n[i].clone()),
        );
        levels.push(LevelOverlap {
            level: i,
            max_ratio: best.to_string(),
            max_ratio_f64: rat_f64(&best),
            argmax: arg.map(|u| u.iter().map(|v| v.to_string()).collect()),
            bound: Some(bound.to_string()),
            within_bound: best <= bound,
            ratio: best,
            bound_exact: Some(bound),
        });
    }
    Ok(NestingReport {
        nested,
        escapes,
        levels,
    })
}

// ---------------------------------------------------------------------------
// Chessboard

#[derive(Clone, Debug, Serialize)]
pub struct BoardRow {
    pub start: Vec<i64>,
    pub len: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoardLevel {
    /// Side length in units of the deepest side.
    pub side: i64,
    pub rows: Vec<BoardRow>,
}

/// `ψ = P_r` with `P_0 = 0` and `P_j = (1 - w_j) P_{j-1} + w_j σ ξ`, where
/// `w_j` is the product of linear ramps of width `δ` inside each level-`j`
/// cube and `σ = (-1)^{t_1}` alternates along `e₁`.
///
/// Coordinates are in units of the deepest side, measured from `origin`.
#[derive(Clone, Debug, Serialize)]
pub struct Chessboard {
    pub d: usize,
    pub xi: f64,
    /// Ramp width in units of the deepest side.
    pub delta: f64,
    /// Absolute length of the deepest side.
    pub unit: f64,
    pub origin: Vec<f64>,
    pub levels: Vec<BoardLevel>,
}

const EXACT_EXTENT: f64 = 9007199254740992.0;

impl Chessboard {
    pub fn new(
        d: usize,
        xi: f64,
        delta: f64,
        unit: f64,
        origin: Vec<f64>,
        levels: Vec<BoardLevel>,
    ) -> Result<Self, DensityError> {
        if origin.len() != d {
            return Err(DensityError::Dimension {
                expected: d,
                got: origin.len(),
            });
        }
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(DensityError::Invalid(format!("ξ = {xi} must be positive")));
        }
        if !(unit > 0.0 && unit.is_finite()) {
            return Err(DensityError::Invalid(format!(
                "unit = {unit} must be positive"
            )));
        }
        let mut min_side = i64::MAX;
        for lv in &levels {
            if lv.side <= 0 {
                return Err(DensityError::Invalid("sides must be positive".into()));
            }
            min_side = min_side.min(lv.side);
            for r in &lv.rows {
                if r.start.len() != d {
                    return Err(DensityError::Dimension {
                        expected: d,
                        got: r.start.len(),
                    });
                }
                if r.len <= 0 {
                    return Err(DensityError::Invalid("rows must be nonempty".into()));
                }
                for (a, &s) in r.start.iter().enumerate() {
                    let hi = if a == 0 { s + r.len } else { s + 1 };
                    let ext = (s as f64 * lv.side as f64)
                        .abs()
                        .max((hi as f64 * lv.side as f64).abs());
                    if ext > EXACT_EXTENT {
                        return Err(DensityError::Budget {
                            what: "extent in deepest sides",
                            needed: format!("{ext:e}"),
                            budget: format!("{EXACT_EXTENT:e}"),
                        });
                    }
                }
            }
        }
        if !(delta >= 0.0 && (levels.is_empty() || 2.0 * delta < min_side as f64)) {
            return Err(DensityError::Smoothing {
                delta: delta * unit,
                side: min_side as f64 * unit,
            });
        }
        Ok(Chessboard {
            d,
            xi,
            delta,
            unit,
            origin,
            levels,
        })
    }

    /// A board over explicit tuples; `levels[j] = (side, tuples)` with sides in
    /// units of `unit`.
    pub fn from_tuples(
        d: usize,
        xi: f64,
        delta: f64,
        unit: f64,
        origin: Vec<f64>,
        levels: Vec<(i64, Vec<Vec<i64>>)>,
    ) -> Result<Self, DensityError> {
        let mut out = Vec::with_capacity(levels.len());
        for (j, (side, tuples)) in levels.into_iter().enumerate() {
            let fam = TiledFamily::from_tuples(j + 1, 1.0, vec![0.0; d], &tuples)?;
            out.push(BoardLevel {
                side,
                rows: fam
                    .rows
                    .iter()
                    .map(|r| BoardRow {
                        start: r.start.iter().map(|v| v.to_i64().unwrap()).collect(),
                        len: r.len.to_i64().unwrap(),
                    })
                    .collect(),
            });
        }
        Chessboard::new(d, xi, delta, unit, origin, out)
    }

    /// The board on nested families, refusing more than `budget` cubes in total.
    pub fn from_families(
        nf: &NestedFamilies,
        xi: f64,
        delta: f64,
        budget: u64,
    ) -> Result<Self, DensityError> {
        let r = nf.families.len();
        let total: BigUint = nf.families.iter().map(|f| f.len()).sum();
        if total > BigUint::from(budget) {
            return Err(DensityError::Budget {
                what: "total cubes",
                needed: total.to_string(),
                budget: budget.to_string(),
            });
        }
        let too_big = |what: &'static str, v: &dyn std::fmt::Display| DensityError::Budget {
            what,
            needed: v.to_string(),
            budget: format!("{EXACT_EXTENT:e}"),
        };
        let mut levels = Vec::with_capacity(r);
        for (j, fam) in nf.families.iter().enumerate() {
            let mut side = BigUint::one();
            for k in j + 1..r {
                side *= nf.schedule.ratio(k);
            }
            let side_i = side.to_i64().ok_or_else(|| too_big("side", &side))?;
            let mut rows = Vec::new();
            for row in &fam.rows {
                let mut start = Vec::with_capacity(nf.d);
                for v in &row.start {
                    start.push(v.to_i64().ok_or_else(|| too_big("coordinate", v))?);
                }
                rows.push(BoardRow {
                    start,
                    len: row.len.to_i64().ok_or_else(|| too_big("row", &row.len))?,
                });
            }
            levels.push(BoardLevel { side: side_i, rows });
        }
        let deepest = &nf.families[r - 1];
        let delta_units = if delta == 0.0 {
            0.0
        } else {
            (delta.ln() - deepest.ln_lambda).exp()
        };
        Chessboard::new(
            nf.d,
            xi,
            delta_units,
            deepest.lambda,
            deepest.origin.clone(),
            levels,
        )
    }

    fn sign(t0: i64) -> f64 {
        if t0.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn row_holds(row: &BoardRow, t: &[i64]) -> bool {
        t[1..] == row.start[1..] && t[0] >= row.start[0] && t[0] < row.start[0] + row.len
    }

    fn level_contains(&self, j: usize, t: &[i64]) -> bool {
        self.levels[j].rows.iter().any(|r| Self::row_holds(r, t))
    }

    fn ramp(&self, x: f64, a: f64, b: f64) -> f64 {
        if self.delta == 0.0 {
            if x >= a && x < b {
                1.0
            } else {
                0.0
            }
        } else {
            ((x - a).min(b - x) / self.delta).clamp(0.0, 1.0)
        }
    }

    /// `ψ` at a point given in units of the deepest side.
    pub fn eval_units(&self, p: &[f64]) -> f64 {
        let mut v = 0.0;
        let mut t = vec![0i64; self.d];
        for (j, lv) in self.levels.iter().enumerate() {
            let s = lv.side as f64;
            for a in 0..self.d {
                t[a] = (p[a] / s).floor() as i64;
            }
            if !self.level_contains(j, &t) {
                continue;
            }
            let mut w = 1.0;
            for a in 0..self.d {
                w *= self.ramp(p[a], t[a] as f64 * s, (t[a] + 1) as f64 * s);
            }
            v = (1.0 - w) * v + w * Self::sign(t[0]) * self.xi;
        }
        v
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let p: Vec<f64> = x
            .iter()
            .zip(&self.origin)
            .map(|(x, o)| (x - o) / self.unit)
            .collect();
        self.eval_units(&p)
    }

    /// Level-`j` cubes meeting `bx` in positive measure.
    fn cubes_meeting(&self, j: usize, bx: &[(f64, f64)]) -> Vec<Vec<i64>> {
        let lv = &self.levels[j];
        let s = lv.side as f64;
        let mut out = Vec::new();
        for row in &lv.rows {
            let ok = (1..self.d).all(|a| {
                let lo = row.start[a] as f64 * s;
                lo.max(bx[a].0) < (lo + s).min(bx[a].1)
            });
            if !ok {
                continue;
            }
            let l_lo = ((bx[0].0 / s).floor() as i64 - row.start[0]).max(0);
            let l_hi = ((bx[0].1 / s).ceil() as i64 - 1 - row.start[0]).min(row.len - 1);
            for l in l_lo..=l_hi {
                let t0 = row.start[0] + l;
                let lo = t0 as f64 * s;
                if lo.max(bx[0].0) < (lo + s).min(bx[0].1) {
                    let mut t = row.start.clone();
                    t[0] = t0;
                    out.push(t);
                }
            }
        }
        out
    }

    /// `∫_bx (∏ ramps in w) · P_j`, coordinates in deepest sides.
    fn integ(&self, j: usize, w: &mut Vec<Vec<(f64, f64)>>, bx: &[(f64, f64)]) -> f64 {
        if j == 0 {
            return 0.0;
        }
        let mut total = self.integ(j - 1, w, bx);
        let s = self.levels[j - 1].side as f64;
        for t in self.cubes_meeting(j - 1, bx) {
            let cube: Vec<(f64, f64)> = t
                .iter()
                .map(|&v| (v as f64 * s, (v + 1) as f64 * s))
                .collect();
            let tb: Vec<(f64, f64)> = bx
                .iter()
                .zip(&cube)
                .map(|(b, c)| (b.0.max(c.0), b.1.min(c.1)))
                .collect();
            for a in 0..self.d {
                w[a].push(cube[a]);
            }
            let base: f64 = (0..self.d)
                .map(|a| ramp_product_integral(&w[a], tb[a].0, tb[a].1, self.delta))
                .product();
            let under = self.integ(j - 1, w, &tb);
            total += Self::sign(t[0]) * self.xi * base - under;
            for a in 0..self.d {
                w[a].pop();
            }
        }
        total
    }

    /// `∫ ψ` over a box given in units of the deepest side.
    pub fn integrate_units(&self, bx: &[(f64, f64)]) -> f64 {
        let mut w = vec![Vec::new(); self.d];
        self.integ(self.levels.len(), &mut w, bx)
    }

    /// `∫ ψ` over an absolute box.
    pub fn integrate(&self, bx: &[(f64, f64)]) -> f64 {
        let b: Vec<(f64, f64)> = bx
            .iter()
            .zip(&self.origin)
            .map(|(&(lo, hi), o)| ((lo - o) / self.unit, (hi - o) / self.unit))
            .collect();
        self.integrate_units(&b) * self.unit.powi(self.d as i32)
    }

    /// `(1/𝓛(S)) ∫_S ψ` for the level-`j` cube `t` (0-based `j`).
    pub fn cube_mean(&self, j: usize, t: &[i64]) -> f64 {
        let s = self.levels[j].side as f64;
        let bx: Vec<(f64, f64)> = t
            .iter()
            .map(|&v| (v as f64 * s, (v + 1) as f64 * s))
            .collect();
        self.integrate_units(&bx) / s.powi(self.d as i32)
    }

    /// Every cube of every level lies in the union of the first level's cubes,
    /// checked in integer arithmetic. Since each ramp vanishes outside its
    /// cube, this is property (1).
    pub fn support_in_first_level(&self) -> bool {
        let Some(first) = self.levels.first() else {
            return true;
        };
        let s1 = first.side;
        for lv in &self.levels[1..] {
            for row in &lv.rows {
                let mut u = vec![0i64; self.d];
                for a in 1..self.d {
                    let lo = (row.start[a] * lv.side).div_euclid(s1);
                    let hi = ((row.start[a] + 1) * lv.side - 1).div_euclid(s1);
                    if lo != hi {
                        return false;
                    }
                    u[a] = lo;
                }
                let lo = (row.start[0] * lv.side).div_euclid(s1);
                let hi = ((row.start[0] + row.len) * lv.side - 1).div_euclid(s1);
                for u0 in lo..=hi {
                    u[0] = u0;
                    if !self.level_contains(0, &u) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Property (2) on every level: minimum of
    /// `(1/𝓛(S)) |∫_S ψ - ∫_{S+λe₁} ψ|` over pairs of consecutive row cubes.
    pub fn pair_margins(&self) -> Vec<PairMargin> {
        let mut out = Vec::with_capacity(self.levels.len());
        for (j, lv) in self.levels.iter().enumerate() {
            let mut best = f64::INFINITY;
            let mut arg = None;
            let mut pairs = 0u64;
            for row in &lv.rows {
                let mut t = row.start.clone();
                let mut prev = self.cube_mean(j, &t);
                for l in 1..row.len {
                    t[0] = row.start[0] + l;
                    let cur = self.cube_mean(j, &t);
                    let diff = (cur - prev).abs();
                    pairs += 1;
                    if diff < best {
                        best = diff;
                        let mut a = t.clone();
                        a[0] -= 1;
                        arg = Some(a);
                    }
                    prev = cur;
                }
            }
            out.push(PairMargin {
                level: j + 1,
                pairs,
                min_normalized_diff: if pairs == 0 { f64::NAN } else { best },
                argmin: arg,
                holds: pairs == 0 || best >= self.xi,
            });
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PairMargin {
    pub level: usize,
    pub pairs: u64,
    pub min_normalized_diff: f64,
    pub argmin: Option<Vec<i64>>,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChessboardReport {
    pub property1: bool,
    pub levels: Vec<PairMargin>,
    /// Smallest normalized difference over all levels; property (2) asks for `>= ξ`.
    pub min_normalized_diff: f64,
    pub xi: f64,
}

pub const CUBE_BUDGET: u64 = 2_000_000;

/// The chessboard `ψ` on nested families with its property checks. Fails when
/// property (2) is violated anywhere.
pub fn chessboard_psi(
    nf: &NestedFamilies,
    xi: f64,
    smoothing_delta: f64,
) -> Result<(Chessboard, ChessboardReport), DensityError> {
    let board = Chessboard::from_families(nf, xi, smoothing_delta, CUBE_BUDGET)?;
    let report = board_report(&board);
    for l in &report.levels {
        if !l.holds {
            return Err(DensityError::Margin {
                level: l.level,
                tuple: l.argmin.clone().unwrap_or_default(),
                value: l.min_normalized_diff,
                xi,
            });
        }
    }
    Ok((board, report))
}

pub fn board_report(board: &Chessboard) -> ChessboardReport {
    let levels = board.pair_margins();
    let min = levels
        .iter()
        .filter(|l| l.pairs > 0)
        .map(|l| l.min_normalized_diff)
        .fold(f64::INFINITY, f64::min);
    ChessboardReport {
        property1: board.support_in_first_level(),
        levels,
        min_normalized_diff: min,
        xi: board.xi,
    }
}

// ---------------------------------------------------------------------------
// Piecewise-polynomial quadrature

fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    let t = TABLE.get_or_init(|| (0..=64).map(gl_nodes).collect());
    &t[n.min(64)]
}

fn gl_nodes(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // p1 = P_n(x), p0 = P_{n-1}(x).
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `∫_lo^hi ∏ ramp_{(a,b)}(x) dx` for ramps of width `delta`, exact up to
/// rounding: the integrand is a polynomial between breakpoints.
fn ramp_product_integral(iv: &[(f64, f64)], lo: f64, hi: f64, delta: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for &(a, b) in iv {
        lo = lo.max(a);
        hi = hi.min(b);
    }
    if hi <= lo {
        return 0.0;
    }
    if delta == 0.0 || iv.is_empty() {
        return hi - lo;
    }
    let mut br = vec![lo, hi];
    for &(a, b) in iv {
        for x in [a + delta, b - delta] {
            if x > lo && x < hi {
                br.push(x);
            }
        }
    }
    br.sort_by(f64::total_cmp);
    br.dedup();
    let nodes = gauss_legendre(iv.len().div_ceil(2) + 1);
    let mut sum = 0.0;
    for seg in br.windows(2) {
        let (x0, x1) = (seg[0], seg[1]);
        let h = 0.5 * (x1 - x0);
        let m = 0.5 * (x1 + x0);
        let mut s = 0.0;
        for &(t, wt) in nodes {
            let x = m + h * t;
            let v: f64 = iv
                .iter()
                .map(|&(a, b)| ((x - a).min(b - x) / delta).clamp(0.0, 1.0))
                .product();
            s += wt * v;
        }
        sum += h * s;
    }
    sum
}

// ---------------------------------------------------------------------------
// Densities

/// `ρ = base + ψ`, with `ψ = 0` when there is no board.
#[derive(Clone, Debug, Serialize)]
pub struct Density {
    pub base: f64,
    pub board: Option<Chessboard>,
}

impl Density {
    pub fn constant(base: f64) -> Result<Self, DensityError> {
        if !(base > 0.0 && base.is_finite()) {
            return Err(DensityError::Invalid(format!(
                "base {base} must be positive"
            )));
        }
        Ok(Density { base, board: None })
    }

    pub fn with_board(base: f64, board: Chessboard) -> Result<Self, DensityError> {
        if !(base - board.xi > 0.0) {
            return Err(DensityError::Invalid(format!(
                "base - ξ = {} must be positive",
                base - board.xi
            )));
        }
        Ok(Density {
            base,
            board: Some(board),
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.base + self.board.as_ref().map_or(0.0, |b| b.eval(x))
    }

    pub fn sup(&self) -> f64 {
        self.base + self.board.as_ref().map_or(0.0, |b| b.xi)
    }

    pub fn inf(&self) -> f64 {
        self.base - self.board.as_ref().map_or(0.0, |b| b.xi)
    }

    pub fn integrate(&self, bx: &[(f64, f64)]) -> f64 {
        let vol: f64 = bx.iter().map(|(lo, hi)| (hi - lo).max(0.0)).product();
        self.base * vol + self.board.as_ref().map_or(0.0, |b| b.integrate(bx))
    }
}

pub fn integrate(rho: &Density, bx: &[(f64, f64)]) -> f64 {
    rho.integrate(bx)
}

/// Tuples per level as a map from transverse coordinates to sorted `e₁`
/// positions; used by tests and renderers.
pub fn board_cells(board: &Chessboard, j: usize) -> HashMap<Vec<i64>, Vec<i64>> {
    let mut out: HashMap<Vec<i64>, Vec<i64>> = HashMap::new();
    for row in &board.levels[j].rows {
        let e = out.entry(row.start[1..].to_vec()).or_default();
        e.extend(row.start[0]..row.start[0] + row.len);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bi(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn adjacency_is_directed() {
        let f = TiledFamily::from_tuples(
            1,
            1.0,
            vec![0.0, 0.0],
            &[vec![0, 0], vec![1, 0], vec![0, 1]],
        )
        .unwrap();
        assert!(e1_adjacent(&f, &bi(&[0, 0]), &bi(&[1, 0])));
        assert!(!e1_adjacent(&f, &bi(&[0, 0]), &bi(&[0, 1])));
        assert!(!e1_adjacent(&f, &bi(&[1, 0]), &bi(&[0, 0])));
    }

    #[test]
    fn rows_merge() {
        let f = TiledFamily::from_tuples(
            1,
            1.0,
            vec![0.0, 0.0],
            &[vec![2, 0], vec![0, 0], vec![1, 0], vec![5, 0], vec![1, 3]],
        )
        .unwrap();
        assert_eq!(f.rows.len(), 3);
        assert_eq!(f.len(), BigUint::from(5u32));
    }

    #[test]
    fn single_level_tiles_the_first_cuboid() {
        let s = Schedule::custom(0.5, &[6], &[3]).unwrap();
        let nf = build_from_schedule(2, &s, 1, Offsets::Zero, &[0.0, 0.0]).unwrap();
        let f = &nf.families[0];
        assert_eq!(f.rows.len(), 1);
        assert_eq!(f.len(), BigUint::from(6u32));
        assert!((f.lambda - 0.5 / 6.0).abs() < 1e-15);
        let rep = nesting_measure_report(&nf).unwrap();
        assert!(rep.nested);
        assert!(rep.levels[0].ratio.is_zero());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..10 {
            let nodes = gauss_legendre(n);
            for deg in 0..2 * n {
                let s: f64 = nodes.iter().map(|&(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                assert!((s - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn ramp_integral_closed_form() {
        // One ramp over its own cube: λ - δ.
        let v = ramp_product_integral(&[(0.0, 10.0)], 0.0, 10.0, 0.5);
        assert!((v - 9.5).abs() < 1e-13);
        // Two identical ramps: λ - 2δ + 2δ/3.
        let v = ramp_product_integral(&[(0.0, 10.0), (0.0, 10.0)], 0.0, 10.0, 0.5);
        assert!((v - (10.0 - 1.0 + 1.0 / 3.0)).abs() < 1e-13);
    }

    #[test]
    fn one_level_unsmoothed_alternates() {
        let b = Chessboard::from_tuples(
            2,
            0.1,
            0.0,
            1.0,
            vec![0.0, 0.0],
            vec![(1, vec![vec![0, 0], vec![1, 0], vec![2, 0]])],
        )
        .unwrap();
        assert!((b.cube_mean(0, &[0, 0]) - 0.1).abs() < 1e-15);
        assert!((b.cube_mean(0, &[1, 0]) + 0.1).abs() < 1e-15);
        let m = b.pair_margins();
        assert!((m[0].min_normalized_diff - 0.2).abs() < 1e-15);
        assert_eq!(b.eval(&[0.5, 1.5]), 0.0);
        assert_eq!(b.eval(&[-0.5, 0.5]), 0.0);
    }

    #[test]
    fn constant_and_bump_integrals() {
        let rho = Density::constant(3.0).unwrap();
        assert_eq!(integrate(&rho, &[(0.0, 2.0), (1.0, 2.5)]), 9.0);
        let b = Chessboard::from_tuples(
            2,
            0.25,
            0.0,
            0.5,
            vec![1.0, 1.0],
            vec![(1, vec![vec![2, 2]])],
        )
        .unwrap();
        let rho = Density::with_board(1.0, b).unwrap();
        let v = integrate(&rho, &[(0.0, 4.0), (0.0, 4.0)]);
        assert!((v - (16.0 + 0.25 * 0.25)).abs() < 1e-13);
    }

    #[test]
    fn paper_schedule_is_representable() {
        let t = params::param_sequence(2, &Modulus::identity(), 0.1, 0.1, 3).unwrap();
        let s = Schedule::from_trace(&t);
        for i in 0..3 {
            assert!((ln_big(&s.n[i]) - t.levels[i].n.ln).abs() < 1e-9);
            assert!((ln_big(&s.m[i]) - t.levels[i].m.ln).abs() < 1e-9);
        }
    }
}
