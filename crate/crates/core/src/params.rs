//! Parameter recursions of the nested construction: `φ`, `θ`, `N₀`, `M`, the
//! level sequence `c_i`, the termination index `r`, `υ` and `κ`.
//!
//! Everything that can leave the `f64` range is carried as a natural
//! logarithm. Counts are exact integers while they fit in `u64`. The
//! termination index is searched in two phases: explicit levels first, then a
//! continuation in which blocks of consecutive levels share one step
//! `ln(N M)` evaluated at the block midpoint, with indices and `ln(1/c)` held
//! as extended-precision floats.

use crate::hp::{self, Hp};
use crate::moduli::{Kind, Modulus, ModulusError};
use astro_float::BigFloat;
use serde::Serialize;
use thiserror::Error;

const LN_2_52: f64 = 36.04365338911715;
const LN_2_63: f64 = 43.66827237527655;
/// Relative distance below which a computed bound is taken to be the nearby integer.
pub const SNAP_REL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("ε = {0} is invalid: ε ∈ (0,1) is required")]
    Epsilon(f64),
    #[error("d = {0} is invalid: d >= 1 is required")]
    Dimension(usize),
    #[error("c = {c} is invalid: c ∈ (0, a_ω) = (0, {a}) is required")]
    Scale { c: f64, a: f64 },
    #[error(transparent)]
    Modulus(#[from] ModulusError),
    #[error("no index r <= 10^{max_log10} satisfies the iteration inequality: {reason}")]
    Unterminated { max_log10: f64, reason: String },
    #[error("upsilon undefined: {0}")]
    UpsilonDomain(String),
    #[error("invalid option {name} = {value}")]
    Option { name: &'static str, value: f64 },
}

/// A positive integer: exact while it fits in `u64`, otherwise only its logarithm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Count {
    pub ln: f64,
    pub exact: Option<u64>,
}

/// `ceil(v)`, except that values within `SNAP_REL` of an integer are rounded to it.
pub fn snap_ceil(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= SNAP_REL * v.abs().max(1.0) {
        r
    } else {
        v.ceil()
    }
}

impl Count {
    pub fn exact(n: u64) -> Count {
        Count {
            ln: (n as f64).ln(),
            exact: Some(n),
        }
    }

    /// Smallest integer `>= e^{ln_v}`.
    pub fn ceil_exp(ln_v: f64) -> Count {
        if ln_v <= LN_2_52 {
            Count::exact(snap_ceil(ln_v.exp()).max(1.0) as u64)
        } else if ln_v < LN_2_63 {
            // Every f64 of this size is an integer.
            Count::exact(ln_v.exp() as u64)
        } else {
            Count {
                ln: ln_v,
                exact: None,
            }
        }
    }

    pub fn max(self, other: Count) -> Count {
        let other_wins = match (self.exact, other.exact) {
            (Some(a), Some(b)) => b > a,
            _ => other.ln > self.ln,
        };
        if other_wins {
            other
        } else {
            self
        }
    }

    pub fn value(&self) -> f64 {
        match self.exact {
            Some(n) => n as f64,
            None => self.ln.exp(),
        }
    }

    /// Smallest positive multiple of `unit` that is at least `bound`.
    pub fn multiple_at_least(unit: &Count, bound: &Count) -> Count {
        if let (Some(u), Some(b)) = (unit.exact, bound.exact) {
            let k = b.div_ceil(u).max(1);
            return match u.checked_mul(k) {
                Some(v) => Count::exact(v),
                None => Count {
                    ln: unit.ln + (k as f64).ln(),
                    exact: None,
                },
            };
        }
        let ratio = bound.ln - unit.ln;
        let ln_k = if ratio <= 0.0 {
            0.0
        } else if ratio <= LN_2_52 {
            snap_ceil(ratio.exp()).ln()
        } else {
            ratio
        };
        Count::ceil_exp(unit.ln + ln_k).max(unit.clone())
    }
}

fn check_eps(eps: f64) -> Result<(), ParamError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(ParamError::Epsilon(eps))
    }
}

fn check_c(m: &Modulus, c: f64) -> Result<(), ParamError> {
    if c > 0.0 && c < m.a_omega() {
        Ok(())
    } else {
        Err(ParamError::Scale { c, a: m.a_omega() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Theta {
    pub ln: f64,
    /// An inverse argument was outside the range of the modulus and was
    /// replaced by `ω(a_omega)/2`.
    pub clamped: bool,
}

fn theta_ln(m: &Modulus, k: usize, eps_ln: f64) -> Result<Theta, ParamError> {
    let (a, c1) = m.ln_inverse_clamped(-(6f64.ln()))?;
    let (b, c2) = m.ln_inverse_clamped(eps_ln)?;
    let kf = k as f64;
    let bound = 2.0 * kf * (a + b - std::f64::consts::LN_2 - 0.5 * kf.ln());
    Ok(Theta {
        ln: bound.min(2.0 * eps_ln),
        clamped: c1 || c2,
    })
}

/// Constants of the recursion that do not depend on the scale `c`.
#[derive(Clone, Debug)]
pub(crate) struct Ladder {
    m: Modulus,
    d: usize,
    /// `eps_ln[k-1]` is the accuracy used at depth `k`.
    eps_ln: Vec<f64>,
    phi_ln: Vec<f64>,
    n_base: Count,
    m_base: Count,
    clamped: bool,
}

pub(crate) struct LevelCounts {
    pub n: Count,
    pub m: Count,
    pub m_unit: Count,
}

impl Ladder {
    pub(crate) fn new(d: usize, m: &Modulus, eps: f64) -> Result<Ladder, ParamError> {
        if d == 0 {
            return Err(ParamError::Dimension(d));
        }
        check_eps(eps)?;
        let mut eps_ln = vec![0.0; d];
        eps_ln[d - 1] = eps.ln();
        let mut clamped = false;
        for k in (2..=d).rev() {
            let th = theta_ln(m, k, eps_ln[k - 1])?;
            clamped |= th.clamped;
            eps_ln[k - 2] = th.ln;
        }
        let e1 = eps_ln[0];
        let mut phi_ln = vec![0.0; d];
        phi_ln[0] = if d == 1 {
            (eps.powi(3) / 120.0).ln()
        } else {
            3.0 * e1 - 120f64.ln()
        };
        for k in 2..=d {
            phi_ln[k - 1] = phi_ln[k - 2] - std::f64::consts::LN_2;
        }
        let n_base = Count::ceil_exp(6f64.ln() - e1).max(Count::exact(2));
        let (inv, c3) = m.ln_inverse_clamped(e1 - 4f64.ln())?;
        clamped |= c3;
        let m_base = Count::ceil_exp(-inv);
        Ok(Ladder {
            m: m.clone(),
            d,
            eps_ln,
            phi_ln,
            n_base,
            m_base,
            clamped,
        })
    }

    pub(crate) fn phi_ln(&self) -> f64 {
        self.phi_ln[self.d - 1]
    }

    pub(crate) fn clamped(&self) -> bool {
        self.clamped
    }

    /// `gap = ln(ω⁻¹(c) / ω(c))`.
    fn n0_at(&self, k: usize, gap: f64) -> Result<Count, ParamError> {
        if k == 1 {
            return Ok(self.n_base.clone());
        }
        let below = self.n0_at(k - 1, gap)?;
        let arg = self.phi_ln[k - 1] + gap - 8f64.ln();
        let mid = Count::ceil_exp(-self.m.ln_inverse(arg)?);
        let top = Count::ceil_exp(6f64.ln() - self.eps_ln[k - 1]);
        Ok(below.max(mid).max(top))
    }

    fn m_at(&self, k: usize, n: &Count) -> Result<(Count, Count), ParamError> {
        if k == 1 {
            return Ok((self.m_base.clone(), self.m_base.clone()));
        }
        let (unit, _) = self.m_at(k - 1, n)?;
        let bound = Count::ceil_exp(-self.m.ln_inverse(-(n.ln + unit.ln))?);
        Ok((Count::multiple_at_least(&unit, &bound), unit))
    }

    fn check_level(&self, ln_c: f64) -> Result<(), ParamError> {
        if ln_c < self.m.a_omega().ln() {
            Ok(())
        } else {
            Err(ParamError::Scale {
                c: ln_c.exp(),
                a: self.m.a_omega(),
            })
        }
    }

    pub(crate) fn n0(&self, ln_c: f64) -> Result<Count, ParamError> {
        self.check_level(ln_c)?;
        // ln ω⁻¹(c) - ln ω(c) = -η(ω⁻¹(c)) - η(c) with η = ln(ω(t)/t); the
        // direct difference would cancel two huge logarithms.
        let inv_c = self.m.ln_inverse(ln_c)?;
        let gap = -self.m.excess(-inv_c) - self.m.excess(-ln_c);
        self.n0_at(self.d, gap)
    }

    pub(crate) fn big_m(&self, n: &Count) -> Result<(Count, Count), ParamError> {
        self.m_at(self.d, n)
    }

    pub(crate) fn level(&self, ln_c: f64) -> Result<LevelCounts, ParamError> {
        let n = self.n0(ln_c)?;
        let (m, m_unit) = self.big_m(&n)?;
        Ok(LevelCounts { n, m, m_unit })
    }
}

/// `φ(d, ω, ε)` in log space.
pub fn phi_ln(d: usize, m: &Modulus, eps: f64) -> Result<f64, ParamError> {
    Ok(Ladder::new(d, m, eps)?.phi_ln())
}

/// `φ(d, ω, ε)`; underflows to zero for large `d`, use [`phi_ln`] there.
pub fn phi(d: usize, m: &Modulus, eps: f64) -> Result<f64, ParamError> {
    if d == 1 {
        check_eps(eps)?;
        return Ok(eps.powi(3) / 120.0);
    }
    Ok(phi_ln(d, m, eps)?.exp())
}

/// `θ(d, ω, ε)` for `d >= 2`.
pub fn theta(d: usize, m: &Modulus, eps: f64) -> Result<Theta, ParamError> {
    if d < 2 {
        return Err(ParamError::Dimension(d));
    }
    check_eps(eps)?;
    theta_ln(m, d, eps.ln())
}

pub fn n0(d: usize, m: &Modulus, eps: f64, c: f64) -> Result<Count, ParamError> {
    check_c(m, c)?;
    Ladder::new(d, m, eps)?.n0(c.ln())
}

/// `M(N, d, ω, ε, c)`. The value does not depend on `c`.
pub fn big_m(n: &Count, d: usize, m: &Modulus, eps: f64, c: f64) -> Result<Count, ParamError> {
    check_c(m, c)?;
    Ok(Ladder::new(d, m, eps)?.big_m(n)?.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct Level {
    pub i: usize,
    pub ln_c: f64,
    pub n: Count,
    pub m: Count,
    /// `M_{d-1}`, of which `m` is a multiple.
    pub m_unit: Count,
    /// `ln(c_i / N_i)`.
    pub ln_ell: f64,
    pub ln_c_next: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamTrace {
    pub d: usize,
    pub modulus: Modulus,
    pub eps: f64,
    pub c: f64,
    pub ln_phi: f64,
    pub clamped: bool,
    pub levels: Vec<Level>,
}

impl ParamTrace {
    pub fn ln_c(&self, i: usize) -> f64 {
        if i <= self.levels.len() {
            self.levels[i - 1].ln_c
        } else {
            self.levels.last().map_or(f64::NAN, |l| l.ln_c_next)
        }
    }
}

fn sequence(ladder: &Ladder, ln_c: f64, levels: usize) -> Result<Vec<Level>, ParamError> {
    let mut out = Vec::with_capacity(levels);
    let mut cur = ln_c;
    for i in 1..=levels {
        let lc = ladder.level(cur)?;
        let next = cur - lc.n.ln - lc.m.ln;
        out.push(Level {
            i,
            ln_c: cur,
            ln_ell: cur - lc.n.ln,
            n: lc.n,
            m: lc.m,
            m_unit: lc.m_unit,
            ln_c_next: next,
        });
        cur = next;
    }
    Ok(out)
}

/// The first `levels` levels of `c_1 = c`, `c_{i+1} = c_i / (N_i M_i)`.
pub fn param_sequence(
    d: usize,
    m: &Modulus,
    eps: f64,
    c: f64,
    levels: usize,
) -> Result<ParamTrace, ParamError> {
    check_c(m, c)?;
    let ladder = Ladder::new(d, m, eps)?;
    Ok(ParamTrace {
        d,
        modulus: m.clone(),
        eps,
        c,
        ln_phi: ladder.phi_ln(),
        clamped: ladder.clamped(),
        levels: sequence(&ladder, c.ln(), levels)?,
    })
}

/// `ln β` for the quadratic bound `c_{i+1} >= β c_i²`, taken at the first level.
pub fn quadratic_beta_ln(trace: &ParamTrace) -> f64 {
    let l = &trace.levels[0];
    -(l.ln_c + l.n.ln + l.m.ln)
}

#[derive(Clone, Debug, Serialize)]
pub struct Envelope {
    /// Fitted growth `ln(N_i M_i) <= a + q ln ln(1/c_i)`.
    pub q: f64,
    pub a: f64,
    /// `ln(1/c_i) <= i² b` for the checked levels.
    pub b: f64,
    pub ln_beta_tilde: f64,
}

/// Fits `ln(N M) <= a + q ln ln(1/c)` on the trace and closes the induction
/// `ln(1/c_i) <= i² b`, giving `ln c_i >= i² ln(β̃ c)`.
pub fn superquadratic_envelope(trace: &ParamTrace) -> Envelope {
    let xs: Vec<f64> = trace.levels.iter().map(|l| -l.ln_c).collect();
    let ss: Vec<f64> = trace.levels.iter().map(|l| l.n.ln + l.m.ln).collect();
    let ls: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let n = xs.len() as f64;
    let ml = ls.iter().sum::<f64>() / n;
    let ms = ss.iter().sum::<f64>() / n;
    let sxx: f64 = ls.iter().map(|l| (l - ml) * (l - ml)).sum();
    let sxy: f64 = ls.iter().zip(&ss).map(|(l, s)| (l - ml) * (s - ms)).sum();
    let q = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let a = ls
        .iter()
        .zip(&ss)
        .map(|(l, s)| s - q * l)
        .fold(f64::NEG_INFINITY, f64::max);
    let count = xs.len();
    let ok = |b: f64| {
        (1..count).all(|i| {
            let i = i as f64;
            a + q * (i * i * b).ln() <= (2.0 * i + 1.0) * b
        })
    };
    let x1 = xs[0];
    let mut lo = x1.max(q).max(1e-300);
    let b = if ok(lo) {
        lo
    } else {
        let mut hi = 2.0 * lo;
        while !ok(hi) {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    Envelope {
        q,
        a,
        b,
        ln_beta_tilde: x1 - b,
    }
}

/// Search options for the termination index.
#[derive(Clone, Debug, Serialize)]
pub struct RSearch {
    /// Levels computed one by one before the continuation starts.
    pub explicit_levels: usize,
    /// Give up beyond `r = 10^max_log10_r`.
    pub max_log10_r: f64,
    /// Relative growth of `ln(1/c)` across one continuation block.
    pub block_growth: f64,
}

impl Default for RSearch {
    fn default() -> Self {
        RSearch {
            explicit_levels: 64,
            max_log10_r: 100.0,
            block_growth: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RCertificate {
    /// Decimal digits of `r`.
    pub r: String,
    pub r_u64: Option<u64>,
    pub log10_r: f64,
    /// Found among the explicit levels.
    pub explicit: bool,
    /// `ln((1+φ)^r ω⁻¹(c)/c)`.
    pub lhs_ln: f64,
    /// `ln(ω(c_{r+1})/c_{r+1})`.
    pub rhs_ln: f64,
    /// `lhs - rhs` at `r`, nonnegative.
    pub margin: f64,
    /// `lhs - rhs` at `r - 1`; for `r = 1` this is the check with exponent 0.
    pub margin_before: f64,
    pub ln_phi: f64,
    pub ln_c_r: f64,
    pub ln_ell_r: f64,
    pub blocks: usize,
    pub precision_bits: usize,
}

fn excess_hp(m: &Modulus, u: &BigFloat, hp: &mut Hp) -> BigFloat {
    match m.kind() {
        Kind::Identity => hp.f(0.0),
        Kind::Holder { alpha } => hp.mul(&hp.f(1.0 - alpha), u),
        Kind::LogPow { alpha } => {
            let l = hp.ln(u);
            hp.mul(&hp.f(*alpha), &l)
        }
        Kind::Scaled { factor, inner } => {
            let lf = hp.ln(&hp.f(*factor));
            let rest = excess_hp(inner, u, hp);
            hp.add(&lf, &rest)
        }
    }
}

struct Inequality<'a> {
    m: &'a Modulus,
    hp: Hp,
    lambda: BigFloat,
    a: BigFloat,
    ln_lambda: f64,
    a_f: f64,
}

impl Inequality<'_> {
    /// `(lhs, rhs)` in log form at index `i`, with `x_next = ln(1/c_{i+1})`.
    fn sides(&mut self, i: &BigFloat, x_next: &BigFloat) -> (BigFloat, BigFloat) {
        let lhs = self.hp.add(&self.hp.mul(i, &self.lambda), &self.a);
        let rhs = excess_hp(self.m, x_next, &mut self.hp);
        (lhs, rhs)
    }

    fn margin(&mut self, i: &BigFloat, x_next: &BigFloat) -> BigFloat {
        let (l, r) = self.sides(i, x_next);
        self.hp.sub(&l, &r)
    }

    /// Cheap `f64` estimate of the margin, used to skip precise evaluations.
    fn screen(&self, i: f64, x_next: f64) -> f64 {
        (i.ln() + self.ln_lambda).exp() + self.a_f - self.m.excess(x_next)
    }
}

/// Samples `(log10 i, ln ℓ_i)` met during the search, used by `κ`.
pub(crate) struct Search {
    pub cert: RCertificate,
    pub ells: Vec<f64>,
}

pub(crate) fn search_r(ladder: &Ladder, c: f64, opts: &RSearch) -> Result<Search, ParamError> {
    if !(opts.block_growth > 0.0 && opts.block_growth < 1.0) {
        return Err(ParamError::Option {
            name: "block_growth",
            value: opts.block_growth,
        });
    }
    if !(opts.max_log10_r > 0.0 && opts.max_log10_r <= 4000.0) {
        return Err(ParamError::Option {
            name: "max_log10_r",
            value: opts.max_log10_r,
        });
    }
    let m = &ladder.m;
    let ln_c = c.ln();
    let bits = (opts.max_log10_r * std::f64::consts::LOG2_10).ceil() as usize + 192;
    let mut hp = Hp::new(bits);
    let phi_hp = {
        let l = hp.f(ladder.phi_ln());
        hp.exp(&l)
    };
    let lambda = hp.ln1p_small(&phi_hp);
    let ln_lambda = {
        let p = ladder.phi_ln();
        if p < -30.0 {
            p
        } else {
            p.exp().ln_1p().ln()
        }
    };
    let a_f = m.ln_inverse(ln_c)? - ln_c;
    let mut ineq = Inequality {
        m,
        a: hp.f(a_f),
        hp,
        lambda,
        ln_lambda,
        a_f,
    };
    let k = opts.explicit_levels.max(1);
    let levels = sequence(ladder, ln_c, k + 1)?;
    let mut ells: Vec<f64> = Vec::new();
    let finish = |ineq: &mut Inequality,
                  r: BigFloat,
                  x_r: f64,
                  x_next: BigFloat,
                  x_r_big: Option<BigFloat>,
                  explicit: bool,
                  blocks: usize,
                  ln_n: f64|
     -> RCertificate {
        let (l, rr) = ineq.sides(&r, &x_next);
        let margin = hp::to_f64(&ineq.hp.sub(&l, &rr));
        let one = ineq.hp.f(1.0);
        let prev = ineq.hp.sub(&r, &one);
        let x_r_big = x_r_big.unwrap_or_else(|| ineq.hp.f(x_r));
        let before = ineq.margin(&prev, &x_r_big);
        let digits = hp::to_biguint(&r)
            .map(|v| v.to_string())
            .unwrap_or_default();
        RCertificate {
            r_u64: digits.parse::<u64>().ok(),
            log10_r: hp::to_f64(&r).log10(),
            r: digits,
            explicit,
            lhs_ln: hp::to_f64(&l),
            rhs_ln: hp::to_f64(&rr),
            margin,
            margin_before: hp::to_f64(&before),
            ln_phi: 0.0,
            ln_c_r: -x_r,
            ln_ell_r: -x_r - ln_n,
            blocks,
            precision_bits: ineq.hp.bits(),
        }
    };
    for (idx, lvl) in levels.iter().enumerate().take(k) {
        ells.push(lvl.ln_ell);
        let i = ineq.hp.u(idx as u64 + 1);
        let x_next = ineq.hp.f(-lvl.ln_c_next);
        let mg = ineq.margin(&i, &x_next);
        if !hp::is_neg(&mg) {
            let mut cert = finish(&mut ineq, i, -lvl.ln_c, x_next, None, true, 0, lvl.n.ln);
            cert.ln_phi = ladder.phi_ln();
            return Ok(Search { cert, ells });
        }
    }
    // Continuation from x_j with j = k + 1.
    let mut j = ineq.hp.u(k as u64 + 1);
    let mut xj = ineq.hp.f(-levels[k].ln_c);
    let mut blocks = 0usize;
    let unterminated = |reason: &str| ParamError::Unterminated {
        max_log10: opts.max_log10_r,
        reason: reason.to_string(),
    };
    loop {
        let xf = hp::to_f64(&xj);
        let jf = hp::to_f64(&j);
        if !(xf < 1e300) {
            return Err(unterminated("ln(1/c_i) left the f64 range"));
        }
        if jf.log10() > opts.max_log10_r {
            return Err(unterminated("index cap reached"));
        }
        let here = ladder.level(-xf)?;
        ells.push(-xf - here.n.ln);
        let s0 = here.n.ln + here.m.ln;
        let len_f = (opts.block_growth * xf / s0).floor().max(1.0);
        let sigma = if len_f > 1.0 {
            let mid = ladder.level(-(xf + 0.5 * len_f * s0))?;
            mid.n.ln + mid.m.ln
        } else {
            s0
        };
        let hp_ = &ineq.hp;
        let len = hp_.f(len_f);
        let sig = hp_.f(sigma);
        let x_end = hp_.add(&xj, &hp_.mul(&len, &sig));
        let j_end = hp_.add(&j, &len);
        let one = hp_.f(1.0);
        let i_end = hp_.sub(&j_end, &one);
        blocks += 1;
        let screen = ineq.screen(hp::to_f64(&i_end), hp::to_f64(&x_end));
        if screen >= -1e-6 && !hp::is_neg(&ineq.margin(&i_end, &x_end)) {
            // First sign change lies in (j - 1, i_end].
            let mut lo = ineq.hp.sub(&j, &one);
            let mut hi = i_end;
            loop {
                let gap = ineq.hp.sub(&hi, &lo);
                if hp::cmp(&gap, &one) != std::cmp::Ordering::Greater {
                    break;
                }
                let mid = ineq.hp.half_floor(&lo, &hi);
                let steps = ineq.hp.sub(&ineq.hp.add(&mid, &one), &j);
                let xm = ineq.hp.add(&xj, &ineq.hp.mul(&steps, &sig));
                if hp::is_neg(&ineq.margin(&mid, &xm)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let r = hi;
            let steps_r = ineq.hp.sub(&r, &j);
            let x_r = ineq.hp.add(&xj, &ineq.hp.mul(&steps_r, &sig));
            let x_next = ineq.hp.add(&x_r, &sig);
            let x_rf = hp::to_f64(&x_r);
            let n_r = ladder.n0(-x_rf)?;
            ells.push(-x_rf - n_r.ln);
            let mut cert = finish(&mut ineq, r, x_rf, x_next, Some(x_r), false, blocks, n_r.ln);
            cert.ln_phi = ladder.phi_ln();
            return Ok(Search { cert, ells });
        }
        j = j_end;
        xj = x_end;
    }
}

/// Smallest `r >= 1` with `(1+φ)^r ω⁻¹(c)/c >= ω(c_{r+1})/c_{r+1}`.
pub fn compute_r(
    d: usize,
    m: &Modulus,
    eps: f64,
    c: f64,
    opts: &RSearch,
) -> Result<RCertificate, ParamError> {
    check_c(m, c)?;
    let ladder = Ladder::new(d, m, eps)?;
    Ok(search_r(&ladder, c, opts)?.cert)
}

/// `ln υ(d, ω, ε, ℓ)` with constant factor `pi`:
/// `υ = π ω(ω(εω(ℓ)))^d / (ℓ ω(εω(ℓ))^{d-1})`.
///
/// Written as `π ε ∏ ω(s)/s` over `s ∈ {ℓ, εω(ℓ), ω(εω(ℓ))}` (the last with
/// power `d`), which avoids cancellation between huge logarithms.
pub fn upsilon_ln(
    d: usize,
    m: &Modulus,
    pi: f64,
    eps: f64,
    ln_ell: f64,
) -> Result<f64, ParamError> {
    check_eps(eps)?;
    if d == 0 {
        return Err(ParamError::Dimension(d));
    }
    let ln_a = m.a_omega().ln();
    if !(ln_ell < ln_a) {
        return Err(ParamError::UpsilonDomain(format!(
            "ℓ = {} is not below a_ω",
            ln_ell.exp()
        )));
    }
    let e0 = m.excess(-ln_ell);
    let ln_u1 = eps.ln() + ln_ell + e0;
    if !(ln_u1 < ln_a) {
        return Err(ParamError::UpsilonDomain("εω(ℓ) is not below a_ω".into()));
    }
    let e1 = m.excess(-ln_u1);
    let ln_u2 = ln_u1 + e1;
    if !(ln_u2 < ln_a) {
        return Err(ParamError::UpsilonDomain(
            "ω(εω(ℓ)) is not below a_ω".into(),
        ));
    }
    let e2 = m.excess(-ln_u2);
    Ok(pi.ln() + eps.ln() + e0 + e1 + d as f64 * e2)
}

pub fn upsilon(d: usize, m: &Modulus, pi: f64, eps: f64, ell: f64) -> Result<f64, ParamError> {
    Ok(upsilon_ln(d, m, pi, eps, ell.ln())?.exp())
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaReport {
    pub kappa: f64,
    pub ln_kappa: f64,
    pub pi: f64,
    /// `L √k`, the factor applied to the modulus for the level sequence.
    pub scale: f64,
    pub r: RCertificate,
    pub samples: usize,
}

/// `κ = max_{i <= r} υ(d, ω, ε, c_i / N_i)` where the levels and `r` come from
/// `L √k · ω`.
///
/// `υ` is monotone in `ℓ` for every supported kind, so the maximum over the
/// continuation is attained at its sampled endpoints.
#[allow(clippy::too_many_arguments)]
pub fn kappa(
    d: usize,
    m: &Modulus,
    l: f64,
    k: usize,
    eps: f64,
    c: f64,
    pi: f64,
    opts: &RSearch,
) -> Result<KappaReport, ParamError> {
    let scale = l * (k as f64).sqrt();
    let mbar = if scale == 1.0 {
        m.clone()
    } else {
        Modulus::scaled(scale, m.clone())?
    };
    check_c(&mbar, c)?;
    let ladder = Ladder::new(d, &mbar, eps)?;
    let s = search_r(&ladder, c, opts)?;
    let mut best = f64::NEG_INFINITY;
    for &ln_ell in &s.ells {
        best = best.max(upsilon_ln(d, m, pi, eps, ln_ell)?);
    }
    Ok(KappaReport {
        kappa: best.exp(),
        ln_kappa: best,
        pi,
        scale,
        samples: s.ells.len(),
        r: s.cert,
    })
}
