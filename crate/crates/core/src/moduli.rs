//! Moduli of continuity on `(0, a_ω)` and ω-continuity constants of finite maps.
//!
//! A modulus is stored together with its admissible interval. Evaluation is
//! available both directly and in log space, where `excess(u)` is
//! `ln(ω(t)/t)` at `t = e^{-u}`. The log-space forms keep parameter
//! recursions alive far below the smallest positive `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INVERSE_MAX_ITER: usize = 200;
pub const INVERSE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModulusError {
    #[error("{name} = {value} is invalid, expected {expected}")]
    Parameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("t = {0} lies outside (0, a_omega]")]
    Domain(f64),
    #[error("y = {0} lies outside the range of the modulus")]
    Range(f64),
    #[error("inverse failed to converge for y = {0}")]
    NoConvergence(f64),
    #[error("source points {0} and {1} coincide but have different images")]
    NotAFunction(usize, usize),
    #[error("map is not injective: source points {0} and {1} share an image")]
    NotInjective(usize, usize),
    #[error("map has {0} source points but {1} target points")]
    Length(usize, usize),
    #[error("point {0} has dimension {1}, expected {2}")]
    Dimension(usize, usize, usize),
    #[error("unknown modulus kind {0:?}")]
    UnknownKind(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Kind {
    Identity,
    Holder { alpha: f64 },
    LogPow { alpha: f64 },
    Scaled { factor: f64, inner: Box<Modulus> },
}

/// A modulus of continuity together with its admissible interval `(0, a_omega)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModulusSpec", into = "ModulusSpec")]
pub struct Modulus {
    kind: Kind,
    a_omega: f64,
}

fn param(name: &'static str, value: f64, expected: &'static str) -> ModulusError {
    ModulusError::Parameter {
        name,
        value,
        expected,
    }
}

impl Modulus {
    pub fn identity() -> Self {
        Modulus {
            kind: Kind::Identity,
            a_omega: 1.0,
        }
    }

    pub fn holder(alpha: f64) -> Result<Self, ModulusError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(param("alpha", alpha, "alpha in (0, 1]"));
        }
        Ok(Modulus {
            kind: Kind::Holder { alpha },
            a_omega: 1.0,
        })
    }

    /// `t (log 1/t)^alpha`, with default `a_omega = min(e^-2, e^-alpha)`.
    pub fn logpow(alpha: f64) -> Result<Self, ModulusError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(param("alpha", alpha, "alpha > 0"));
        }
        Ok(Modulus {
            kind: Kind::LogPow { alpha },
            a_omega: (-2.0f64).exp().min((-alpha).exp()),
        })
    }

    pub fn scaled(factor: f64, inner: Modulus) -> Result<Self, ModulusError> {
        if !(factor >= 1.0 && factor.is_finite()) {
            return Err(param("L", factor, "L >= 1"));
        }
        let a_omega = inner.a_omega;
        Ok(Modulus {
            kind: Kind::Scaled {
                factor,
                inner: Box::new(inner),
            },
            a_omega,
        })
    }

    pub fn with_a_omega(mut self, a: f64) -> Result<Self, ModulusError> {
        let ok = match &self.kind {
            Kind::LogPow { alpha } => a > 0.0 && a <= (-2f64).exp().min((-alpha).exp()),
            _ => a > 0.0 && a <= 1.0,
        };
        if !ok {
            let want = match &self.kind {
                Kind::LogPow { .. } => "a_omega <= min(e^-2, e^-alpha)",
                _ => "a_omega in (0, 1]",
            };
            return Err(param("a_omega", a, want));
        }
        if let Kind::Scaled { inner, .. } = &mut self.kind {
            let replaced = (**inner).clone().with_a_omega(a)?;
            **inner = replaced;
        }
        self.a_omega = a;
        Ok(self)
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn a_omega(&self) -> f64 {
        self.a_omega
    }

    pub fn name(&self) -> String {
        match &self.kind {
            Kind::Identity => "identity".into(),
            Kind::Holder { alpha } => format!("holder({alpha})"),
            Kind::LogPow { alpha } => format!("logpow({alpha})"),
            Kind::Scaled { factor, inner } => format!("{factor}*{}", inner.name()),
        }
    }

    fn raw(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Identity => t,
            Kind::Holder { alpha } => t.powf(*alpha),
            Kind::LogPow { alpha } => t * (-t.ln()).powf(*alpha),
            Kind::Scaled { factor, inner } => factor * inner.raw(t),
        }
    }

    /// `ω(t)` for `0 < t <= a_omega`; the right endpoint is the continuous limit.
    pub fn eval(&self, t: f64) -> Result<f64, ModulusError> {
        if !(t > 0.0 && t <= self.a_omega) {
            return Err(ModulusError::Domain(t));
        }
        Ok(self.raw(t))
    }

    /// `ω(a_omega)`, the supremum of the range.
    pub fn sup(&self) -> f64 {
        self.raw(self.a_omega)
    }

    /// `ln(ω(t)/t)` at `t = e^{-u}`.
    pub fn excess(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Identity => 0.0,
            Kind::Holder { alpha } => (1.0 - alpha) * u,
            Kind::LogPow { alpha } => alpha * u.ln(),
            Kind::Scaled { factor, inner } => factor.ln() + inner.excess(u),
        }
    }

    /// `ln ω(t)` given `ln t <= ln a_omega`.
    pub fn ln_eval(&self, ln_t: f64) -> Result<f64, ModulusError> {
        if !(ln_t <= self.a_omega.ln() + 1e-15 * self.a_omega.ln().abs().max(1.0)) || ln_t.is_nan()
        {
            return Err(ModulusError::Domain(ln_t.exp()));
        }
        Ok(ln_t + self.excess(-ln_t))
    }

    /// `ω^{-1}(y)` for `0 < y <= ω(a_omega)`.
    pub fn inverse(&self, y: f64) -> Result<f64, ModulusError> {
        let sup = self.sup();
        if !(y > 0.0 && y <= sup) {
            return Err(ModulusError::Range(y));
        }
        match &self.kind {
            Kind::Identity => Ok(y),
            Kind::Holder { alpha } => Ok(y.powf(1.0 / alpha).min(self.a_omega)),
            Kind::Scaled { factor, inner } => inner.inverse(y / factor),
            Kind::LogPow { .. } => {
                if y == sup {
                    return Ok(self.a_omega);
                }
                self.bisect_inverse(y)
            }
        }
    }

    fn bisect_inverse(&self, y: f64) -> Result<f64, ModulusError> {
        // Geometric bisection: the search variable is u = ln(1/t).
        let mut lo = -self.a_omega.ln();
        let mut hi = lo.max(-y.ln()) + 1.0;
        let mut guard = 0;
        while self.raw((-hi).exp()) > y {
            hi *= 2.0;
            guard += 1;
            if guard > 64 || !hi.is_finite() {
                return Err(ModulusError::NoConvergence(y));
            }
        }
        for _ in 0..INVERSE_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.raw((-mid).exp()) > y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = (-(0.5 * (lo + hi))).exp();
        if (self.raw(t) - y).abs() > INVERSE_REL_TOL * y {
            return Err(ModulusError::NoConvergence(y));
        }
        Ok(t)
    }

    /// `ln ω^{-1}(y)` given `ln y <= ln ω(a_omega)`.
    pub fn ln_inverse(&self, ln_y: f64) -> Result<f64, ModulusError> {
        let ln_sup = self.sup().ln();
        if ln_y.is_nan() || ln_y > ln_sup + 1e-15 * ln_sup.abs().max(1.0) {
            return Err(ModulusError::Range(ln_y.exp()));
        }
        match &self.kind {
            Kind::Identity => Ok(ln_y),
            Kind::Holder { alpha } => Ok((ln_y / alpha).min(self.a_omega.ln())),
            Kind::Scaled { factor, inner } => inner.ln_inverse(ln_y - factor.ln()),
            Kind::LogPow { alpha } => {
                let ua = -self.a_omega.ln();
                if ua < *alpha {
                    return Err(param("a_omega", self.a_omega, "a_omega <= exp(-alpha)"));
                }
                if ln_y >= ln_sup {
                    return Ok(-ua);
                }
                // g(u) = -u + alpha ln u is decreasing for u >= alpha.
                let g = |u: f64| -u + alpha * u.ln();
                // omega(t) >= t puts the root at u >= -ln y whenever g(-ln y) >= ln y.
                let mut lo = if g(-ln_y) >= ln_y { ua.max(-ln_y) } else { ua };
                let mut hi = ua.max(-ln_y) + 1.0;
                let mut guard = 0;
                while g(hi) > ln_y {
                    hi *= 2.0;
                    guard += 1;
                    if guard > 2000 || !hi.is_finite() {
                        return Err(ModulusError::NoConvergence(ln_y));
                    }
                }
                for _ in 0..INVERSE_MAX_ITER {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if g(mid) > ln_y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let u = 0.5 * (lo + hi);
                if (g(u) - ln_y).abs() > INVERSE_REL_TOL * ln_y.abs().max(1.0) {
                    return Err(ModulusError::NoConvergence(ln_y));
                }
                Ok(-u)
            }
        }
    }

    /// `ln ω^{-1}(y)`, substituting `ω(a_omega)/2` when `y` is outside the range.
    /// The flag reports whether the substitution happened.
    pub fn ln_inverse_clamped(&self, ln_y: f64) -> Result<(f64, bool), ModulusError> {
        let ln_sup = self.sup().ln();
        if ln_y >= ln_sup {
            Ok((self.ln_inverse(ln_sup - std::f64::consts::LN_2)?, true))
        } else {
            Ok((self.ln_inverse(ln_y)?, false))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModulusSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<ModulusSpec>>,
}

impl TryFrom<ModulusSpec> for Modulus {
    type Error = ModulusError;
    fn try_from(s: ModulusSpec) -> Result<Self, ModulusError> {
        let alpha = || s.alpha.ok_or_else(|| param("alpha", f64::NAN, "a value"));
        let m = match s.kind.as_str() {
            "identity" => Modulus::identity(),
            "holder" => Modulus::holder(alpha()?)?,
            "logpow" => Modulus::logpow(alpha()?)?,
            "scaled" => {
                let inner = s
                    .inner
                    .clone()
                    .ok_or_else(|| param("inner", f64::NAN, "an inner modulus"))?;
                Modulus::scaled(s.factor.unwrap_or(1.0), Modulus::try_from(*inner)?)?
            }
            other => return Err(ModulusError::UnknownKind(other.to_string())),
        };
        match s.a_omega {
            Some(a) => m.with_a_omega(a),
            None => Ok(m),
        }
    }
}

impl From<Modulus> for ModulusSpec {
    fn from(m: Modulus) -> Self {
        let a_omega = Some(m.a_omega);
        match m.kind {
            Kind::Identity => ModulusSpec {
                kind: "identity".into(),
                alpha: None,
                factor: None,
                a_omega,
                inner: None,
            },
            Kind::Holder { alpha } => ModulusSpec {
                kind: "holder".into(),
                alpha: Some(alpha),
                factor: None,
                a_omega,
                inner: None,
            },
            Kind::LogPow { alpha } => ModulusSpec {
                kind: "logpow".into(),
                alpha: Some(alpha),
                factor: None,
                a_omega,
                inner: None,
            },
            Kind::Scaled { factor, inner } => ModulusSpec {
                kind: "scaled".into(),
                alpha: None,
                factor: Some(factor),
                a_omega,
                inner: Some(Box::new((*inner).into())),
            },
        }
    }
}

impl std::str::FromStr for Modulus {
    type Err = ModulusError;

    /// `identity`, `holder:A`, `logpow:A`, `scaled:L:<inner>`, each optionally
    /// followed by `@a` to set `a_omega`.
    fn from_str(s: &str) -> Result<Self, ModulusError> {
        let s = s.trim();
        if s.starts_with('{') {
            let spec: ModulusSpec =
                serde_json::from_str(s).map_err(|e| ModulusError::UnknownKind(e.to_string()))?;
            return Modulus::try_from(spec);
        }
        let (body, a) = match s.rsplit_once('@') {
            Some((b, a)) => (b, Some(parse_num("a_omega", a)?)),
            None => (s, None),
        };
        let m = if let Some(rest) = body.strip_prefix("scaled:") {
            let (l, inner) = rest
                .split_once(':')
                .ok_or_else(|| ModulusError::UnknownKind(s.to_string()))?;
            Modulus::scaled(parse_num("L", l)?, inner.parse()?)?
        } else if let Some(a) = body.strip_prefix("holder:") {
            Modulus::holder(parse_num("alpha", a)?)?
        } else if let Some(a) = body.strip_prefix("logpow:") {
            Modulus::logpow(parse_num("alpha", a)?)?
        } else if body == "identity" {
            Modulus::identity()
        } else {
            return Err(ModulusError::UnknownKind(s.to_string()));
        };
        match a {
            Some(a) => m.with_a_omega(a),
            None => Ok(m),
        }
    }
}

fn parse_num(name: &'static str, s: &str) -> Result<f64, ModulusError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| param(name, f64::NAN, "a number"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Increasing,
    Concave,
    Submultiplicative,
    DominatesIdentity,
    RatioMonotone,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Violation {
    pub property: Property,
    pub s: f64,
    pub t: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassReport {
    pub modulus: String,
    pub a_omega: f64,
    pub grid_points: usize,
    pub tolerance: f64,
    pub checks: usize,
    pub violations: Vec<Violation>,
}

impl ClassReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

// The property holds when lhs <= rhs up to relative tolerance.
#[allow(clippy::too_many_arguments)]
fn record(
    out: &mut Vec<Violation>,
    tol: f64,
    property: Property,
    s: f64,
    t: f64,
    lhs: f64,
    rhs: f64,
) {
    let margin = rhs - lhs;
    if margin < -tol * lhs.abs().max(rhs.abs()) {
        out.push(Violation {
            property,
            s,
            t,
            margin,
        });
    }
}

/// Geometric grid of `n` points in `(0, a)` spanning `decades` orders of magnitude.
pub fn geometric_grid(a: f64, n: usize, decades: f64) -> Vec<f64> {
    (0..n)
        .map(|k| a * 10f64.powf(-decades * (k as f64 + 1.0) / n as f64))
        .collect()
}

/// Checks monotonicity, concavity, submultiplicativity, `ω(t) >= t` and
/// monotonicity of `ω(t)/t` on all pairs of a geometric grid.
pub fn check_class_m(m: &Modulus, n: usize, decades: f64, tol: f64) -> ClassReport {
    let mut grid = geometric_grid(m.a_omega(), n, decades);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let w: Vec<f64> = grid.iter().map(|&t| m.raw(t)).collect();
    let mut violations = Vec::new();
    let mut checks = 0usize;
    for j in 0..grid.len() {
        let t = grid[j];
        checks += 1;
        record(
            &mut violations,
            tol,
            Property::DominatesIdentity,
            t,
            t,
            t,
            w[j],
        );
        if j > 0 {
            checks += 2;
            let s = grid[j - 1];
            // Strictness: equal values at distinct points count as a violation.
            if w[j - 1] >= w[j] {
                violations.push(Violation {
                    property: Property::Increasing,
                    s,
                    t,
                    margin: w[j] - w[j - 1],
                });
            }
            record(
                &mut violations,
                tol,
                Property::RatioMonotone,
                s,
                t,
                w[j] / t,
                w[j - 1] / s,
            );
        }
        for i in 0..=j {
            let s = grid[i];
            checks += 2;
            let mid = m.raw(0.5 * (s + t));
            record(
                &mut violations,
                tol,
                Property::Concave,
                s,
                t,
                0.5 * (w[i] + w[j]),
                mid,
            );
            let st = s * t;
            if st < m.a_omega() {
                record(
                    &mut violations,
                    tol,
                    Property::Submultiplicative,
                    s,
                    t,
                    m.raw(st),
                    w[i] * w[j],
                );
            }
        }
    }
    ClassReport {
        modulus: m.name(),
        a_omega: m.a_omega(),
        grid_points: grid.len(),
        tolerance: tol,
        checks,
        violations,
    }
}

/// A map between finite subsets of `R^d`, given pointwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteMap {
    pub source: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl FiniteMap {
    pub fn new(source: Vec<Vec<f64>>, target: Vec<Vec<f64>>) -> Result<Self, ModulusError> {
        let map = FiniteMap { source, target };
        map.validate()?;
        Ok(map)
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn inverse(&self) -> FiniteMap {
        FiniteMap {
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }

    fn validate(&self) -> Result<(), ModulusError> {
        if self.source.len() != self.target.len() {
            return Err(ModulusError::Length(self.source.len(), self.target.len()));
        }
        for set in [&self.source, &self.target] {
            if let Some(first) = set.first() {
                let d = first.len();
                for (i, p) in set.iter().enumerate() {
                    if p.len() != d {
                        return Err(ModulusError::Dimension(i, p.len(), d));
                    }
                }
            }
        }
        for i in 0..self.len() {
            for j in 0..i {
                if self.source[i] == self.source[j] && self.target[i] != self.target[j] {
                    return Err(ModulusError::NotAFunction(j, i));
                }
            }
        }
        Ok(())
    }

    fn check_injective(&self) -> Result<(), ModulusError> {
        for i in 0..self.len() {
            for j in 0..i {
                if self.target[i] == self.target[j] && self.source[i] != self.source[j] {
                    return Err(ModulusError::NotInjective(j, i));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OmegaConstant {
    pub value: f64,
    pub argmax: Option<(usize, usize)>,
    pub pairs_used: usize,
    pub pairs_void: usize,
}

/// `sup ‖f(y) - f(x)‖ / ω(‖y - x‖)` over pairs with `0 < ‖y - x‖ < a_omega`.
/// Pairs at distance `>= a_omega` impose no constraint.
pub fn omega_continuity(map: &FiniteMap, m: &Modulus) -> Result<OmegaConstant, ModulusError> {
    map.validate()?;
    let a = m.a_omega();
    let mut best = OmegaConstant {
        value: 0.0,
        argmax: None,
        pairs_used: 0,
        pairs_void: 0,
    };
    for i in 0..map.len() {
        for j in (i + 1)..map.len() {
            let dx = dist(&map.source[i], &map.source[j]);
            if dx == 0.0 {
                continue;
            }
            if dx >= a {
                best.pairs_void += 1;
                continue;
            }
            best.pairs_used += 1;
            let ratio = dist(&map.target[i], &map.target[j]) / m.raw(dx);
            if ratio > best.value {
                best.value = ratio;
                best.argmax = Some((i, j));
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiOmega {
    pub forward: OmegaConstant,
    pub inverse: OmegaConstant,
    pub value: f64,
}

pub fn bi_omega(map: &FiniteMap, m: &Modulus) -> Result<BiOmega, ModulusError> {
    map.validate()?;
    map.check_injective()?;
    let forward = omega_continuity(map, m)?;
    let inverse = omega_continuity(&map.inverse(), m)?;
    let value = forward.value.max(inverse.value);
    Ok(BiOmega {
        forward,
        inverse,
        value,
    })
}

/// `sup_R sup_{x,y in B(center,R)} ‖f(y)-f(x)‖ / (R ω(‖y-x‖/R))` with `R`
/// ranging over the realized norms `‖x - center‖` of source points.
///
/// For a modulus in the class, `R ω(δ/R)` is nondecreasing in `R`, so each
/// pair is charged at the smallest admissible realized radius.
pub fn homogeneous_constant(
    map: &FiniteMap,
    m: &Modulus,
    center: Option<&[f64]>,
) -> Result<f64, ModulusError> {
    map.validate()?;
    let d = map.source.first().map_or(0, |p| p.len());
    let origin = vec![0.0; d];
    let c = center.unwrap_or(&origin);
    let norms: Vec<f64> = map.source.iter().map(|p| dist(p, c)).collect();
    let mut radii: Vec<f64> = norms.iter().copied().filter(|&r| r > 0.0).collect();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    radii.dedup();
    let a = m.a_omega();
    let mut best = 0.0f64;
    for i in 0..map.len() {
        for j in (i + 1)..map.len() {
            let dx = dist(&map.source[i], &map.source[j]);
            if dx == 0.0 {
                continue;
            }
            let need = norms[i].max(norms[j]);
            let k = radii.partition_point(|&r| r < need || dx / r >= a);
            if let Some(&r) = radii.get(k) {
                let ratio = dist(&map.target[i], &map.target[j]) / (r * m.raw(dx / r));
                best = best.max(ratio);
            }
        }
    }
    Ok(best)
}
