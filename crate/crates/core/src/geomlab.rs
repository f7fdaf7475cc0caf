//! Numerical experiments on sampled homeomorphisms: the translation/stretch
//! dichotomy on slabs, the recentering iteration, image volumes, the
//! volume-difference bound, and planar raster checks on image boundaries.

use crate::density::Schedule;
use crate::moduli::{self, FiniteMap, Modulus};
use crate::params;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid map: {0}")]
    Map(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("map is not injective on the {0} sample grid")]
    NotInjective(usize),
    #[error("inversion failed on {failed} of {total} samples")]
    Reliability { failed: usize, total: usize },
    #[error("step {step}: statement 1 failed but no stretch point was found")]
    Inconsistent { step: usize },
    #[error(transparent)]
    Modulus(#[from] moduli::ModulusError),
    #[error(transparent)]
    Params(#[from] params::ParamError),
}

type Point = Vec<f64>;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
        }
    }
    det
}

/// Solves `m x = b`; `None` when singular.
fn solve(m: &[Vec<f64>], b: &[f64]) -> Option<Point> {
    let n = b.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .zip(b)
        .map(|(r, &v)| {
            let mut r = r.clone();
            r.push(v);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(piv, col);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..=n {
                    a[r][k] -= f * a[col][k];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    /// `x ↦ A x + b`.
    Affine { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// `x₂ += amp · sin(freq · x₁)`.
    Shear { amp: f64, freq: f64 },
    /// `x ↦ x + amp (1 - s²)² (x - center)` for `s = ‖x - center‖ / radius < 1`.
    RadialBump {
        center: Vec<f64>,
        radius: f64,
        amp: f64,
    },
    /// `x₁ ↦ F(x₁)` with `F` piecewise linear through `(knots, values)` and
    /// extended with slope 1 outside.
    Stretch { knots: Vec<f64>, values: Vec<f64> },
    /// Multilinear interpolation of samples on a regular grid over `lo..hi`,
    /// `values` in row-major order with the last axis fastest; linear
    /// extrapolation outside.
    Grid {
        lo: Vec<f64>,
        hi: Vec<f64>,
        res: Vec<usize>,
        values: Vec<Vec<f64>>,
    },
}

/// A homeomorphism of `ℝ^d`, evaluable anywhere; `domain` is the box it is
/// studied on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampledHomeo {
    pub d: usize,
    pub domain: Vec<(f64, f64)>,
    #[serde(flatten)]
    pub kind: MapKind,
}

impl SampledHomeo {
    pub fn new(d: usize, domain: Vec<(f64, f64)>, kind: MapKind) -> Result<Self, GeomError> {
        if d == 0 || domain.len() != d {
            return Err(GeomError::Dimension(format!(
                "domain has {} axes for d = {d}",
                domain.len()
            )));
        }
        if domain
            .iter()
            .any(|&(a, b)| !(a < b && a.is_finite() && b.is_finite()))
        {
            return Err(GeomError::Map(
                "domain must be a nondegenerate finite box".into(),
            ));
        }
        match &kind {
            MapKind::Affine { a, b } => {
                if a.len() != d || a.iter().any(|r| r.len() != d) || b.len() != d {
                    return Err(GeomError::Dimension("affine matrix or shift".into()));
                }
                if det(a) == 0.0 {
                    return Err(GeomError::Map("singular affine matrix".into()));
                }
            }
            MapKind::Shear { amp, freq } => {
                if d < 2 || !amp.is_finite() || !freq.is_finite() {
                    return Err(GeomError::Map(
                        "shear needs d >= 2 and finite parameters".into(),
                    ));
                }
            }
            MapKind::RadialBump {
                center,
                radius,
                amp,
            } => {
                if center.len() != d || !(*radius > 0.0) {
                    return Err(GeomError::Map("radial bump center or radius".into()));
                }
                // s ↦ s (1 + amp (1 - s²)²) is increasing iff -1 < amp < 5/4.
                if !(*amp > -1.0 && *amp < 1.25) {
                    return Err(GeomError::Map(format!(
                        "bump amplitude {amp} outside (-1, 5/4)"
                    )));
                }
            }
            MapKind::Stretch { knots, values } => {
                if knots.is_empty() || knots.len() != values.len() {
                    return Err(GeomError::Map(
                        "stretch knots and values differ in length".into(),
                    ));
                }
                if knots.windows(2).any(|w| !(w[0] < w[1]))
                    || values.windows(2).any(|w| !(w[0] < w[1]))
                {
                    return Err(GeomError::Map("stretch must be strictly increasing".into()));
                }
            }
            MapKind::Grid {
                lo,
                hi,
                res,
                values,
            } => {
                if lo.len() != d || hi.len() != d || res.len() != d {
                    return Err(GeomError::Dimension("grid bounds".into()));
                }
                if res.iter().any(|&r| r < 2) || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(GeomError::Map("grid needs >= 2 samples per axis".into()));
                }
                let n: usize = res.iter().product();
                if values.len() != n || values.iter().any(|v| v.len() != d) {
                    return Err(GeomError::Dimension(format!(
                        "grid expects {n} values of length {d}"
                    )));
                }
            }
        }
        Ok(SampledHomeo { d, domain, kind })
    }

    pub fn identity(domain: Vec<(f64, f64)>) -> Self {
        let d = domain.len();
        let a = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        SampledHomeo::new(d, domain, MapKind::Affine { a, b: vec![0.0; d] }).expect("identity")
    }

    pub fn affine(
        domain: Vec<(f64, f64)>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    ) -> Result<Self, GeomError> {
        SampledHomeo::new(domain.len(), domain, MapKind::Affine { a, b })
    }

    pub fn translation(domain: Vec<(f64, f64)>, v: Vec<f64>) -> Result<Self, GeomError> {
        let d = domain.len();
        let a = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        SampledHomeo::new(d, domain, MapKind::Affine { a, b: v })
    }

    /// `F` with slope `factor` on `[a, b]` and slope 1 elsewhere.
    pub fn stretch_cell(
        domain: Vec<(f64, f64)>,
        a: f64,
        b: f64,
        factor: f64,
    ) -> Result<Self, GeomError> {
        if !(factor > 0.0) {
            return Err(GeomError::Map("stretch factor must be positive".into()));
        }
        SampledHomeo::new(
            domain.len(),
            domain,
            MapKind::Stretch {
                knots: vec![a, b],
                values: vec![a, a + factor * (b - a)],
            },
        )
    }

    /// Samples `self` on a `res^d` grid over its domain.
    pub fn to_grid(&self, res: usize) -> Result<Self, GeomError> {
        let lo: Vec<f64> = self.domain.iter().map(|p| p.0).collect();
        let hi: Vec<f64> = self.domain.iter().map(|p| p.1).collect();
        let values = grid_points(&self.domain, res)
            .iter()
            .map(|x| self.eval(x))
            .collect();
        SampledHomeo::new(
            self.d,
            self.domain.clone(),
            MapKind::Grid {
                lo,
                hi,
                res: vec![res; self.d],
                values,
            },
        )
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.kind, MapKind::Affine { .. })
    }

    /// `|det A|` for affine maps.
    pub fn affine_jacobian(&self) -> Option<f64> {
        match &self.kind {
            MapKind::Affine { a, .. } => Some(det(a).abs()),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Point {
        match &self.kind {
            MapKind::Affine { a, b } => a
                .iter()
                .zip(b)
                .map(|(r, bi)| r.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + bi)
                .collect(),
            MapKind::Shear { amp, freq } => {
                let mut y = x.to_vec();
                y[1] += amp * (freq * x[0]).sin();
                y
            }
            MapKind::RadialBump {
                center,
                radius,
                amp,
            } => {
                let v = sub(x, center);
                let s2 = v.iter().map(|t| t * t).sum::<f64>() / (radius * radius);
                if s2 >= 1.0 {
                    return x.to_vec();
                }
                let w = amp * (1.0 - s2) * (1.0 - s2);
                x.iter().zip(&v).map(|(p, q)| p + w * q).collect()
            }
            MapKind::Stretch { knots, values } => {
                let mut y = x.to_vec();
                y[0] = pl_eval(knots, values, x[0]);
                y
            }
            MapKind::Grid {
                lo,
                hi,
                res,
                values,
            } => multilinear(lo, hi, res, values, x),
        }
    }

    /// Closed-form inverse where one exists.
    fn inverse_exact(&self, y: &[f64]) -> Option<Point> {
        match &self.kind {
            MapKind::Affine { a, b } => solve(a, &sub(y, b)),
            MapKind::Shear { amp, freq } => {
                let mut x = y.to_vec();
                x[1] -= amp * (freq * y[0]).sin();
                Some(x)
            }
            MapKind::Stretch { knots, values } => {
                let mut x = y.to_vec();
                x[0] = pl_eval(values, knots, y[0]);
                Some(x)
            }
            _ => None,
        }
    }

    fn jacobian(&self, x: &[f64], step: f64) -> Vec<Vec<f64>> {
        let d = self.d;
        let mut j = vec![vec![0.0; d]; d];
        for c in 0..d {
            let mut p = x.to_vec();
            let mut q = x.to_vec();
            p[c] += step;
            q[c] -= step;
            let fp = self.eval(&p);
            let fq = self.eval(&q);
            for r in 0..d {
                j[r][c] = (fp[r] - fq[r]) / (2.0 * step);
            }
        }
        j
    }

    /// Whether the images of the `res^d` domain grid are pairwise distinct.
    pub fn injective_on_grid(&self, res: usize) -> bool {
        let mut imgs: Vec<Vec<u64>> = grid_points(&self.domain, res)
            .iter()
            .map(|x| self.eval(x).iter().map(|v| v.to_bits()).collect())
            .collect();
        let n = imgs.len();
        imgs.sort_unstable();
        imgs.dedup();
        imgs.len() == n
    }
}

fn pl_eval(knots: &[f64], values: &[f64], t: f64) -> f64 {
    let n = knots.len();
    if t <= knots[0] {
        return values[0] + (t - knots[0]);
    }
    if t >= knots[n - 1] {
        return values[n - 1] + (t - knots[n - 1]);
    }
    let k = knots.partition_point(|&v| v <= t) - 1;
    let s = (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
    values[k] + s * (t - knots[k])
}

fn multilinear(lo: &[f64], hi: &[f64], res: &[usize], values: &[Vec<f64>], x: &[f64]) -> Point {
    let d = lo.len();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for a in 0..d {
        let h = (hi[a] - lo[a]) / (res[a] - 1) as f64;
        let u = (x[a] - lo[a]) / h;
        let k = (u.floor().max(0.0) as usize).min(res[a] - 2);
        base[a] = k;
        frac[a] = u - k as f64;
    }
    let mut out = vec![0.0; d];
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = 0;
        for a in 0..d {
            let bit = (corner >> a) & 1;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            idx = idx * res[a] + base[a] + bit;
        }
        for (o, v) in out.iter_mut().zip(&values[idx]) {
            *o += w * v;
        }
    }
    out
}

/// `res` points per axis spanning each interval, last axis fastest.
pub fn grid_points(bx: &[(f64, f64)], res: usize) -> Vec<Point> {
    let d = bx.len();
    let total = res.pow(d as u32);
    (0..total)
        .map(|mut k| {
            let mut p = vec![0.0; d];
            for a in (0..d).rev() {
                let i = k % res;
                k /= res;
                let (lo, hi) = bx[a];
                p[a] = if res == 1 {
                    (lo + hi) / 2.0
                } else {
                    lo + (hi - lo) * i as f64 / (res - 1) as f64
                };
            }
            p
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Dichotomy

/// The slab `[0,c]×[0,c/N]^{d-1}` shifted by `offset`; the map restricted to
/// it is `x ↦ h(x + offset)`.
#[derive(Clone, Debug, Serialize)]
pub struct Slab {
    pub offset: Vec<f64>,
    pub c: f64,
    pub n: u64,
}

impl Slab {
    pub fn new(d: usize, c: f64, n: u64) -> Self {
        Slab {
            offset: vec![0.0; d],
            c,
            n,
        }
    }

    fn at(&self, h: &SampledHomeo, x: &[f64]) -> Point {
        h.eval(&add(x, &self.offset))
    }

    /// `S_i = [(i-1)c/N, ic/N]×[0,c/N]^{d-1}` for `i ∈ [N]`.
    pub fn cell(&self, d: usize, i: u64) -> Vec<(f64, f64)> {
        let w = self.c / self.n as f64;
        let mut b = vec![(0.0, w); d];
        b[0] = ((i - 1) as f64 * w, i as f64 * w);
        b
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Statement1Report {
    pub n: u64,
    pub eps: f64,
    /// `ε ω(c/N)`.
    pub rhs: f64,
    /// Interpolation allowance added to `rhs`: twice the sampled Lipschitz
    /// estimate times the half-diagonal of a test cell.
    pub slack: f64,
    /// Max translation residual per slab `i ∈ [N-1]`.
    pub residual: Vec<f64>,
    /// `rhs + slack - residual` per slab.
    pub margin: Vec<f64>,
    pub omega: Vec<u64>,
    pub required: f64,
    pub holds: bool,
}

/// Max over the test grid of `S_i` of
/// `‖h(x + (c/N)e₁) - h(x) - (h(ce₁) - h(0))/N‖`, and a Lipschitz estimate
/// from axis neighbours of the grid.
fn slab_residual(h: &SampledHomeo, s: &Slab, i: u64, res: usize) -> (f64, f64) {
    let d = h.d;
    let w = s.c / s.n as f64;
    let mut ce1 = vec![0.0; d];
    ce1[0] = s.c;
    let mean: Point = sub(&s.at(h, &ce1), &s.at(h, &vec![0.0; d]))
        .into_iter()
        .map(|v| v / s.n as f64)
        .collect();
    let pts = grid_points(&s.cell(d, i), res);
    let vals: Vec<Point> = pts.iter().map(|x| s.at(h, x)).collect();
    let mut worst: f64 = 0.0;
    for (x, fx) in pts.iter().zip(&vals) {
        let mut y = x.clone();
        y[0] += w;
        let r = sub(&sub(&s.at(h, &y), fx), &mean);
        worst = worst.max(norm(&r));
    }
    let mut lip: f64 = 0.0;
    if res > 1 {
        let mut stride = 1;
        for _ in 0..d {
            for k in 0..pts.len() {
                if (k / stride) % res + 1 < res {
                    let q = k + stride;
                    let dx = norm(&sub(&pts[q], &pts[k]));
                    lip = lip.max(norm(&sub(&vals[q], &vals[k])) / dx);
                }
            }
            stride *= res;
        }
    }
    (worst, lip)
}

/// Tests the translation inequality on every slab `S_i`, `i ∈ [N-1]`, at a
/// `res^d` grid; `i ∈ Ω` iff every test point passes.
pub fn check_statement1(
    h: &SampledHomeo,
    slab: &Slab,
    eps: f64,
    m: &Modulus,
    res: usize,
) -> Result<Statement1Report, GeomError> {
    if slab.n < 2 {
        return Err(GeomError::Config("N must be at least 2".into()));
    }
    if res < 1 {
        return Err(GeomError::Config(
            "test grid needs at least one point".into(),
        ));
    }
    let w = slab.c / slab.n as f64;
    let rhs = eps * m.eval(w)?;
    let half_diag = if res > 1 {
        w / (res - 1) as f64 * (h.d as f64).sqrt() / 2.0
    } else {
        w * (h.d as f64).sqrt() / 2.0
    };
    let per: Vec<(f64, f64)> = (1..slab.n)
        .into_par_iter()
        .map(|i| slab_residual(h, slab, i, res))
        .collect();
    let lip = per.iter().map(|p| p.1).fold(0.0, f64::max);
    let slack = 2.0 * lip * half_diag;
    let residual: Vec<f64> = per.iter().map(|p| p.0).collect();
    let margin: Vec<f64> = residual.iter().map(|r| rhs + slack - r).collect();
    let omega: Vec<u64> = (1..slab.n)
        .filter(|&i| margin[(i - 1) as usize] >= 0.0)
        .collect();
    let required = (1.0 - eps) * (slab.n - 1) as f64;
    Ok(Statement1Report {
        n: slab.n,
        eps,
        rhs,
        slack,
        holds: omega.len() as f64 >= required,
        residual,
        margin,
        omega,
        required,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Statement2Report {
    pub m: u64,
    pub phi: f64,
    /// `(1+φ)‖h(ce₁) - h(0)‖/c`.
    pub rhs: f64,
    pub z: Option<Vec<f64>>,
    /// `z = (c/NM) k`.
    pub k: Option<Vec<u64>>,
    /// Local difference quotient at `z`.
    pub lhs: Option<f64>,
    pub margin: Option<f64>,
    pub scanned: u64,
    pub stride: u64,
    pub coarsened: bool,
}

/// First grid point `z ∈ (c/NM)ℤ^d` of the slab, in lexicographic order, whose
/// local `e₁` difference quotient exceeds `(1+φ)` times the global one.
pub fn check_statement2(
    h: &SampledHomeo,
    slab: &Slab,
    m_mult: u64,
    phi: f64,
    budget: u64,
) -> Result<Statement2Report, GeomError> {
    let d = h.d;
    if m_mult == 0 || slab.n == 0 {
        return Err(GeomError::Config("N and M must be positive".into()));
    }
    let nm = slab
        .n
        .checked_mul(m_mult)
        .ok_or_else(|| GeomError::Config("N·M overflows".into()))?;
    let step = slab.c / nm as f64;
    let mut ce1 = vec![0.0; d];
    ce1[0] = slab.c;
    let global = norm(&sub(&slab.at(h, &ce1), &slab.at(h, &vec![0.0; d]))) / slab.c;
    let rhs = (1.0 + phi) * global;
    let mut counts = vec![m_mult; d];
    counts[0] = nm;
    let full: f64 = counts.iter().map(|&c| c as f64).product();
    let mut stride = 1u64;
    while full / (stride as f64).powi(d as i32) > budget as f64 {
        stride += 1;
    }
    let sizes: Vec<u64> = counts.iter().map(|&c| c.div_ceil(stride)).collect();
    let total: u64 = sizes.iter().product();
    let index = |mut lin: u64| -> Vec<u64> {
        let mut k = vec![0u64; d];
        for a in (0..d).rev() {
            k[a] = (lin % sizes[a]) * stride;
            lin /= sizes[a];
        }
        k
    };
    let quotient = |k: &[u64]| -> f64 {
        let z: Point = k.iter().map(|&v| v as f64 * step).collect();
        let mut z1 = z.clone();
        z1[0] += step;
        norm(&sub(&slab.at(h, &z1), &slab.at(h, &z))) / step
    };
    let found = (0..total)
        .into_par_iter()
        .find_first(|&lin| quotient(&index(lin)) > rhs);
    let (z, k, lhs, margin) = match found {
        Some(lin) => {
            let k = index(lin);
            let q = quotient(&k);
            let z = k.iter().map(|&v| v as f64 * step).collect();
            (Some(z), Some(k), Some(q), Some(q - rhs))
        }
        None => (None, None, None, None),
    };
    Ok(Statement2Report {
        m: m_mult,
        phi,
        rhs,
        z,
        k,
        lhs,
        margin,
        scanned: total,
        stride,
        coarsened: stride > 1,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DichotomyReport {
    /// 1 or 2; 0 when neither was certified on the grids.
    pub branch: u8,
    pub statement1: Statement1Report,
    pub statement2: Option<Statement2Report>,
}

pub fn dichotomy(
    h: &SampledHomeo,
    slab: &Slab,
    m_mult: u64,
    eps: f64,
    phi: f64,
    m: &Modulus,
    res: usize,
    budget: u64,
) -> Result<DichotomyReport, GeomError> {
    let s1 = check_statement1(h, slab, eps, m, res)?;
    if s1.holds {
        return Ok(DichotomyReport {
            branch: 1,
            statement1: s1,
            statement2: None,
        });
    }
    let s2 = check_statement2(h, slab, m_mult, phi, budget)?;
    Ok(DichotomyReport {
        branch: if s2.z.is_some() { 2 } else { 0 },
        statement1: s1,
        statement2: Some(s2),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct B1Opts {
    pub test_res: usize,
    pub budget: u64,
    pub max_iters: usize,
    /// Points per axis for the sampled `biL_ω` check.
    pub check_res: usize,
}

impl Default for B1Opts {
    fn default() -> Self {
        B1Opts {
            test_res: 17,
            budget: 4_000_000,
            max_iters: 64,
            check_res: 6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct B1Step {
    pub i: usize,
    pub c: f64,
    pub n: u64,
    pub m: u64,
    /// `z₁ + … + z_i`.
    pub offset: Vec<f64>,
    pub omega_size: usize,
    pub statement1: bool,
    /// `z_{i+1}` when statement 1 fails.
    pub z_next: Option<Vec<f64>>,
    pub stretch_margin: Option<f64>,
    /// `z_{i+1} ∈ c_{i+1}ℤ^d ∩ [0, c_i - c_{i+1}]×[0, c_i/N_i - c_{i+1}]^{d-1}`.
    pub admissible: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct B1Trace {
    pub steps: Vec<B1Step>,
    /// Number of levels visited.
    pub p: usize,
    /// 1 when statement 1 held at the last level, 0 when the schedule or the
    /// iteration budget ran out first.
    pub final_branch: u8,
    /// Sampled `biL_ω` on the first slab.
    pub bilip_omega: f64,
    pub bilip_ok: bool,
    pub r_bound: Option<u64>,
    pub within_r: Option<bool>,
}

/// Recentering iteration: at level `i` test statement 1 on the slab of
/// length `c_i` and width `c_i/N_i`; if it fails, move to the first
/// statement 2 point and descend to `c_{i+1} = c_i/(N_i M_i)`.
pub fn run_algorithm_b1(
    h: &SampledHomeo,
    m: &Modulus,
    eps: f64,
    phi: f64,
    schedule: &Schedule,
    r_bound: Option<u64>,
    opts: &B1Opts,
) -> Result<B1Trace, GeomError> {
    let d = h.d;
    let big = |v: &num_bigint::BigUint| {
        v.to_u64()
            .ok_or_else(|| GeomError::Config("schedule entries must fit in u64".into()))
    };
    let n1 = big(&schedule.n[0])?;
    let mut bx = vec![(0.0, schedule.c / n1 as f64); d];
    bx[0] = (0.0, schedule.c);
    let src = grid_points(&bx, opts.check_res.max(2));
    let tgt = src.iter().map(|x| h.eval(x)).collect();
    let bilip_omega = moduli::bi_omega(&FiniteMap::new(src, tgt)?, m)?.value;

    let mut offset = vec![0.0; d];
    let mut steps = Vec::new();
    let mut final_branch = 0;
    for i in 1..=schedule.levels().min(opts.max_iters) {
        let c = schedule.ln_c(i).exp();
        let n = big(&schedule.n[i - 1])?;
        let mm = big(&schedule.m[i - 1])?;
        let slab = Slab {
            offset: offset.clone(),
            c,
            n,
        };
        let s1 = check_statement1(h, &slab, eps, m, opts.test_res)?;
        if s1.holds {
            steps.push(B1Step {
                i,
                c,
                n,
                m: mm,
                offset: offset.clone(),
                omega_size: s1.omega.len(),
                statement1: true,
                z_next: None,
                stretch_margin: None,
                admissible: None,
            });
            final_branch = 1;
            break;
        }
        let s2 = check_statement2(h, &slab, mm, phi, opts.budget)?;
        let (z, k) = match (s2.z, s2.k) {
            (Some(z), Some(k)) => (z, k),
            _ => return Err(GeomError::Inconsistent { step: i }),
        };
        let c_next = c / (n * mm) as f64;
        let admissible = k[0] < n * mm && k[1..].iter().all(|&v| v < mm);
        steps.push(B1Step {
            i,
            c,
            n,
            m: mm,
            offset: offset.clone(),
            omega_size: s1.omega.len(),
            statement1: false,
            z_next: Some(z.clone()),
            stretch_margin: s2.margin,
            admissible: Some(
                admissible && z.iter().all(|v| *v >= 0.0) && z[0] <= c - c_next * (1.0 - 1e-12),
            ),
        });
        offset = add(&offset, &z);
    }
    let p = steps.len();
    Ok(B1Trace {
        p,
        final_branch,
        bilip_ok: bilip_omega <= 1.0,
        bilip_omega,
        r_bound,
        within_r: r_bound.map(|r| p as u64 <= r),
        steps,
    })
}

// ---------------------------------------------------------------------------
// Image volume

#[derive(Clone, Debug, Serialize)]
pub enum VolumeMode {
    /// `|det A|·𝓛(box)`; affine maps only.
    Exact,
    /// Image cells of a `res^d` partition of the image bounding box whose
    /// corners all pull back inside (lower) or some do (upper).
    Grid {
        res: usize,
    },
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub failures: usize,
    pub samples: usize,
}

impl VolumeEstimate {
    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }
}

const Z95: f64 = 1.959_963_984_540_054;
const MAX_FAIL_FRACTION: f64 = 1e-3;

struct Inverter<'a> {
    h: &'a SampledHomeo,
    bx: Vec<(f64, f64)>,
    seeds: Vec<(Point, Point)>,
    lo: Point,
    cell: Point,
    dims: Vec<usize>,
    buckets: Vec<Vec<usize>>,
    scale: f64,
}

impl<'a> Inverter<'a> {
    fn new(h: &'a SampledHomeo, bx: &[(f64, f64)]) -> Self {
        let d = h.d;
        let res = match d {
            1 => 256,
            2 => 64,
            3 => 20,
            _ => 6,
        };
        // Seeds also cover a collar so that outside points converge too.
        let collar: Vec<(f64, f64)> = bx
            .iter()
            .map(|&(a, b)| {
                let w = (b - a) * 0.25;
                (a - w, b + w)
            })
            .collect();
        let seeds: Vec<(Point, Point)> = grid_points(&collar, res)
            .into_iter()
            .map(|x| {
                let y = h.eval(&x);
                (x, y)
            })
            .collect();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for (_, y) in &seeds {
            for a in 0..d {
                lo[a] = lo[a].min(y[a]);
                hi[a] = hi[a].max(y[a]);
            }
        }
        let dims = vec![res; d];
        let cell: Point = (0..d)
            .map(|a| ((hi[a] - lo[a]) / res as f64).max(1e-300))
            .collect();
        let mut buckets = vec![Vec::new(); res.pow(d as u32)];
        let mut inv = Inverter {
            h,
            bx: bx.to_vec(),
            seeds: Vec::new(),
            lo,
            cell,
            dims,
            buckets: Vec::new(),
            scale: bx.iter().map(|p| p.1 - p.0).fold(0.0, f64::max),
        };
        for (k, (_, y)) in seeds.iter().enumerate() {
            let b = inv.bucket(y);
            buckets[inv.linear(&b)].push(k);
        }
        inv.seeds = seeds;
        inv.buckets = buckets;
        inv
    }

    fn bucket(&self, y: &[f64]) -> Vec<i64> {
        (0..y.len())
            .map(|a| {
                let v = ((y[a] - self.lo[a]) / self.cell[a]).floor() as i64;
                v.clamp(0, self.dims[a] as i64 - 1)
            })
            .collect()
    }

    fn linear(&self, b: &[i64]) -> usize {
        b.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&v, &n)| acc * n + v as usize)
    }

    fn nearest_seed(&self, y: &[f64]) -> usize {
        let d = y.len();
        let b = self.bucket(y);
        let mut best = (f64::INFINITY, 0);
        let maxr = *self.dims.iter().max().unwrap() as i64;
        let mut found_at = None;
        for r in 0..=maxr {
            if let Some(f) = found_at {
                if r > f + 1 {
                    break;
                }
            }
            // shell of Chebyshev radius r
            let side = (2 * r + 1) as usize;
            for lin in 0..side.pow(d as u32) {
                let mut t = lin;
                let mut q = vec![0i64; d];
                let mut on_shell = false;
                for a in (0..d).rev() {
                    let o = (t % side) as i64 - r;
                    t /= side;
                    on_shell |= o.abs() == r;
                    q[a] = b[a] + o;
                }
                if !on_shell
                    || q.iter()
                        .zip(&self.dims)
                        .any(|(&v, &n)| v < 0 || v >= n as i64)
                {
                    continue;
                }
                for &k in &self.buckets[self.linear(&q)] {
                    let dist = norm(&sub(&self.seeds[k].1, y));
                    if dist < best.0 {
                        best = (dist, k);
                        found_at.get_or_insert(r);
                    }
                }
            }
        }
        best.1
    }

    fn invert(&self, y: &[f64]) -> Option<Point> {
        if let Some(x) = self.h.inverse_exact(y) {
            return Some(x);
        }
        let mut x = self.seeds[self.nearest_seed(y)].0.clone();
        let ys = norm(y).max(self.scale).max(1e-300);
        let step = 1e-7 * self.scale;
        let mut r = sub(&self.h.eval(&x), y);
        for _ in 0..80 {
            let rn = norm(&r);
            if rn <= 1e-13 * ys {
                return Some(x);
            }
            let j = self.h.jacobian(&x, step);
            let dx = solve(&j, &r)?;
            let mut t = 1.0;
            loop {
                let cand: Point = x.iter().zip(&dx).map(|(a, b)| a - t * b).collect();
                let rc = sub(&self.h.eval(&cand), y);
                if norm(&rc) < rn || t < 1e-6 {
                    x = cand;
                    r = rc;
                    break;
                }
                t /= 2.0;
            }
        }
        (norm(&r) <= 1e-10 * ys).then_some(x)
    }

    fn inside(&self, x: &[f64]) -> bool {
        let tol = 1e-12 * self.scale;
        x.iter()
            .zip(&self.bx)
            .all(|(v, &(a, b))| *v >= a - tol && *v <= b + tol)
    }
}

/// Bounding box of `h(bx)` from a sample grid, padded by the sampled
/// Lipschitz bound times the grid half-diagonal.
fn image_bbox(h: &SampledHomeo, bx: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let d = h.d;
    let res = match d {
        1 => 1025,
        2 => 129,
        3 => 33,
        _ => 9,
    };
    let pts = grid_points(bx, res);
    let vals: Vec<Point> = pts.iter().map(|x| h.eval(x)).collect();
    let mut lip: f64 = 0.0;
    let mut stride = 1;
    for _ in 0..d {
        for k in 0..pts.len() {
            if (k / stride) % res + 1 < res {
                let q = k + stride;
                lip = lip.max(norm(&sub(&vals[q], &vals[k])) / norm(&sub(&pts[q], &pts[k])));
            }
        }
        stride *= res;
    }
    let hd = bx
        .iter()
        .map(|p| (p.1 - p.0) / (res - 1) as f64)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    let pad = 1.5 * lip * hd;
    (0..d)
        .map(|a| {
            let lo = vals.iter().map(|v| v[a]).fold(f64::INFINITY, f64::min);
            let hi = vals.iter().map(|v| v[a]).fold(f64::NEG_INFINITY, f64::max);
            (lo - pad, hi + pad)
        })
        .collect()
}

fn box_volume(bx: &[(f64, f64)]) -> f64 {
    bx.iter().map(|p| p.1 - p.0).product()
}

fn wilson(hits: usize, n: usize) -> (f64, f64) {
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    let den = 1.0 + z2 / n;
    let mid = (p + z2 / (2.0 * n)) / den;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / den;
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

/// `𝓛(h(bx))` with a bracket.
pub fn image_volume(
    h: &SampledHomeo,
    bx: &[(f64, f64)],
    mode: &VolumeMode,
) -> Result<VolumeEstimate, GeomError> {
    if bx.len() != h.d {
        return Err(GeomError::Dimension("volume box".into()));
    }
    match *mode {
        VolumeMode::Exact => {
            let j = h
                .affine_jacobian()
                .ok_or_else(|| GeomError::Config("exact volume needs an affine map".into()))?;
            let v = j * box_volume(bx);
            Ok(VolumeEstimate {
                estimate: v,
                lower: v,
                upper: v,
                failures: 0,
                samples: 0,
            })
        }
        VolumeMode::Grid { res } => {
            if res == 0 {
                return Err(GeomError::Config("grid resolution must be positive".into()));
            }
            let d = h.d;
            let ib = image_bbox(h, bx);
            let inv = Inverter::new(h, bx);
            let corners = grid_points(&ib, res + 1);
            let flags: Vec<Option<bool>> = corners
                .par_iter()
                .map(|y| inv.invert(y).map(|x| inv.inside(&x)))
                .collect();
            let failures = flags.iter().filter(|f| f.is_none()).count();
            if failures as f64 > MAX_FAIL_FRACTION * flags.len() as f64 {
                return Err(GeomError::Reliability {
                    failed: failures,
                    total: flags.len(),
                });
            }
            let (mut full, mut part) = (0usize, 0usize);
            for cell in 0..res.pow(d as u32) {
                let mut base = vec![0usize; d];
                let mut t = cell;
                for a in (0..d).rev() {
                    base[a] = t % res;
                    t /= res;
                }
                let (mut ins, mut outs) = (0, 0);
                for corner in 0..(1usize << d) {
                    let mut idx = 0;
                    for a in 0..d {
                        idx = idx * (res + 1) + base[a] + ((corner >> (d - 1 - a)) & 1);
                    }
                    match flags[idx] {
                        Some(true) => ins += 1,
                        Some(false) => outs += 1,
                        None => {
                            ins += 1;
                            outs += 1
                        }
                    }
                }
                if outs == 0 {
                    full += 1;
                } else if ins > 0 {
                    part += 1;
                }
            }
            let cv = box_volume(&ib) / res.pow(d as u32) as f64;
            let lower = full as f64 * cv;
            let upper = (full + part) as f64 * cv;
            Ok(VolumeEstimate {
                estimate: (lower + upper) / 2.0,
                lower,
                upper,
                failures,
                samples: corners.len(),
            })
        }
        VolumeMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(GeomError::Config("sample count must be positive".into()));
            }
            let ib = image_bbox(h, bx);
            let inv = Inverter::new(h, bx);
            const CHUNK: usize = 8192;
            let chunks = samples.div_ceil(CHUNK);
            let res: Vec<(usize, usize)> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(c as u64);
                    let n = CHUNK.min(samples - c * CHUNK);
                    let (mut hits, mut fail) = (0, 0);
                    for _ in 0..n {
                        let y: Point = ib.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
                        match inv.invert(&y) {
                            Some(x) if inv.inside(&x) => hits += 1,
                            Some(_) => {}
                            None => fail += 1,
                        }
                    }
                    (hits, fail)
                })
                .collect();
            let hits: usize = res.iter().map(|r| r.0).sum();
            let failures: usize = res.iter().map(|r| r.1).sum();
            if failures as f64 > MAX_FAIL_FRACTION * samples as f64 {
                return Err(GeomError::Reliability {
                    failed: failures,
                    total: samples,
                });
            }
            let v = box_volume(&ib);
            let (lo, hi) = wilson(hits, samples);
            Ok(VolumeEstimate {
                estimate: v * hits as f64 / samples as f64,
                lower: v * lo,
                upper: v * hi,
                failures,
                samples,
            })
        }
    }
}

/// `2^d d^{d/2}`.
pub fn default_pi(d: usize) -> f64 {
    2f64.powi(d as i32) * (d as f64).powf(d as f64 / 2.0)
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub enum VolumeStatus {
    Pass,
    Fail,
    HypothesisViolated,
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeDiffReport {
    pub i: u64,
    pub residual: f64,
    pub hypothesis_rhs: f64,
    pub vol_i: VolumeEstimate,
    pub vol_next: VolumeEstimate,
    pub lhs: f64,
    pub rhs: f64,
    /// Sum of both half-widths.
    pub error: f64,
    pub pi: f64,
    pub status: VolumeStatus,
}

/// `|𝓛(h(S_i)) - 𝓛(h(S_{i+1}))|` against `υ(d,ω,ε,ℓ)·ℓ^d`, `ℓ = c/N`, provided
/// the translation inequality holds on `S_i`. Affine maps use exact volumes.
#[allow(clippy::too_many_arguments)]
pub fn volume_diff_check(
    h: &SampledHomeo,
    slab: &Slab,
    i: u64,
    eps: f64,
    m: &Modulus,
    pi: Option<f64>,
    mode: &VolumeMode,
    test_res: usize,
) -> Result<VolumeDiffReport, GeomError> {
    let d = h.d;
    if i == 0 || i >= slab.n {
        return Err(GeomError::Config(format!(
            "slab index {i} outside [1, N-1]"
        )));
    }
    let ell = slab.c / slab.n as f64;
    let pi = pi.unwrap_or_else(|| default_pi(d));
    let (residual, _) = slab_residual(h, slab, i, test_res);
    let hyp = eps * m.eval(ell)?;
    let rhs = params::upsilon(d, m, pi, eps, ell)? * ell.powi(d as i32);
    let mode = if h.is_affine() {
        &VolumeMode::Exact
    } else {
        mode
    };
    let shift = |b: Vec<(f64, f64)>| -> Vec<(f64, f64)> {
        b.into_iter()
            .zip(&slab.offset)
            .map(|((a, c), o)| (a + o, c + o))
            .collect()
    };
    let vi = image_volume(h, &shift(slab.cell(d, i)), mode)?;
    let vn = image_volume(h, &shift(slab.cell(d, i + 1)), mode)?;
    let lhs = (vi.estimate - vn.estimate).abs();
    let error = vi.half_width() + vn.half_width();
    let status = if residual > hyp {
        VolumeStatus::HypothesisViolated
    } else if lhs <= rhs + error {
        VolumeStatus::Pass
    } else {
        VolumeStatus::Fail
    };
    Ok(VolumeDiffReport {
        i,
        residual,
        hypothesis_rhs: hyp,
        vol_i: vi,
        vol_next: vn,
        lhs,
        rhs,
        error,
        pi,
        status,
    })
}

// ---------------------------------------------------------------------------
// Planar rasters on I²

fn boundary_polyline(f: &SampledHomeo, per_side: usize) -> Vec<Point> {
    let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let mut out = Vec::with_capacity(4 * per_side);
    for s in 0..4 {
        let (a, b) = (corners[s], corners[(s + 1) % 4]);
        for k in 0..per_side {
            let t = k as f64 / per_side as f64;
            out.push(f.eval(&[a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)]));
        }
    }
    out
}

/// Sorted abscissae where the closed polyline crosses the line at height `y`.
fn crossings(poly: &[Point], y: f64) -> Vec<f64> {
    let n = poly.len();
    let mut xs = Vec::new();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[j]);
        if (a[1] > y) != (b[1] > y) {
            xs.push(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
        }
        j = i;
    }
    xs.sort_by(f64::total_cmp);
    xs
}

/// Even-odd membership of `x` given the row crossings.
fn inside_row(xs: &[f64], x: f64) -> bool {
    xs.partition_point(|&v| v <= x) % 2 == 1
}

fn seg_dist(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0] - p[0], a[1] + t * ab[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

/// Segments of a closed polyline bucketed on a square grid of side `cell`.
struct SegIndex {
    poly: Vec<Point>,
    lo: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl SegIndex {
    fn new(poly: Vec<Point>, cell: f64) -> Self {
        let lo = [
            poly.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
            poly.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
        ];
        let hi = [
            poly.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max),
            poly.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
        ];
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).min(4096);
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize + 1).min(4096);
        let cell = cell
            .max((hi[0] - lo[0]) / nx as f64)
            .max((hi[1] - lo[1]) / ny as f64);
        let mut buckets = vec![Vec::new(); nx * ny];
        let n = poly.len();
        for i in 0..n {
            let (a, b) = (&poly[i], &poly[(i + 1) % n]);
            let bx0 = ((a[0].min(b[0]) - lo[0]) / cell).floor().max(0.0) as usize;
            let bx1 = (((a[0].max(b[0]) - lo[0]) / cell).floor() as usize).min(nx - 1);
            let by0 = ((a[1].min(b[1]) - lo[1]) / cell).floor().max(0.0) as usize;
            let by1 = (((a[1].max(b[1]) - lo[1]) / cell).floor() as usize).min(ny - 1);
            for x in bx0..=bx1 {
                for y in by0..=by1 {
                    buckets[x * ny + y].push(i);
                }
            }
        }
        SegIndex {
            poly,
            lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    /// Distance to the polyline when it is below `cap`, otherwise some value
    /// `>= cap`.
    fn dist_capped(&self, p: &[f64], cap: f64) -> f64 {
        let bx = ((p[0] - self.lo[0]) / self.cell).floor() as i64;
        let by = ((p[1] - self.lo[1]) / self.cell).floor() as i64;
        let k = (cap / self.cell).ceil() as i64;
        let n = self.poly.len();
        let mut best = f64::INFINITY;
        for x in bx - k..=bx + k {
            for y in by - k..=by + k {
                if x < 0 || y < 0 || x >= self.nx as i64 || y >= self.ny as i64 {
                    continue;
                }
                for &i in &self.buckets[x as usize * self.ny + y as usize] {
                    best = best.min(seg_dist(p, &self.poly[i], &self.poly[(i + 1) % n]));
                }
            }
        }
        best.max(if best.is_finite() { 0.0 } else { cap })
    }

    fn dist(&self, p: &[f64]) -> f64 {
        let n = self.poly.len();
        (0..n)
            .map(|i| seg_dist(p, &self.poly[i], &self.poly[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn unit_square() -> Vec<(f64, f64)> {
    vec![(0.0, 1.0); 2]
}

fn check_planar(f: &SampledHomeo) -> Result<(), GeomError> {
    if f.d != 2 {
        return Err(GeomError::Dimension("raster checks are planar".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SymdiffReport {
    pub res: usize,
    /// Sampled `sup ‖f - g‖₂` over `I²`.
    pub sup_dist: f64,
    pub cell_diag: f64,
    pub symdiff_cells: usize,
    pub violations: usize,
    /// Max of `dist(y, ∂f(I²)) - sup_dist` over symmetric-difference cells.
    pub max_dist_excess: f64,
}

/// Rasterizes `f(I²)` and `g(I²)` by cell centres on a `res²` grid over their
/// joint bounding box and checks every cell of the symmetric difference lies
/// within `‖f-g‖_∞ + cell diagonal` of `f(∂I²)`.
pub fn symdiff_bound_check(
    f: &SampledHomeo,
    g: &SampledHomeo,
    res: usize,
) -> Result<SymdiffReport, GeomError> {
    check_planar(f)?;
    check_planar(g)?;
    if res == 0 {
        return Err(GeomError::Config("resolution must be positive".into()));
    }
    let sq = unit_square();
    if !f.injective_on_grid(res.max(16)) {
        return Err(GeomError::NotInjective(res.max(16)));
    }
    let per_side = (4 * res).max(256);
    let pf = boundary_polyline(f, per_side);
    let pg = boundary_polyline(g, per_side);
    let sup_dist = grid_points(&sq, 4 * res + 1)
        .par_iter()
        .map(|x| norm(&sub(&f.eval(x), &g.eval(x))))
        .reduce(|| 0.0, f64::max);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pf.iter().chain(&pg) {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let w = [(hi[0] - lo[0]) / res as f64, (hi[1] - lo[1]) / res as f64];
    let cell_diag = (w[0] * w[0] + w[1] * w[1]).sqrt();
    let idx = SegIndex::new(pf.clone(), cell_diag.max(1e-12) * 4.0);
    let rows: Vec<(usize, usize, f64)> = (0..res)
        .into_par_iter()
        .map(|r| {
            let mut out = (0, 0, f64::NEG_INFINITY);
            let y = lo[1] + (r as f64 + 0.5) * w[1];
            let (xf, xg) = (crossings(&pf, y), crossings(&pg, y));
            for c in 0..res {
                let p = [lo[0] + (c as f64 + 0.5) * w[0], y];
                if inside_row(&xf, p[0]) != inside_row(&xg, p[0]) {
                    out.0 += 1;
                    let dist = idx.dist(&p);
                    out.2 = out.2.max(dist - sup_dist);
                    if dist > sup_dist + cell_diag {
                        out.1 += 1;
                    }
                }
            }
            out
        })
        .collect();
    Ok(SymdiffReport {
        res,
        sup_dist,
        cell_diag,
        symdiff_cells: rows.iter().map(|r| r.0).sum(),
        violations: rows.iter().map(|r| r.1).sum(),
        max_dist_excess: rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryRow {
    pub eps: f64,
    pub measure: f64,
    /// Area of cells whose centre lies within half a diagonal of the level
    /// set `dist = ε`.
    pub raster_error: f64,
}

/// `𝓛(B(f(∂I²), ε))` per `ε` by cell centres on a `res²` raster.
pub fn boundary_neighborhood_measure(
    f: &SampledHomeo,
    eps_list: &[f64],
    res: usize,
) -> Result<Vec<BoundaryRow>, GeomError> {
    check_planar(f)?;
    if res == 0 || eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(GeomError::Config(
            "need positive ε values and resolution".into(),
        ));
    }
    let emax = eps_list.iter().cloned().fold(0.0, f64::max);
    let poly = boundary_polyline(f, res.max(256));
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &poly {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a] - emax);
            hi[a] = hi[a].max(p[a] + emax);
        }
    }
    let w = [(hi[0] - lo[0]) / res as f64, (hi[1] - lo[1]) / res as f64];
    let half = (w[0] * w[0] + w[1] * w[1]).sqrt() / 2.0;
    let cap = emax + 2.0 * half;
    let idx = SegIndex::new(poly, cap / 2.0);
    let k = eps_list.len();
    let rows: Vec<(Vec<usize>, Vec<usize>)> = (0..res)
        .into_par_iter()
        .map(|r| {
            let mut hit = vec![0; k];
            let mut amb = vec![0; k];
            for c in 0..res {
                let p = [
                    lo[0] + (c as f64 + 0.5) * w[0],
                    lo[1] + (r as f64 + 0.5) * w[1],
                ];
                let dist = idx.dist_capped(&p, cap);
                for (j, &e) in eps_list.iter().enumerate() {
                    if dist < e {
                        hit[j] += 1;
                    }
                    if (dist - e).abs() <= half {
                        amb[j] += 1;
                    }
                }
            }
            (hit, amb)
        })
        .collect();
    let area = w[0] * w[1];
    Ok((0..k)
        .map(|j| BoundaryRow {
            eps: eps_list[j],
            measure: rows.iter().map(|r| r.0[j]).sum::<usize>() as f64 * area,
            raster_error: rows.iter().map(|r| r.1[j]).sum::<usize>() as f64 * area,
        })
        .collect())
}

/// `𝓛(B(∂P, ε))` for the parallelogram `P = A(I²)`, `ε` below half of both
/// heights.
pub fn parallelogram_neighborhood(a: &[Vec<f64>], eps: f64) -> f64 {
    let u = [a[0][0], a[1][0]];
    let v = [a[0][1], a[1][1]];
    let area = (u[0] * v[1] - u[1] * v[0]).abs();
    let lu = (u[0] * u[0] + u[1] * u[1]).sqrt();
    let lv = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let (hu, hv) = (area / lu, area / lv);
    let outer = 2.0 * (lu + lv) * eps + std::f64::consts::PI * eps * eps;
    let inner = area - area * (1.0 - 2.0 * eps / hu) * (1.0 - 2.0 * eps / hv);
    outer + inner
}
