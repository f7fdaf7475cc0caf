//! Separated nets from densities: one point per subcube, with the subcube count
//! in each cell set by the integral of the density, plus the integer lattice
//! outside the construction cubes.

use crate::density::{Density, DensityError};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point {index} is a duplicate")]
    Duplicate { index: usize },
    #[error("point {index} lies outside the window")]
    Outside { index: usize },
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Density(#[from] DensityError),
}

pub type Window = Vec<(f64, f64)>;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec<f64>>,
    pub window: Window,
}

fn check_window(w: &[(f64, f64)]) -> Result<(), NetError> {
    if w.is_empty() {
        return Err(NetError::Config("window has no axes".into()));
    }
    for &(lo, hi) in w {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(NetError::Config(format!("bad window axis [{lo}, {hi}]")));
        }
    }
    Ok(())
}

impl PointCloud {
    /// Validates that points are distinct, finite and inside the closed window.
    pub fn new(points: Vec<Vec<f64>>, window: Window) -> Result<Self, NetError> {
        check_window(&window)?;
        let d = window.len();
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(NetError::Dimension {
                    expected: d,
                    got: p.len(),
                });
            }
            if p.iter()
                .zip(&window)
                .any(|(x, (lo, hi))| !(x.is_finite() && *x >= *lo && *x <= *hi))
            {
                return Err(NetError::Outside { index: i });
            }
        }
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            // +0.0 and -0.0 are the same point.
            let key = p.iter().map(|x| (x + 0.0).to_bits()).collect();
            if seen.insert(key, i).is_some() {
                return Err(NetError::Duplicate { index: i });
            }
        }
        Ok(PointCloud { points, window })
    }

    pub fn dim(&self) -> usize {
        self.window.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// An axis-parallel construction cube `corner + [0, side]^d` split into `m^d` cells.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct NetCube {
    pub corner: Vec<f64>,
    pub side: f64,
    pub m: usize,
}

impl NetCube {
    fn bounds(&self) -> Window {
        self.corner.iter().map(|&c| (c, c + self.side)).collect()
    }

    fn contains_closed(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(&self.corner)
            .all(|(x, c)| *x >= *c && *x <= c + self.side)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    pub index: Vec<usize>,
    /// `∫_T ρ_k = l^d ∫_{φ⁻¹(T)} ρ`.
    pub integral: f64,
    pub n: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CubeNet {
    pub cloud: PointCloud,
    pub cells: Vec<Cell>,
    /// Cells with `n = 0`.
    pub empty_cells: usize,
}

/// Largest `n` with `n^d <= v`.
pub fn floor_root(v: f64, d: usize) -> u64 {
    if !(v >= 1.0) {
        return 0;
    }
    let pow = |n: u64| (n as f64).powi(d as i32);
    let mut n = v.powf(1.0 / d as f64).floor() as u64;
    while pow(n + 1) <= v {
        n += 1;
    }
    while n > 0 && pow(n) > v {
        n -= 1;
    }
    n
}

fn multi_indices(m: usize, d: usize) -> Vec<Vec<usize>> {
    let total = m.pow(d as u32);
    (0..total)
        .map(|mut k| {
            let mut ix = vec![0; d];
            for a in 0..d {
                ix[a] = k % m;
                k /= m;
            }
            ix
        })
        .collect()
}

fn check_cube(rho: &Density, cube: &NetCube) -> Result<usize, NetError> {
    let d = cube.corner.len();
    if d == 0 {
        return Err(NetError::Config("cube has no axes".into()));
    }
    if let Some(b) = &rho.board {
        if b.d != d {
            return Err(NetError::Dimension {
                expected: d,
                got: b.d,
            });
        }
    }
    if !(cube.side > 0.0 && cube.side.is_finite()) {
        return Err(NetError::Config(format!(
            "side {} must be positive",
            cube.side
        )));
    }
    if cube.m == 0 {
        return Err(NetError::Config("m must be at least 1".into()));
    }
    if !(rho.inf() > 0.0) {
        return Err(NetError::Config("density must be positive".into()));
    }
    Ok(d)
}

/// The net inside one construction cube. `ρ` lives on the unit cube and is
/// transported by `φ(x) = corner + side·x`.
pub fn construct_net_cube(rho: &Density, cube: &NetCube) -> Result<CubeNet, NetError> {
    let d = check_cube(rho, cube)?;
    let m = cube.m;
    let l = cube.side;
    let scale = l.powi(d as i32);
    let cells: Vec<Cell> = multi_indices(m, d)
        .into_par_iter()
        .map(|index| {
            let bx: Vec<(f64, f64)> = index
                .iter()
                .map(|&i| (i as f64 / m as f64, (i + 1) as f64 / m as f64))
                .collect();
            let integral = scale * rho.integrate(&bx);
            Cell {
                n: floor_root(integral, d),
                integral,
                index,
            }
        })
        .collect();
    let mut points = Vec::new();
    for cell in &cells {
        let n = cell.n as usize;
        if n == 0 {
            continue;
        }
        let den = (2 * m * n) as f64;
        for j in multi_indices(n, d) {
            let p: Vec<f64> = (0..d)
                .map(|a| {
                    let num = (2 * cell.index[a] * n + 2 * j[a] + 1) as f64;
                    cube.corner[a] + l * num / den
                })
                .collect();
            points.push(p);
        }
    }
    let empty_cells = cells.iter().filter(|c| c.n == 0).count();
    Ok(CubeNet {
        cloud: PointCloud::new(points, cube.bounds())?,
        cells,
        empty_cells,
    })
}

const LATTICE_BUDGET: f64 = 5e7;

/// Per-cube nets plus every lattice point of the window outside the closed
/// cubes. Cubes must be disjoint, inside the window, and satisfy
/// `l_k >= R_{k-1}` and `S_1 ∪ … ∪ S_k ⊆ B(0, R_k)` with `R_k = 2(l_1 + … + l_k)`.
pub fn construct_net_window(
    rho: &Density,
    cubes: &[NetCube],
    window: &[(f64, f64)],
) -> Result<PointCloud, NetError> {
    check_window(window)?;
    let d = window.len();
    let mut r_prev = 0.0;
    for (k, c) in cubes.iter().enumerate() {
        if c.corner.len() != d {
            return Err(NetError::Dimension {
                expected: d,
                got: c.corner.len(),
            });
        }
        check_cube(rho, c)?;
        if c.bounds()
            .iter()
            .zip(window)
            .any(|(b, w)| b.0 < w.0 || b.1 > w.1)
        {
            return Err(NetError::Config(format!(
                "cube {k} is not inside the window"
            )));
        }
        if c.side < r_prev {
            return Err(NetError::Config(format!(
                "packing: l_{} = {} < R_{} = {}",
                k + 1,
                c.side,
                k,
                r_prev
            )));
        }
        let r_k = r_prev + 2.0 * c.side;
        let far: f64 = c
            .corner
            .iter()
            .map(|&x| x.abs().max((x + c.side).abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        if far > r_k {
            return Err(NetError::Config(format!(
                "cube {k} leaves the ball B(0, R_{}) = B(0, {r_k})",
                k + 1
            )));
        }
        for (j, o) in cubes[..k].iter().enumerate() {
            let disjoint = (0..d).any(|a| {
                c.corner[a] >= o.corner[a] + o.side || o.corner[a] >= c.corner[a] + c.side
            });
            if !disjoint {
                return Err(NetError::Config(format!("cubes {j} and {k} overlap")));
            }
        }
        r_prev = r_k;
    }
    let ranges: Vec<(i64, i64)> = window
        .iter()
        .map(|&(lo, hi)| (lo.ceil() as i64, hi.floor() as i64))
        .collect();
    let count: f64 = ranges
        .iter()
        .map(|&(a, b)| (b - a + 1).max(0) as f64)
        .product();
    if count > LATTICE_BUDGET {
        return Err(NetError::Config(format!(
            "window holds {count:e} lattice points, over the budget {LATTICE_BUDGET:e}"
        )));
    }
    let mut points = Vec::new();
    for c in cubes {
        points.extend(construct_net_cube(rho, c)?.cloud.points);
    }
    if ranges.iter().all(|&(a, b)| a <= b) {
        let mut p: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            let x: Vec<f64> = p.iter().map(|&v| v as f64).collect();
            if !cubes.iter().any(|c| c.contains_closed(&x)) {
                points.push(x);
            }
            for a in 0..d {
                if p[a] < ranges[a].1 {
                    p[a] += 1;
                    continue 'outer;
                }
                p[a] = ranges[a].0;
            }
            break;
        }
    }
    PointCloud::new(points, window.to_vec())
}

// ---------------------------------------------------------------------------
// Audit

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

struct Buckets {
    h: f64,
    d: usize,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl Buckets {
    fn new(points: &[Vec<f64>], h: f64) -> Self {
        let d = points.first().map_or(0, |p| p.len());
        let mut map: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::key(p, h)).or_default().push(i);
        }
        Buckets { h, d, map }
    }

    fn key(p: &[f64], h: f64) -> Vec<i64> {
        p.iter().map(|x| (x / h).floor() as i64).collect()
    }

    /// Cells at Chebyshev distance exactly `r` from `c`.
    fn ring(&self, c: &[i64], r: i64, out: &mut Vec<Vec<i64>>) {
        out.clear();
        let d = self.d;
        let mut off = vec![-r; d];
        loop {
            if off.iter().any(|v| v.abs() == r) {
                out.push(c.iter().zip(&off).map(|(a, b)| a + b).collect());
            }
            let mut a = 0;
            while a < d {
                if off[a] < r {
                    off[a] += 1;
                    break;
                }
                off[a] = -r;
                a += 1;
            }
            if a == d {
                break;
            }
        }
    }

    /// Distance from `q` to the nearest point.
    fn nearest(&self, points: &[Vec<f64>], q: &[f64]) -> f64 {
        let c = Self::key(q, self.h);
        let mut best = f64::INFINITY;
        let mut cells = Vec::new();
        let mut r = 0i64;
        loop {
            self.ring(&c, r, &mut cells);
            for cell in &cells {
                if let Some(ix) = self.map.get(cell) {
                    for &i in ix {
                        best = best.min(dist(&points[i], q));
                    }
                }
            }
            // Anything beyond ring r is at least r·h away.
            if best <= r as f64 * self.h {
                return best;
            }
            r += 1;
            if r > 1 << 20 {
                return best;
            }
        }
    }
}

/// Minimum pairwise distance with a realizing pair, by bucketing with a cell
/// size that doubles until a pair closer than it is seen.
pub fn separation(points: &[Vec<f64>]) -> Option<(f64, usize, usize)> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let d = points[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for a in 0..d {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let vol: f64 = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (b - a).max(1e-300))
        .product();
    let mut h = (vol / n as f64).powf(1.0 / d as f64).max(1e-300);
    if !h.is_finite() || h <= 0.0 {
        h = 1.0;
    }
    loop {
        let b = Buckets::new(points, h);
        let mut best = (f64::INFINITY, 0, 0);
        let mut cells = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let c = Buckets::key(p, h);
            for r in 0..=1 {
                b.ring(&c, r, &mut cells);
                for cell in &cells {
                    if let Some(ix) = b.map.get(cell) {
                        for &j in ix {
                            if j > i {
                                let dd = dist(p, &points[j]);
                                if dd < best.0 || (dd == best.0 && (i, j) < (best.1, best.2)) {
                                    best = (dd, i, j);
                                }
                            }
                        }
                    }
                }
            }
        }
        // A pair closer than h always sits in neighbouring cells.
        if best.0 < h {
            return Some(best);
        }
        h *= 2.0;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NetAudit {
    /// Minimum pairwise distance.
    pub s: f64,
    pub s_pair: (usize, usize),
    /// Largest distance from a grid node of the window to the cloud.
    pub b_grid: f64,
    /// Grid-cell diagonal; the net radius lies in `[b_grid, b_grid + slack]`.
    pub slack: f64,
    pub b: f64,
    pub b_argmax: Vec<f64>,
    pub grid_resolution: usize,
}

/// Separation and certified net radius over `window`, sampled on a grid of
/// `res` nodes per axis.
pub fn audit_net(
    cloud: &PointCloud,
    window: &[(f64, f64)],
    res: usize,
) -> Result<NetAudit, NetError> {
    if cloud.len() < 2 {
        return Err(NetError::Config("audit needs at least two points".into()));
    }
    check_window(window)?;
    let d = window.len();
    if cloud.dim() != d {
        return Err(NetError::Dimension {
            expected: d,
            got: cloud.dim(),
        });
    }
    if res < 2 {
        return Err(NetError::Config(
            "grid resolution must be at least 2".into(),
        ));
    }
    let (s, i, j) = separation(&cloud.points).unwrap();
    let step: Vec<f64> = window
        .iter()
        .map(|(lo, hi)| (hi - lo) / (res - 1) as f64)
        .collect();
    let slack = step.iter().map(|h| h * h).sum::<f64>().sqrt();
    let buckets = Buckets::new(&cloud.points, s.max(1e-300));
    let total = res.pow(d as u32);
    let best = (0..total)
        .into_par_iter()
        .map(|mut k| {
            let mut q = vec![0.0; d];
            for a in 0..d {
                let idx = k % res;
                k /= res;
                q[a] = if idx == res - 1 {
                    window[a].1
                } else {
                    window[a].0 + idx as f64 * step[a]
                };
            }
            (buckets.nearest(&cloud.points, &q), q)
        })
        .reduce(
            || (f64::NEG_INFINITY, Vec::new()),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    Ok(NetAudit {
        s,
        s_pair: (i, j),
        b_grid: best.0,
        slack,
        b: best.0 + slack,
        b_argmax: best.1,
        grid_resolution: res,
    })
}

// ---------------------------------------------------------------------------
// Discrepancy

#[derive(Clone, Debug, Serialize)]
pub struct CellDiscrepancy {
    pub index: Vec<usize>,
    pub count: u64,
    pub integral: f64,
    /// `(count - ∫_T ρ_k) / l^d = μ_k(φ⁻¹T) - ρ𝓛(φ⁻¹T)`.
    pub discrepancy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscrepancyReport {
    pub cells: Vec<CellDiscrepancy>,
    pub max_abs: f64,
    /// `2^d (sup ρ)^{(d-1)/d} / (l m^{d-1})`.
    pub bound: f64,
    /// Every discrepancy is `<= 0`.
    pub upper_holds: bool,
    /// Every discrepancy is `>= -bound`.
    pub lower_holds: bool,
}

/// Per-cell discrepancy of the points of `cloud` lying in `cube`.
pub fn discrepancy_report(
    cloud: &PointCloud,
    rho: &Density,
    cube: &NetCube,
) -> Result<DiscrepancyReport, NetError> {
    let d = check_cube(rho, cube)?;
    let m = cube.m;
    let l = cube.side;
    let mut counts = vec![0u64; m.pow(d as u32)];
    for p in &cloud.points {
        if !cube.contains_closed(p) {
            continue;
        }
        let mut k = 0;
        for a in (0..d).rev() {
            let i = (((p[a] - cube.corner[a]) * m as f64 / l).floor() as usize).min(m - 1);
            k = k * m + i;
        }
        counts[k] += 1;
    }
    let ld = l.powi(d as i32);
    let cells: Vec<CellDiscrepancy> = multi_indices(m, d)
        .into_iter()
        .enumerate()
        .map(|(k, index)| {
            let bx: Vec<(f64, f64)> = index
                .iter()
                .map(|&i| (i as f64 / m as f64, (i + 1) as f64 / m as f64))
                .collect();
            let integral = ld * rho.integrate(&bx);
            CellDiscrepancy {
                count: counts[k],
                discrepancy: (counts[k] as f64 - integral) / ld,
                integral,
                index,
            }
        })
        .collect();
    let bound = 2f64.powi(d as i32) * rho.sup().powf((d - 1) as f64 / d as f64)
        / (l * (m as f64).powi(d as i32 - 1));
    let max_abs = cells
        .iter()
        .map(|c| c.discrepancy.abs())
        .fold(0.0, f64::max);
    Ok(DiscrepancyReport {
        upper_holds: cells.iter().all(|c| c.discrepancy <= 0.0),
        lower_holds: cells.iter().all(|c| c.discrepancy >= -bound),
        cells,
        max_abs,
        bound,
    })
}

/// `φ⁻¹(X ∩ S)`: the points inside `cube` mapped back to the unit cube.
pub fn rescale(cloud: &PointCloud, cube: &NetCube) -> Result<PointCloud, NetError> {
    let pts = cloud
        .points
        .iter()
        .filter(|p| cube.contains_closed(p))
        .map(|p| {
            p.iter()
                .zip(&cube.corner)
                .map(|(x, c)| ((x - c) / cube.side).clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    PointCloud::new(pts, vec![(0.0, 1.0); cube.corner.len()])
}

// ---------------------------------------------------------------------------
// Serialization

/// CSV with `#` comment lines, a `# window` line and a header row.
pub fn to_csv(cloud: &PointCloud, comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        s.push_str("# ");
        s.push_str(c);
        s.push('\n');
    }
    let w: Vec<String> = cloud
        .window
        .iter()
        .map(|(lo, hi)| format!("{lo:?}:{hi:?}"))
        .collect();
    s.push_str(&format!("# window {}\n", w.join(",")));
    let head: Vec<String> = (1..=cloud.dim()).map(|a| format!("x{a}")).collect();
    s.push_str(&head.join(","));
    s.push('\n');
    for p in &cloud.points {
        let row: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn parse_window(spec: &str) -> Result<Window, NetError> {
    spec.split(',')
        .map(|ax| {
            let (a, b) = ax
                .split_once(':')
                .ok_or_else(|| NetError::Format(format!("bad window axis {ax:?}")))?;
            let lo = a.trim().parse::<f64>();
            let hi = b.trim().parse::<f64>();
            match (lo, hi) {
                (Ok(lo), Ok(hi)) => Ok((lo, hi)),
                _ => Err(NetError::Format(format!("bad window axis {ax:?}"))),
            }
        })
        .collect()
}

/// Reads [`to_csv`] output. Without a `# window` line the bounding box is used.
pub fn from_csv(text: &str) -> Result<PointCloud, NetError> {
    let mut window = None;
    let mut points = Vec::new();
    let mut header_seen = false;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(w) = c.trim().strip_prefix("window") {
                window = Some(parse_window(w.trim())?);
            }
            continue;
        }
        let fields: Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match fields {
            Ok(p) => points.push(p),
            Err(_) if !header_seen && points.is_empty() => header_seen = true,
            Err(e) => return Err(NetError::Format(format!("line {}: {e}", ln + 1))),
        }
    }
    let window = match window {
        Some(w) => w,
        None => bounding_box(&points)?,
    };
    PointCloud::new(points, window)
}

pub fn bounding_box(points: &[Vec<f64>]) -> Result<Window, NetError> {
    let first = points
        .first()
        .ok_or_else(|| NetError::Format("no points and no window".into()))?;
    let mut w: Window = first.iter().map(|&x| (x, x)).collect();
    for p in points {
        if p.len() != w.len() {
            return Err(NetError::Dimension {
                expected: w.len(),
                got: p.len(),
            });
        }
        for (a, &x) in p.iter().enumerate() {
            w[a].0 = w[a].0.min(x);
            w[a].1 = w[a].1.max(x);
        }
    }
    Ok(w)
}

pub const NETF_MAGIC: &[u8; 4] = b"NETF";
pub const NETF_VERSION: u32 = 1;

/// `NETF`, version, dimension, count, window lows, window highs, then the
/// coordinates; all little-endian.
pub fn to_netf(cloud: &PointCloud) -> Vec<u8> {
    let d = cloud.dim();
    let mut out = Vec::with_capacity(20 + 16 * d + 8 * d * cloud.len());
    out.extend_from_slice(NETF_MAGIC);
    out.extend_from_slice(&NETF_VERSION.to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for (lo, _) in &cloud.window {
        out.extend_from_slice(&lo.to_le_bytes());
    }
    for (_, hi) in &cloud.window {
        out.extend_from_slice(&hi.to_le_bytes());
    }
    for p in &cloud.points {
        for x in p {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn from_netf(bytes: &[u8]) -> Result<PointCloud, NetError> {
    let bad = |m: &str| NetError::Format(format!("NETF: {m}"));
    if bytes.len() < 20 || &bytes[..4] != NETF_MAGIC {
        return Err(bad("missing magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != NETF_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let d = u32_at(8) as usize;
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let need = d
        .checked_mul(16)
        .and_then(|w| n.checked_mul(d)?.checked_mul(8)?.checked_add(w + 20));
    if d == 0 || need != Some(bytes.len()) {
        return Err(bad("length does not match header"));
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let window = (0..d)
        .map(|a| (f(20 + 8 * a), f(20 + 8 * (d + a))))
        .collect();
    let base = 20 + 16 * d;
    let points = (0..n)
        .map(|i| (0..d).map(|a| f(base + 8 * (i * d + a))).collect())
        .collect();
    PointCloud::new(points, window)
}
