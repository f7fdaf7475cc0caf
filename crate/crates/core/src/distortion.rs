//! Distortion of bijections between finite point sets: Lipschitz and
//! bi-Lipschitz constants, exact and heuristic minimization over pairings,
//! Feige's `L_S` and its windowed supremum `C_n`, and growth profiles of nets.

use crate::density::Density;
use crate::moduli::{self, FiniteMap, Modulus};
use crate::netgen::{self, NetCube, NetError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// Relative tolerance for comparing ratios.
pub const TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DistortionError {
    #[error("sizes differ: {0} source points, {1} target points")]
    Cardinality(usize, usize),
    #[error("at least {0} points are required")]
    TooFew(usize),
    #[error("{0} is not a permutation")]
    Permutation(String),
    #[error("{set} points {i} and {j} coincide")]
    Duplicate {
        set: &'static str,
        i: usize,
        j: usize,
    },
    #[error("dimension mismatch in {0}")]
    Dimension(&'static str),
    #[error("{what}: {needed} exceeds the budget {budget}; {hint}")]
    Budget {
        what: &'static str,
        needed: String,
        budget: String,
        hint: &'static str,
    },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Modulus(#[from] moduli::ModulusError),
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn dist_matrix(p: &[Vec<f64>], set: &'static str) -> Result<Vec<Vec<f64>>, DistortionError> {
    let n = p.len();
    let d = p.first().map_or(0, |x| x.len());
    if p.iter().any(|x| x.len() != d) {
        return Err(DistortionError::Dimension(set));
    }
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = dist(&p[i], &p[j]);
            if v == 0.0 {
                return Err(DistortionError::Duplicate { set, i, j });
            }
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// `source[i] ↦ target[perm[i]]`.
#[derive(Clone, Debug, Serialize)]
pub struct Bijection {
    pub source: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
    pub perm: Vec<usize>,
}

fn check_perm(perm: &[usize], n: usize) -> Result<(), DistortionError> {
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(DistortionError::Permutation(format!("{perm:?}")));
        }
        seen[p] = true;
    }
    if perm.len() != n {
        return Err(DistortionError::Permutation(format!("{perm:?}")));
    }
    Ok(())
}

impl Bijection {
    pub fn new(
        source: Vec<Vec<f64>>,
        target: Vec<Vec<f64>>,
        perm: Vec<usize>,
    ) -> Result<Self, DistortionError> {
        if source.len() != target.len() {
            return Err(DistortionError::Cardinality(source.len(), target.len()));
        }
        check_perm(&perm, source.len())?;
        Ok(Bijection {
            source,
            target,
            perm,
        })
    }

    pub fn identity(source: Vec<Vec<f64>>, target: Vec<Vec<f64>>) -> Result<Self, DistortionError> {
        let n = source.len();
        Bijection::new(source, target, (0..n).collect())
    }

    pub fn inverse(&self) -> Bijection {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        Bijection {
            source: self.target.clone(),
            target: self.source.clone(),
            perm: inv,
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct PairMax {
    pub value: f64,
    /// Source indices of a maximizing pair.
    pub pair: (usize, usize),
}

fn lip_of(dx: &[Vec<f64>], dy: &[Vec<f64>], perm: &[usize]) -> PairMax {
    let n = perm.len();
    let mut best = PairMax {
        value: 0.0,
        pair: (0, 0),
    };
    for i in 0..n {
        for j in i + 1..n {
            let r = dy[perm[i]][perm[j]] / dx[i][j];
            if r > best.value {
                best = PairMax {
                    value: r,
                    pair: (i, j),
                };
            }
        }
    }
    best
}

fn lip_inv_of(dx: &[Vec<f64>], dy: &[Vec<f64>], perm: &[usize]) -> PairMax {
    let n = perm.len();
    let mut best = PairMax {
        value: 0.0,
        pair: (0, 0),
    };
    for i in 0..n {
        for j in i + 1..n {
            let r = dx[i][j] / dy[perm[i]][perm[j]];
            if r > best.value {
                best = PairMax {
                    value: r,
                    pair: (i, j),
                };
            }
        }
    }
    best
}

fn matrices(b: &Bijection) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), DistortionError> {
    if b.len() < 2 {
        return Err(DistortionError::TooFew(2));
    }
    Ok((
        dist_matrix(&b.source, "source")?,
        dist_matrix(&b.target, "target")?,
    ))
}

/// `max ‖f(y) - f(x)‖ / ‖y - x‖` over pairs.
pub fn lip(b: &Bijection) -> Result<PairMax, DistortionError> {
    let (dx, dy) = matrices(b)?;
    Ok(lip_of(&dx, &dy, &b.perm))
}

/// `max(Lip f, Lip f⁻¹)` with both parts.
pub fn bilip(b: &Bijection) -> Result<(f64, PairMax, PairMax), DistortionError> {
    let (dx, dy) = matrices(b)?;
    let f = lip_of(&dx, &dy, &b.perm);
    let g = lip_inv_of(&dx, &dy, &b.perm);
    Ok((f.value.max(g.value), f, g))
}

/// `max ‖f(x) - x‖`, over all points or over those within `radius` of `center`.
pub fn displacement(b: &Bijection, window: Option<(&[f64], f64)>) -> f64 {
    b.source
        .iter()
        .enumerate()
        .filter(|(_, x)| window.is_none_or(|(c, r)| dist(x, c) <= r))
        .map(|(i, x)| dist(x, &b.target[b.perm[i]]))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Minimization

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Objective {
    /// `max(Lip f, Lip f⁻¹)`.
    BiLip,
    /// `Lip f` only.
    Lip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    Exact,
    Heuristic,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistortionReport {
    pub objective: Objective,
    pub method: Method,
    /// Value of the objective at `perm`.
    pub value: f64,
    pub lip: f64,
    pub lip_pair: (usize, usize),
    pub lip_inv: f64,
    pub lip_inv_pair: (usize, usize),
    pub bilip: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub perm: Vec<usize>,
    pub nodes: u64,
}

struct Instance {
    dx: Vec<Vec<f64>>,
    dy: Vec<Vec<f64>>,
    obj: Objective,
    n: usize,
}

impl Instance {
    fn new(x: &[Vec<f64>], y: &[Vec<f64>], obj: Objective) -> Result<Self, DistortionError> {
        if x.len() != y.len() {
            return Err(DistortionError::Cardinality(x.len(), y.len()));
        }
        if x.len() < 2 {
            return Err(DistortionError::TooFew(2));
        }
        Ok(Instance {
            dx: dist_matrix(x, "source")?,
            dy: dist_matrix(y, "target")?,
            obj,
            n: x.len(),
        })
    }

    #[inline]
    fn cost(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let u = self.dx[i][j];
        let v = self.dy[a][b];
        match self.obj {
            Objective::Lip => v / u,
            Objective::BiLip => (v / u).max(u / v),
        }
    }

    fn value(&self, perm: &[usize]) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                m = m.max(self.cost(i, j, perm[i], perm[j]));
            }
        }
        m
    }

    /// `(max, number of pairs within TOL of max)`, or `None` once the max
    /// exceeds `cap`.
    fn profile(&self, perm: &[usize], cap: f64) -> Option<(f64, usize)> {
        let mut m: f64 = 0.0;
        let mut count = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let c = self.cost(i, j, perm[i], perm[j]);
                if c > cap * (1.0 + TOL) {
                    return None;
                }
                if c > m * (1.0 + TOL) {
                    m = c;
                    count = 1;
                } else if c >= m * (1.0 - TOL) {
                    m = m.max(c);
                    count += 1;
                }
            }
        }
        Some((m, count))
    }

    /// Points of pairs within TOL of the max.
    fn critical(&self, perm: &[usize], m: f64) -> Vec<usize> {
        let mut hit = vec![false; self.n];
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.cost(i, j, perm[i], perm[j]) >= m * (1.0 - TOL) {
                    hit[i] = true;
                    hit[j] = true;
                }
            }
        }
        (0..self.n).filter(|&i| hit[i]).collect()
    }

    fn report(&self, perm: Vec<usize>, method: Method, lower: f64, nodes: u64) -> DistortionReport {
        let f = lip_of(&self.dx, &self.dy, &perm);
        let g = lip_inv_of(&self.dx, &self.dy, &perm);
        let value = match self.obj {
            Objective::Lip => f.value,
            Objective::BiLip => f.value.max(g.value),
        };
        DistortionReport {
            objective: self.obj,
            method,
            value,
            lip: f.value,
            lip_pair: f.pair,
            lip_inv: g.value,
            lip_inv_pair: g.pair,
            bilip: f.value.max(g.value),
            lower_bound: if method == Method::Exact {
                value
            } else {
                lower
            },
            upper_bound: value,
            perm,
            nodes,
        }
    }
}

fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 * (1.0 - TOL) || (a.0 <= b.0 * (1.0 + TOL) && a.1 < b.1)
}

struct Search<'a> {
    inst: &'a Instance,
    shared: &'a AtomicU64,
    nodes_shared: &'a AtomicU64,
    best: f64,
    best_perm: Vec<usize>,
    perm: Vec<usize>,
    used: Vec<bool>,
    nodes: u64,
    limit: u64,
    aborted: bool,
}

impl<'a> Search<'a> {
    fn new(
        inst: &'a Instance,
        shared: &'a AtomicU64,
        nodes_shared: &'a AtomicU64,
        limit: u64,
    ) -> Self {
        Search {
            inst,
            shared,
            nodes_shared,
            best: f64::INFINITY,
            best_perm: Vec::new(),
            perm: vec![0; inst.n],
            used: vec![false; inst.n],
            nodes: 0,
            limit,
            aborted: false,
        }
    }

    fn bound(&self) -> f64 {
        self.best
            .min(f64::from_bits(self.shared.load(Ordering::Relaxed)))
    }

    fn rec(&mut self, k: usize, cur: f64) {
        let n = self.inst.n;
        if k == n {
            if cur < self.best || (cur == self.best && self.perm < self.best_perm) {
                self.best = cur;
                self.best_perm.clone_from(&self.perm);
                self.shared.fetch_min(cur.to_bits(), Ordering::Relaxed);
            }
            return;
        }
        for t in 0..n {
            if self.used[t] {
                continue;
            }
            self.nodes += 1;
            let pending = self.nodes % 4096;
            let total = if pending == 0 {
                self.nodes_shared.fetch_add(4096, Ordering::Relaxed) + 4096
            } else {
                self.nodes_shared.load(Ordering::Relaxed) + pending
            };
            if total > self.limit {
                self.aborted = true;
                return;
            }
            let cap = self.bound() * (1.0 + TOL);
            let mut c = cur;
            let mut cut = false;
            for i in 0..k {
                c = c.max(self.inst.cost(i, k, self.perm[i], t));
                if c > cap {
                    cut = true;
                    break;
                }
            }
            if cut {
                continue;
            }
            self.perm[k] = t;
            self.used[t] = true;
            self.rec(k + 1, c);
            self.used[t] = false;
            if self.aborted {
                return;
            }
        }
    }
}

/// Explores the subtree with `perm[0] = first`.
fn branch(
    inst: &Instance,
    first: usize,
    shared: &AtomicU64,
    nodes: &AtomicU64,
    limit: u64,
) -> (f64, Vec<usize>, u64, bool) {
    let mut s = Search::new(inst, shared, nodes, limit);
    s.perm[0] = first;
    s.used[first] = true;
    s.rec(1, 0.0);
    nodes.fetch_add(s.nodes % 4096, Ordering::Relaxed);
    (s.best, s.best_perm, s.nodes, s.aborted)
}

const PARALLEL_MIN_N: usize = 7;

/// Trivial lower bound on `biLip`: ratios of diameters and of separations in
/// both directions (only the forward ones for `Lip`).
pub fn trivial_lower_bound(x: &[Vec<f64>], y: &[Vec<f64>], obj: Objective) -> f64 {
    let ext = |p: &[Vec<f64>]| {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                let v = dist(&p[i], &p[j]);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    };
    let (sx, dxm) = ext(x);
    let (sy, dym) = ext(y);
    let fwd = (dym / dxm).max(sy / sx);
    match obj {
        Objective::Lip => fwd,
        Objective::BiLip => fwd.max(dxm / dym).max(sx / sy),
    }
}

pub const EXACT_THRESHOLD: usize = 10;

/// Global minimum over all pairings by depth-first branch and bound in
/// lexicographic order; ties resolve to the lexicographically first pairing.
/// Past `node_limit` the heuristic answer is returned with its bounds.
pub fn min_distortion_exact(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    obj: Objective,
    node_limit: u64,
) -> Result<DistortionReport, DistortionError> {
    let inst = Instance::new(x, y, obj)?;
    let n = inst.n;
    // Nonnegative f64 bit patterns order like the values.
    let shared = AtomicU64::new(f64::INFINITY.to_bits());
    let nodes = AtomicU64::new(0);
    let run = |t: usize| branch(&inst, t, &shared, &nodes, node_limit);
    let results: Vec<_> = if n >= PARALLEL_MIN_N {
        (0..n).into_par_iter().map(run).collect()
    } else {
        (0..n).map(run).collect()
    };
    let aborted = results.iter().any(|r| r.3);
    let total: u64 = results.iter().map(|r| r.2).sum();
    let best = results
        .into_iter()
        .filter(|r| !r.1.is_empty())
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    if !aborted {
        let (_, perm, _, _) = best.expect("a complete pairing");
        return Ok(inst.report(perm, Method::Exact, 0.0, total));
    }
    let mut h = heuristic(&inst, &HeuristicOpts::default());
    if let Some((v, p, _, _)) = best {
        if v < inst.value(&h) {
            h = p;
        }
    }
    let lower = trivial_lower_bound(x, y, obj);
    Ok(inst.report(h, Method::Heuristic, lower, total))
}

pub fn min_bilip_exact(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    node_limit: u64,
) -> Result<DistortionReport, DistortionError> {
    min_distortion_exact(x, y, Objective::BiLip, node_limit)
}

#[derive(Clone, Debug, Serialize)]
pub struct HeuristicOpts {
    pub seed: u64,
    pub restarts: usize,
    /// 3-cycle moves are tried only up to this many points.
    pub three_cycle_max_n: usize,
}

impl Default for HeuristicOpts {
    fn default() -> Self {
        HeuristicOpts {
            seed: 0,
            restarts: 8,
            three_cycle_max_n: 64,
        }
    }
}

/// Minimum-cost perfect assignment (Hungarian method with potentials),
/// returning `assign[i]` = column of row `i`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

fn sq_cost(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| {
            y.iter()
                .map(|b| a.iter().zip(b).map(|(s, t)| (s - t) * (s - t)).sum())
                .collect()
        })
        .collect()
}

/// Centred and scaled to unit mean norm.
fn normalized(p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = p.len() as f64;
    let d = p[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|a| p.iter().map(|x| x[a]).sum::<f64>() / n)
        .collect();
    let centred: Vec<Vec<f64>> = p
        .iter()
        .map(|x| x.iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    let s = centred
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum::<f64>()
        / n;
    let s = if s > 0.0 { s } else { 1.0 };
    centred
        .into_iter()
        .map(|x| x.into_iter().map(|v| v / s).collect())
        .collect()
}

/// First-improvement descent on `(max, count at max)` using swaps that touch
/// a critical point and, for small instances, 3-cycles.
fn local_search(inst: &Instance, perm: &mut [usize], three_max: usize) {
    let n = inst.n;
    let mut cur = inst.profile(perm, f64::INFINITY).unwrap();
    'outer: loop {
        let crit = inst.critical(perm, cur.0);
        for &i in &crit {
            for j in 0..n {
                if j == i {
                    continue;
                }
                perm.swap(i, j);
                if let Some(p) = inst.profile(perm, cur.0) {
                    if better(p, cur) {
                        cur = p;
                        continue 'outer;
                    }
                }
                perm.swap(i, j);
            }
        }
        if n <= three_max {
            for &i in &crit {
                for j in 0..n {
                    for k in 0..n {
                        if j == i || k == i || k == j {
                            continue;
                        }
                        // i ← j ← k ← i
                        let (a, b, c) = (perm[i], perm[j], perm[k]);
                        perm[i] = b;
                        perm[j] = c;
                        perm[k] = a;
                        if let Some(p) = inst.profile(perm, cur.0) {
                            if better(p, cur) {
                                cur = p;
                                continue 'outer;
                            }
                        }
                        perm[i] = a;
                        perm[j] = b;
                        perm[k] = c;
                    }
                }
            }
        }
        return;
    }
}

fn heuristic_starts(x: &[Vec<f64>], y: &[Vec<f64>], opts: &HeuristicOpts) -> Vec<Vec<usize>> {
    let n = x.len();
    let mut starts = vec![hungarian(&sq_cost(x, y))];
    if opts.restarts > 1 {
        starts.push(hungarian(&sq_cost(&normalized(x), &normalized(y))));
    }
    for r in 2..opts.restarts {
        let mut rng =
            ChaCha8Rng::seed_from_u64(opts.seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut p = starts[0].clone();
        if r % 2 == 0 {
            p.shuffle(&mut rng);
        } else {
            for _ in 0..n.div_ceil(2) {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                p.swap(i, j);
            }
        }
        starts.push(p);
    }
    starts
}

fn heuristic_from(inst: &Instance, starts: Vec<Vec<usize>>, opts: &HeuristicOpts) -> Vec<usize> {
    let results: Vec<(f64, usize, Vec<usize>)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(k, mut p)| {
            local_search(inst, &mut p, opts.three_cycle_max_n);
            (inst.value(&p), k, p)
        })
        .collect();
    results
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .unwrap()
        .2
}

fn heuristic(inst: &Instance, opts: &HeuristicOpts) -> Vec<usize> {
    let n = inst.n;
    let mut starts = vec![(0..n).collect::<Vec<_>>()];
    for r in 1..opts.restarts.max(1) {
        let mut rng =
            ChaCha8Rng::seed_from_u64(opts.seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut rng);
        starts.push(p);
    }
    heuristic_from(inst, starts, opts)
}

pub fn min_distortion_heuristic(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    obj: Objective,
    opts: &HeuristicOpts,
) -> Result<DistortionReport, DistortionError> {
    let inst = Instance::new(x, y, obj)?;
    let perm = heuristic_from(&inst, heuristic_starts(x, y, opts), opts);
    Ok(inst.report(perm, Method::Heuristic, trivial_lower_bound(x, y, obj), 0))
}

/// Hungarian start on squared distances, then local search with seeded restarts.
pub fn min_bilip_heuristic(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    opts: &HeuristicOpts,
) -> Result<DistortionReport, DistortionError> {
    min_distortion_heuristic(x, y, Objective::BiLip, opts)
}

// ---------------------------------------------------------------------------
// Feige

/// `{1, …, n}^d` in lexicographic order.
pub fn grid(n: usize, d: usize) -> Vec<Vec<f64>> {
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut k| {
            let mut p = vec![0.0; d];
            for a in (0..d).rev() {
                p[a] = (k % n + 1) as f64;
                k /= n;
            }
            p
        })
        .collect()
}

pub const FEIGE_EXACT_MAX: usize = 12;
const FEIGE_NODE_LIMIT: u64 = 50_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct FeigeLs {
    pub value: f64,
    pub exact: bool,
    /// `perm[i]`: index into the lexicographic grid of the image of `S[i]`.
    pub perm: Vec<usize>,
}

/// `L_S = min Lip f` over bijections `f: S → {1..n}^d`.
pub fn feige_ls(s: &[Vec<i64>], n: usize, d: usize) -> Result<FeigeLs, DistortionError> {
    let size = n.pow(d as u32);
    if s.len() != size {
        return Err(DistortionError::Cardinality(s.len(), size));
    }
    if s.iter().any(|p| p.len() != d) {
        return Err(DistortionError::Dimension("S"));
    }
    let x: Vec<Vec<f64>> = s
        .iter()
        .map(|p| p.iter().map(|&v| v as f64).collect())
        .collect();
    let y = grid(n, d);
    let r = if size <= FEIGE_EXACT_MAX {
        min_distortion_exact(&x, &y, Objective::Lip, FEIGE_NODE_LIMIT)?
    } else {
        min_distortion_heuristic(&x, &y, Objective::Lip, &HeuristicOpts::default())?
    };
    Ok(FeigeLs {
        value: r.value,
        exact: r.method == Method::Exact,
        perm: r.perm,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FeigeCn {
    pub n: usize,
    pub d: usize,
    pub window: Vec<(i64, i64)>,
    pub value: f64,
    pub maximizer: Vec<Vec<i64>>,
    pub subsets: u64,
    pub exact: bool,
}

fn window_points(window: &[(i64, i64)]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for &(lo, hi) in window {
        let mut next = Vec::new();
        for p in &out {
            for v in lo..=hi {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n.saturating_sub(k));
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > u64::MAX as u128 {
            return None;
        }
    }
    Some(r as u64)
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > m {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        let mut i = k;
        while i > 0 && c[i - 1] == m - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        c[i - 1] += 1;
        for j in i..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

pub const CN_BUDGET: u64 = 2_000_000;

/// `max L_S` over all `n^d`-subsets `S` of the window lattice; ties resolve to
/// the lexicographically first subset.
pub fn feige_cn_window(
    n: usize,
    d: usize,
    window: &[(i64, i64)],
    budget: u64,
) -> Result<FeigeCn, DistortionError> {
    if window.len() != d {
        return Err(DistortionError::Dimension("window"));
    }
    let pts = window_points(window);
    let k = n.pow(d as u32);
    let count = binomial(pts.len() as u64, k as u64);
    if count.is_none_or(|c| c > budget) {
        return Err(DistortionError::Budget {
            what: "subsets",
            needed: count.map_or("> 2^64".into(), |c| c.to_string()),
            budget: budget.to_string(),
            hint: "use the sampled lower bound instead",
        });
    }
    if k > FEIGE_EXACT_MAX {
        return Err(DistortionError::Budget {
            what: "subset size",
            needed: k.to_string(),
            budget: FEIGE_EXACT_MAX.to_string(),
            hint: "exact L_S is limited to small subsets",
        });
    }
    let combos = combinations(pts.len(), k);
    let vals: Vec<Result<f64, DistortionError>> = combos
        .par_iter()
        .map(|c| {
            let s: Vec<Vec<i64>> = c.iter().map(|&i| pts[i].clone()).collect();
            feige_ls(&s, n, d).map(|r| r.value)
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, v) in vals.into_iter().enumerate() {
        let v = v?;
        if v > best {
            best = v;
            arg = i;
        }
    }
    Ok(FeigeCn {
        n,
        d,
        window: window.to_vec(),
        value: best,
        maximizer: combos
            .get(arg)
            .map_or(Vec::new(), |c| c.iter().map(|&i| pts[i].clone()).collect()),
        subsets: combos.len() as u64,
        exact: true,
    })
}

/// Lower bound on the windowed `C_n` from `samples` seeded random subsets.
pub fn feige_cn_sampled(
    n: usize,
    d: usize,
    window: &[(i64, i64)],
    samples: usize,
    seed: u64,
) -> Result<FeigeCn, DistortionError> {
    if window.len() != d {
        return Err(DistortionError::Dimension("window"));
    }
    let pts = window_points(window);
    let k = n.pow(d as u32);
    if pts.len() < k {
        return Err(DistortionError::TooFew(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsets: Vec<Vec<usize>> = (0..samples)
        .map(|_| {
            let mut c = rand::seq::index::sample(&mut rng, pts.len(), k).into_vec();
            c.sort_unstable();
            c
        })
        .collect();
    let vals: Vec<Result<f64, DistortionError>> = subsets
        .par_iter()
        .map(|c| {
            let s: Vec<Vec<i64>> = c.iter().map(|&i| pts[i].clone()).collect();
            feige_ls(&s, n, d).map(|r| r.value)
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, v) in vals.into_iter().enumerate() {
        let v = v?;
        if v > best {
            best = v;
            arg = i;
        }
    }
    Ok(FeigeCn {
        n,
        d,
        window: window.to_vec(),
        value: best,
        maximizer: subsets
            .get(arg)
            .map_or(Vec::new(), |c| c.iter().map(|&i| pts[i].clone()).collect()),
        subsets: samples as u64,
        exact: false,
    })
}

// ---------------------------------------------------------------------------
// Growth profile

#[derive(Clone, Debug, Serialize)]
pub struct ProfileOpts {
    /// Cells per axis of the construction cube.
    pub m: usize,
    pub heuristic: HeuristicOpts,
    /// Largest lattice radius, relative to `R`, searched when matching sizes.
    pub max_radius_factor: f64,
}

impl Default for ProfileOpts {
    fn default() -> Self {
        ProfileOpts {
            m: 2,
            heuristic: HeuristicOpts::default(),
            max_radius_factor: 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileRow {
    pub r: f64,
    pub points: usize,
    /// Distance from the lattice ball centre to the farthest point used.
    pub r_lattice: f64,
    /// Lattice points at distance `r_lattice` left out to match sizes.
    pub shell_left_out: usize,
    pub bilip_upper: f64,
    pub lower_bound: f64,
    pub displacement: f64,
    /// `max` of the homogeneous `ω` constants of the pairing and its inverse.
    pub homogeneous_omega: f64,
}

/// The net of `ρ` in `B(0,R)`: the construction cube `[-R, R]^d` cut to the
/// inscribed ball.
pub fn ball_net(
    rho: &Density,
    d: usize,
    r: f64,
    m: usize,
) -> Result<Vec<Vec<f64>>, DistortionError> {
    let cube = NetCube {
        corner: vec![-r; d],
        side: 2.0 * r,
        m,
    };
    let cloud = netgen::construct_net_cube(rho, &cube)?.cloud;
    Ok(cloud
        .points
        .into_iter()
        .filter(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt() <= r)
        .collect())
}

/// The `k` lattice points closest to `center` (ties by coordinates), the
/// distance reached, and how many points of the last shell were left out.
pub fn lattice_ball(
    d: usize,
    k: usize,
    center: &[f64],
    max_r: f64,
) -> Option<(Vec<Vec<f64>>, f64, usize)> {
    let window: Vec<(i64, i64)> = (0..d)
        .map(|a| {
            let c = center.get(a).copied().unwrap_or(0.0);
            ((c - max_r).floor() as i64, (c + max_r).ceil() as i64)
        })
        .collect();
    let mut pts: Vec<(f64, Vec<i64>)> = window_points(&window)
        .into_iter()
        .map(|p| {
            let n = p
                .iter()
                .enumerate()
                .map(|(a, &v)| (v as f64 - center.get(a).copied().unwrap_or(0.0)).powi(2))
                .sum::<f64>()
                .sqrt();
            (n, p)
        })
        .filter(|(n, _)| *n <= max_r)
        .collect();
    if pts.len() < k {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let reach = if k == 0 { 0.0 } else { pts[k - 1].0 };
    let left = pts[k..].iter().filter(|p| p.0 == reach).count();
    let chosen = pts[..k]
        .iter()
        .map(|(_, p)| p.iter().map(|&v| v as f64).collect())
        .collect();
    Some((chosen, reach, left))
}

/// `-p₀` for the net point `p₀` nearest the origin (ties by coordinates): the
/// lattice ball around it is a translate of the net when the net is a
/// shifted lattice.
fn phase_center(x: &[Vec<f64>]) -> Vec<f64> {
    let norm = |p: &Vec<f64>| p.iter().map(|v| v * v).sum::<f64>();
    let p0 = x
        .iter()
        .min_by(|a, b| {
            norm(a)
                .total_cmp(&norm(b))
                .then_with(|| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
        })
        .expect("nonempty net");
    p0.iter().map(|v| -v).collect()
}

/// Per radius: the heuristic pairing of the net of `ρ` in `B(0,R)` with an
/// equally large lattice ball. Columns are bounds, not optima.
pub fn distortion_growth_profile(
    rho: &Density,
    d: usize,
    scales: &[f64],
    modulus: &Modulus,
    opts: &ProfileOpts,
) -> Result<Vec<ProfileRow>, DistortionError> {
    let mut rows = Vec::with_capacity(scales.len());
    for &r in scales {
        let x = ball_net(rho, d, r, opts.m)?;
        if x.len() < 2 {
            return Err(DistortionError::TooFew(2));
        }
        let center = phase_center(&x);
        let (y, reach, left) = lattice_ball(d, x.len(), &center, opts.max_radius_factor * r)
            .ok_or(DistortionError::Budget {
                what: "lattice points needed",
                needed: x.len().to_string(),
                budget: format!("ball of radius {}", opts.max_radius_factor * r),
                hint: "raise max_radius_factor",
            })?;
        let rep = min_bilip_heuristic(&x, &y, &opts.heuristic)?;
        let b = Bijection::new(x.clone(), y.clone(), rep.perm.clone())?;
        let map = FiniteMap::new(x.clone(), rep.perm.iter().map(|&j| y[j].clone()).collect())?;
        let hom = moduli::homogeneous_constant(&map, modulus, None)?
            .max(moduli::homogeneous_constant(&map.inverse(), modulus, None)?);
        rows.push(ProfileRow {
            r,
            points: x.len(),
            r_lattice: reach,
            shell_left_out: left,
            bilip_upper: rep.bilip,
            lower_bound: rep.lower_bound,
            displacement: displacement(&b, None),
            homogeneous_omega: hom,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Vec<f64>> {
        v.iter().map(|&(a, b)| vec![a, b]).collect()
    }

    #[test]
    fn identity_and_scaling() {
        let x = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 2.0), (3.0, 1.0)]);
        let b = Bijection::identity(x.clone(), x.clone()).unwrap();
        assert_eq!(lip(&b).unwrap().value, 1.0);
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|p| p.iter().map(|v| 2.0 * v).collect())
            .collect();
        let b = Bijection::identity(x.clone(), y).unwrap();
        assert_eq!(lip(&b).unwrap().value, 2.0);
        assert_eq!(bilip(&b).unwrap().0, 2.0);
    }

    #[test]
    fn translation_displacement() {
        let x = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let y: Vec<Vec<f64>> = x.iter().map(|p| vec![p[0] + 3.0, p[1] + 4.0]).collect();
        let b = Bijection::identity(x, y).unwrap();
        assert_eq!(bilip(&b).unwrap().0, 1.0);
        assert_eq!(displacement(&b, None), 5.0);
    }

    #[test]
    fn duplicates_are_errors() {
        let x = pts(&[(0.0, 0.0), (0.0, 0.0)]);
        let b = Bijection::identity(x.clone(), pts(&[(0.0, 0.0), (1.0, 0.0)])).unwrap();
        assert!(matches!(lip(&b), Err(DistortionError::Duplicate { .. })));
    }

    #[test]
    fn hungarian_small() {
        let c = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        assert_eq!(hungarian(&c), vec![1, 0, 2]);
    }

    #[test]
    fn square_corners_scaled() {
        let x = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let y = pts(&[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0)]);
        let r = min_bilip_exact(&x, &y, 1_000_000).unwrap();
        assert_eq!(r.value, 2.0);
        assert_eq!(r.method, Method::Exact);
    }

    #[test]
    fn spread_line_contracts() {
        let s = vec![vec![0], vec![2], vec![4], vec![6]];
        let r = feige_ls(&s, 4, 1).unwrap();
        assert_eq!(r.value, 0.5);
        assert!(r.exact);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(16, 4), Some(1820));
        assert_eq!(combinations(5, 3).len(), 10);
    }

    #[test]
    fn lattice_ball_shells() {
        let (p, reach, left) = lattice_ball(2, 3, &[0.0, 0.0], 3.0).unwrap();
        assert_eq!(p[0], vec![0.0, 0.0]);
        assert_eq!(reach, 1.0);
        assert_eq!(left, 2);
    }
}
