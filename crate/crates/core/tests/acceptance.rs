//! One PASS/FAIL line per acceptance criterion. Tolerances are pinned here.

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepnet::density::{
    build_from_schedule, build_nested_families, chessboard_psi, nesting_measure_report, Density,
    Offsets, Schedule,
};
use sepnet::distortion::{
    feige_cn_window, min_bilip_exact, min_bilip_heuristic, HeuristicOpts, Method, CN_BUDGET,
};
use sepnet::geomlab::{
    boundary_neighborhood_measure, check_statement1, dichotomy, run_algorithm_b1,
    symdiff_bound_check, volume_diff_check, B1Opts, MapKind, SampledHomeo, Slab, VolumeMode,
    VolumeStatus,
};
use sepnet::moduli::{check_class_m, Modulus};
use sepnet::netgen::{audit_net, construct_net_cube, discrepancy_report, NetCube};
use sepnet::params::{self, Count, RSearch};
use std::f64::consts::PI;
use std::time::Instant;

type Outcome = (bool, String);

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn sq() -> Vec<(f64, f64)> {
    vec![(0.0, 1.0); 2]
}

fn c1() -> Outcome {
    let mut bad = 0;
    for a in [0.25, 0.5, 1.0, 2.0] {
        let m = Modulus::logpow(a).unwrap();
        assert_eq!(m.a_omega(), (-2.0f64).exp());
        bad += check_class_m(&m, 64, 12.0, 1e-12).violations.len();
    }
    (
        bad == 0,
        format!("{bad} violations over 4 moduli, 64-point grid, tol 1e-12"),
    )
}

fn c2() -> Outcome {
    let id = Modulus::identity();
    let phi = params::phi(1, &id, 0.1).unwrap();
    let m = params::big_m(&Count::exact(60), 1, &id, 0.1, 0.5)
        .unwrap()
        .exact;
    let ok =
        rel(phi, 1e-3 / 120.0) <= f64::EPSILON && (phi - 8.3333e-6).abs() < 5e-11 && m == Some(40);
    (ok, format!("phi = {phi:.4e}, M = {m:?}"))
}

fn configs() -> Vec<(usize, Modulus, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..20)
        .map(|k| {
            let d = rng.gen_range(1..=3);
            // moduli below L t log(1/t)^γ, the class the c_i bounds are stated for
            let m = match k % 2 {
                0 => Modulus::identity(),
                _ => Modulus::logpow(rng.gen_range(0.01..2.0)).unwrap(),
            };
            let eps = rng.gen_range(0.01..0.95);
            let c = rng.gen_range(0.05..0.95) * m.a_omega();
            (d, m, eps, c)
        })
        .collect()
}

const LEVELS: usize = 50;

fn c3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut min_levels = usize::MAX;
    for (d, m, eps, c) in configs() {
        let t = params::param_sequence(d, &m, eps, c, LEVELS).unwrap();
        min_levels = min_levels.min(t.levels.len());
        for l in &t.levels {
            let scale = l.ln_c_next.abs().max(l.n.ln).max(l.m.ln).max(l.ln_c.abs());
            worst = worst.max((l.ln_c_next + l.n.ln + l.m.ln - l.ln_c).abs() / scale);
        }
    }
    let ok = worst <= 1e-12 && min_levels >= 30;
    (
        ok,
        format!("max relative defect {worst:.2e}, at least {min_levels} levels per config"),
    )
}

fn c4() -> Outcome {
    let mut fails = 0;
    let mut checked = 0;
    for (d, m, eps, c) in configs() {
        let t = params::param_sequence(d, &m, eps, c, LEVELS).unwrap();
        let ln_beta = params::quadratic_beta_ln(&t);
        for l in &t.levels {
            checked += 1;
            let tol = 1e-12 * l.ln_c.abs().max(1.0);
            if l.ln_c_next < ln_beta + 2.0 * l.ln_c - tol {
                fails += 1;
            }
        }
        let env = params::superquadratic_envelope(&t);
        let ln_bc = env.ln_beta_tilde + c.ln();
        for (k, l) in t.levels.iter().enumerate().take(50) {
            let i = (k + 1) as f64;
            checked += 1;
            if l.ln_c < i * i * ln_bc * (1.0 + 1e-12) {
                fails += 1;
            }
        }
    }
    (fails == 0, format!("{fails} failures in {checked} checks"))
}

fn c5() -> Outcome {
    let id = params::compute_r(2, &Modulus::identity(), 0.1, 0.1, &RSearch::default()).unwrap();
    let id_ok = id.r_u64 == Some(1) && id.rhs_ln == 0.0 && id.margin_before == 0.0;
    let lp = params::compute_r(
        2,
        &Modulus::logpow(0.01).unwrap(),
        0.1,
        0.1,
        &RSearch::default(),
    )
    .unwrap();
    let lp_ok = lp.margin >= 0.0 && lp.margin_before < 0.0;
    (
        id_ok && lp_ok,
        format!(
            "identity r = {}, both sides 1; logpow(0.01) r ~ 10^{:.2}, margin at r {:.3e}, at r-1 {:.3e}",
            id.r, lp.log10_r, lp.margin, lp.margin_before
        ),
    )
}

fn c6() -> Outcome {
    let id = Modulus::identity();
    let mut worst: f64 = 0.0;
    for d in [2, 3] {
        let base = params::upsilon(d, &id, 1.0, 0.1, 0.1).unwrap() / 0.1;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            for ell in [1e-1, 1e-3, 1e-6] {
                worst = worst.max(rel(
                    params::upsilon(d, &id, 1.0, eps, ell).unwrap() / eps,
                    base,
                ));
            }
        }
    }
    (worst < 1e-9, format!("max relative deviation {worst:.2e}"))
}

fn c7() -> Outcome {
    let m = Modulus::logpow(0.01).unwrap();
    let ks: Vec<f64> = [0.2, 0.1, 0.05, 0.02]
        .iter()
        .map(|&e| {
            params::kappa(2, &m, 1.0, 1, e, 0.1, 1.0, &RSearch::default())
                .unwrap()
                .kappa
        })
        .collect();
    let ok = ks.windows(2).all(|w| w[1] < w[0]) && ks[3] < ks[0] / 2.0;
    (ok, format!("kappa = {:.3?}", ks))
}

fn c8() -> Outcome {
    let nf = build_nested_families(
        2,
        &Modulus::identity(),
        0.1,
        0.1,
        3,
        Offsets::Zero,
        &[0.0, 0.0],
        &RSearch::default(),
    )
    .unwrap();
    let rep = nesting_measure_report(&nf).unwrap();
    let ratios: Vec<String> = rep
        .levels
        .iter()
        .map(|l| format!("{:.3e}", l.max_ratio_f64))
        .collect();
    (
        rep.passed(),
        format!(
            "nested = {}, overlap ratios {}",
            rep.nested,
            ratios.join(", ")
        ),
    )
}

fn c9() -> Outcome {
    // the derived schedule has far too many cubes at level 3
    let s = Schedule::custom(0.1, &[8, 8, 8], &[4, 4, 4]).unwrap();
    let nf = build_from_schedule(2, &s, 3, Offsets::Zero, &[0.0, 0.0]).unwrap();
    let delta = nf.families[2].lambda / 100.0;
    match chessboard_psi(&nf, 0.1, delta) {
        Ok((_, rep)) => {
            let ok = rep.property1
                && rep
                    .levels
                    .iter()
                    .all(|l| l.pairs == 0 || l.min_normalized_diff >= 0.1);
            let mins: Vec<String> = rep
                .levels
                .iter()
                .map(|l| format!("{:.4}", l.min_normalized_diff))
                .collect();
            (
                ok,
                format!(
                    "property (1) {}, min normalized differences {} (xi 0.1)",
                    rep.property1,
                    mins.join(", ")
                ),
            )
        }
        Err(e) => (false, e.to_string()),
    }
}

fn c10() -> Outcome {
    let cube = NetCube {
        corner: vec![0.0, 0.0],
        side: 10.0,
        m: 2,
    };
    let w = vec![(0.0, 10.0), (0.0, 10.0)];
    let one = Density::constant(1.0).unwrap();
    let net = construct_net_cube(&one, &cube).unwrap();
    let a = audit_net(&net.cloud, &w, 1001).unwrap();
    let disc = discrepancy_report(&net.cloud, &one, &cube).unwrap();
    let half = 0.5f64.sqrt();
    let ok1 = net.cloud.len() == 100
        && a.s == 1.0
        && a.slack <= 0.02
        && a.b_grid <= half + 1e-12
        && half <= a.b_grid + a.slack
        && disc.max_abs == 0.0;
    let rho = Density::constant(2.5).unwrap();
    let net = construct_net_cube(&rho, &cube).unwrap();
    let disc = discrepancy_report(&net.cloud, &rho, &cube).unwrap();
    let ok2 = disc
        .cells
        .iter()
        .all(|c| (c.discrepancy + 0.135).abs() < 1e-12)
        && disc.max_abs <= disc.bound
        && (disc.bound - 0.3162).abs() < 1e-4;
    (
        ok1 && ok2,
        format!(
            "rho=1: {} points, s = {}, b in [{:.4}, {:.4}]; rho=2.5: discrepancy {:.4}, bound {:.4}",
            100,
            a.s,
            a.b_grid,
            a.b_grid + a.slack,
            -disc.max_abs,
            disc.bound
        ),
    )
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, span: i32) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    while out.len() < n {
        let p = vec![rng.gen_range(0..span) as f64, rng.gen_range(0..span) as f64];
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

fn enumerate_bilip(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    (0..x.len())
        .permutations(x.len())
        .map(|p| {
            let mut v: f64 = 0.0;
            for (i, j) in (0..x.len()).tuple_combinations() {
                let (dx, dy) = (dist(&x[i], &x[j]), dist(&y[p[i]], &y[p[j]]));
                v = v.max(dy / dx).max(dx / dy);
            }
            v
        })
        .fold(f64::INFINITY, f64::min)
}

fn c11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatch = 0;
    for k in 0..50 {
        let n = 2 + k % 6;
        let x = random_points(&mut rng, n, 10);
        let y = random_points(&mut rng, n, 10);
        let r = min_bilip_exact(&x, &y, 100_000_000).unwrap();
        if r.method != Method::Exact || r.value != enumerate_bilip(&x, &y) {
            mismatch += 1;
        }
    }
    let mut equal = 0;
    let mut below = 0;
    for k in 0..100 {
        let x = random_points(&mut rng, 6, 12);
        let y = random_points(&mut rng, 6, 12);
        let ex = min_bilip_exact(&x, &y, 100_000_000).unwrap().value;
        let h = min_bilip_heuristic(
            &x,
            &y,
            &HeuristicOpts {
                seed: k,
                ..Default::default()
            },
        )
        .unwrap()
        .value;
        if h < ex {
            below += 1;
        }
        if h == ex {
            equal += 1;
        }
    }
    (
        mismatch == 0 && below == 0 && equal >= 90,
        format!(
            "{mismatch}/50 exact mismatches; heuristic equal on {equal}/100, below exact {below}"
        ),
    )
}

fn c12() -> Outcome {
    let window = [(0, 3), (0, 3)];
    let a = feige_cn_window(2, 2, &window, CN_BUDGET).unwrap();
    let b = feige_cn_window(2, 2, &window, CN_BUDGET).unwrap();
    let same = serde_json::to_vec(&a).unwrap() == serde_json::to_vec(&b).unwrap();
    // max over subsets of min over bijections, both by enumeration
    let pts: Vec<Vec<f64>> = (0..4)
        .flat_map(|i| (0..4).map(move |j| vec![i as f64, j as f64]))
        .collect();
    let target: Vec<Vec<f64>> = vec![
        vec![1.0, 1.0],
        vec![1.0, 2.0],
        vec![2.0, 1.0],
        vec![2.0, 2.0],
    ];
    let mut subsets = 0;
    let mut brute = f64::NEG_INFINITY;
    for s in pts.iter().combinations(4) {
        subsets += 1;
        let best = (0..4)
            .permutations(4)
            .map(|p| {
                (0..4)
                    .tuple_combinations()
                    .map(|(i, j)| dist(&target[p[i]], &target[p[j]]) / dist(s[i], s[j]))
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        brute = brute.max(best);
    }
    (
        same && subsets == 1820 && a.subsets == 1820 && a.value == brute,
        format!(
            "C_2 on the window = {:.6} (brute force {:.6}), reruns identical: {same}",
            a.value, brute
        ),
    )
}

fn c13() -> Outcome {
    let id = Modulus::identity();
    let slab = Slab::new(2, 1.0, 4);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for h in [
        SampledHomeo::identity(sq()),
        SampledHomeo::affine(sq(), vec![vec![1.3, -0.4], vec![0.2, 0.7]], vec![0.5, 2.0]).unwrap(),
    ] {
        let r = dichotomy(&h, &slab, 2, 0.1, 0.1, &id, 33, 1 << 20).unwrap();
        let s1 = check_statement1(&h, &slab, 0.1, &id, 33).unwrap();
        worst = s1.residual.iter().fold(worst, |a, &b| a.max(b));
        ok &= r.branch == 1 && r.statement1.omega == vec![1, 2, 3];
    }
    ok &= worst <= 1e-12;
    let st = SampledHomeo::stretch_cell(sq(), 0.375, 0.5, 3.0).unwrap();
    let r = dichotomy(&st, &slab, 2, 0.1, 0.1, &id, 33, 1 << 20).unwrap();
    let margin = r
        .statement2
        .as_ref()
        .and_then(|s| s.margin)
        .unwrap_or(f64::NAN);
    ok &= r.branch == 2 && margin > 0.0;
    let sched = Schedule::custom(1.0, &[4, 4, 4], &[2, 2, 2]).unwrap();
    let t = run_algorithm_b1(&st, &id, 0.1, 0.1, &sched, None, &B1Opts::default()).unwrap();
    ok &= t.p == 2;
    (
        ok,
        format!(
            "linear maps: branch 1, residual {worst:.1e}; stretch: branch {}, margin {margin:.4}; recentering stops at p = {}",
            r.branch, t.p
        ),
    )
}

fn c14() -> Outcome {
    let id = Modulus::identity();
    let slab = Slab::new(2, 1.0, 4);
    let mut ok = true;
    for h in [
        SampledHomeo::affine(sq(), vec![vec![1.1, 0.3], vec![0.0, 0.9]], vec![0.2, 0.0]).unwrap(),
        SampledHomeo::translation(sq(), vec![0.3, -0.2]).unwrap(),
    ] {
        for i in 1..4 {
            let r = volume_diff_check(&h, &slab, i, 0.1, &id, None, &VolumeMode::Exact, 9).unwrap();
            ok &= r.lhs == 0.0 && r.lhs <= r.rhs && r.status == VolumeStatus::Pass;
        }
    }
    let bump = SampledHomeo::new(
        2,
        sq(),
        MapKind::RadialBump {
            center: vec![0.3, 0.1],
            radius: 0.25,
            amp: 0.05,
        },
    )
    .unwrap();
    // 500k samples for each of the two volumes
    let mode = VolumeMode::MonteCarlo {
        samples: 500_000,
        seed: 14,
    };
    let mut worst = f64::NEG_INFINITY;
    for i in 1..4 {
        let r = volume_diff_check(&bump, &slab, i, 0.5, &id, None, &mode, 9).unwrap();
        ok &= r.status == VolumeStatus::Pass && r.lhs - r.error <= r.rhs;
        worst = worst.max(r.lhs - r.error - r.rhs);
    }
    (
        ok,
        format!("affine/translation lhs = 0 exactly; bump max (lhs - CI) - rhs = {worst:.3e}"),
    )
}

fn c15() -> Outcome {
    let maps = [
        SampledHomeo::identity(sq()),
        SampledHomeo::affine(sq(), vec![vec![1.2, 0.3], vec![-0.1, 0.9]], vec![0.1, 0.0]).unwrap(),
        SampledHomeo::new(
            2,
            sq(),
            MapKind::Shear {
                amp: 0.05,
                freq: 3.0,
            },
        )
        .unwrap(),
        SampledHomeo::new(
            2,
            sq(),
            MapKind::RadialBump {
                center: vec![0.5, 0.5],
                radius: 0.6,
                amp: 0.3,
            },
        )
        .unwrap(),
        SampledHomeo::translation(sq(), vec![0.03, -0.02]).unwrap(),
        SampledHomeo::stretch_cell(sq(), 0.375, 0.5, 3.0).unwrap(),
    ];
    let mut violations = 0;
    for res in [64, 128] {
        for f in &maps {
            for g in &maps {
                violations += symdiff_bound_check(f, g, res).unwrap().violations;
            }
        }
    }
    // outer collar 4ε + πε², inner collar 4ε - 4ε²
    let rows = boundary_neighborhood_measure(&maps[0], &[0.1, 0.05, 0.02], 1024).unwrap();
    let mut within = true;
    let mut gaps = Vec::new();
    for r in &rows {
        let exact = 8.0 * r.eps + (PI - 4.0) * r.eps * r.eps;
        within &= (r.measure - exact).abs() <= r.raster_error;
        gaps.push(format!(
            "{:.2e}",
            (r.measure - (8.0 * r.eps + (PI - 8.0) * r.eps * r.eps)).abs()
        ));
    }
    (
        violations == 0 && within,
        format!(
            "{violations} raster violations; collar matches 8e+(pi-4)e^2 within raster error: {within}; \
             distance to the 8e+(pi-8)e^2 form: {}",
            gaps.join(", ")
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 15] = [
        ("moduli membership", c1),
        ("parameter plug-ins", c2),
        ("recursion identity", c3),
        ("quadratic bound", c4),
        ("r certification", c5),
        ("upsilon Lipschitz cancellation", c6),
        ("kappa decay", c7),
        ("family nesting", c8),
        ("chessboard properties", c9),
        ("net construction", c10),
        ("distortion oracle equivalence", c11),
        ("Feige desk scale", c12),
        ("dichotomy sanity", c13),
        ("volume bound", c14),
        ("symmetric difference and boundary measure", c15),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = f();
        let secs = t.elapsed().as_secs_f64();
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{secs:.2} s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1
        );
    }
    println!(
        "{} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
