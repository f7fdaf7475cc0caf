use proptest::prelude::*;
use sepnet::density::{Chessboard, Density};
use sepnet::netgen::{
    audit_net, construct_net_cube, construct_net_window, discrepancy_report, from_csv, from_netf,
    rescale, separation, to_csv, to_netf, NetCube, NetError, PointCloud,
};

fn cube(corner: &[f64], side: f64, m: usize) -> NetCube {
    NetCube {
        corner: corner.to_vec(),
        side,
        m,
    }
}

fn brute_separation(pts: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d: f64 = pts[i]
                .iter()
                .zip(&pts[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            best = best.min(d.sqrt());
        }
    }
    best
}

/// A one-level board on the unit cube: `8 × 8` cells, the listed ones perturbed.
fn board(cells: &[(i64, i64)], xi: f64, delta: f64) -> Chessboard {
    let tuples = cells.iter().map(|&(a, b)| vec![a, b]).collect();
    Chessboard::from_tuples(2, xi, delta, 0.125, vec![0.0, 0.0], vec![(1, tuples)]).unwrap()
}

#[test]
fn constant_density_four() {
    let rho = Density::constant(4.0).unwrap();
    let net = construct_net_cube(&rho, &cube(&[0.0, 0.0], 10.0, 2)).unwrap();
    // ⌊√100⌋² per cell
    assert_eq!(net.cloud.len(), 400);
    assert!(net.cells.iter().all(|c| c.n == 10));
    assert_eq!(separation(&net.cloud.points).unwrap().0, 0.5);
    let rep = discrepancy_report(&net.cloud, &rho, &cube(&[0.0, 0.0], 10.0, 2)).unwrap();
    assert_eq!(rep.max_abs, 0.0);
}

#[test]
fn discrepancy_hand_example() {
    let rho = Density::constant(2.5).unwrap();
    let c = cube(&[0.0, 0.0], 10.0, 2);
    let net = construct_net_cube(&rho, &c).unwrap();
    let rep = discrepancy_report(&net.cloud, &rho, &c).unwrap();
    for cell in &rep.cells {
        assert_eq!(cell.count, 49);
        assert!((cell.discrepancy + 0.135).abs() < 1e-12);
    }
    assert!((rep.bound - 4.0 * 2.5f64.sqrt() / 20.0).abs() < 1e-12);
    assert!((rep.bound - 0.3162).abs() < 1e-4);
    assert!(rep.upper_holds && rep.lower_holds);
}

#[test]
fn bound_scales_inversely_with_l_m() {
    let rho = Density::constant(3.0).unwrap();
    for d in [1usize, 2, 3] {
        let mut seen = Vec::new();
        for (l, m) in [(6.0, 1), (12.0, 2), (24.0, 3), (40.0, 4)] {
            let c = cube(&vec![0.0; d], l, m);
            let net = construct_net_cube(&rho, &c).unwrap();
            let rep = discrepancy_report(&net.cloud, &rho, &c).unwrap();
            seen.push(rep.bound * l * (m as f64).powi(d as i32 - 1));
        }
        let want = 2f64.powi(d as i32) * 3f64.powf((d - 1) as f64 / d as f64);
        assert!(
            seen.iter().all(|v| (v - want).abs() < 1e-12 * want),
            "{seen:?}"
        );
    }
}

#[test]
fn window_without_cubes_is_the_lattice() {
    let rho = Density::constant(1.0).unwrap();
    let c = construct_net_window(&rho, &[], &[(-0.5, 3.2), (0.0, 2.0)]).unwrap();
    assert_eq!(c.len(), 4 * 3);
    assert!(c.points.iter().all(|p| p.iter().all(|x| x.fract() == 0.0)));
}

#[test]
fn window_with_one_cube() {
    let rho = Density::constant(1.0).unwrap();
    let s = cube(&[0.0, 0.0], 4.0, 2);
    let w = [(-5.0, 5.0), (-5.0, 5.0)];
    let c = construct_net_window(&rho, &[s.clone()], &w).unwrap();
    // lattice minus the closed cube's 25 points, plus 16 centres
    assert_eq!(c.len(), 121 - 25 + 16);
    let inner = construct_net_cube(&rho, &s).unwrap().cloud.points;
    for p in &inner {
        assert!(c.points.contains(p));
    }
    let a = audit_net(&c, &w, 201).unwrap();
    assert_eq!(a.s, 1.0);
}

#[test]
fn packing_and_overlap_errors() {
    let rho = Density::constant(1.0).unwrap();
    let w = [(-30.0, 30.0), (-30.0, 30.0)];
    // R₁ = 8 > l₂ = 5
    let e = construct_net_window(
        &rho,
        &[cube(&[0.0, 0.0], 4.0, 1), cube(&[6.0, 0.0], 5.0, 1)],
        &w,
    );
    assert!(matches!(e, Err(NetError::Config(ref s)) if s.contains("packing")));
    let e = construct_net_window(
        &rho,
        &[cube(&[0.0, 0.0], 4.0, 1), cube(&[2.0, 2.0], 9.0, 1)],
        &w,
    );
    assert!(matches!(e, Err(NetError::Config(ref s)) if s.contains("overlap")));
    let e = construct_net_window(&rho, &[cube(&[20.0, 20.0], 4.0, 1)], &w);
    assert!(matches!(e, Err(NetError::Config(_))));
    let ok = construct_net_window(
        &rho,
        &[cube(&[0.0, 0.0], 4.0, 1), cube(&[-9.0, -9.0], 8.0, 1)],
        &w,
    );
    assert!(ok.is_ok());
}

#[test]
fn lattice_audit() {
    let pts: Vec<Vec<f64>> = (0..=10)
        .flat_map(|i| (0..=10).map(move |j| vec![i as f64, j as f64]))
        .collect();
    let w = vec![(0.0, 10.0), (0.0, 10.0)];
    let c = PointCloud::new(pts, w.clone()).unwrap();
    let a = audit_net(&c, &w, 201).unwrap();
    assert_eq!(a.s, 1.0);
    let half = 0.5f64.sqrt();
    assert!((a.b_grid - half).abs() < 1e-12);
    assert!(a.b >= half && a.b - half <= a.slack + 1e-12);
    // the constant-one net is the shifted lattice
    let rho = Density::constant(1.0).unwrap();
    let net = construct_net_cube(&rho, &cube(&[0.0, 0.0], 10.0, 2)).unwrap();
    let a = audit_net(&net.cloud, &w, 201).unwrap();
    assert_eq!(a.s, 1.0);
    assert!((a.b_grid - half).abs() < 1e-12);
}

#[test]
fn audit_needs_two_points() {
    let c = PointCloud::new(vec![vec![0.0]], vec![(0.0, 1.0)]).unwrap();
    assert!(audit_net(&c, &[(0.0, 1.0)], 10).is_err());
    let c = PointCloud::new(vec![vec![0.0], vec![0.7]], vec![(0.0, 1.0)]).unwrap();
    assert!((audit_net(&c, &[(0.0, 1.0)], 10).unwrap().s - 0.7).abs() < 1e-15);
}

#[test]
fn malformed_netf_is_rejected() {
    let c = PointCloud::new(vec![vec![0.5, 0.5]], vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
    let mut b = to_netf(&c);
    assert!(from_netf(&b[..b.len() - 1]).is_err());
    b[0] = b'X';
    assert!(from_netf(&b).is_err());
}

fn cells_strategy() -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((0i64..8, 0i64..8), 0..20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn floor_never_overshoots(
        cells in cells_strategy(),
        xi in 0.05f64..0.9,
        smooth in prop::bool::ANY,
        l in 3.0f64..40.0,
        m in 1usize..5,
    ) {
        let rho = Density::with_board(1.0, board(&cells, xi, if smooth { 0.2 } else { 0.0 })).unwrap();
        let c = cube(&[1.0, -2.0], l, m);
        let net = construct_net_cube(&rho, &c).unwrap();
        // count = Σ n^d, with n checked against the integral directly
        let mut total = 0;
        for cell in &net.cells {
            let n = cell.n;
            prop_assert!((n * n) as f64 <= cell.integral && ((n + 1) * (n + 1)) as f64 > cell.integral);
            total += n * n;
        }
        prop_assert_eq!(net.cloud.len() as u64, total);
        let rep = discrepancy_report(&net.cloud, &rho, &c).unwrap();
        prop_assert!(rep.upper_holds);
        for (cd, cell) in rep.cells.iter().zip(&net.cells) {
            prop_assert_eq!(cd.count, cell.n * cell.n);
        }
    }

    #[test]
    fn lower_bound_for_large_l(cells in cells_strategy(), xi in 0.05f64..0.9, l in 40.0f64..200.0, m in 1usize..4) {
        let rho = Density::with_board(1.0, board(&cells, xi, 0.0)).unwrap();
        let c = cube(&[0.0, 0.0], l, m);
        let net = construct_net_cube(&rho, &c).unwrap();
        let rep = discrepancy_report(&net.cloud, &rho, &c).unwrap();
        prop_assert!(rep.lower_holds, "{} > {}", rep.max_abs, rep.bound);
    }

    #[test]
    fn separation_matches_cell_spacing(cells in cells_strategy(), xi in 0.05f64..0.9, l in 3.0f64..20.0, m in 1usize..4) {
        let rho = Density::with_board(1.0, board(&cells, xi, 0.0)).unwrap();
        let c = cube(&[0.0, 0.0], l, m);
        let net = construct_net_cube(&rho, &c).unwrap();
        prop_assume!(net.cloud.len() >= 2);
        let s = separation(&net.cloud.points).unwrap().0;
        let side = l / m as f64;
        let floor = net.cells.iter().filter(|c| c.n > 0).map(|c| side / c.n as f64).fold(f64::INFINITY, f64::min);
        prop_assert!(s >= floor * (1.0 - 1e-12));
        prop_assert!((s - brute_separation(&net.cloud.points)).abs() < 1e-12);
        // the rescaled copy is (s/l)-separated
        let unit = rescale(&net.cloud, &c).unwrap();
        prop_assert!((separation(&unit.points).unwrap().0 - s / l).abs() < 1e-12);
    }

    #[test]
    fn constant_density_separation_is_exact(base in 0.3f64..6.0, l in 3.0f64..20.0, m in 1usize..4) {
        let rho = Density::constant(base).unwrap();
        let c = cube(&[0.0, 0.0], l, m);
        let net = construct_net_cube(&rho, &c).unwrap();
        prop_assume!(net.cells[0].n > 0 && net.cloud.len() >= 2);
        let s = separation(&net.cloud.points).unwrap().0;
        prop_assert!((s - l / (m as f64 * net.cells[0].n as f64)).abs() < 1e-12 * l);
    }

    #[test]
    fn audit_matches_brute_force(
        pts in prop::collection::btree_set((0u32..200, 0u32..200), 2..40),
        res in 3usize..30,
    ) {
        let pts: Vec<Vec<f64>> = pts.into_iter().map(|(a, b)| vec![a as f64 / 20.0, b as f64 / 20.0]).collect();
        let w = vec![(0.0, 10.0), (0.0, 10.0)];
        let c = PointCloud::new(pts.clone(), w.clone()).unwrap();
        let a = audit_net(&c, &w, res).unwrap();
        prop_assert_eq!(a.s, brute_separation(&pts));
        let step = 10.0 / (res - 1) as f64;
        let mut b: f64 = 0.0;
        for i in 0..res {
            for j in 0..res {
                let q = [i as f64 * step, j as f64 * step];
                let near = pts.iter().map(|p| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);
                b = b.max(near);
            }
        }
        prop_assert!((a.b_grid - b).abs() < 1e-12);
        prop_assert!((a.slack - step * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn serialization_round_trips(pts in prop::collection::btree_set(prop::collection::vec(-1000i32..1000, 3), 1..30)) {
        let pts: Vec<Vec<f64>> = pts.into_iter().map(|p| p.iter().map(|&v| v as f64 / 7.0).collect()).collect();
        let w = vec![(-150.0, 150.0); 3];
        let c = PointCloud::new(pts, w).unwrap();
        prop_assert_eq!(from_netf(&to_netf(&c)).unwrap(), c.clone());
        prop_assert_eq!(from_csv(&to_csv(&c, &["seed 3".into()])).unwrap(), c);
    }
}
