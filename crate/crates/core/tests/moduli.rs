use proptest::prelude::*;
use sepnet::moduli::{
    bi_omega, check_class_m, homogeneous_constant, omega_continuity, FiniteMap, Modulus,
};

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn eval_examples() {
    let lp = Modulus::logpow(1.0).unwrap();
    let v = lp.eval(0.01).unwrap();
    // 0.01·ln 100
    assert!((v - 0.01 * 100f64.ln()).abs() < 1e-15);
    assert!((v - 0.04605170186).abs() < 1e-11);
    assert_eq!(Modulus::identity().eval(0.05).unwrap(), 0.05);
    assert!((Modulus::holder(0.5).unwrap().eval(0.04).unwrap() - 0.2).abs() < 1e-15);
}

#[test]
fn eval_rejects_out_of_domain() {
    let lp = Modulus::logpow(1.0).unwrap();
    assert!(lp.eval(0.0).is_err());
    assert!(lp.eval(0.2).is_err());
    assert!(Modulus::identity().eval(1.5).is_err());
}

#[test]
fn inverse_examples() {
    let lp = Modulus::logpow(1.0).unwrap();
    assert!((lp.inverse(0.04605170186).unwrap() - 0.01).abs() < 1e-12);
    let id = Modulus::identity();
    assert!((id.inverse(0.3 * id.a_omega()).unwrap() - 0.3).abs() < 1e-15);
    assert!((Modulus::holder(0.5).unwrap().inverse(0.2).unwrap() - 0.04).abs() < 1e-14);
}

#[test]
fn default_domains() {
    assert_eq!(Modulus::identity().a_omega(), 1.0);
    assert_eq!(Modulus::logpow(1.0).unwrap().a_omega(), (-2f64).exp());
    assert_eq!(Modulus::logpow(3.0).unwrap().a_omega(), (-3f64).exp());
}

#[test]
fn parse_formats() {
    let m: Modulus = "logpow:0.5".parse().unwrap();
    assert_eq!(m, Modulus::logpow(0.5).unwrap());
    let s: Modulus = "scaled:2:holder:0.5".parse().unwrap();
    assert_eq!(s.eval(0.04).unwrap(), 0.4);
    let json = serde_json::to_string(&s).unwrap();
    assert_eq!(json.parse::<Modulus>().unwrap(), s);
    assert!("holder:2".parse::<Modulus>().is_err());
    assert!("scaled:0.5:identity".parse::<Modulus>().is_err());
}

#[test]
fn class_m_members() {
    for m in [
        Modulus::identity(),
        Modulus::holder(0.5).unwrap(),
        Modulus::logpow(1.0).unwrap(),
        Modulus::logpow(0.25).unwrap(),
    ] {
        let r = check_class_m(&m, 64, 12.0, 1e-12);
        assert!(r.passed(), "{}: {:?}", m.name(), r.violations.first());
    }
}

#[test]
fn logpow_domain_is_capped() {
    assert!(Modulus::logpow(1.0).unwrap().with_a_omega(0.9).is_err());
}

#[test]
fn l_omega_examples() {
    let lp = Modulus::logpow(1.0).unwrap();
    let pts = vec![vec![0.0], vec![0.01], vec![0.02]];
    let f = FiniteMap::new(pts.clone(), pts.clone()).unwrap();
    let v = omega_continuity(&f, &lp).unwrap().value;
    // all three pairs by hand
    let oracle = [(0.0, 0.01), (0.0, 0.02), (0.01, 0.02)]
        .iter()
        .map(|&(a, b): &(f64, f64)| (b - a) / lp.eval(b - a).unwrap())
        .fold(0.0, f64::max);
    assert_eq!(v, oracle);
    assert!((v - 1.0 / 50f64.ln()).abs() < 1e-12);

    let id = Modulus::identity();
    assert!((omega_continuity(&f, &id).unwrap().value - 1.0).abs() < 1e-12);
    let dbl = FiniteMap::new(vec![vec![0.0], vec![0.01]], vec![vec![0.0], vec![0.02]]).unwrap();
    assert!((omega_continuity(&dbl, &id).unwrap().value - 2.0).abs() < 1e-12);
    assert!((bi_omega(&dbl, &id).unwrap().value - 2.0).abs() < 1e-12);
}

#[test]
fn void_pairs_are_skipped() {
    let lp = Modulus::logpow(1.0).unwrap();
    let f = FiniteMap::new(vec![vec![0.0], vec![0.5]], vec![vec![0.0], vec![7.0]]).unwrap();
    let r = omega_continuity(&f, &lp).unwrap();
    assert_eq!(r.value, 0.0);
    assert_eq!(r.pairs_void, 1);
}

#[test]
fn bi_omega_rejects_collisions() {
    let f = FiniteMap::new(vec![vec![0.0], vec![0.1]], vec![vec![0.3], vec![0.3]]).unwrap();
    assert!(bi_omega(&f, &Modulus::identity()).is_err());
}

#[test]
fn homogeneous_constant_examples() {
    let src = vec![vec![0.1, 0.0], vec![0.0, 0.2], vec![-0.3, 0.1]];
    let dbl: Vec<Vec<f64>> = src
        .iter()
        .map(|p| p.iter().map(|v| 2.0 * v).collect())
        .collect();
    let id = Modulus::identity();
    let f = FiniteMap::new(src.clone(), dbl).unwrap();
    assert!((homogeneous_constant(&f, &id, None).unwrap() - 2.0).abs() < 1e-12);
    let g = FiniteMap::new(src.clone(), src).unwrap();
    let lp = Modulus::logpow(0.5).unwrap();
    assert!(homogeneous_constant(&g, &lp, None).unwrap() <= 1.0 + 1e-12);
}

/// Every realized radius, every pair inside the ball.
fn homogeneous_oracle(map: &FiniteMap, m: &Modulus) -> f64 {
    let o = vec![0.0; map.source[0].len()];
    let mut best: f64 = 0.0;
    for c in &map.source {
        let r = d2(c, &o);
        if r == 0.0 {
            continue;
        }
        for i in 0..map.len() {
            for j in 0..map.len() {
                let (x, y) = (&map.source[i], &map.source[j]);
                if i == j || d2(x, &o) > r || d2(y, &o) > r {
                    continue;
                }
                let t = d2(x, y) / r;
                if t == 0.0 || t >= m.a_omega() {
                    continue;
                }
                let v = d2(&map.target[i], &map.target[j]) / (r * m.eval(t).unwrap());
                best = best.max(v);
            }
        }
    }
    best
}

#[test]
fn homogeneous_constant_matches_exhaustive_loop() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let a = [[1.3, -0.4], [0.2, 0.8]];
    for m in [
        Modulus::identity(),
        Modulus::holder(0.7).unwrap(),
        Modulus::logpow(0.5).unwrap(),
    ] {
        for _ in 0..20 {
            let src: Vec<Vec<f64>> = (0..6)
                .map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
                .collect();
            let dst: Vec<Vec<f64>> = src
                .iter()
                .map(|p| {
                    vec![
                        a[0][0] * p[0] + a[0][1] * p[1],
                        a[1][0] * p[0] + a[1][1] * p[1],
                    ]
                })
                .collect();
            let f = FiniteMap::new(src, dst).unwrap();
            let got = homogeneous_constant(&f, &m, None).unwrap();
            let want = homogeneous_oracle(&f, &m);
            assert!(
                (got - want).abs() <= 1e-12 * want.max(1.0),
                "{}: {got} vs {want}",
                m.name()
            );
        }
    }
}

fn modulus_strategy() -> impl Strategy<Value = Modulus> {
    prop_oneof![
        Just(Modulus::identity()),
        (0.05f64..1.0).prop_map(|a| Modulus::holder(a).unwrap()),
        (0.05f64..3.0).prop_map(|a| Modulus::logpow(a).unwrap()),
        (1.0f64..5.0, 0.05f64..1.0).prop_map(|(l, a)| Modulus::scaled(
            l,
            Modulus::holder(a).unwrap()
        )
        .unwrap()),
    ]
}

proptest! {
    #[test]
    fn strictly_increasing_and_dominating(m in modulus_strategy(), u in 0.001f64..0.999, v in 0.001f64..0.999) {
        let (u, v) = (u.min(v), u.max(v));
        prop_assume!(v - u > 1e-9);
        let a = m.a_omega();
        let (s, t) = (u * a, v * a);
        let (ws, wt) = (m.eval(s).unwrap(), m.eval(t).unwrap());
        prop_assert!(ws < wt);
        prop_assert!(ws >= s * (1.0 - 1e-15));
        // ω(t)/t nonincreasing
        prop_assert!(wt / t <= ws / s * (1.0 + 1e-12));
    }

    #[test]
    fn inverse_round_trip(m in modulus_strategy(), u in 1e-6f64..0.999) {
        let t = u * m.a_omega();
        let y = m.eval(t).unwrap();
        let back = m.inverse(y).unwrap();
        prop_assert!((back - t).abs() <= 1e-12 * t, "{} {} {}", m.name(), t, back);
    }

    #[test]
    fn scaling_divides_l_omega(l in 1.0f64..10.0, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let inner = Modulus::holder(0.5).unwrap();
        let src: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5)]).collect();
        let dst: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let f = FiniteMap::new(src, dst).unwrap();
        let base = omega_continuity(&f, &inner).unwrap().value;
        let scaled = omega_continuity(&f, &Modulus::scaled(l, inner).unwrap()).unwrap().value;
        prop_assert!((scaled - base / l).abs() <= 1e-12 * base.max(1e-300));
    }

    #[test]
    fn identity_map_is_omega_contraction(m in modulus_strategy(), seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = m.a_omega();
        let pts: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.gen_range(0.0..a), rng.gen_range(0.0..a)]).collect();
        let f = FiniteMap::new(pts.clone(), pts).unwrap();
        prop_assert!(omega_continuity(&f, &m).unwrap().value <= 1.0 + 1e-12);
    }

    #[test]
    fn bi_omega_is_max_of_directions(seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = Modulus::logpow(1.0).unwrap();
        let src: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen_range(0.0..0.1)]).collect();
        let dst: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen_range(0.0..0.1)]).collect();
        let f = FiniteMap::new(src.clone(), dst.clone()).unwrap();
        let fwd = omega_continuity(&f, &m).unwrap().value;
        let back = omega_continuity(&FiniteMap::new(dst, src).unwrap(), &m).unwrap().value;
        prop_assert_eq!(bi_omega(&f, &m).unwrap().value, fwd.max(back));
    }
}
