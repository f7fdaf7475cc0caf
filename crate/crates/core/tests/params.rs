use proptest::prelude::*;
use sepnet::moduli::Modulus;
use sepnet::params::{self, Count, RSearch};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

/// `(ω⁻¹(1/6) ω⁻¹(ε) / (2√d))^{2d}` capped at `ε²`, identity modulus.
fn theta_identity(d: usize, eps: f64) -> f64 {
    let base = (1.0 / 6.0) * eps / (2.0 * (d as f64).sqrt());
    base.powi(2 * d as i32).min(eps * eps)
}

#[test]
fn phi_base_case() {
    let id = Modulus::identity();
    assert!(rel(params::phi(1, &id, 0.1).unwrap(), 1e-3 / 120.0) < 1e-15);
    assert!((params::phi(1, &id, 0.1).unwrap() - 8.3333e-6).abs() < 1e-9);
    assert!(params::phi(1, &id, 1.0).is_err());
    assert!(params::phi(1, &id, 0.0).is_err());
}

#[test]
fn theta_closed_form() {
    let id = Modulus::identity();
    for eps in [0.1, 0.5, 0.9] {
        let t = params::theta(2, &id, eps).unwrap();
        assert!(rel(t.ln.exp(), theta_identity(2, eps)) < 1e-12, "ε = {eps}");
        assert!(!t.clamped);
    }
    // (5.8926e-3)^4
    assert!(rel(params::theta(2, &id, 0.1).unwrap().ln.exp(), 1.2056e-9) < 1e-4);
    assert!(params::theta(1, &id, 0.1).is_err());
}

#[test]
fn theta_clamps_small_range_moduli() {
    let lp = Modulus::logpow(0.25).unwrap();
    // ω(a_ω) = 2^¼ e^-2 < 1/6
    assert!(lp.eval(lp.a_omega() * (1.0 - 1e-12)).unwrap() < 1.0 / 6.0);
    let t = params::theta(2, &lp, 0.01).unwrap();
    assert!(t.clamped);
    assert!(t.ln <= 2.0 * 0.01f64.ln());
}

#[test]
fn phi_composes_with_theta() {
    let id = Modulus::identity();
    let th = theta_identity(2, 0.1);
    let want = 0.5 * th.powi(3) / 120.0;
    assert!(rel(params::phi(2, &id, 0.1).unwrap(), want) < 1e-12);
    let th3 = theta_identity(3, 0.1);
    let want3_ln = (0.5f64).ln() + (0.5f64).ln() + 3.0 * theta_identity(2, th3).ln() - 120f64.ln();
    assert!(rel(params::phi_ln(3, &id, 0.1).unwrap(), want3_ln) < 1e-12);
}

#[test]
fn n0_examples() {
    let id = Modulus::identity();
    assert_eq!(params::n0(1, &id, 0.1, 0.5).unwrap().exact, Some(60));
    assert_eq!(params::n0(1, &id, 0.99, 0.5).unwrap().exact, Some(7));
    // d = 2: max of ⌈6/θ⌉ from d = 1, ⌈8/φ⌉ and ⌈6/ε⌉
    let th = theta_identity(2, 0.1);
    let phi2 = 0.5 * th.powi(3) / 120.0;
    let want_ln = [(6.0 / th).ln(), (8.0 / phi2).ln(), 60f64.ln()]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let n = params::n0(2, &id, 0.1, 0.1).unwrap();
    assert_eq!(n.exact, None);
    assert!(rel(n.ln, want_ln) < 1e-12);
}

#[test]
fn big_m_examples() {
    let id = Modulus::identity();
    let n = Count::exact(60);
    assert_eq!(params::big_m(&n, 1, &id, 0.1, 0.5).unwrap().exact, Some(40));
    assert_eq!(params::big_m(&n, 1, &id, 0.4, 0.5).unwrap().exact, Some(10));
    // M₁ is taken at θ, and the bound N·M₁ is already a multiple of it
    let m1 = (4.0 / theta_identity(2, 0.1)).ceil() as u64;
    assert_eq!(
        params::big_m(&n, 2, &id, 0.1, 0.5).unwrap().exact,
        Some(60 * m1)
    );
}

#[test]
fn first_levels_by_hand() {
    let t = params::param_sequence(1, &Modulus::identity(), 0.1, 0.5, 3).unwrap();
    let l = &t.levels[0];
    assert_eq!((l.n.exact, l.m.exact), (Some(60), Some(40)));
    assert!(rel(l.ln_c_next.exp(), 0.5 / 2400.0) < 1e-12);
    assert!(rel(l.ln_c_next.exp(), 2.0833e-4) < 1e-4);
}

#[test]
fn r_is_one_for_the_identity() {
    let c = params::compute_r(2, &Modulus::identity(), 0.1, 0.1, &RSearch::default()).unwrap();
    assert_eq!(c.r_u64, Some(1));
    // the check with exponent 0 already balances: 1 >= 1
    assert_eq!(c.margin_before, 0.0);
    assert_eq!(c.rhs_ln, 0.0);
    assert!(rel(c.lhs_ln, c.ln_phi.exp().ln_1p()) < 1e-12);
}

#[test]
fn r_matches_direct_evaluation_on_the_trace() {
    let alpha = 0.01;
    let m = Modulus::logpow(alpha).unwrap();
    let (d, eps, c) = (1, 0.9, 0.1);
    let cert = params::compute_r(d, &m, eps, c, &RSearch::default()).unwrap();
    let r = cert.r_u64.expect("small r") as usize;
    assert!(cert.explicit && r >= 2 && r < 60, "r = {r}");
    let trace = params::param_sequence(d, &m, eps, c, r + 1).unwrap();
    let phi = eps.powi(3) / 120.0;
    let inv_c = m.inverse(c).unwrap();
    // ln ω(t)/t = α ln ln(1/t)
    let side = |k: usize| {
        let lhs = k as f64 * phi.ln_1p() + inv_c.ln() - c.ln();
        let rhs = alpha * (-trace.ln_c(k + 1)).ln();
        lhs - rhs
    };
    assert!(side(r) >= -1e-12, "{}", side(r));
    assert!(side(r - 1) < 0.0, "{}", side(r - 1));
    assert!((side(r) - cert.margin).abs() < 1e-9);
}

#[test]
fn upsilon_cancels_for_lipschitz_moduli() {
    let id = Modulus::identity();
    for d in [2, 3] {
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            for ell in [1e-1, 1e-3, 1e-6] {
                let u = params::upsilon(d, &id, 1.0, eps, ell).unwrap();
                assert!(rel(u / eps, 1.0) < 1e-12);
            }
        }
    }
}

#[test]
fn upsilon_nested_composition() {
    let m = Modulus::logpow(1.0).unwrap();
    let w = |t: f64| t * (1.0 / t).ln();
    let (eps, ell) = (0.1, 0.01);
    let u2 = w(eps * w(ell));
    let want = w(u2).powi(2) / (ell * u2);
    assert!(rel(params::upsilon(2, &m, 1.0, eps, ell).unwrap(), want) < 1e-12);
    assert!(rel(params::upsilon(2, &m, 3.5, eps, ell).unwrap(), 3.5 * want) < 1e-12);
    // the innermost argument leaves (0, a_ω)
    assert!(params::upsilon(2, &m, 1.0, 0.9, 0.12).is_err());
}

#[test]
fn kappa_of_identity_is_pi_eps() {
    let k = params::kappa(
        2,
        &Modulus::identity(),
        1.0,
        1,
        0.1,
        0.1,
        2.0,
        &RSearch::default(),
    )
    .unwrap();
    assert!(rel(k.kappa, 0.2) < 1e-12);
}

fn modulus_strategy() -> impl Strategy<Value = Modulus> {
    prop_oneof![
        Just(Modulus::identity()),
        (0.3f64..1.0).prop_map(|a| Modulus::holder(a).unwrap()),
        (0.01f64..2.0).prop_map(|a| Modulus::logpow(a).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn recursion_identity_and_monotonicity(
        d in 1usize..4,
        m in modulus_strategy(),
        eps in 0.01f64..0.95,
        cf in 0.05f64..0.95,
    ) {
        let c = cf * m.a_omega();
        let t = params::param_sequence(d, &m, eps, c, 30).unwrap();
        let mut prev = f64::INFINITY;
        for l in &t.levels {
            let ln_n = l.n.exact.map_or(l.n.ln, |v| (v as f64).ln());
            let ln_m = l.m.exact.map_or(l.m.ln, |v| (v as f64).ln());
            // relative to the largest term of the sum
            let scale = l.ln_c_next.abs().max(ln_n).max(ln_m).max(l.ln_c.abs());
            prop_assert!((l.ln_c_next + ln_n + ln_m - l.ln_c).abs() <= 1e-12 * scale);
            prop_assert!(l.n.value() >= 2.0 && l.m.value() >= 1.0);
            prop_assert!(l.ln_c < prev);
            prop_assert!(l.ln_ell >= l.ln_c_next);
            prev = l.ln_c;
        }
    }

    #[test]
    fn theta_below_eps_squared(d in 2usize..5, m in modulus_strategy(), eps in 0.001f64..0.999) {
        let t = params::theta(d, &m, eps).unwrap();
        prop_assert!(t.ln <= 2.0 * eps.ln() + 1e-15);
    }

    #[test]
    fn phi_increases_with_eps(d in 1usize..4, m in modulus_strategy(), a in 0.01f64..0.98, gap in 0.001f64..0.01) {
        // once ω⁻¹(ε) is clamped θ, and so φ, stops depending on ε
        prop_assume!(d == 1 || !params::theta(d, &m, a + gap).unwrap().clamped);
        let lo = params::phi_ln(d, &m, a).unwrap();
        let hi = params::phi_ln(d, &m, a + gap).unwrap();
        prop_assert!(hi > lo);
    }
}
