//! Properties of the stick laws: moment identities, sampling and the `W0` law.

use proptest::prelude::*;
use sieve_lab::par::stream;
use sieve_lab::stats::{chi_square_gof, ks_one_sample, EmpiricalPmf, Pmf};
use sieve_lab::verify::reference_laws;
use sieve_lab::StickLaw;

fn beta_law() -> impl Strategy<Value = StickLaw> {
    (0.2f64..6.0, 0.2f64..6.0).prop_map(|(a, b)| StickLaw::beta(a, b).unwrap())
}

fn mixture_law() -> impl Strategy<Value = StickLaw> {
    (0.05f64..0.95, 0.3f64..4.0, 0.3f64..4.0, 0.3f64..4.0, 0.3f64..4.0)
        .prop_map(|(w, a1, b1, a2, b2)| format!("mixture:{w}*beta:{a1},{b1}+{}*beta:{a2},{b2}", 1.0 - w).parse().unwrap())
}

fn any_law() -> impl Strategy<Value = StickLaw> {
    prop_oneof![
        beta_law(),
        mixture_law(),
        (0.2f64..5.0).prop_map(|t| StickLaw::beta_theta_one(t).unwrap()),
        (0.3f64..=1.0).prop_map(|a| StickLaw::heavy_meander(a).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn moment_recursion(law in any_law(), a in 0u32..=30, b in 1u32..=30) {
        let lhs = law.joint_moment(a, b).unwrap();
        let rhs = law.joint_moment(a, b - 1).unwrap() - law.joint_moment(a + 1, b - 1).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10, "{} ({},{}): {} vs {}", law, a, b, lhs, rhs);
    }

    #[test]
    fn binomial_completeness(law in any_law(), n in 0u32..=30) {
        let total: f64 = (0..=n)
            .map(|m| sieve_lab::exact::binomial(n, m) * law.joint_moment(n - m, m).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn moments_decrease_in_each_argument(law in any_law(), a in 0u32..20, b in 0u32..20) {
        let m = law.joint_moment(a, b).unwrap();
        prop_assert!(m > 0.0 && m <= 1.0);
        prop_assert!(law.joint_moment(a + 1, b).unwrap() <= m);
        prop_assert!(law.joint_moment(a, b + 1).unwrap() <= m);
    }

    #[test]
    fn closed_form_matches_quadrature(law in beta_law(), a in 0u32..10, b in 0u32..10) {
        let closed = law.joint_moment(a, b).unwrap();
        let quad = law.joint_moment_quadrature(a, b).unwrap();
        prop_assert!((closed - quad).abs() < 1e-8, "{}: {} vs {}", law, closed, quad);
    }

    #[test]
    fn digamma_routes_match_quadrature(law in beta_law()) {
        let mu = law.mu().unwrap();
        let nu = law.nu().unwrap().to_f64();
        prop_assert!((mu - law.mu_quadrature().unwrap()).abs() <= 1e-8 * mu.max(1.0));
        prop_assert!((nu - law.nu_quadrature().unwrap()).abs() <= 1e-8 * nu.max(1.0));
    }

    #[test]
    fn cdf_is_monotone(law in any_law(), x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(law.cdf_w(lo) <= law.cdf_w(hi));
        prop_assert_eq!(law.cdf_w(0.0), 0.0);
        prop_assert_eq!(law.cdf_w(1.0), 1.0);
    }

    #[test]
    fn display_round_trips(law in any_law()) {
        let back: StickLaw = law.to_string().parse().unwrap();
        prop_assert_eq!(back.kind(), law.kind());
    }
}

#[test]
fn grid_recursion_for_reference_laws() {
    for law in reference_laws() {
        for a in 0..=30 {
            for b in 1..=30 {
                let lhs = law.joint_moment(a, b).unwrap();
                let rhs = law.joint_moment(a, b - 1).unwrap() - law.joint_moment(a + 1, b - 1).unwrap();
                assert!((lhs - rhs).abs() < 1e-10, "{law} ({a},{b})");
            }
        }
    }
}

#[test]
fn sample_moments_match_joint_moments() {
    let draws = 1_000_000u64;
    for (k, law) in reference_laws().iter().enumerate() {
        for (a, b) in [(1, 0), (0, 1), (1, 1), (2, 2)] {
            let (mut s, mut s2) = (0.0, 0.0);
            for i in 0..draws {
                let d = law.sample_draw(&mut stream(20_000 + k as u64, i));
                let v = d.w.powi(a) * d.complement.powi(b);
                s += v;
                s2 += v * v;
            }
            let mean = s / draws as f64;
            let se = ((s2 / draws as f64 - mean * mean) / draws as f64).sqrt();
            let want = law.joint_moment(a as u32, b as u32).unwrap();
            assert!((mean - want).abs() <= 4.0 * se, "{law} ({a},{b}): {mean} vs {want}");
        }
    }
}

#[test]
fn documented_draw_examples() {
    let theta = StickLaw::beta_theta_one(2.0).unwrap();
    let draws: Vec<f64> = (0..1_000_000u64).map(|i| theta.sample_w(&mut stream(21_000, i))).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
    assert!((mean - 2.0 / 3.0).abs() <= 3.0 * (var / draws.len() as f64).sqrt());

    let heavy = StickLaw::heavy_meander(1.0).unwrap();
    let floor = 1.0 - (-1f64).exp();
    for i in 0..100_000u64 {
        let w = heavy.sample_w(&mut stream(22_000, i));
        assert!(w >= floor && w < 1.0);
    }
    let u = StickLaw::uniform();
    for i in 0..100_000u64 {
        let w = u.sample_w(&mut stream(23_000, i));
        assert!(w > 0.0 && w < 1.0);
    }
}

/// Inverse of `cdf_w0` by bisection.
fn w0_quantile(law: &StickLaw, q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if law.cdf_w0(mid).unwrap() < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn w0_fits_twenty_equiprobable_bins() {
    for (k, law) in reference_laws().iter().enumerate() {
        let edges: Vec<f64> = (1..20).map(|j| w0_quantile(law, f64::from(j) / 20.0)).collect();
        let mut observed = EmpiricalPmf::new();
        for i in 0..100_000u64 {
            let x = law.sample_w0(&mut stream(24_000 + k as u64, i)).unwrap();
            assert!(x > 0.0 && x <= 1.0);
            observed.record(edges.partition_point(|&e| e < x) as u32);
        }
        let expected: Pmf<u32> = (0..20).map(|j| (j, 0.05)).collect();
        let report = chi_square_gof(&observed, &expected, |_| true, 5.0).unwrap();
        assert!(report.p_value > 1e-3, "{law}: p = {}", report.p_value);
    }
}

#[test]
fn uniform_w0_is_uniform() {
    let law = StickLaw::uniform();
    let draws: Vec<f64> = (0..1_000_000u64).map(|i| law.sample_w0(&mut stream(25_000, i)).unwrap()).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((mean - 0.5).abs() <= 3.0 * (1.0 / 12.0 / draws.len() as f64).sqrt(), "{mean}");
}

#[test]
fn theta_w0_has_the_law_of_w() {
    for (k, theta) in [0.5, 2.0, 3.5].into_iter().enumerate() {
        let law = StickLaw::beta_theta_one(theta).unwrap();
        let draws: Vec<f64> = (0..100_000u64).map(|i| law.sample_w0(&mut stream(26_000 + k as u64, i)).unwrap()).collect();
        let ks = ks_one_sample(&draws, |x| law.cdf_w(x)).unwrap();
        assert!(ks.p_value > 1e-3, "theta {theta}: p = {}", ks.p_value);
    }
}

#[test]
fn documented_values() {
    let u = StickLaw::uniform();
    assert_eq!(u.joint_moment(0, 0).unwrap(), 1.0);
    assert!((u.joint_moment(1, 1).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    assert!((u.mu().unwrap() - 1.0).abs() < 1e-15);
    assert!((u.nu().unwrap().to_f64() - 1.0).abs() < 1e-15);
    assert!((u.cdf_w(0.3) - 0.3).abs() < 1e-15);
    let t = StickLaw::beta_theta_one(2.0).unwrap();
    assert!((t.joint_moment(1, 0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((t.mu().unwrap() - 0.5).abs() < 1e-15);
    assert!((t.cdf_w(0.5) - 0.25).abs() < 1e-15);
    assert_eq!(StickLaw::beta(1.0, 1.0).unwrap().mu().unwrap(), u.mu().unwrap());
    assert!((StickLaw::beta(1.0, 2.0).unwrap().nu().unwrap().to_f64() - 0.5).abs() < 1e-14);
    assert!(StickLaw::heavy_meander(1.0).unwrap().nu().unwrap().is_infinite());
    for law in reference_laws() {
        assert_eq!(law.cdf_w(1.0), 1.0);
    }
}
