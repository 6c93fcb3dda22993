use proptest::prelude::*;

use shadowband::asymptotics::{
    k_of_theta, optimal_boundary_series, optimal_stats_asym, shadow_boundary_series,
    shadow_stats_asym, theta_boundary_series, MeanBracket, VarianceBracket,
};
use shadowband::{band_from_pi, perf, Band, CaseTag, MarketParams};

fn market() -> impl Strategy<Value = MarketParams> {
    (0.01f64..0.2, 0.1f64..0.4, 0.0f64..0.05, 0.3f64..10.0).prop_filter_map(
        "merton fraction away from 0 and 1",
        |(mu, sigma, r, gamma)| {
            let p = MarketParams::new(mu, sigma, r, gamma, 0.0).ok()?;
            let pi = p.merton_fraction().ok()?;
            ((pi - 1.0).abs() > 0.05 && (gamma - 1.0).abs() > 0.05).then_some(p)
        },
    )
}

/// Composite Simpson on `n` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    acc * h / 3.0
}

fn random_band() -> impl Strategy<Value = (Band, f64)> {
    let eps = 1e-4f64..0.05;
    prop_oneof![
        (0.02f64..0.9, 0.01f64..0.08, eps.clone()).prop_filter_map("unlevered", |(lo, w, e)| Some(
            (band_from_pi(lo, (lo + w).min(0.99), e).ok()?, e)
        )),
        (1.05f64..4.0, 0.05f64..0.6, eps).prop_filter_map("levered", |(lo, w, e)| Some((
            band_from_pi(lo, lo + w, e).ok()?,
            e
        ))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pi_round_trip_and_case_tag(lo in 0.01f64..6.0, w in 0.001f64..0.5, eps in 0.0f64..0.1) {
        let hi = lo + w;
        match band_from_pi(lo, hi, eps) {
            Ok(b) => {
                prop_assert!((b.pi_minus() - lo).abs() < 1e-12 * lo.max(1.0));
                prop_assert!((b.pi_plus() - hi).abs() < 1e-12 * hi.max(1.0));
                let expected = if hi < 1.0 { CaseTag::Unlevered } else { CaseTag::Levered };
                prop_assert_eq!(b.case(), expected);
                let again = Band::new(b.zeta_minus(), b.zeta_plus(), eps).unwrap();
                prop_assert_eq!(again.case(), b.case());
            }
            // With eps < 0.1 every levered band here stays below 1/eps.
            Err(_) => prop_assert!(lo <= 1.0 && hi >= 1.0),
        }
    }

    #[test]
    fn series_reduce_to_frictionless_values(p in market()) {
        let pi = p.merton_fraction().unwrap();
        let s2 = p.sigma * p.sigma;
        for series in [optimal_boundary_series(&p, 2).unwrap(), shadow_boundary_series(&p, 2).unwrap()] {
            let (lo, hi) = series.eval(0.0);
            prop_assert!((lo - pi).abs() < 1e-12 * pi && (hi - pi).abs() < 1e-12 * pi);
        }
        let stats = [
            optimal_stats_asym(&p, MeanBracket::Corrected).unwrap(),
            shadow_stats_asym(&p, VarianceBracket::Amended).unwrap(),
        ];
        for s in stats {
            prop_assert!((s.mean.eval(0.0) - (p.r + p.mu * pi)).abs() < 1e-14);
            prop_assert!((s.variance.eval(0.0) - s2 * pi * pi).abs() < 1e-14 * s2 * pi * pi);
            prop_assert_eq!(s.atc.eval(0.0), 0.0);
            let frictionless = p.r + p.mu * p.mu / (2.0 * p.gamma * s2);
            prop_assert!((s.esr.eval(0.0) - frictionless).abs() < 1e-13);
        }
    }

    #[test]
    fn theta_one_is_the_shadow_series(p in market(), eps in 1e-6f64..1e-2) {
        let a = theta_boundary_series(&p, 1.0).unwrap().eval(eps);
        let b = shadow_boundary_series(&p, 2).unwrap().eval(eps);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn k_is_convex_with_vertex_at_minus_one(p in market(), h in 0.0f64..3.0) {
        let pi = p.merton_fraction().unwrap();
        let k0 = k_of_theta(&p, -1.0).unwrap();
        let left = k_of_theta(&p, -1.0 - h).unwrap();
        let right = k_of_theta(&p, -1.0 + h).unwrap();
        let rise = 5.0 * pi * pi * (p.gamma - 1.0).powi(2) * 2.0 * h * h;
        let scale = k0.abs().max(rise).max(1.0);
        prop_assert!((left - right).abs() < 1e-12 * scale);
        prop_assert!((right - k0 - rise).abs() < 1e-10 * scale);
    }

    #[test]
    fn density_integrates_to_one((band, eps) in random_band(), p in market()) {
        let p = p.with_epsilon(eps).unwrap();
        let d = perf::stationary_density(&band, &p).unwrap();
        let total = simpson(|z| d.pdf(z), band.zeta_minus(), band.zeta_plus(), 2000);
        prop_assert!((total - 1.0).abs() < 1e-9, "mass {}", total);
        prop_assert!((d.mass(f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn esr_identity_holds_on_any_band((band, eps) in random_band(), p in market()) {
        let p = p.with_epsilon(eps).unwrap();
        let s = perf::policy_stats(&band, &p).unwrap();
        let direct = s.mean - 0.5 * p.gamma * s.variance - s.atc;
        prop_assert!((s.esr - direct).abs() <= 1e-12 * direct.abs().max(1e-3));
    }

    #[test]
    fn stats_are_continuous_in_the_boundaries((band, eps) in random_band(), p in market()) {
        let p = p.with_epsilon(eps).unwrap();
        let w = band.pi_plus() - band.pi_minus();
        let base = perf::policy_stats(&band, &p).unwrap();
        let nudged = band_from_pi(band.pi_minus() + 1e-7 * w, band.pi_plus() - 1e-7 * w, eps).unwrap();
        let near = perf::policy_stats(&nudged, &p).unwrap();
        for (a, b) in [(base.mean, near.mean), (base.variance, near.variance), (base.atc, near.atc)] {
            prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-8), "{} vs {}", a, b);
        }
    }
}
