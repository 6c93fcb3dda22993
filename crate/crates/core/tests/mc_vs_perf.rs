//! Monte Carlo estimates against the closed-form stationary statistics.

use shadowband::mc::{simulate_policy, Reflection, SimConfig};
use shadowband::optimal_fbp::solve_optimal_fbp;
use shadowband::shadow_fbp::solve_shadow_system;
use shadowband::{perf, Band, MarketParams};

fn params(gamma: f64, eps: f64) -> MarketParams {
    MarketParams::new(0.08, 0.16, 0.0, gamma, eps).unwrap()
}

fn assert_agrees(band: &Band, p: &MarketParams, cfg: &SimConfig) {
    let sim = simulate_policy(band, p, cfg).unwrap();
    let exact = perf::policy_stats(band, p).unwrap();
    let density = perf::stationary_density(band, p).unwrap();
    for (name, est, truth) in [
        ("mean", sim.mean_hat, exact.mean),
        ("variance", sim.var_hat, exact.variance),
        ("atc", sim.atc_hat, exact.atc),
    ] {
        let z = est.z_score(truth);
        assert!(z.abs() < 4.0, "{name}: {} vs {truth} (z = {z})", est.value);
    }
    let (_, z) = sim
        .occupation_histogram
        .sup_distance(|a, b| density.mass(a, b));
    assert!(z < 4.5, "histogram z = {z}");
    assert!(sim.liquidation_margin > 0.0);
}

#[test]
fn unlevered_optimal_band() {
    let p = params(5.0, 1e-3);
    let (band, _) = solve_optimal_fbp(&p).unwrap();
    assert_agrees(&band, &p, &SimConfig::new(2000.0, 1e-4, 21).with_paths(4));
}

#[test]
fn levered_optimal_and_shadow_bands() {
    let p = params(0.4, 1e-3);
    let (band, _) = solve_optimal_fbp(&p).unwrap();
    assert_agrees(&band, &p, &SimConfig::new(2000.0, 1e-4, 22).with_paths(4));
    let shadow = solve_shadow_system(&p).unwrap().band().unwrap();
    assert_agrees(&shadow, &p, &SimConfig::new(2000.0, 1e-4, 23).with_paths(4));
}

#[test]
fn local_time_rate_is_stable_under_step_halving() {
    let p = params(5.0, 1e-2);
    let (band, _) = solve_optimal_fbp(&p).unwrap();
    let coarse =
        simulate_policy(&band, &p, &SimConfig::new(4000.0, 2e-4, 31).with_paths(4)).unwrap();
    let fine = simulate_policy(&band, &p, &SimConfig::new(4000.0, 1e-4, 31).with_paths(4)).unwrap();
    for (a, b) in [
        (coarse.sell_rate, fine.sell_rate),
        (coarse.buy_rate, fine.buy_rate),
    ] {
        assert!(
            (a.value - b.value).abs() < 0.05 * b.value,
            "{} vs {}",
            a.value,
            b.value
        );
    }
}

#[test]
fn projection_remains_available_and_roughly_consistent() {
    let p = params(5.0, 1e-2);
    let (band, _) = solve_optimal_fbp(&p).unwrap();
    let cfg = SimConfig::new(1000.0, 1e-4, 41)
        .with_paths(4)
        .with_reflection(Reflection::Projection);
    let sim = simulate_policy(&band, &p, &cfg).unwrap();
    let exact = perf::policy_stats(&band, &p).unwrap();
    assert!((sim.mean_hat.value - exact.mean).abs() < 0.01 * exact.mean);
    assert!((sim.atc_hat.value - exact.atc).abs() < 0.1 * exact.atc);
}

#[test]
fn degenerate_band_earns_the_merton_mean() {
    let p = params(5.0, 0.0);
    let pi = p.merton_fraction().unwrap();
    let band = Band::point(pi / (1.0 - pi), 0.0).unwrap();
    let sim = simulate_policy(&band, &p, &SimConfig::new(100.0, 1e-3, 5)).unwrap();
    assert!((sim.mean_hat.value - (p.r + p.mu * pi)).abs() < 1e-12);
    assert!(sim.var_hat.z_score(p.sigma * p.sigma * pi * pi).abs() < 4.0);
    assert_eq!(sim.atc_hat.value, 0.0);
}
