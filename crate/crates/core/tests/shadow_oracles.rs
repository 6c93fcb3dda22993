//! Independent oracles for the shadow-price problem: a scalar bisection on the original
//! power-form terminal equations and a fixed-step RK4 integration of the initial value
//! problem for `φ`.

use shadowband::shadow_fbp::{merton_residual, shadow_g, solve_shadow_system, ShadowSolution};
use shadowband::MarketParams;

fn params(mu: f64, gamma: f64, eps: f64) -> MarketParams {
    MarketParams::new(mu, 0.16, 0.0, gamma, eps).unwrap()
}

/// `c` from the smooth-pasting equation, as a function of `s`.
fn c_of_s(p: &MarketParams, s: f64) -> f64 {
    let pi = p.mu / (p.gamma * p.sigma * p.sigma);
    let k = 1.0 - p.epsilon;
    let a = k.powf(1.0 / (2.0 * p.gamma)) * s.powf(pi);
    (a - k * s) / (1.0 - a)
}

/// Value-matching residual after eliminating `c`.
fn value_matching(p: &MarketParams, s: f64) -> f64 {
    let pi = p.mu / (p.gamma * p.sigma * p.sigma);
    let k = 1.0 - p.epsilon;
    let c = c_of_s(p, s);
    let alpha = 1.0 - 2.0 * p.gamma;
    let beta = 1.0 - 2.0 * p.gamma * pi;
    ((c + k * s) / (c + 1.0)).powf(alpha) - 1.0 - alpha / beta * (s.powf(beta) - 1.0) / (c + 1.0)
}

fn oracle_cs(p: &MarketParams, levered: bool) -> (f64, f64) {
    // Scan log-spaced distances from s = 1, staying clear of the trivial root s = 1 where the
    // residual is pure cancellation noise.
    let dir = if levered { -1.0 } else { 1.0 };
    let start = 0.1 * p.epsilon.cbrt();
    let d: Vec<f64> = (0..=600)
        .map(|i| start * (0.9 / start).powf(i as f64 / 600.0))
        .collect();
    let f = |x: f64| value_matching(p, 1.0 + dir * x);
    let i = (0..d.len() - 1)
        .find(|&i| {
            let (a, b) = (f(d[i]), f(d[i + 1]));
            a.is_finite() && b.is_finite() && a * b <= 0.0
        })
        .expect("value matching changes sign");
    let (mut lo, mut hi) = (d[i], d[i + 1]);
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if flo * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let s = 1.0 + dir * 0.5 * (lo + hi);
    (c_of_s(p, s), s)
}

#[test]
fn cs_matches_scalar_bisection() {
    let cases = [
        (0.08, 5.0, 1e-4, false),
        (0.08, 5.0, 1e-3, false),
        (0.08, 5.0, 1e-2, false),
        (0.08, 2.0, 1e-3, true),
        (0.08, 2.0, 1e-2, true),
        (0.08, 0.4, 1e-3, true),
        (0.02304, 1.5, 1e-3, false),
    ];
    for (mu, gamma, eps, levered) in cases {
        let p = params(mu, gamma, eps);
        let sol = solve_shadow_system(&p).unwrap();
        let (c, s) = oracle_cs(&p, levered);
        assert!(
            (s - sol.s()).abs() < 1e-9 * (s - 1.0).abs(),
            "gamma {gamma} eps {eps}: s {s} vs {}",
            sol.s()
        );
        assert!(
            (c - sol.c()).abs() < 1e-7 * c.abs(),
            "gamma {gamma} eps {eps}: c {c} vs {}",
            sol.c()
        );
    }
}

fn phi_rhs(p: &MarketParams, c: f64, z: f64, y: [f64; 2]) -> [f64; 2] {
    let pi = p.mu / (p.gamma * p.sigma * p.sigma);
    [
        y[1],
        2.0 * p.gamma * y[1] * y[1] / (c + y[0]) - 2.0 * p.gamma * pi * y[1] / z,
    ]
}

fn rk4(p: &MarketParams, c: f64, z0: f64, y0: [f64; 2], z1: f64, steps: usize) -> [f64; 2] {
    let h = (z1 - z0) / steps as f64;
    let mut y = y0;
    let mut z = z0;
    for _ in 0..steps {
        let k1 = phi_rhs(p, c, z, y);
        let k2 = phi_rhs(
            p,
            c,
            z + h / 2.0,
            [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]],
        );
        let k3 = phi_rhs(
            p,
            c,
            z + h / 2.0,
            [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]],
        );
        let k4 = phi_rhs(p, c, z + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for j in 0..2 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        z += h;
    }
    y
}

fn chebyshev_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n)
        .map(|k| {
            let t = (std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        })
        .collect();
    x.sort_by(f64::total_cmp);
    x
}

fn check_phi_against_ivp(sol: &ShadowSolution) {
    let p = sol.params();
    let (c, s) = (sol.c(), sol.s());
    let eps = p.epsilon;
    let mut nodes = chebyshev_nodes(1.0f64.min(s), 1.0f64.max(s), 21);
    if s < 1.0 {
        nodes.reverse();
    }
    let mut z = 1.0;
    let mut y = [1.0, 1.0];
    for &node in &nodes {
        y = rk4(p, c, z, y, node, 2000);
        z = node;
        let lib = sol.phi_derivatives(node).unwrap();
        assert!(
            (lib.value - y[0]).abs() < 1e-11 * y[0].abs(),
            "phi({node}) {} vs {}",
            lib.value,
            y[0]
        );
        assert!(
            (lib.d1 - y[1]).abs() < 1e-9,
            "phi'({node}) {} vs {}",
            lib.d1,
            y[1]
        );
    }
    let end = rk4(p, c, z, y, s, 2000);
    assert!(
        (end[0] - (1.0 - eps) * s).abs() < 1e-11,
        "terminal value {}",
        end[0]
    );
    assert!(
        (end[1] - (1.0 - eps)).abs() < 1e-9,
        "terminal slope {}",
        end[1]
    );
}

#[test]
fn phi_matches_ivp_at_chebyshev_nodes() {
    for (mu, gamma, eps) in [
        (0.08, 5.0, 1e-3),
        (0.08, 5.0, 1e-2),
        (0.08, 2.0, 1e-3),
        (0.08, 0.4, 1e-3),
    ] {
        check_phi_against_ivp(&solve_shadow_system(&params(mu, gamma, eps)).unwrap());
    }
}

#[test]
fn logarithmic_cases_match_ivp() {
    // gamma = 1/2, and 2 gamma pi* = 1 (pi* = 0.1 at gamma = 5).
    for (mu, gamma) in [(0.004, 0.5), (0.0128, 5.0)] {
        let p = params(mu, gamma, 1e-3);
        check_phi_against_ivp(&solve_shadow_system(&p).unwrap());
    }
}

#[test]
fn shadow_price_stays_inside_the_spread() {
    for (gamma, eps) in [(5.0, 1e-4), (5.0, 1e-2), (2.0, 1e-3), (0.4, 1e-3)] {
        let p = params(0.08, gamma, eps);
        let sol = solve_shadow_system(&p).unwrap();
        let (lo, hi) = sol.pi_bounds();
        for i in 0..=200 {
            let pi = lo + (hi - lo) * i as f64 / 200.0;
            let g = shadow_g(pi, &sol).unwrap().g_value;
            assert!(g <= 1.0 + 1e-12 && g >= 1.0 - eps - 1e-12, "g({pi}) = {g}");
        }
    }
}

#[test]
fn smooth_pasting_and_merton_condition() {
    for (gamma, eps) in [(5.0, 1e-3), (2.0, 1e-3), (0.4, 1e-3)] {
        let p = params(0.08, gamma, eps);
        let sol = solve_shadow_system(&p).unwrap();
        let (lo, hi) = sol.pi_bounds();
        let a = shadow_g(lo, &sol).unwrap();
        let b = shadow_g(hi, &sol).unwrap();
        assert!((a.g_value - 1.0).abs() < 1e-8);
        assert!((b.g_value - (1.0 - eps)).abs() < 1e-8);
        assert!(a.g_prime.abs() < 1e-8 && b.g_prime.abs() < 1e-8);
        for i in 0..=20 {
            let pi = lo + (hi - lo) * i as f64 / 20.0;
            assert!(merton_residual(pi, &sol).unwrap().abs() < 1e-8);
        }
    }
}

#[test]
fn no_branch_jumps_under_epsilon_refinement() {
    for gamma in [5.0, 2.0] {
        let mut prev: Option<f64> = None;
        for k in 0..14 {
            let eps = 1e-2 / 2f64.powi(k);
            let sol = solve_shadow_system(&params(0.08, gamma, eps)).unwrap();
            let u = (sol.s() - 1.0).abs();
            if let Some(v) = prev {
                // s - 1 scales like eps^{1/3}, so halving eps divides it by about 2^{1/3}.
                let ratio = v / u;
                assert!(
                    ratio > 1.1 && ratio < 1.45,
                    "gamma {gamma} eps {eps}: ratio {ratio}"
                );
            }
            prev = Some(u);
        }
    }
}
