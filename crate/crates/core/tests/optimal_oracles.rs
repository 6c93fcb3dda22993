//! Independent oracles for the optimal free boundary problem: a closed-form
//! variation-of-parameters solution of the value equation and a fixed-step RK4 shooting
//! method with nested bisection for the boundaries.

use shadowband::optimal_fbp::{integrate_w, solve_optimal_fbp};
use shadowband::{band_from_pi, perf, MarketParams};

fn params(gamma: f64, eps: f64) -> MarketParams {
    MarketParams::new(0.08, 0.16, 0.0, gamma, eps).unwrap()
}

fn rhs(p: &MarketParams, t: f64) -> f64 {
    let s2 = p.sigma * p.sigma;
    let f = (p.mu - p.gamma * s2 * t / (1.0 + t)) / ((1.0 + t) * (1.0 + t));
    2.0 * f / (s2 * t * t)
}

/// `W(ζ) = ∫ K(ζ, t) f(t) dt` with homogeneous solutions `|t|^{-1}` and `|t|^{-a}`.
fn w_by_variation_of_parameters(p: &MarketParams, zm: f64, zeta: f64) -> f64 {
    let a = 2.0 * p.mu / (p.sigma * p.sigma);
    let y1 = |t: f64| t.abs().recip();
    let y2 = |t: f64| t.abs().powf(-a);
    let wronskian = |t: f64| (1.0 - a) * t.abs().powf(-1.0 - a) / t;
    let kernel = |t: f64| (y1(t) * y2(zeta) - y1(zeta) * y2(t)) / wronskian(t) * rhs(p, t);
    // Composite Simpson.
    let n = 20_000;
    let h = (zeta - zm) / n as f64;
    let mut acc = kernel(zm) + kernel(zeta);
    for i in 1..n {
        let t = zm + h * i as f64;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * kernel(t);
    }
    acc * h / 3.0
}

fn r6(z: f64, eps: f64) -> f64 {
    eps / ((1.0 + z) * (1.0 + (1.0 - eps) * z))
}

fn r7(z: f64, eps: f64) -> f64 {
    let k = 1.0 - eps;
    eps * (eps - 2.0 * k * z - 2.0) / ((1.0 + z).powi(2) * (1.0 + k * z).powi(2))
}

fn rk4_step(p: &MarketParams, z: f64, y: [f64; 2], h: f64) -> [f64; 2] {
    let s2 = p.sigma * p.sigma;
    let f = |z: f64, y: [f64; 2]| {
        let forcing = (p.mu - p.gamma * s2 * z / (1.0 + z)) / ((1.0 + z) * (1.0 + z));
        [
            y[1],
            2.0 * (forcing - (s2 + p.mu) * z * y[1] - p.mu * y[0]) / (s2 * z * z),
        ]
    };
    let k1 = f(z, y);
    let k2 = f(
        z + h / 2.0,
        [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]],
    );
    let k3 = f(
        z + h / 2.0,
        [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]],
    );
    let k4 = f(z + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    assert!(fa * f(b) <= 0.0, "no sign change on [{a}, {b}]");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fa * fm <= 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// First local maximum `ζ+` of `W - r6` after `zm`, and the value of `W - r6` there. At the
/// solution `W` touches the terminal curve from below, so this level changes sign in `ζ-`.
fn shoot(p: &MarketParams, zm: f64, span: f64) -> Option<(f64, f64)> {
    let eps = p.epsilon;
    let n = 4000;
    let h = span / n as f64;
    let mut z = zm;
    let mut y = [0.0, 0.0];
    let g = |z: f64, y: [f64; 2]| y[1] - r7(z, eps);
    let mut gz = g(z, y);
    for _ in 0..n {
        let y1 = rk4_step(p, z, y, h);
        let g1 = g(z + h, y1);
        if gz > 0.0 && g1 <= 0.0 {
            let (z0, y0) = (z, y);
            let zp = bisect(|t| g(t, rk4_step(p, z0, y0, t - z0)), z0, z0 + h);
            let yp = rk4_step(p, z0, y0, zp - z0);
            return Some((zp, yp[0] - r6(zp, eps)));
        }
        z += h;
        y = y1;
        gz = g1;
    }
    None
}

fn oracle_band(p: &MarketParams, guess: (f64, f64)) -> (f64, f64) {
    let width = guess.1 - guess.0;
    let span = 3.0 * width;
    let level = |zm: f64| shoot(p, zm, span).map(|s| s.1).unwrap_or(f64::NAN);
    // Scan for the sign change of the level mismatch around the guess.
    let grid: Vec<f64> = (0..=40)
        .map(|i| guess.0 - 0.4 * width + 0.02 * width * i as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&z| level(z)).collect();
    let i = (0..grid.len() - 1)
        .find(|&i| vals[i].is_finite() && vals[i + 1].is_finite() && vals[i] * vals[i + 1] <= 0.0)
        .expect("level mismatch changes sign");
    let zm = bisect(level, grid[i], grid[i + 1]);
    (zm, shoot(p, zm, span).unwrap().0)
}

#[test]
fn value_function_matches_variation_of_parameters() {
    for (gamma, eps) in [(5.0, 1e-3), (2.0, 1e-2), (0.4, 1e-3)] {
        let p = params(gamma, eps);
        let (band, _) = solve_optimal_fbp(&p).unwrap();
        let (zm, zp) = (band.zeta_minus(), band.zeta_plus());
        let w = integrate_w(zm, zp, &p).unwrap();
        for frac in [0.1, 0.35, 0.5, 0.8, 1.0] {
            let z = zm + frac * (zp - zm);
            let exact = w_by_variation_of_parameters(&p, zm, z);
            let (num, _) = w.eval(z).unwrap();
            assert!(
                (num - exact).abs() <= 1e-9 * exact.abs().max(eps * eps),
                "gamma {gamma} eps {eps} at {z}: {num} vs {exact}"
            );
        }
    }
}

#[test]
fn boundaries_match_rk4_shooting() {
    for (gamma, eps) in [(5.0, 1e-3), (5.0, 1e-2), (2.0, 1e-3), (0.4, 1e-3)] {
        let p = params(gamma, eps);
        let (band, _) = solve_optimal_fbp(&p).unwrap();
        let (zm, zp) = oracle_band(&p, (band.zeta_minus(), band.zeta_plus()));
        let width = band.zeta_plus() - band.zeta_minus();
        assert!(
            (zm - band.zeta_minus()).abs() < 1e-6 * width,
            "gamma {gamma} eps {eps}: {zm} vs {}",
            band.zeta_minus()
        );
        assert!(
            (zp - band.zeta_plus()).abs() < 1e-6 * width,
            "gamma {gamma} eps {eps}: {zp} vs {}",
            band.zeta_plus()
        );
    }
}

#[test]
fn value_function_is_nonnegative() {
    for (gamma, eps) in [(5.0, 1e-4), (5.0, 1e-2), (2.0, 3e-3), (0.4, 1e-3)] {
        let p = params(gamma, eps);
        let (band, w) = solve_optimal_fbp(&p).unwrap();
        for i in 0..=100 {
            let z = band.zeta_minus() + (band.zeta_plus() - band.zeta_minus()) * i as f64 / 100.0;
            assert!(w.eval(z).unwrap().0 >= -1e-15, "W < 0 at {z}");
        }
    }
}

#[test]
fn solved_band_beats_shadow_theta_and_perturbed_bands() {
    for (gamma, eps) in [(5.0, 1e-3), (5.0, 1e-2), (0.4, 1e-3)] {
        let p = params(gamma, eps);
        let (band, _) = solve_optimal_fbp(&p).unwrap();
        let shadow = shadowband::shadow_fbp::solve_shadow_system(&p)
            .unwrap()
            .band()
            .unwrap();
        let mut rivals = vec![shadow];
        for theta in [-1.0, 0.0, 1.0] {
            rivals.push(shadowband::compare::theta_band(&shadow, &p, theta).unwrap());
        }
        let (lo, hi) = (band.pi_minus(), band.pi_plus());
        let w = hi - lo;
        for (dl, dh) in [
            (0.05, 0.0),
            (-0.05, 0.0),
            (0.0, 0.05),
            (0.0, -0.05),
            (0.05, 0.05),
            (-0.05, -0.05),
        ] {
            rivals.push(band_from_pi(lo + dl * w, hi + dh * w, eps).unwrap());
        }
        for b in rivals {
            assert!(
                perf::esr_gap(&band, &b, &p).unwrap() >= 0.0,
                "gamma {gamma} eps {eps}: {b:?}"
            );
        }
    }
}

#[test]
fn solver_output_is_a_local_maximum_of_esr() {
    let p = params(5.0, 1e-3);
    let (band, _) = solve_optimal_fbp(&p).unwrap();
    let step = 1e-2 * (band.pi_plus() - band.pi_minus());
    for i in -2i32..=2 {
        for j in -2i32..=2 {
            if i == 0 && j == 0 {
                continue;
            }
            let b = band_from_pi(
                band.pi_minus() + i as f64 * step,
                band.pi_plus() + j as f64 * step,
                p.epsilon,
            )
            .unwrap();
            assert!(perf::esr_gap(&band, &b, &p).unwrap() > 0.0);
        }
    }
}

#[test]
fn regime_entry_is_monotone_and_continuous() {
    let base = params(0.4, 1e-3);
    let grid: Vec<f64> = (0..=24)
        .map(|i| 1e-5 * 10f64.powf(i as f64 / 8.0))
        .collect();
    let results: Vec<_> = grid
        .iter()
        .map(|&e| solve_optimal_fbp(&base.with_epsilon(e).unwrap()).map(|r| r.0))
        .collect();
    let first_fail = results
        .iter()
        .position(|r| r.is_err())
        .expect("regime boundary inside the grid");
    assert!(first_fail >= 16, "fails already at {}", grid[first_fail]);
    assert!(results[first_fail..].iter().all(|r| r.is_err()));
    for w in results[..first_fail].windows(2) {
        let (a, b) = (w[0].as_ref().unwrap(), w[1].as_ref().unwrap());
        let scale = b.pi_plus() - b.pi_minus();
        assert!((a.pi_minus() - b.pi_minus()).abs() < scale);
        assert!((a.pi_plus() - b.pi_plus()).abs() < scale);
    }
}
