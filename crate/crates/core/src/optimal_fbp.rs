//! Exact solution of the optimal-policy free boundary problem.
//!
//! `W` solves the linear equation
//! `½σ²ζ²W'' + (σ² + μ)ζW' + μW = (μ - γσ²ζ/(1 + ζ))/(1 + ζ)²`
//! from `W(ζ-) = W'(ζ-) = 0`, and the boundaries are fixed by matching `W` and `W'` at `ζ+`
//! to the marginal cost of selling. The outer Newton iteration differentiates the inner
//! solution with respect to `ζ-` through the variational equation, which is integrated
//! alongside `W`.

use serde::{Deserialize, Serialize};

use crate::asymptotics::optimal_zeta_asym;
use crate::error::{Error, Result};
use crate::model::{Band, MarketParams};
use crate::numerics::ode::{dopri5, DenseSolution, OdeOptions};
use crate::numerics::roots::{damped_newton2, NewtonOptions};

/// Integration tolerances used by the boundary solver.
pub const SOLVER_RTOL: f64 = 1e-13;

/// Right side `F(ζ)` of the value equation.
#[inline]
pub fn forcing(params: &MarketParams, zeta: f64) -> f64 {
    let one = 1.0 + zeta;
    (params.mu - params.gamma * params.sigma * params.sigma * zeta / one) / (one * one)
}

#[inline]
fn second_derivative(params: &MarketParams, zeta: f64, w: f64, dw: f64) -> f64 {
    let s2 = params.sigma * params.sigma;
    2.0 * (forcing(params, zeta) - (s2 + params.mu) * zeta * dw - params.mu * w)
        / (s2 * zeta * zeta)
}

#[inline]
fn homogeneous_second(params: &MarketParams, zeta: f64, v: f64, dv: f64) -> f64 {
    let s2 = params.sigma * params.sigma;
    -2.0 * ((s2 + params.mu) * zeta * dv + params.mu * v) / (s2 * zeta * zeta)
}

/// Terminal value `ε/((1 + ζ)(1 + (1 - ε)ζ))`.
pub fn terminal_value(zeta: f64, eps: f64) -> f64 {
    eps / ((1.0 + zeta) * (1.0 + (1.0 - eps) * zeta))
}

/// Terminal slope, the derivative of [`terminal_value`].
pub fn terminal_slope(zeta: f64, eps: f64) -> f64 {
    let k = 1.0 - eps;
    eps * (eps - 2.0 * k * zeta - 2.0) / ((1.0 + zeta).powi(2) * (1.0 + k * zeta).powi(2))
}

fn terminal_curvature(zeta: f64, eps: f64) -> f64 {
    let k = 1.0 - eps;
    let a = 1.0 + zeta;
    let b = 1.0 + k * zeta;
    let n = (2.0 - eps) + 2.0 * k * zeta;
    let d = a * a * b * b;
    -eps * (2.0 * k / d - 2.0 * n * n / (a * a * a * b * b * b))
}

fn check_path(a: f64, b: f64) -> Result<()> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    for (point, name) in [(0.0, "zeta = 0"), (-1.0, "zeta = -1")] {
        if lo <= point && point <= hi {
            return Err(Error::Domain(format!(
                "integration path [{lo}, {hi}] crosses the singular point {name}"
            )));
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Domain("non-finite integration limits".into()));
    }
    Ok(())
}

/// Numerical solution `W` on `[ζ-, ζ_max]` with its boundary data.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    zeta_minus: f64,
    zeta_plus: f64,
    params: MarketParams,
    solution: DenseSolution<2>,
    residuals: [f64; 2],
    iterations: usize,
}

impl ValueFunction {
    pub fn zeta_minus(&self) -> f64 {
        self.zeta_minus
    }

    /// Right end of the integrated range; the sell boundary when solved.
    pub fn zeta_plus(&self) -> f64 {
        self.zeta_plus
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    /// Terminal-condition residuals `(W - value, W' - slope)` at `ζ+`.
    pub fn residuals(&self) -> [f64; 2] {
        self.residuals
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn mesh(&self) -> &[f64] {
        self.solution.mesh()
    }

    /// `(W(ζ), W'(ζ))`.
    pub fn eval(&self, zeta: f64) -> Result<(f64, f64)> {
        let p = self.params;
        let mut f = |z: f64, y: &[f64; 2]| [y[1], second_derivative(&p, z, y[0], y[1])];
        let y = self.solution.eval(&mut f, zeta)?;
        Ok((y[0], y[1]))
    }

    /// `W''(ζ)` recovered from the equation.
    pub fn second(&self, zeta: f64) -> Result<f64> {
        let (w, dw) = self.eval(zeta)?;
        Ok(second_derivative(&self.params, zeta, w, dw))
    }
}

fn value_rhs(p: MarketParams) -> impl FnMut(f64, &[f64; 2]) -> [f64; 2] {
    move |z, y| [y[1], second_derivative(&p, z, y[0], y[1])]
}

/// Integrate the value equation from `W(ζ-) = W'(ζ-) = 0` up to `zeta_max`.
pub fn integrate_w(zeta_minus: f64, zeta_max: f64, params: &MarketParams) -> Result<ValueFunction> {
    integrate_w_with(zeta_minus, zeta_max, params, 1e-12)
}

fn integrate_w_with(
    zeta_minus: f64,
    zeta_max: f64,
    params: &MarketParams,
    rtol: f64,
) -> Result<ValueFunction> {
    params.validate()?;
    check_path(zeta_minus, zeta_max)?;
    let opts = OdeOptions {
        rtol,
        atol: 1e-300,
        ..OdeOptions::default()
    };
    let solution = dopri5(
        &mut value_rhs(*params),
        zeta_minus,
        zeta_max,
        [0.0, 0.0],
        &opts,
    )?;
    let end = solution.y_end();
    let eps = params.epsilon;
    Ok(ValueFunction {
        zeta_minus,
        zeta_plus: zeta_max,
        params: *params,
        solution,
        residuals: [
            end[0] - terminal_value(zeta_max, eps),
            end[1] - terminal_slope(zeta_max, eps),
        ],
        iterations: 0,
    })
}

/// Terminal residuals scaled by `1/ε` and their Jacobian in `(ζ-, ζ+)`.
fn shooting(params: &MarketParams, x: [f64; 2]) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let eps = params.epsilon;
    Band::new(x[0], x[1], eps)?;
    check_path(x[0], x[1])?;
    let p = *params;
    let mut rhs = move |z: f64, y: &[f64; 4]| {
        [
            y[1],
            second_derivative(&p, z, y[0], y[1]),
            y[3],
            homogeneous_second(&p, z, y[2], y[3]),
        ]
    };
    // ∂W/∂ζ- starts at (0, -W''(ζ-))
    let y0 = [0.0, 0.0, 0.0, -second_derivative(&p, x[0], 0.0, 0.0)];
    let opts = OdeOptions {
        rtol: SOLVER_RTOL,
        atol: 1e-300,
        ..OdeOptions::default()
    };
    let sol = dopri5(&mut rhs, x[0], x[1], y0, &opts)?;
    let y = sol.y_end();
    let zp = x[1];
    let g1 = y[0] - terminal_value(zp, eps);
    let g2 = y[1] - terminal_slope(zp, eps);
    let w2 = second_derivative(&p, zp, y[0], y[1]);
    let jac = [
        [y[2] / eps, g2 / eps],
        [y[3] / eps, (w2 - terminal_curvature(zp, eps)) / eps],
    ];
    Ok(([g1 / eps, g2 / eps], jac))
}

fn newton(params: &MarketParams, seed: [f64; 2]) -> Result<([f64; 2], usize)> {
    let opts = NewtonOptions {
        tol: 1e-13,
        accept: 1e-9,
        max_iter: 60,
        max_halvings: 50,
    };
    let out = damped_newton2(|x| shooting(params, x), seed, &opts)?;
    Ok((out.x, out.iterations))
}

/// Solve for the optimal band, seeded by the small-spread expansion of `ζ±`.
pub fn solve_optimal_fbp(params: &MarketParams) -> Result<(Band, ValueFunction)> {
    params.validate()?;
    params.merton_fraction()?;
    let eps = params.epsilon;
    if eps == 0.0 {
        return Err(Error::Domain("the exact solver needs epsilon > 0".into()));
    }
    let seed = optimal_zeta_asym(params, 2)?;
    let (x, iterations) = match newton(params, [seed.0, seed.1]) {
        Ok(v) => v,
        Err(first) => continuation(params).map_err(|e| match e {
            Error::Regime(_) => e,
            _ => first,
        })?,
    };
    let band = Band::new(x[0], x[1], eps)
        .map_err(|e| Error::Regime(format!("optimal band outside asymptotic regime: {e}")))?;
    let pi_star = params.merton_fraction()?;
    if !(band.pi_minus() < pi_star && pi_star < band.pi_plus()) {
        return Err(Error::Regime(format!(
            "solved band [{}, {}] does not contain the Merton fraction {pi_star}",
            band.pi_minus(),
            band.pi_plus()
        )));
    }
    let mut vf = integrate_w_with(x[0], x[1], params, SOLVER_RTOL)?;
    vf.iterations = iterations;
    Ok((band, vf))
}

fn continuation(params: &MarketParams) -> Result<([f64; 2], usize)> {
    let eps = params.epsilon;
    let mut current = (eps * 1e-3).min(1e-7);
    let at = |e: f64| -> Result<[f64; 2]> {
        let z = optimal_zeta_asym(&params.with_epsilon(e)?, 2)?;
        Ok([z.0, z.1])
    };
    let (mut x, mut total) = newton(&params.with_epsilon(current)?, at(current)?)?;
    let mut factor: f64 = 2.0;
    while current < eps {
        let next = (current * factor).min(eps);
        let (a, b) = (at(current)?, at(next)?);
        let seed = [x[0] + b[0] - a[0], x[1] + b[1] - a[1]];
        match newton(&params.with_epsilon(next)?, seed) {
            Ok((y, n)) => {
                x = y;
                total += n;
                current = next;
                factor = (factor * 1.5).min(2.0);
            }
            Err(_) if factor > 1.0 + 1e-3 => factor = 1.0 + 0.5 * (factor - 1.0),
            Err(_) => {
                return Err(Error::Regime(format!(
                    "continuation in epsilon stalled at {current:e} below the requested {eps:e}"
                )))
            }
        }
    }
    Ok((x, total))
}

/// Maximal equivalent safe rate `r + μπ- - (γσ²/2)π-²`, where `π-` is the buy boundary.
pub fn optimal_esr_exact(band: &Band, params: &MarketParams) -> f64 {
    let pi = band.pi_minus();
    params.r + params.mu * pi - 0.5 * params.gamma * params.sigma * params.sigma * pi * pi
}

/// Solved band and the value of [`optimal_esr_exact`], for serialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalSummary {
    pub band: Band,
    pub esr: f64,
    pub residuals: [f64; 2],
    pub iterations: usize,
}

impl OptimalSummary {
    pub fn solve(params: &MarketParams) -> Result<Self> {
        let (band, vf) = solve_optimal_fbp(params)?;
        Ok(OptimalSummary {
            band,
            esr: optimal_esr_exact(&band, params),
            residuals: vf.residuals(),
            iterations: vf.iterations(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mk(mu: f64, gamma: f64, eps: f64) -> MarketParams {
        MarketParams::new(mu, 0.16, 0.0, gamma, eps).unwrap()
    }

    #[test]
    fn terminal_derivatives_match_differences() {
        let eps = 1e-2;
        for z in [1.7, -3.4] {
            let h = 1e-6;
            let d1 = (terminal_value(z + h, eps) - terminal_value(z - h, eps)) / (2.0 * h);
            let d2 = (terminal_slope(z + h, eps) - terminal_slope(z - h, eps)) / (2.0 * h);
            assert!((d1 - terminal_slope(z, eps)).abs() < 1e-9);
            assert!((d2 - terminal_curvature(z, eps)).abs() < 1e-9);
        }
    }

    #[test]
    fn initial_data_and_equation_residual() {
        let p = mk(0.08, 5.0, 1e-3);
        let vf = integrate_w(1.5, 1.9, &p).unwrap();
        assert_eq!(vf.eval(1.5).unwrap(), (0.0, 0.0));
        for i in 1..=21 {
            let z = 1.5 + 0.4 * i as f64 / 22.0;
            let (w, dw) = vf.eval(z).unwrap();
            let w2 = vf.second(z).unwrap();
            let res =
                0.5 * 0.0256 * z * z * w2 + (0.0256 + 0.08) * z * dw + 0.08 * w - forcing(&p, z);
            assert!(res.abs() < 1e-8);
        }
    }

    #[test]
    fn singular_paths_are_rejected() {
        let p = mk(0.08, 5.0, 1e-3);
        assert!(integrate_w(-0.5, 0.5, &p).is_err());
        assert!(integrate_w(-1.5, -0.5, &p).is_err());
    }

    #[test]
    fn solves_both_cases() {
        for (mu, gamma) in [(0.08, 5.0), (0.08, 0.4), (0.08, 2.0), (0.0384, 5.0)] {
            for eps in [1e-5, 1e-3, 3e-3, 1e-2] {
                if gamma == 0.4 && eps > 3e-3 {
                    continue;
                }
                let p = mk(mu, gamma, eps);
                let (band, vf) = solve_optimal_fbp(&p).unwrap();
                assert!(
                    vf.residuals().iter().all(|r| r.abs() < 1e-10),
                    "{:?}",
                    vf.residuals()
                );
                let pi = p.merton_fraction().unwrap();
                assert!(band.pi_minus() < pi && pi < band.pi_plus());
                // W is non-negative on the band
                for i in 0..=10 {
                    let z = band.zeta_minus()
                        + (band.zeta_plus() - band.zeta_minus()) * i as f64 / 10.0;
                    assert!(vf.eval(z).unwrap().0 >= -1e-15);
                }
            }
        }
    }

    #[test]
    fn large_spread_is_a_regime_error() {
        // the levered band no longer brackets the Merton fraction
        let err = solve_optimal_fbp(&mk(0.08, 0.4, 1e-2)).unwrap_err();
        assert!(matches!(err, Error::Regime(_)), "{err}");
    }

    #[test]
    fn frictionless_esr_limit() {
        let p = mk(0.08, 5.0, 1e-3);
        let point = Band::point(0.625 / 0.375, 0.0).unwrap();
        let expect = 0.08 * 0.08 / (2.0 * 5.0 * 0.0256);
        assert!((optimal_esr_exact(&point, &p) - expect).abs() < 1e-16);
    }
}
