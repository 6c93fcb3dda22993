//! Exact solution of the shadow-price free boundary problem.
//!
//! The unknowns are `c = 1/ζ-` and `s = ζ+/ζ-`. With `α = 1 - 2γ`, `β = 1 - 2γπ*` and the
//! Box-Cox transform `E_a(x) = (x^a - 1)/a` (`ln x` at `a = 0`), the explicit solution of the
//! initial value problem reads
//!
//! `E_α((c + φ(z))/(c + 1)) = E_β(z)/(c + 1)`,
//!
//! which covers the logarithmic cases `γ = 1/2` and `2γπ* = 1` without special branches.
//! The terminal conditions give two equations in `(c, s)` that are solved by damped Newton
//! iteration in `(c, u = s - 1)`.

use serde::{Deserialize, Serialize};

use crate::asymptotics::cs_seed;
use crate::error::{Error, Result};
use crate::model::{Band, CaseTag, MarketParams};
use crate::numerics::roots::{damped_newton2, NewtonOptions};

/// Box-Cox transform from `ln x`.
#[inline]
fn boxcox(log_x: f64, a: f64) -> f64 {
    if a == 0.0 {
        log_x
    } else {
        (a * log_x).exp_m1() / a
    }
}

/// Inverse Box-Cox transform; `None` when `1 + a·y ≤ 0`.
#[inline]
fn boxcox_inv(y: f64, a: f64) -> Option<f64> {
    if a == 0.0 {
        return Some(y.exp());
    }
    let t = a * y;
    if t <= -1.0 {
        None
    } else {
        Some((t.ln_1p() / a).exp())
    }
}

#[derive(Debug, Clone, Copy)]
struct Exponents {
    gamma: f64,
    pi_star: f64,
    alpha: f64,
    beta: f64,
    p: f64,
}

fn exponents(params: &MarketParams) -> Result<Exponents> {
    params.validate()?;
    let pi_star = params.merton_fraction()?;
    let p = 2.0 * params.gamma * pi_star;
    Ok(Exponents {
        gamma: params.gamma,
        pi_star,
        alpha: 1.0 - 2.0 * params.gamma,
        beta: 1.0 - p,
        p,
    })
}

/// Residuals and Jacobian of the terminal conditions in `(c, u = s - 1)`.
///
/// The first residual is the Box-Cox form of the value-matching condition, i.e. the usual
/// form divided by `1 - 2γ`; the second is the smooth-pasting condition minus its right side.
fn system(ex: &Exponents, eps: f64, c: f64, u: f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let cp1 = c + 1.0;
    if !(cp1 > 0.0) || !(u > -1.0) {
        return Err(Error::Domain(format!(
            "(c, s) = ({c}, {}) outside the domain",
            1.0 + u
        )));
    }
    let k = 1.0 - eps;
    let q = (k * u - eps) / cp1;
    if !(q > -1.0) {
        return Err(Error::Domain(
            "c + (1 - epsilon) s must stay positive".into(),
        ));
    }
    let log_r = q.ln_1p();
    let log_s = u.ln_1p();
    let e_beta = boxcox(log_s, ex.beta);
    let f1 = boxcox(log_r, ex.alpha) - e_beta / cp1;
    let l = (-eps).ln_1p() / (2.0 * ex.gamma) + ex.pi_star * log_s;
    let f2 = l.exp_m1() - q;

    let r_pow = ((ex.alpha - 1.0) * log_r).exp();
    let s_pow = (-ex.p * log_s).exp();
    let jac = [
        [
            -r_pow * q / cp1 + e_beta / (cp1 * cp1),
            r_pow * k / cp1 - s_pow / cp1,
        ],
        [q / cp1, l.exp() * ex.pi_star / (1.0 + u) - k / cp1],
    ];
    Ok(([f1, f2], jac))
}

/// Terminal-condition residuals at `(c, s)` in the Box-Cox scaling used by the solver.
pub fn shadow_residuals(params: &MarketParams, c: f64, s: f64) -> Result<[f64; 2]> {
    let ex = exponents(params)?;
    Ok(system(&ex, params.epsilon, c, s - 1.0)?.0)
}

/// Solved shadow free boundary problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowSolution {
    c: f64,
    s: f64,
    params: MarketParams,
    case: CaseTag,
    residuals: [f64; 2],
    iterations: usize,
}

/// `φ` and its first two derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl ShadowSolution {
    /// Wrap a candidate `(c, s)` without solving; residuals are recomputed.
    pub fn from_parts(params: MarketParams, c: f64, s: f64) -> Result<Self> {
        let ex = exponents(&params)?;
        let residuals = if s == 1.0 {
            [0.0, 0.0]
        } else {
            system(&ex, params.epsilon, c, s - 1.0)?.0
        };
        let case = if ex.pi_star < 1.0 {
            CaseTag::Unlevered
        } else {
            CaseTag::Levered
        };
        Ok(ShadowSolution {
            c,
            s,
            params,
            case,
            residuals,
            iterations: 0,
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn case(&self) -> CaseTag {
        self.case
    }

    pub fn residuals(&self) -> [f64; 2] {
        self.residuals
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Range of the scaled ratio `z = cζ` over the band, `[min(1, s), max(1, s)]`.
    pub fn z_range(&self) -> (f64, f64) {
        (self.s.min(1.0), self.s.max(1.0))
    }

    /// Boundaries in risky-weight space.
    pub fn pi_bounds(&self) -> (f64, f64) {
        let lo = 1.0 / self.c;
        let hi = self.s / self.c;
        (lo / (1.0 + lo), hi / (1.0 + hi))
    }

    pub fn band(&self) -> Result<Band> {
        shadow_band(self)
    }

    pub fn phi(&self, z: f64) -> Result<f64> {
        Ok(self.phi_derivatives(z)?.value)
    }

    /// `φ(z)`, `φ'(z)` and `φ''(z)` from the closed form and its derivatives.
    pub fn phi_derivatives(&self, z: f64) -> Result<PhiValue> {
        let ex = exponents(&self.params)?;
        let (lo, hi) = self.z_range();
        let slack = 1e-12 * hi;
        if !(z >= lo - slack && z <= hi + slack) {
            return Err(Error::Domain(format!("z = {z} outside [{lo}, {hi}]")));
        }
        let cp1 = self.c + 1.0;
        let log_z = z.ln();
        let y = boxcox(log_z, ex.beta) / cp1;
        let ratio = boxcox_inv(y, ex.alpha).ok_or_else(|| {
            Error::Domain(format!(
                "radicand 1 + (1 - 2 gamma) E(z)/(c + 1) is not positive at z = {z}"
            ))
        })?;
        let value = -self.c + cp1 * ratio;
        // φ' = ((c + φ)/(c + 1))^{2γ} z^{-2γπ*}
        let d1 = (2.0 * ex.gamma * ratio.ln() - ex.p * log_z).exp();
        let d2 = 2.0 * ex.gamma * d1 * d1 / (cp1 * ratio) - ex.p * d1 / z;
        Ok(PhiValue { value, d1, d2 })
    }

    /// Residual of `φ'' = 2γφ'²/(c + φ) - (2μ/σ²)φ'/z`, with `φ''` obtained by
    /// differentiating the closed-form `φ'` directly.
    pub fn phi_ode_residual(&self, z: f64) -> Result<f64> {
        let ex = exponents(&self.params)?;
        let v = self.phi_derivatives(z)?;
        let cp1 = self.c + 1.0;
        let ratio = (self.c + v.value) / cp1;
        let direct =
            2.0 * ex.gamma * ratio.powf(2.0 * ex.gamma - 1.0) * (v.d1 / cp1) * z.powf(-ex.p)
                - ex.p * ratio.powf(2.0 * ex.gamma) * z.powf(-ex.p - 1.0);
        let rhs = 2.0 * ex.gamma * v.d1 * v.d1 / (self.c + v.value)
            - self.params.drift_ratio() * v.d1 / z;
        Ok(direct - rhs)
    }
}

fn newton_from(ex: &Exponents, eps: f64, seed: [f64; 2]) -> Result<(f64, f64, [f64; 2], usize)> {
    let opts = NewtonOptions {
        tol: 1e-15,
        accept: 1e-12,
        max_iter: 60,
        max_halvings: 50,
    };
    let out = damped_newton2(|x| system(ex, eps, x[0], x[1]), seed, &opts)?;
    Ok((out.x[0], 1.0 + out.x[1], out.residual, out.iterations))
}

fn seed_at(params: &MarketParams, eps: f64) -> Result<[f64; 2]> {
    let (c, s) = cs_seed(params)?.eval(eps);
    Ok([c, s - 1.0])
}

/// Solve the terminal conditions for `(c, s)`, seeded by the small-spread series and falling
/// back to continuation in `ε` when the direct iteration fails.
pub fn solve_shadow_system(params: &MarketParams) -> Result<ShadowSolution> {
    let ex = exponents(params)?;
    let eps = params.epsilon;
    if eps == 0.0 {
        return Err(Error::Domain("the exact solver needs epsilon > 0".into()));
    }
    let direct = newton_from(&ex, eps, seed_at(params, eps)?);
    let (c, s, residuals, iterations) = match direct {
        Ok(v) => v,
        Err(first) => continuation(params, &ex, eps).map_err(|e| match e {
            Error::Regime(_) => e,
            _ => first,
        })?,
    };
    let sol = ShadowSolution {
        c,
        s,
        params: *params,
        case: if ex.pi_star < 1.0 {
            CaseTag::Unlevered
        } else {
            CaseTag::Levered
        },
        residuals,
        iterations,
    };
    let consistent = match sol.case {
        CaseTag::Unlevered => s > 1.0 && c > 0.0,
        CaseTag::Levered => s < 1.0 && c < 0.0 && c > -1.0,
    };
    if !consistent {
        return Err(Error::Regime(format!(
            "solution (c, s) = ({c}, {s}) is on the wrong branch for the {:?} case",
            sol.case
        )));
    }
    shadow_band(&sol)?;
    Ok(sol)
}

fn continuation(
    params: &MarketParams,
    ex: &Exponents,
    eps: f64,
) -> Result<(f64, f64, [f64; 2], usize)> {
    let start = (eps * 1e-3).min(1e-7);
    let mut current = start;
    let mut x = newton_from(ex, current, seed_at(params, current)?)?;
    let mut factor: f64 = 2.0;
    let mut total = x.3;
    while current < eps {
        let next = (current * factor).min(eps);
        // shift the previous solution by the series increment
        let (a, b) = (seed_at(params, current)?, seed_at(params, next)?);
        let seed = [x.0 + b[0] - a[0], x.1 - 1.0 + b[1] - a[1]];
        match newton_from(ex, next, seed) {
            Ok(y) => {
                total += y.3;
                x = y;
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
    Ok((x.0, x.1, x.2, total))
}

/// The shadow band `[1/c, s/c]`.
pub fn shadow_band(sol: &ShadowSolution) -> Result<Band> {
    let lo = 1.0 / sol.c;
    let hi = sol.s / sol.c;
    let eps = sol.params.epsilon;
    if sol.s == 1.0 {
        return Band::point(lo, eps);
    }
    let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    Band::new(a, b, eps)
        .map_err(|e| Error::Regime(format!("shadow band outside asymptotic regime: {e}")))
}

/// Evaluate `φ(z)` on a solved instance.
pub fn phi(z: f64, sol: &ShadowSolution) -> Result<f64> {
    sol.phi(z)
}

/// Shadow price ratio `g = S̃/S` and the shadow-market coefficients at risky weight `π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowDynamics {
    pub g_value: f64,
    pub g_prime: f64,
    pub g_second: f64,
    /// Excess drift of the shadow price.
    pub mu_tilde: f64,
    pub sigma_tilde: f64,
    /// Risky weight measured at the shadow price.
    pub pi_tilde: f64,
}

/// `g(π) = φ(z)/z` with `z = cπ/(1 - π)` and the induced shadow-market dynamics.
pub fn shadow_g(pi: f64, sol: &ShadowSolution) -> Result<ShadowDynamics> {
    let (lo, hi) = sol.pi_bounds();
    let slack = 1e-12 * hi.abs().max(1.0);
    if !(pi >= lo - slack && pi <= hi + slack) {
        return Err(Error::Domain(format!(
            "pi = {pi} outside the shadow band [{lo}, {hi}]"
        )));
    }
    let one_minus = 1.0 - pi;
    let c = sol.c;
    let z = c * pi / one_minus;
    let v = sol.phi_derivatives(z)?;
    let dz = c / (one_minus * one_minus);
    let d2z = 2.0 * c / (one_minus * one_minus * one_minus);
    let g = v.value / z;
    let g_z = (v.d1 * z - v.value) / (z * z);
    let g_zz = v.d2 / z - 2.0 * v.d1 / (z * z) + 2.0 * v.value / (z * z * z);
    let g1 = g_z * dz;
    let g2 = g_zz * dz * dz + g_z * d2z;

    let p = &sol.params;
    let s2 = p.sigma * p.sigma;
    let w = pi * one_minus;
    let mu_tilde = p.mu + (g1 * (w * p.mu + w * one_minus * s2) + 0.5 * g2 * w * w * s2) / g;
    let sigma_tilde = p.sigma * (g + g1 * w) / g;
    let pi_tilde = pi * g / (one_minus + pi * g);
    Ok(ShadowDynamics {
        g_value: g,
        g_prime: g1,
        g_second: g2,
        mu_tilde,
        sigma_tilde,
        pi_tilde,
    })
}

/// `π̃ - μ̃/(γσ̃²)`: zero when the shadow weight is the shadow market's Merton fraction.
pub fn merton_residual(pi: f64, sol: &ShadowSolution) -> Result<f64> {
    let d = shadow_g(pi, sol)?;
    if d.sigma_tilde == 0.0 {
        return Err(Error::Domain(format!(
            "shadow volatility vanishes at pi = {pi}"
        )));
    }
    Ok(d.pi_tilde - d.mu_tilde / (sol.params.gamma * d.sigma_tilde * d.sigma_tilde))
}

/// Residual of the second-order ODE for `g` in risky-weight space.
pub fn shadow_ode_residual(pi: f64, sol: &ShadowSolution) -> Result<f64> {
    let d = shadow_g(pi, sol)?;
    let p = &sol.params;
    let s2 = p.sigma * p.sigma;
    let w = pi * (1.0 - pi);
    let lhs = 0.5 * d.g_second * w * w * s2;
    let rhs = p.gamma * pi * s2 * (d.g_value + d.g_prime * w).powi(2) / (1.0 - pi + pi * d.g_value)
        - p.mu * d.g_value
        - d.g_prime * (w * p.mu + w * (1.0 - pi) * s2);
    Ok(lhs - rhs)
}
