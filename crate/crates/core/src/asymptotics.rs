//! Small-spread expansions of trading boundaries, long-run statistics and equivalent safe rates.
//!
//! Every expansion is a [`SeriesExpansion`] in powers of `ε^{1/3}` (or `ε^{1/2}` for the
//! risk-neutral investor). Odd roots of negative numbers are real roots; even roots are only
//! taken of non-negative quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MarketParams;
use crate::numerics::roots::brent;

/// `Σ_k coefficients[k] · ε^{(leading + k) / root}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesExpansion {
    /// Denominator of the fractional power step (3 for `ε^{1/3}`, 2 for `ε^{1/2}`).
    pub root: u32,
    /// Power index of the first coefficient, in units of `1/root`.
    pub leading: i32,
    pub coefficients: Vec<f64>,
}

impl SeriesExpansion {
    pub fn new(root: u32, leading: i32, coefficients: Vec<f64>) -> Self {
        assert!(root > 0, "power step denominator must be positive");
        SeriesExpansion {
            root,
            leading,
            coefficients,
        }
    }

    /// Exponent of `ε` carried by the first coefficient.
    pub fn base_power(&self) -> f64 {
        self.leading as f64 / self.root as f64
    }

    /// Exponent of `ε` of the last included term.
    pub fn order(&self) -> f64 {
        (self.leading + self.coefficients.len() as i32 - 1) as f64 / self.root as f64
    }

    /// Coefficient of `ε^{index/root}`, zero when absent.
    pub fn coefficient(&self, index: i32) -> f64 {
        let k = index - self.leading;
        if k < 0 {
            return 0.0;
        }
        self.coefficients.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, epsilon: f64) -> f64 {
        let t = epsilon.powf(1.0 / self.root as f64);
        let mut acc = 0.0;
        for (k, c) in self.coefficients.iter().enumerate().rev() {
            if *c != 0.0 || k == 0 {
                acc = acc * t + c;
            } else {
                acc *= t;
            }
        }
        if self.leading == 0 {
            acc
        } else if epsilon == 0.0 && self.leading > 0 {
            0.0
        } else {
            acc * t.powi(self.leading)
        }
    }

    /// Keep terms up to and including `ε^{index/root}`.
    pub fn truncated(&self, index: i32) -> SeriesExpansion {
        let keep = (index - self.leading + 1).max(0) as usize;
        SeriesExpansion {
            root: self.root,
            leading: self.leading,
            coefficients: self.coefficients.iter().copied().take(keep).collect(),
        }
    }

    fn add_scaled(&self, other: &SeriesExpansion, scale: f64) -> SeriesExpansion {
        assert_eq!(self.root, other.root, "series on different power grids");
        let lead = self.leading.min(other.leading);
        let last = (self.leading + self.coefficients.len() as i32)
            .max(other.leading + other.coefficients.len() as i32);
        let coefficients = (lead..last)
            .map(|i| self.coefficient(i) + scale * other.coefficient(i))
            .collect();
        SeriesExpansion::new(self.root, lead, coefficients)
    }
}

/// Lower and upper boundary expansions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySeries {
    pub lower: SeriesExpansion,
    pub upper: SeriesExpansion,
}

impl BoundarySeries {
    pub fn eval(&self, epsilon: f64) -> (f64, f64) {
        (self.lower.eval(epsilon), self.upper.eval(epsilon))
    }
}

/// Expansions of the long-run statistics of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSeries {
    pub mean: SeriesExpansion,
    pub variance: SeriesExpansion,
    pub atc: SeriesExpansion,
    pub esr: SeriesExpansion,
}

/// Second-order bracket of the optimal long-run mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeanBracket {
    /// `2π* - 1`.
    Corrected,
    /// `5π* - 3`, the earlier published variant.
    Uncorrected,
}

/// Second-order bracket of the shadow long-run variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceBracket {
    /// `π*(8γ + 1) - 3`, as published.
    Published,
    /// `π*(8γ - 1) - 3`, the bracket that matches the exact shadow band.
    Amended,
}

/// Perturbation parameter of the family of control limit policies around the shadow band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPolicy {
    pub theta: f64,
}

impl ThetaPolicy {
    pub fn boundaries(&self, params: &MarketParams) -> Result<(f64, f64)> {
        theta_boundaries(params, self.theta)
    }

    pub fn k(&self, params: &MarketParams) -> Result<f64> {
        k_of_theta(params, self.theta)
    }

    pub fn esr_series(&self, params: &MarketParams) -> Result<SeriesExpansion> {
        theta_esr_asym(params, self.theta)
    }
}

struct Parts {
    pi: f64,
    gamma: f64,
    mu: f64,
    sigma2: f64,
    r: f64,
    /// Real cube root of `γπ*(π* - 1)/6`; negative when unlevered.
    cbrt_y: f64,
}

fn parts(params: &MarketParams) -> Result<Parts> {
    params.validate()?;
    let pi = params.merton_fraction()?;
    let gamma = params.gamma;
    Ok(Parts {
        pi,
        gamma,
        mu: params.mu,
        sigma2: params.sigma * params.sigma,
        r: params.r,
        cbrt_y: (gamma * pi * (pi - 1.0) / 6.0).cbrt(),
    })
}

fn check_order(order: u32, max: u32) -> Result<()> {
    if order > max {
        return Err(Error::Domain(format!(
            "expansion order {order} exceeds the available order {max}"
        )));
    }
    Ok(())
}

/// `(3/(4γ) π*²(π* - 1)²)^{1/3}`, the half-width coefficient in risky-weight space.
fn half_width(p: &Parts) -> f64 {
    (0.75 / p.gamma * p.pi * p.pi * (p.pi - 1.0).powi(2)).cbrt()
}

fn boundary_series(p: &Parts, second: f64, order: u32) -> BoundarySeries {
    let a = half_width(p);
    let mk = |sign: f64| {
        let coefficients = [p.pi, sign * a, second];
        SeriesExpansion::new(3, 0, coefficients[..=order as usize].to_vec())
    };
    BoundarySeries {
        lower: mk(-1.0),
        upper: mk(1.0),
    }
}

/// Expansion of the optimal trading boundaries in risky-weight space.
pub fn optimal_boundary_series(params: &MarketParams, order: u32) -> Result<BoundarySeries> {
    check_order(order, 2)?;
    let p = parts(params)?;
    let second = -(1.0 - p.gamma) * p.pi / p.gamma * p.cbrt_y;
    Ok(boundary_series(&p, second, order))
}

/// Optimal trading boundaries `(π-, π+)` from their expansion, evaluated at `params.epsilon`.
pub fn optimal_boundaries_asym(params: &MarketParams, order: u32) -> Result<(f64, f64)> {
    Ok(optimal_boundary_series(params, order)?.eval(params.epsilon))
}

/// Expansion of the shadow-market trading boundaries in risky-weight space.
pub fn shadow_boundary_series(params: &MarketParams, order: u32) -> Result<BoundarySeries> {
    check_order(order, 2)?;
    let p = parts(params)?;
    let second = (1.0 - p.gamma) * p.pi / p.gamma * p.cbrt_y;
    Ok(boundary_series(&p, second, order))
}

pub fn shadow_boundaries_asym(params: &MarketParams, order: u32) -> Result<(f64, f64)> {
    Ok(shadow_boundary_series(params, order)?.eval(params.epsilon))
}

fn zeta_series(p: &Parts, factor: f64, order: u32) -> BoundarySeries {
    let one_minus = 1.0 - p.pi;
    let star = p.pi / one_minus;
    let first = (0.75 / p.gamma).cbrt() * (p.pi / (one_minus * one_minus)).powf(2.0 / 3.0);
    let second = -factor * p.pi / (2.0 * p.gamma * one_minus * one_minus) * p.cbrt_y;
    let mk = |sign: f64| {
        let coefficients = [star, sign * first, second];
        SeriesExpansion::new(3, 0, coefficients[..=order as usize].to_vec())
    };
    BoundarySeries {
        lower: mk(-1.0),
        upper: mk(1.0),
    }
}

/// Expansion of the optimal boundaries in risky-safe-ratio space.
pub fn optimal_zeta_series(params: &MarketParams, order: u32) -> Result<BoundarySeries> {
    check_order(order, 2)?;
    let p = parts(params)?;
    Ok(zeta_series(&p, 5.0 - 2.0 * p.gamma, order))
}

pub fn optimal_zeta_asym(params: &MarketParams, order: u32) -> Result<(f64, f64)> {
    Ok(optimal_zeta_series(params, order)?.eval(params.epsilon))
}

/// Expansion of the shadow boundaries in risky-safe-ratio space.
///
/// The first-order coefficient is `(3/(4γ))^{1/3} (π*/(1-π*)²)^{2/3}`, shared with the optimal
/// boundaries; the second-order factor is `1 + 2γ`.
pub fn shadow_zeta_series(params: &MarketParams, order: u32) -> Result<BoundarySeries> {
    check_order(order, 2)?;
    let p = parts(params)?;
    Ok(zeta_series(&p, 1.0 + 2.0 * p.gamma, order))
}

pub fn shadow_zeta_asym(params: &MarketParams, order: u32) -> Result<(f64, f64)> {
    Ok(shadow_zeta_series(params, order)?.eval(params.epsilon))
}

/// Expansions of `c = 1/ζ-` and `s = ζ+/ζ-` for the shadow free boundary problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsSeries {
    pub c: SeriesExpansion,
    pub s: SeriesExpansion,
}

impl CsSeries {
    pub fn eval(&self, epsilon: f64) -> (f64, f64) {
        (self.c.eval(epsilon), self.s.eval(epsilon))
    }
}

/// Series for `(c, s)` up to `Δ^order`, with `Δ = (6/(γπ*(1-π*)))^{1/3} ε^{1/3}`.
///
/// The `c` series is only known through `Δ³`; higher orders leave it unchanged.
pub fn cs_expansion(params: &MarketParams, order: u32) -> Result<CsSeries> {
    check_order(order, 4)?;
    let p = parts(params)?;
    if p.gamma == 0.5 {
        return Err(Error::Singular(
            "gamma = 1/2 (exponent 1 - 2 gamma vanishes)".into(),
        ));
    }
    if 2.0 * p.gamma * p.pi == 1.0 {
        return Err(Error::Singular(
            "2 gamma pi* = 1 (exponent 1 - 2 gamma pi* vanishes)".into(),
        ));
    }
    Ok(cs_series_unchecked(&p, order))
}

/// Seed series for the shadow solver, valid for every parameter set including the
/// singular exponents, where the coefficients stay finite.
pub(crate) fn cs_seed(params: &MarketParams) -> Result<CsSeries> {
    let p = parts(params)?;
    Ok(cs_series_unchecked(&p, 4))
}

fn cs_series_unchecked(p: &Parts, order: u32) -> CsSeries {
    let (g, pi) = (p.gamma, p.pi);
    let d = (6.0 / (g * pi * (1.0 - pi))).cbrt();
    let c_delta = [
        (1.0 - pi) / pi,
        (1.0 - pi) / (2.0 * pi),
        (1.0 - pi) * (3.0 - pi * (2.0 * g + 1.0)) / (12.0 * pi),
        -(pi - 1.0)
            * ((4.0 * g * g + 22.0 * g + 1.0) * pi * pi - 24.0 * (2.0 * g + 1.0) * pi + 36.0)
            / (360.0 * pi),
    ];
    let s_delta = [
        1.0,
        1.0,
        0.5,
        ((4.0 * g * g - 8.0 * g + 1.0) * pi * pi + 3.0 * (4.0 * g - 3.0) * pi + 36.0) / 180.0,
        ((8.0 * g * g - 26.0 * g + 2.0) * pi * pi + 2.0 * (17.0 * g - 9.0) * pi + 27.0) / 360.0,
    ];
    let scale = |coef: &[f64], n: usize| -> Vec<f64> {
        coef.iter()
            .take(n)
            .enumerate()
            .map(|(k, c)| c * d.powi(k as i32))
            .collect()
    };
    let n = order as usize + 1;
    CsSeries {
        c: SeriesExpansion::new(3, 0, scale(&c_delta, n.min(4))),
        s: SeriesExpansion::new(3, 0, scale(&s_delta, n)),
    }
}

fn esr_coefficients(p: &Parts) -> Vec<f64> {
    let frictionless = p.r + 0.5 * p.gamma * p.sigma2 * p.pi * p.pi;
    let a = half_width(p);
    vec![
        frictionless,
        0.0,
        -0.5 * p.gamma * p.sigma2 * a * a,
        p.mu * (p.gamma - 1.0) / (2.0 * p.gamma) * p.pi * (p.pi - 1.0),
    ]
}

fn atc_series(p: &Parts) -> SeriesExpansion {
    SeriesExpansion::new(
        3,
        0,
        vec![
            0.0,
            0.0,
            3.0 * p.sigma2 / p.gamma * p.cbrt_y.powi(4),
            -p.mu * (p.gamma - 1.0) / (2.0 * p.gamma) * p.pi * (p.pi - 1.0),
        ],
    )
}

/// Long-run mean, variance, average costs and ESR of the optimal policy.
pub fn optimal_stats_asym(params: &MarketParams, bracket: MeanBracket) -> Result<StatsSeries> {
    let p = parts(params)?;
    let mean_bracket = match bracket {
        MeanBracket::Corrected => 2.0 * p.pi - 1.0,
        MeanBracket::Uncorrected => 5.0 * p.pi - 3.0,
    };
    Ok(StatsSeries {
        mean: SeriesExpansion::new(
            3,
            0,
            vec![
                p.r + p.mu * p.pi,
                0.0,
                -p.mu * mean_bracket / p.gamma * p.cbrt_y,
            ],
        ),
        variance: SeriesExpansion::new(
            3,
            0,
            vec![
                p.sigma2 * p.pi * p.pi,
                0.0,
                -p.sigma2 * p.pi * (7.0 * p.pi - 3.0) / (2.0 * p.gamma) * p.cbrt_y,
            ],
        ),
        atc: atc_series(&p),
        esr: SeriesExpansion::new(3, 0, esr_coefficients(&p)),
    })
}

/// Long-run statistics of the shadow policy. Average costs and ESR share the optimal expansions.
pub fn shadow_stats_asym(params: &MarketParams, bracket: VarianceBracket) -> Result<StatsSeries> {
    let p = parts(params)?;
    let var_bracket = match bracket {
        VarianceBracket::Published => p.pi * (8.0 * p.gamma + 1.0) - 3.0,
        VarianceBracket::Amended => p.pi * (8.0 * p.gamma - 1.0) - 3.0,
    };
    Ok(StatsSeries {
        mean: SeriesExpansion::new(
            3,
            0,
            vec![
                p.r + p.mu * p.pi,
                0.0,
                -p.mu * (2.0 * p.gamma * p.pi - 1.0) / p.gamma * p.cbrt_y,
            ],
        ),
        variance: SeriesExpansion::new(
            3,
            0,
            vec![
                p.sigma2 * p.pi * p.pi,
                0.0,
                -p.sigma2 * p.pi * var_bracket / (2.0 * p.gamma) * p.cbrt_y,
            ],
        ),
        atc: atc_series(&p),
        esr: SeriesExpansion::new(3, 0, esr_coefficients(&p)),
    })
}

/// Maximal equivalent safe rate through order `ε`.
pub fn optimal_esr_asym(params: &MarketParams) -> Result<SeriesExpansion> {
    let p = parts(params)?;
    Ok(SeriesExpansion::new(3, 0, esr_coefficients(&p)))
}

fn check_theta_gamma(params: &MarketParams) -> Result<()> {
    if params.gamma == 0.0 {
        return Err(Error::RiskNeutral);
    }
    if params.gamma == 1.0 {
        return Err(Error::Singular(
            "theta family is undefined for gamma = 1 (shadow policy is already optimal)".into(),
        ));
    }
    Ok(())
}

/// `ε^{2/3}` coefficient added to both shadow boundaries by a unit change of `θ`.
pub fn theta_shift_coefficient(params: &MarketParams) -> Result<f64> {
    check_theta_gamma(params)?;
    let p = parts(params)?;
    let z = p.gamma * p.pi * (1.0 - p.pi) / 6.0;
    Ok((p.gamma - 1.0) * p.pi * p.pi * (1.0 - p.pi) / 6.0 / (z.cbrt() * z.cbrt()))
}

pub fn theta_boundary_series(params: &MarketParams, theta: f64) -> Result<BoundarySeries> {
    let shift = (theta - 1.0) * theta_shift_coefficient(params)?;
    let base = shadow_boundary_series(params, 2)?;
    let bump = SeriesExpansion::new(3, 2, vec![shift]);
    Ok(BoundarySeries {
        lower: base.lower.add_scaled(&bump, 1.0),
        upper: base.upper.add_scaled(&bump, 1.0),
    })
}

/// Boundaries of the `θ`-perturbed shadow policy at `params.epsilon`.
pub fn theta_boundaries(params: &MarketParams, theta: f64) -> Result<(f64, f64)> {
    Ok(theta_boundary_series(params, theta)?.eval(params.epsilon))
}

/// `k(θ) = -9 + 2π*(9 + π*(3 + 12γ(γ - 2) + (10θ + 5θ²)(γ - 1)²))`.
pub fn k_of_theta(params: &MarketParams, theta: f64) -> Result<f64> {
    let pi = params.merton_fraction()?;
    let g = params.gamma;
    Ok(-9.0
        + 2.0
            * pi
            * (9.0
                + pi * (3.0
                    + 12.0 * g * (g - 2.0)
                    + (10.0 * theta + 5.0 * theta * theta) * (g - 1.0).powi(2))))
}

/// ESR of the `θ`-policy through order `ε^{4/3}`.
pub fn theta_esr_asym(params: &MarketParams, theta: f64) -> Result<SeriesExpansion> {
    check_theta_gamma(params)?;
    let p = parts(params)?;
    let k = k_of_theta(params, theta)?;
    let z = (p.gamma * p.pi * (1.0 - p.pi) / 6.0).cbrt();
    let mut coefficients = esr_coefficients(&p);
    coefficients.push(-p.sigma2 * k / (20.0 * p.gamma) * z * z);
    Ok(SeriesExpansion::new(3, 0, coefficients))
}

/// Root of `(3/2)ξ + log(1 - ξ) = 0` in `(0, 1)`.
pub fn kappa() -> f64 {
    kappa_equation_root().expect("bracket (0.1, 0.99) contains the root")
}

fn kappa_equation_root() -> Result<f64> {
    brent(kappa_residual, 0.1, 0.99, 1e-16, 200)
}

/// `(3/2)ξ + log(1 - ξ)`.
pub fn kappa_residual(xi: f64) -> f64 {
    1.5 * xi + (-xi).ln_1p()
}

/// Expansions of the risk-neutral boundaries in powers of `ε^{1/2}`, starting at `ε^{-1/2}`.
pub fn risk_neutral_boundary_series(params: &MarketParams) -> Result<BoundarySeries> {
    params.validate()?;
    if params.gamma != 0.0 {
        return Err(Error::InvalidParams(format!(
            "risk-neutral boundaries need gamma = 0, got {}",
            params.gamma
        )));
    }
    let k = kappa();
    let lead = k.sqrt() * (params.mu / (params.sigma * params.sigma)).sqrt();
    Ok(BoundarySeries {
        lower: SeriesExpansion::new(2, -1, vec![(1.0 - k) * lead, 1.0]),
        upper: SeriesExpansion::new(2, -1, vec![lead, 1.0]),
    })
}

pub fn risk_neutral_boundaries(params: &MarketParams) -> Result<(f64, f64)> {
    if params.epsilon == 0.0 {
        return Err(Error::Domain(
            "risk-neutral boundaries diverge as epsilon tends to 0".into(),
        ));
    }
    Ok(risk_neutral_boundary_series(params)?.eval(params.epsilon))
}
