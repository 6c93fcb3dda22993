//! Long-run performance of control limit policies from the stationary density of the
//! reflected risky-safe ratio.
//!
//! With `a = 2μ/σ²`, the stationary density on `[ζ-, ζ+]` is proportional to `|η|^{a-2}`.
//! Mean, variance and the equivalent safe rate are density integrals; average costs have a
//! closed form driven by the sell-side local time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pi_of_zeta, Band, MarketParams};
use crate::numerics::quad::{integrate, QuadOptions};
use crate::numerics::sum::compensated_difference;

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-300,
        rel_tol: 1e-14,
        max_intervals: 500,
    }
}

/// `∫_x^y |η|^{a-2} dη` for `x, y` of equal sign, without cancellation for nearby points.
fn power_integral(x: f64, y: f64, a: f64) -> f64 {
    let sign = x.signum();
    let log_ratio = (y / x).ln();
    let b = a - 1.0;
    let scaled = if b == 0.0 {
        log_ratio
    } else {
        x.abs().powf(b) * (b * log_ratio).exp_m1() / b
    };
    sign * scaled
}

/// Stationary density `ν(η) = |η|^{a-2}/N` of the reflected ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryDensity {
    band: Band,
    exponent: f64,
    normalizer: f64,
}

impl StationaryDensity {
    pub fn band(&self) -> &Band {
        &self.band
    }

    /// `a - 2 = 2μ/σ² - 2`.
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn pdf(&self, eta: f64) -> f64 {
        if !self.band.contains(eta) {
            return 0.0;
        }
        eta.abs().powf(self.exponent) / self.normalizer
    }

    /// Probability of `[x, y] ∩ band`.
    pub fn mass(&self, x: f64, y: f64) -> f64 {
        let lo = x.max(self.band.zeta_minus());
        let hi = y.min(self.band.zeta_plus());
        if hi <= lo {
            return 0.0;
        }
        power_integral(lo, hi, self.exponent + 2.0) / self.normalizer
    }

    /// `∫ f(η) ν(η) dη` by adaptive quadrature.
    pub fn expectation<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<f64> {
        let e = self.exponent;
        let n = self.normalizer;
        let res = integrate(
            |eta: f64| f(eta) * eta.abs().powf(e) / n,
            self.band.zeta_minus(),
            self.band.zeta_plus(),
            &quad_opts(),
        )?;
        Ok(res.value)
    }
}

/// Stationary density of the ratio reflected at the band edges.
pub fn stationary_density(band: &Band, params: &MarketParams) -> Result<StationaryDensity> {
    params.validate()?;
    if band.is_degenerate() {
        return Err(Error::InvalidBand(
            "a degenerate band has a point mass, not a density".into(),
        ));
    }
    let a = params.drift_ratio();
    let normalizer = power_integral(band.zeta_minus(), band.zeta_plus(), a);
    if !(normalizer > 0.0 && normalizer.is_finite()) {
        return Err(Error::InvalidBand(format!(
            "density normalizer {normalizer} is not positive"
        )));
    }
    Ok(StationaryDensity {
        band: *band,
        exponent: a - 2.0,
        normalizer,
    })
}

/// Long-run statistics of a control limit policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    /// Long-run mean return, including the safe rate.
    pub mean: f64,
    pub variance: f64,
    /// Average transaction cost rate.
    pub atc: f64,
    /// Equivalent safe rate `mean - (γ/2) variance - atc`.
    pub esr: f64,
}

/// Long-run mean `r + μ∫π ν`.
pub fn long_run_mean(band: &Band, params: &MarketParams) -> Result<f64> {
    if band.is_degenerate() {
        return Ok(params.r + params.mu * band.pi_minus());
    }
    let d = stationary_density(band, params)?;
    Ok(params.r + params.mu * d.expectation(pi_of_zeta)?)
}

/// Long-run variance `σ²∫π² ν`.
pub fn long_run_variance(band: &Band, params: &MarketParams) -> Result<f64> {
    let s2 = params.sigma * params.sigma;
    if band.is_degenerate() {
        return Ok(s2 * band.pi_minus().powi(2));
    }
    let d = stationary_density(band, params)?;
    Ok(s2 * d.expectation(|z| pi_of_zeta(z).powi(2))?)
}

/// Average transaction costs from the sell-side local time.
pub fn avg_transaction_costs(band: &Band, params: &MarketParams) -> Result<f64> {
    params.validate()?;
    let eps = params.epsilon;
    if eps == 0.0 {
        return Ok(0.0);
    }
    if band.is_degenerate() {
        return Err(Error::InvalidBand(
            "a degenerate band trades at an infinite rate when epsilon > 0".into(),
        ));
    }
    let zp = band.zeta_plus();
    let zm = band.zeta_minus();
    let a = params.drift_ratio();
    let b = a - 1.0;
    let log_ratio = (zm / zp).ln();
    // (a - 1)/(1 - (ζ-/ζ+)^{a-1})
    let h = if b == 0.0 {
        -1.0 / log_ratio
    } else {
        b / -(b * log_ratio).exp_m1()
    };
    if !h.is_finite() {
        return Err(Error::InvalidBand(format!(
            "band [{zm}, {zp}] too narrow: cost denominator underflows"
        )));
    }
    let num = eps * zp / ((1.0 + zp) * (1.0 + (1.0 - eps) * zp));
    Ok(0.5 * params.sigma * params.sigma * num * h)
}

/// ESR split into the frictionless maximum, the tracking loss and the cost drag, so that
/// differences between bands can be formed without cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsrDecomposition {
    /// `r + (γσ²/2)π*²`, or `r` when `γ = 0`.
    pub frictionless: f64,
    /// `(γσ²/2)E[(π - π*)²]`, or `-μE[π]` when `γ = 0`.
    pub loss: f64,
    pub atc: f64,
}

impl EsrDecomposition {
    pub fn esr(&self) -> f64 {
        self.frictionless - self.loss - self.atc
    }
}

pub fn esr_decomposition(band: &Band, params: &MarketParams) -> Result<EsrDecomposition> {
    params.validate()?;
    let atc = avg_transaction_costs(band, params)?;
    let s2 = params.sigma * params.sigma;
    if params.gamma == 0.0 {
        let mean = long_run_mean(band, params)? - params.r;
        return Ok(EsrDecomposition {
            frictionless: params.r,
            loss: -mean,
            atc,
        });
    }
    let pi_star = params.merton_fraction()?;
    let half = 0.5 * params.gamma * s2;
    let sq = if band.is_degenerate() {
        (band.pi_minus() - pi_star).powi(2)
    } else {
        stationary_density(band, params)?.expectation(|z| (pi_of_zeta(z) - pi_star).powi(2))?
    };
    Ok(EsrDecomposition {
        frictionless: params.r + half * pi_star * pi_star,
        loss: half * sq,
        atc,
    })
}

/// Equivalent safe rate `m̂ - (γ/2)σ̂² - ATC`.
pub fn esr(band: &Band, params: &MarketParams) -> Result<f64> {
    Ok(esr_decomposition(band, params)?.esr())
}

/// `esr(a) - esr(b)` with the frictionless parts cancelled exactly.
pub fn esr_gap(a: &Band, b: &Band, params: &MarketParams) -> Result<f64> {
    let da = esr_decomposition(a, params)?;
    let db = esr_decomposition(b, params)?;
    Ok(compensated_difference(
        &[db.loss, db.atc],
        &[da.loss, da.atc],
    ))
}

/// All four statistics of a band.
pub fn policy_stats(band: &Band, params: &MarketParams) -> Result<PolicyStats> {
    let mean = long_run_mean(band, params)?;
    let variance = long_run_variance(band, params)?;
    let dec = esr_decomposition(band, params)?;
    Ok(PolicyStats {
        mean,
        variance,
        atc: dec.atc,
        esr: dec.esr(),
    })
}
