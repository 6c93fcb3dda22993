//! Market parameters and no-trade bands.
//!
//! A band is stored in risky-safe-ratio coordinates `ζ = π / (1 - π)`, where `π` is the
//! fraction of wealth held in the risky asset. All rates are annualized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant investment opportunities with a proportional bid-ask spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Excess drift of the ask price over the safe rate (1/year).
    pub mu: f64,
    /// Volatility (1/sqrt(year)).
    pub sigma: f64,
    /// Safe rate (1/year).
    pub r: f64,
    /// Risk aversion.
    pub gamma: f64,
    /// Relative bid-ask spread; the bid is `(1 - epsilon)` times the ask.
    pub epsilon: f64,
}

impl MarketParams {
    /// Validates and builds a parameter set.
    ///
    /// `epsilon = 0` is accepted as the frictionless limit; every exact solver rejects it.
    pub fn new(mu: f64, sigma: f64, r: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        let p = MarketParams {
            mu,
            sigma,
            r,
            gamma,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.mu, self.sigma, self.r, self.gamma, self.epsilon];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "mu must be > 0, got {}",
                self.mu
            )));
        }
        if self.r < 0.0 {
            return Err(Error::InvalidParams(format!(
                "r must be >= 0, got {}",
                self.r
            )));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParams(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.gamma > 0.0 && self.merton_fraction_unchecked() == 1.0 {
            return Err(Error::Singular(
                "Merton fraction mu/(gamma sigma^2) equals 1".into(),
            ));
        }
        Ok(())
    }

    /// Same market with a different spread.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        MarketParams::new(self.mu, self.sigma, self.r, self.gamma, epsilon)
    }

    /// Same market with a different risk aversion.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        MarketParams::new(self.mu, self.sigma, self.r, gamma, self.epsilon)
    }

    /// `π* = μ / (γσ²)`.
    pub fn merton_fraction(&self) -> Result<f64> {
        merton_fraction(self)
    }

    fn merton_fraction_unchecked(&self) -> f64 {
        self.mu / (self.gamma * self.sigma * self.sigma)
    }

    /// `2μ/σ²`, the scale-free drift that sets the stationary density exponent.
    pub fn drift_ratio(&self) -> f64 {
        2.0 * self.mu / (self.sigma * self.sigma)
    }

    /// Frictionless maximum of the equivalent safe rate, `r + μ²/(2γσ²)`.
    pub fn frictionless_esr(&self) -> Result<f64> {
        let pi = self.merton_fraction()?;
        Ok(self.r + 0.5 * self.gamma * self.sigma * self.sigma * pi * pi)
    }
}

/// The Merton fraction `μ/(γσ²)`. Fails with [`Error::RiskNeutral`] when `γ = 0`.
pub fn merton_fraction(params: &MarketParams) -> Result<f64> {
    if params.gamma == 0.0 {
        return Err(Error::RiskNeutral);
    }
    Ok(params.merton_fraction_unchecked())
}

/// Map a risky weight to the risky-safe ratio.
#[inline]
pub fn zeta_of_pi(pi: f64) -> f64 {
    pi / (1.0 - pi)
}

/// Map a risky-safe ratio to the risky weight.
#[inline]
pub fn pi_of_zeta(zeta: f64) -> f64 {
    zeta / (1.0 + zeta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    /// `0 < ζ- < ζ+`, i.e. `0 < π- < π+ < 1`.
    Unlevered,
    /// `ζ- < ζ+ < -1/(1-ε)`, i.e. `1 < π- < π+ < 1/ε`.
    Levered,
}

/// A no-trade region `[ζ-, ζ+]` in risky-safe-ratio space.
///
/// The invariants depend on the spread, which the band therefore carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    zeta_minus: f64,
    zeta_plus: f64,
    epsilon: f64,
}

impl Band {
    pub fn new(zeta_minus: f64, zeta_plus: f64, epsilon: f64) -> Result<Self> {
        if !(zeta_minus.is_finite() && zeta_plus.is_finite()) {
            return Err(Error::InvalidBand("boundaries must be finite".into()));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidBand(format!(
                "epsilon {epsilon} outside [0, 1)"
            )));
        }
        if zeta_minus >= zeta_plus {
            if zeta_minus == zeta_plus {
                return Err(Error::InvalidBand("empty no-trade region".into()));
            }
            return Err(Error::InvalidBand(format!(
                "zeta_minus {zeta_minus} must be below zeta_plus {zeta_plus}"
            )));
        }
        case_of(zeta_minus, zeta_plus, epsilon)?;
        Ok(Band {
            zeta_minus,
            zeta_plus,
            epsilon,
        })
    }

    /// A zero-width band at `zeta`: the frictionless constant-proportion policy.
    ///
    /// Only meaningful as a limit; long-run costs of a point band are infinite unless `epsilon = 0`.
    pub fn point(zeta: f64, epsilon: f64) -> Result<Self> {
        if !zeta.is_finite() {
            return Err(Error::InvalidBand("boundary must be finite".into()));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidBand(format!(
                "epsilon {epsilon} outside [0, 1)"
            )));
        }
        case_of(zeta, zeta, epsilon)?;
        Ok(Band {
            zeta_minus: zeta,
            zeta_plus: zeta,
            epsilon,
        })
    }

    pub fn zeta_minus(&self) -> f64 {
        self.zeta_minus
    }

    pub fn zeta_plus(&self) -> f64 {
        self.zeta_plus
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Buy boundary in risky-weight space.
    pub fn pi_minus(&self) -> f64 {
        pi_of_zeta(self.zeta_minus)
    }

    /// Sell boundary in risky-weight space.
    pub fn pi_plus(&self) -> f64 {
        pi_of_zeta(self.zeta_plus)
    }

    pub fn is_degenerate(&self) -> bool {
        self.zeta_minus == self.zeta_plus
    }

    pub fn case(&self) -> CaseTag {
        if self.zeta_minus > 0.0 {
            CaseTag::Unlevered
        } else {
            CaseTag::Levered
        }
    }

    pub fn contains(&self, zeta: f64) -> bool {
        zeta >= self.zeta_minus && zeta <= self.zeta_plus
    }
}

fn case_of(zeta_minus: f64, zeta_plus: f64, epsilon: f64) -> Result<CaseTag> {
    if zeta_minus > 0.0 {
        return Ok(CaseTag::Unlevered);
    }
    let levered_cap = -1.0 / (1.0 - epsilon);
    if zeta_plus < levered_cap {
        return Ok(CaseTag::Levered);
    }
    let diagnosis = if zeta_minus <= 0.0 && zeta_plus >= 0.0 {
        "band straddles zeta = 0 (short-selling region)"
    } else if zeta_plus >= -1.0 && zeta_minus <= -1.0 {
        "band straddles zeta = -1 (risky weight passes through 1)"
    } else if zeta_plus < 0.0 && zeta_minus > -1.0 {
        "band lies in (-1, 0): negative risky weight"
    } else {
        "levered band must stay below -1/(1-epsilon) to remain solvent at the bid"
    };
    Err(Error::InvalidBand(format!(
        "[{zeta_minus}, {zeta_plus}] is neither unlevered nor levered: {diagnosis}"
    )))
}

/// Band from trading boundaries in risky-weight space, `ζ± = π±/(1-π±)`.
pub fn band_from_pi(pi_minus: f64, pi_plus: f64, epsilon: f64) -> Result<Band> {
    if pi_minus == 1.0 || pi_plus == 1.0 {
        return Err(Error::InvalidBand(
            "risky weight 1 has no risky-safe ratio".into(),
        ));
    }
    if pi_minus == pi_plus {
        return Err(Error::InvalidBand("empty no-trade region".into()));
    }
    if pi_minus > pi_plus {
        return Err(Error::InvalidBand(format!(
            "pi_minus {pi_minus} must be below pi_plus {pi_plus}"
        )));
    }
    if pi_minus < 1.0 && pi_plus > 1.0 {
        return Err(Error::InvalidBand(format!(
            "[{pi_minus}, {pi_plus}] is neither unlevered nor levered: band straddles zeta = -1 (risky weight passes through 1)"
        )));
    }
    Band::new(zeta_of_pi(pi_minus), zeta_of_pi(pi_plus), epsilon)
}
