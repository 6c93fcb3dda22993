//! Experiment harness: exact-versus-asymptotic gap studies, the sign flip of the midpoint
//! shift, and transaction-cost efficient frontiers.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{optimal_boundary_series, theta_esr_asym, theta_shift_coefficient};
use crate::error::{Error, Result};
use crate::model::{band_from_pi, Band, MarketParams};
use crate::numerics::fit::{loglog_fit, LinearFit};
use crate::optimal_fbp::solve_optimal_fbp;
use crate::perf::{self, esr_decomposition, esr_gap};
use crate::shadow_fbp::solve_shadow_system;

/// Spread grid used when none is given.
pub const DEFAULT_EPSILON_GRID: [f64; 7] = [1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
/// Perturbation parameters evaluated by default.
pub const DEFAULT_THETAS: [f64; 3] = [-1.0, 0.0, 1.0];

/// Gap between the exact optimal and exact shadow ESR.
pub const GAP_OPTIMAL_SHADOW: &str = "optimal_minus_shadow";
/// Gap between the `θ = -1` and `θ = 1` ESR.
pub const GAP_THETA: &str = "theta_minus_one_minus_theta_one";
/// Exact shadow ESR minus the ESR series through order `ε`.
pub const GAP_SHADOW_SERIES: &str = "shadow_series_residual";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEntry {
    pub theta: f64,
    pub band: Option<Band>,
    pub esr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub epsilon: f64,
    pub optimal: Option<Band>,
    pub shadow: Option<Band>,
    pub thetas: Vec<ThetaEntry>,
    pub esr_optimal: Option<f64>,
    pub esr_shadow: Option<f64>,
    /// ESR series through order `ε`.
    pub esr_optimal_asym: Option<f64>,
    /// Shadow ESR series through order `ε^{4/3}`.
    pub esr_shadow_asym: Option<f64>,
    pub gaps: BTreeMap<String, f64>,
    /// Messages of the steps that failed at this spread.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub slope_se: f64,
    pub slope_ci: (f64, f64),
    pub points: usize,
}

impl From<LinearFit> for ExponentFit {
    fn from(f: LinearFit) -> Self {
        ExponentFit {
            slope: f.slope,
            slope_se: f.slope_se,
            slope_ci: f.slope_ci,
            points: f.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub params: MarketParams,
    pub epsilon_grid: Vec<f64>,
    pub rows: Vec<GapRow>,
    /// Log-log slope of each gap against `ε`, over the rows where it is available.
    pub fitted_exponents: BTreeMap<String, ExponentFit>,
}

impl ComparisonReport {
    pub fn exponent(&self, name: &str) -> Option<&ExponentFit> {
        self.fitted_exponents.get(name)
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(|r| r.failures.is_empty())
    }
}

/// Shadow band shifted by the `θ`-perturbation `(θ - 1)·c·ε^{2/3}` on both edges.
pub fn theta_band(shadow: &Band, params: &MarketParams, theta: f64) -> Result<Band> {
    let shift = (theta - 1.0) * theta_shift_coefficient(params)? * params.epsilon.powf(2.0 / 3.0);
    if shift == 0.0 {
        return Ok(*shadow);
    }
    band_from_pi(
        shadow.pi_minus() + shift,
        shadow.pi_plus() + shift,
        params.epsilon,
    )
}

fn gap_row(params: &MarketParams, thetas: &[f64]) -> GapRow {
    let eps = params.epsilon;
    let mut failures = Vec::new();
    let mut note = |what: &str, e: &Error| failures.push(format!("{what}: {e}"));

    let optimal = match solve_optimal_fbp(params) {
        Ok((b, _)) => Some(b),
        Err(e) => {
            note("optimal", &e);
            None
        }
    };
    let shadow = match solve_shadow_system(params).and_then(|s| s.band()) {
        Ok(b) => Some(b),
        Err(e) => {
            note("shadow", &e);
            None
        }
    };
    let mut esr_of = |what: &str, band: Option<&Band>| -> Option<f64> {
        match perf::esr(band?, params) {
            Ok(v) => Some(v),
            Err(e) => {
                note(what, &e);
                None
            }
        }
    };
    let esr_optimal = esr_of("esr optimal", optimal.as_ref());
    let esr_shadow = esr_of("esr shadow", shadow.as_ref());

    let mut entries = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let band = match shadow.as_ref().map(|s| theta_band(s, params, theta)) {
            Some(Ok(b)) => Some(b),
            Some(Err(e)) => {
                failures.push(format!("theta {theta}: {e}"));
                None
            }
            None => None,
        };
        let esr = match band.as_ref().map(|b| perf::esr(b, params)) {
            Some(Ok(v)) => Some(v),
            Some(Err(e)) => {
                failures.push(format!("esr theta {theta}: {e}"));
                None
            }
            None => None,
        };
        entries.push(ThetaEntry { theta, band, esr });
    }

    let esr_optimal_asym = crate::asymptotics::optimal_esr_asym(params)
        .map(|s| s.eval(eps))
        .ok();
    let esr_shadow_asym = theta_esr_asym(params, 1.0).map(|s| s.eval(eps)).ok();

    let mut gaps = BTreeMap::new();
    if let (Some(o), Some(s)) = (&optimal, &shadow) {
        match esr_gap(o, s, params) {
            Ok(g) => {
                gaps.insert(GAP_OPTIMAL_SHADOW.to_string(), g);
            }
            Err(e) => failures.push(format!("gap optimal-shadow: {e}")),
        }
    }
    let theta_of = |t: f64| entries.iter().find(|e| e.theta == t).and_then(|e| e.band);
    if let (Some(m), Some(p)) = (theta_of(-1.0), theta_of(1.0)) {
        match esr_gap(&m, &p, params) {
            Ok(g) => {
                gaps.insert(GAP_THETA.to_string(), g);
            }
            Err(e) => failures.push(format!("gap theta: {e}")),
        }
    }
    if let (Some(s), Some(series)) = (&shadow, esr_optimal_asym) {
        // Subtract the series from the loss form so the frictionless part cancels exactly.
        if let (Ok(d), Ok(f)) = (esr_decomposition(s, params), params.frictionless_esr()) {
            let series_loss = f - series;
            gaps.insert(
                GAP_SHADOW_SERIES.to_string(),
                (series_loss - d.loss) - d.atc,
            );
        }
    }

    GapRow {
        epsilon: eps,
        optimal,
        shadow,
        thetas: entries,
        esr_optimal,
        esr_shadow,
        esr_optimal_asym,
        esr_shadow_asym,
        gaps,
        failures,
    }
}

/// Exact and perturbed bands with their ESR gaps over `epsilon_grid`, for `θ ∈ {-1, 0, 1}`.
pub fn run_gap_study(params: &MarketParams, epsilon_grid: &[f64]) -> Result<ComparisonReport> {
    run_gap_study_with(params, epsilon_grid, &DEFAULT_THETAS)
}

pub fn run_gap_study_with(
    params: &MarketParams,
    epsilon_grid: &[f64],
    thetas: &[f64],
) -> Result<ComparisonReport> {
    params.validate()?;
    if params.gamma == 0.0 {
        return Err(Error::RiskNeutral);
    }
    if params.gamma == 1.0 {
        return Err(Error::Singular(
            "gap study needs gamma != 1: the shadow policy is then optimal".into(),
        ));
    }
    if epsilon_grid.is_empty() || epsilon_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidParams(
            "epsilon grid must be non-empty with entries in (0, 1)".into(),
        ));
    }
    let points: Vec<MarketParams> = epsilon_grid
        .iter()
        .map(|&e| params.with_epsilon(e))
        .collect::<Result<_>>()?;
    let rows: Vec<GapRow> = points.par_iter().map(|p| gap_row(p, thetas)).collect();

    let mut fitted_exponents = BTreeMap::new();
    for name in [GAP_OPTIMAL_SHADOW, GAP_THETA, GAP_SHADOW_SERIES] {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter_map(|r| r.gaps.get(name).map(|&g| (r.epsilon, g)))
            .filter(|&(_, g)| g != 0.0 && g.is_finite())
            .unzip();
        if xs.len() >= 3 {
            if let Ok(fit) = loglog_fit(&xs, &ys) {
                fitted_exponents.insert(name.to_string(), fit.into());
            }
        }
    }
    Ok(ComparisonReport {
        params: *params,
        epsilon_grid: epsilon_grid.to_vec(),
        rows,
        fitted_exponents,
    })
}

/// Midpoint shift `(π- + π+)/2 - π*` of the optimal and shadow bands, scaled by `ε^{2/3}`
/// and Richardson-extrapolated from `ε` and `ε/8`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignFlip {
    pub gamma: f64,
    pub epsilon: f64,
    pub optimal: f64,
    pub shadow: f64,
    /// Second-order coefficient of the optimal boundary series.
    pub predicted: f64,
}

impl SignFlip {
    pub fn opposite_signs(&self) -> bool {
        self.optimal * self.shadow < 0.0
    }

    /// `| |a| - |b| | / max(|a|, |b|)`.
    pub fn magnitude_mismatch(&self) -> f64 {
        let (a, b) = (self.optimal.abs(), self.shadow.abs());
        (a - b).abs() / a.max(b)
    }
}

pub fn sign_flip(params: &MarketParams) -> Result<SignFlip> {
    let pi = params.merton_fraction()?;
    let eps = params.epsilon;
    if !(eps > 0.0) {
        return Err(Error::InvalidParams(
            "sign flip study needs epsilon > 0".into(),
        ));
    }
    let scaled =
        |band: &Band, e: f64| (0.5 * (band.pi_minus() + band.pi_plus()) - pi) / e.powf(2.0 / 3.0);
    let mut opt = [0.0; 2];
    let mut sh = [0.0; 2];
    for (i, e) in [eps, eps / 8.0].into_iter().enumerate() {
        let p = params.with_epsilon(e)?;
        opt[i] = scaled(&solve_optimal_fbp(&p)?.0, e);
        sh[i] = scaled(&solve_shadow_system(&p)?.band()?, e);
    }
    Ok(SignFlip {
        gamma: params.gamma,
        epsilon: eps,
        optimal: 2.0 * opt[1] - opt[0],
        shadow: 2.0 * sh[1] - sh[0],
        predicted: optimal_boundary_series(params, 2)?.lower.coefficient(2),
    })
}

/// How the bands of a frontier are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontierSweep {
    /// Exact optimal band for each risk aversion.
    Gamma(Vec<f64>),
    /// Prescribed bands.
    Bands(Vec<Band>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    /// Risk aversion that produced the band, when sweeping over it.
    pub gamma: Option<f64>,
    pub pi_minus: f64,
    pub pi_plus: f64,
    pub mean: f64,
    pub sigma_hat: f64,
    pub atc: f64,
    /// `m̂ - r - ATC`.
    pub net_drift: f64,
}

fn frontier_row(band: &Band, params: &MarketParams, gamma: Option<f64>) -> Result<FrontierRow> {
    let mean = perf::long_run_mean(band, params)?;
    let variance = perf::long_run_variance(band, params)?;
    let atc = perf::avg_transaction_costs(band, params)?;
    Ok(FrontierRow {
        gamma,
        pi_minus: band.pi_minus(),
        pi_plus: band.pi_plus(),
        mean,
        sigma_hat: variance.sqrt(),
        atc,
        net_drift: mean - params.r - atc,
    })
}

/// Long-run volatility and net drift of each band in the sweep, in sweep order.
pub fn run_frontier(params: &MarketParams, sweep: &FrontierSweep) -> Result<Vec<FrontierRow>> {
    params.validate()?;
    match sweep {
        FrontierSweep::Gamma(grid) => grid
            .par_iter()
            .map(|&g| {
                let p = params.with_gamma(g)?;
                let band = if p.epsilon == 0.0 {
                    let pi = p.merton_fraction()?;
                    Band::point(pi / (1.0 - pi), 0.0)?
                } else {
                    solve_optimal_fbp(&p)?.0
                };
                frontier_row(&band, &p, Some(g))
            })
            .collect(),
        FrontierSweep::Bands(bands) => bands
            .par_iter()
            .map(|b| frontier_row(b, params, None))
            .collect(),
    }
}

/// Bands `[c(1 - h), c(1 + h)]` around each centre `c`, skipping those that contain `π = 1`
/// or are insolvent at the bid.
pub fn proportional_band_sweep(
    centres: &[f64],
    half_width: f64,
    epsilon: f64,
) -> Result<Vec<Band>> {
    if !(0.0..1.0).contains(&half_width) {
        return Err(Error::InvalidParams(format!(
            "relative half-width must lie in [0, 1), got {half_width}"
        )));
    }
    centres
        .iter()
        .filter_map(|&c| band_from_pi(c * (1.0 - half_width), c * (1.0 + half_width), epsilon).ok())
        .map(Ok)
        .collect()
}
