//! Monte Carlo simulation of control limit policies.
//!
//! The ratio is simulated through `x = ln|ζ|`, which is an arithmetic Brownian motion with
//! drift `μ - σ²/2` between trades. Steps that leave the band are mirrored (or projected) back
//! into it and the displacement is booked as trade volume at that edge.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, MarketParams};
use crate::numerics::fit::{loglog_fit, LinearFit};
use crate::numerics::stats::{Estimate, RunningStats};

/// Batches used for the batch-means standard errors.
pub const MIN_BATCHES: usize = 30;
/// Bins of the occupation histogram.
pub const HISTOGRAM_BINS: usize = 50;
/// Largest number of time steps a single path may take.
pub const STEP_BUDGET: u64 = 10_000_000_000;
/// Maturity of the variance swap hedge.
pub const SWAP_MATURITY: f64 = 2.0;

const LIQUIDATION_MARKUP: f64 = 1.01;

/// How a step that leaves the band is brought back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reflection {
    /// Reflect the overshoot about the edge. Unbiased for the edge occupation and local time
    /// of driftless motion.
    #[default]
    Mirror,
    /// Clamp onto the edge. Leaves an `O(σ√dt)` atom at the edges.
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Years per path.
    pub horizon: f64,
    /// Time step in years.
    pub dt: f64,
    pub seed: u64,
    pub n_paths: usize,
    /// Years discarded at the start of each path.
    pub burn_in: f64,
    #[serde(default)]
    pub reflection: Reflection,
}

impl SimConfig {
    /// A single path with the default 5% burn-in.
    pub fn new(horizon: f64, dt: f64, seed: u64) -> Self {
        SimConfig {
            horizon,
            dt,
            seed,
            n_paths: 1,
            burn_in: 0.05 * horizon,
            reflection: Reflection::Mirror,
        }
    }

    pub fn with_paths(mut self, n_paths: usize) -> Self {
        self.n_paths = n_paths;
        self
    }

    pub fn with_reflection(mut self, reflection: Reflection) -> Self {
        self.reflection = reflection;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.horizon) {
            return bad(format!(
                "burn_in must lie in [0, horizon), got {}",
                self.burn_in
            ));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        let steps = self.horizon / self.dt;
        if steps > STEP_BUDGET as f64 {
            return bad(format!(
                "horizon/dt = {steps:.3e} exceeds the step budget {STEP_BUDGET}"
            ));
        }
        Ok(())
    }

    fn total_steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    fn burn_steps(&self) -> u64 {
        (self.burn_in / self.dt).round() as u64
    }
}

/// Occupation frequencies of the ratio on equal-width bins of the band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationHistogram {
    /// `bins + 1` edges in the ratio coordinate.
    pub edges: Vec<f64>,
    /// Fraction of time spent in each bin.
    pub mass: Vec<Estimate>,
}

impl OccupationHistogram {
    /// Largest bin error `|mass - reference|` and the largest per-bin z-score.
    pub fn sup_distance<F: FnMut(f64, f64) -> f64>(&self, mut reference: F) -> (f64, f64) {
        let mut sup = 0.0f64;
        let mut zmax = 0.0f64;
        for (i, m) in self.mass.iter().enumerate() {
            let p = reference(self.edges[i], self.edges[i + 1]);
            let d = (m.value - p).abs();
            sup = sup.max(d);
            if m.std_error > 0.0 {
                zmax = zmax.max(d / m.std_error);
            } else if d > 0.0 {
                zmax = f64::INFINITY;
            }
        }
        (sup, zmax)
    }

    /// Largest batch standard error over the bins.
    pub fn max_std_error(&self) -> f64 {
        self.mass.iter().map(|m| m.std_error).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub band: Band,
    /// Long-run mean return `r + μ·avg π`.
    pub mean_hat: Estimate,
    /// Realized quadratic variation rate of `π σ dB`.
    pub var_hat: Estimate,
    /// Sell-side spread losses per year.
    pub atc_hat: Estimate,
    /// Normalized buy volume per year.
    pub buy_rate: Estimate,
    /// Normalized sell volume per year.
    pub sell_rate: Estimate,
    /// Cumulative normalized buy volume after burn-in, summed over paths.
    pub local_time_up: f64,
    /// Cumulative normalized sell volume after burn-in, summed over paths.
    pub local_time_down: f64,
    pub occupation_histogram: OccupationHistogram,
    /// Smallest liquidation value per unit wealth seen, at spread `1.01 ε`.
    pub liquidation_margin: f64,
    pub steps_per_path: u64,
    pub batches: usize,
}

impl SimResult {
    pub fn esr_hat(&self, gamma: f64) -> f64 {
        self.mean_hat.value - 0.5 * gamma * self.var_hat.value - self.atc_hat.value
    }
}

#[derive(Debug, Clone, Default)]
struct BatchTally {
    time: f64,
    pi_dt: f64,
    qv: f64,
    buy: f64,
    sell: f64,
    hist: Vec<f64>,
}

struct PathTally {
    batches: Vec<BatchTally>,
    x_min: f64,
    x_max: f64,
}

struct Geometry {
    sign: f64,
    x_lo: f64,
    x_hi: f64,
    zeta_lo: f64,
    bin_width: f64,
    buy_den: f64,
    sell_den: f64,
    buy_at_lo: bool,
}

impl Geometry {
    fn new(band: &Band) -> Self {
        let zm = band.zeta_minus();
        let zp = band.zeta_plus();
        let k = 1.0 - band.epsilon();
        let levered = zp < 0.0;
        let (sign, x_lo, x_hi) = if levered {
            (-1.0, (-zp).ln(), (-zm).ln())
        } else {
            (1.0, zm.ln(), zp.ln())
        };
        Geometry {
            sign,
            x_lo,
            x_hi,
            zeta_lo: zm,
            bin_width: (zp - zm) / HISTOGRAM_BINS as f64,
            buy_den: 1.0 + zm,
            sell_den: 1.0 + k * zp,
            buy_at_lo: !levered,
        }
    }
}

fn simulate_path(
    geo: &Geometry,
    params: &MarketParams,
    config: &SimConfig,
    start: f64,
    path: u64,
    batches: usize,
) -> Result<PathTally> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(path);
    let dt = config.dt;
    let sigma = params.sigma;
    let drift = (params.mu - 0.5 * sigma * sigma) * dt;
    let vol = sigma * dt.sqrt();
    let s2dt = sigma * sigma * dt;
    let width = geo.x_hi - geo.x_lo;
    let mirror = config.reflection == Reflection::Mirror && width > 0.0;
    let total = config.total_steps();
    let burn = config.burn_steps();
    let measured = total - burn;
    let with_hist = geo.bin_width > 0.0;

    let mut tallies = vec![
        BatchTally {
            hist: vec![0.0; if with_hist { HISTOGRAM_BINS } else { 0 }],
            ..BatchTally::default()
        };
        batches
    ];
    let mut x = start.clamp(geo.x_lo, geo.x_hi);
    let mut x_min = x;
    let mut x_max = x;

    for i in 0..total {
        let zeta = geo.sign * x.exp();
        let pi = zeta / (1.0 + zeta);
        let z: f64 = StandardNormal.sample(&mut rng);
        let raw = x + drift + vol * z;
        let next = if raw > geo.x_hi {
            if mirror {
                2.0 * geo.x_hi - raw
            } else {
                geo.x_hi
            }
        } else if raw < geo.x_lo {
            if mirror {
                2.0 * geo.x_lo - raw
            } else {
                geo.x_lo
            }
        } else {
            raw
        };
        if !(next >= geo.x_lo && next <= geo.x_hi) {
            return Err(Error::Scheme(format!(
                "step {i} to {raw:.6e} crosses the whole band [{:.6e}, {:.6e}] of width {width:.3e}; reduce dt",
                geo.x_lo, geo.x_hi
            )));
        }
        let push = next - raw;
        if i >= burn {
            let b = (((i - burn) as u128 * batches as u128) / measured as u128) as usize;
            let t = &mut tallies[b];
            t.time += dt;
            t.pi_dt += pi * dt;
            t.qv += pi * pi * s2dt * z * z;
            if push != 0.0 {
                let at_lo = push > 0.0;
                if at_lo == geo.buy_at_lo {
                    t.buy += push / geo.buy_den;
                } else {
                    t.sell += -push / geo.sell_den;
                }
            }
            if with_hist {
                let j = ((zeta - geo.zeta_lo) / geo.bin_width) as usize;
                t.hist[j.min(HISTOGRAM_BINS - 1)] += dt;
            }
            x_min = x_min.min(next);
            x_max = x_max.max(next);
        }
        x = next;
    }
    Ok(PathTally {
        batches: tallies,
        x_min,
        x_max,
    })
}

/// Simulates the policy that reflects the ratio at the edges of `band`.
pub fn simulate_policy(
    band: &Band,
    params: &MarketParams,
    config: &SimConfig,
) -> Result<SimResult> {
    params.validate()?;
    config.validate()?;
    if (band.epsilon() - params.epsilon).abs() > 0.0 {
        return Err(Error::InvalidBand(format!(
            "band spread {} differs from market spread {}",
            band.epsilon(),
            params.epsilon
        )));
    }
    let per_path = MIN_BATCHES.div_ceil(config.n_paths);
    let measured = config.total_steps() - config.burn_steps();
    if measured < per_path as u64 {
        return Err(Error::InvalidParams(format!(
            "{measured} measured steps cannot fill {per_path} batches"
        )));
    }
    let geo = Geometry::new(band);
    let zeta_star = params
        .merton_fraction()
        .map(|p| p / (1.0 - p))
        .unwrap_or(f64::NAN);
    let start = if zeta_star.is_finite() && band.contains(zeta_star) {
        zeta_star.abs().ln()
    } else {
        0.5 * (geo.x_lo + geo.x_hi)
    };

    let paths: Vec<PathTally> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|p| simulate_path(&geo, params, config, start, p, per_path))
        .collect::<Result<_>>()?;

    let eps = params.epsilon;
    let pi_plus = band.pi_plus();
    let mut mean = Vec::new();
    let mut var = Vec::new();
    let mut atc = Vec::new();
    let mut buy = Vec::new();
    let mut sell = Vec::new();
    let with_hist = geo.bin_width > 0.0;
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); if with_hist { HISTOGRAM_BINS } else { 0 }];
    let mut lt_up = 0.0;
    let mut lt_down = 0.0;
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for p in &paths {
        x_min = x_min.min(p.x_min);
        x_max = x_max.max(p.x_max);
        for b in &p.batches {
            mean.push(params.r + params.mu * b.pi_dt / b.time);
            var.push(b.qv / b.time);
            atc.push(eps * pi_plus * b.sell / b.time);
            buy.push(b.buy / b.time);
            sell.push(b.sell / b.time);
            lt_up += b.buy;
            lt_down += b.sell;
            for (j, h) in b.hist.iter().enumerate() {
                bins[j].push(h / b.time);
            }
        }
    }

    let edges = if with_hist {
        (0..=HISTOGRAM_BINS)
            .map(|j| geo.zeta_lo + geo.bin_width * j as f64)
            .collect()
    } else {
        Vec::new()
    };
    let eps_liq = (LIQUIDATION_MARKUP * eps).min(1.0);
    let liquidation = |x: f64| {
        let zeta = geo.sign * x.exp();
        (1.0 + (1.0 - eps_liq) * zeta) / (1.0 + zeta)
    };

    Ok(SimResult {
        config: *config,
        band: *band,
        mean_hat: Estimate::from_batches(&mean),
        var_hat: Estimate::from_batches(&var),
        atc_hat: Estimate::from_batches(&atc),
        buy_rate: Estimate::from_batches(&buy),
        sell_rate: Estimate::from_batches(&sell),
        local_time_up: lt_up,
        local_time_down: lt_down,
        occupation_histogram: OccupationHistogram {
            edges,
            mass: bins.iter().map(|b| Estimate::from_batches(b)).collect(),
        },
        liquidation_margin: liquidation(x_min).min(liquidation(x_max)),
        steps_per_path: config.total_steps(),
        batches: mean.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapDemoResult {
    pub mesh_sizes: Vec<u64>,
    /// Average total cost `C_N` over the simulated paths.
    pub costs: Vec<f64>,
    pub cost_std_errors: Vec<f64>,
    pub fitted_growth_exponent: f64,
    pub fit: LinearFit,
    pub seed: u64,
    pub n_paths: usize,
}

/// Total spread cost of rebalancing a `1/(ε S)` share position on `N` equal steps over two years.
pub fn swap_demo(
    params: &MarketParams,
    mesh_list: &[u64],
    config: &SimConfig,
) -> Result<SwapDemoResult> {
    params.validate()?;
    if mesh_list.len() < 2 {
        return Err(Error::InvalidParams(
            "swap demo needs at least two mesh sizes".into(),
        ));
    }
    if mesh_list[0] == 0 || mesh_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams(
            "mesh sizes must be positive and increasing".into(),
        ));
    }
    if config.n_paths < 2 {
        return Err(Error::InvalidParams(
            "swap demo needs at least two paths for error bars".into(),
        ));
    }
    let sigma = params.sigma;
    let mut costs = Vec::with_capacity(mesh_list.len());
    let mut errors = Vec::with_capacity(mesh_list.len());
    for (m, &n) in mesh_list.iter().enumerate() {
        let step = SWAP_MATURITY / n as f64;
        let drift = (params.mu - 0.5 * sigma * sigma) * step;
        let vol = sigma * step.sqrt();
        let samples: Vec<f64> = (0..config.n_paths as u64)
            .into_par_iter()
            .map(|p| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(((m as u64) << 32) | p);
                let mut c = 0.0;
                for _ in 0..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c += (drift + vol * z).exp_m1().max(0.0);
                }
                c
            })
            .collect();
        let mut s = RunningStats::new();
        for c in samples {
            s.push(c);
        }
        costs.push(s.mean());
        errors.push(s.std_error());
    }
    let xs: Vec<f64> = mesh_list.iter().map(|&n| n as f64).collect();
    let fit = loglog_fit(&xs, &costs)?;
    Ok(SwapDemoResult {
        mesh_sizes: mesh_list.to_vec(),
        costs,
        cost_std_errors: errors,
        fitted_growth_exponent: fit.slope,
        fit,
        seed: config.seed,
        n_paths: config.n_paths,
    })
}
