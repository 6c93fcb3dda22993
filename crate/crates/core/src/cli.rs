//! Configuration parsing, command dispatch and report formatting for the `shadowband` binary.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::{
    kappa, kappa_residual, optimal_boundaries_asym, optimal_stats_asym, risk_neutral_boundaries,
    shadow_boundaries_asym, shadow_stats_asym, MeanBracket, VarianceBracket,
};
use crate::compare::{
    proportional_band_sweep, run_frontier, run_gap_study_with, theta_band, FrontierSweep,
    DEFAULT_EPSILON_GRID, DEFAULT_THETAS, GAP_OPTIMAL_SHADOW, GAP_SHADOW_SERIES, GAP_THETA,
};
use crate::error::Error;
use crate::mc::{simulate_policy, swap_demo, SimConfig};
use crate::model::{Band, MarketParams};
use crate::optimal_fbp::solve_optimal_fbp;
use crate::perf::{self, stationary_density};
use crate::shadow_fbp::solve_shadow_system;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_REGIME: i32 = 4;

const DEFAULT_MESH: [u64; 4] = [1_000, 10_000, 100_000, 1_000_000];
const DEFAULT_SWAP_PATHS: usize = 32;
const DEFAULT_HALF_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Boundaries,
    Stats,
    Simulate,
    Frontier,
    Gaps,
    SwapDemo,
    Kappa,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Boundaries => "boundaries",
            Command::Stats => "stats",
            Command::Simulate => "simulate",
            Command::Frontier => "frontier",
            Command::Gaps => "gaps",
            Command::SwapDemo => "swap-demo",
            Command::Kappa => "kappa",
        }
    }

    pub fn parse(s: &str) -> Option<Command> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
    }
}

/// Band chosen for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Optimal,
    Shadow,
}

/// JSON run configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    /// Order of the boundary expansions, 0 to 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Policy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_grid: Option<Vec<f64>>,
    /// Centres of a band sweep for `frontier`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_grid: Option<Vec<f64>>,
    /// Relative half-width of the swept bands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_list: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_neutral: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e)
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numerical(Error::Regime(_)) => EXIT_REGIME,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Numerical(Error::Regime(_)) => "regime",
            CliError::Numerical(_) => "numerical",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

/// A table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Integer(u64),
    Number(f64),
    Text(String),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Cell::Number(v)
        } else {
            Cell::Missing
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::from)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Integer(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Integer(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Integer(v) => v.to_string(),
            // Debug formatting is the shortest string that round-trips.
            Cell::Number(v) => format!("{v:?}"),
            Cell::Text(s) if s.contains([',', '"', '\n', '\r']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Integer(v) => Some(*v as f64),
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }
}

/// Command output: the resolved configuration and a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub command: Command,
    pub config: RunConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Report {
    fn new(command: Command, config: RunConfig, columns: &[&str]) -> Self {
        Report {
            command,
            config,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// CSV with a leading `# config=` comment line and a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let cfg = serde_json::to_string(&self.config).expect("config serializes");
        let _ = writeln!(out, "# command={} config={cfg}", self.command.name());
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn parse_report(text: &str) -> CliResult<Report> {
    let report: Report = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if report.rows.iter().any(|r| r.len() != report.columns.len()) {
        return config_err("row length differs from the header");
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn render(self, report: &Report) -> String {
        match self {
            Format::Csv => report.to_csv(),
            Format::Json => report.to_json(),
        }
    }
}

fn require(v: Option<f64>, name: &str) -> CliResult<f64> {
    v.ok_or_else(|| CliError::Config(format!("missing required key \"{name}\"")))
}

fn market(cfg: &RunConfig, epsilon: f64) -> CliResult<MarketParams> {
    let gamma = require(cfg.gamma, "gamma")?;
    let risk_neutral = cfg.risk_neutral.unwrap_or(false);
    if gamma == 0.0 && !risk_neutral {
        return config_err(
            "gamma = 0 is the risk-neutral case: set \"risk_neutral\": true to use the risk-neutral boundary expansion",
        );
    }
    if risk_neutral && gamma != 0.0 {
        return config_err("\"risk_neutral\": true requires gamma = 0");
    }
    Ok(MarketParams::new(
        require(cfg.mu, "mu")?,
        require(cfg.sigma, "sigma")?,
        cfg.r.unwrap_or(0.0),
        gamma,
        epsilon,
    )?)
}

/// Fills in defaults so the embedded configuration reproduces the run on its own.
pub fn resolve(command: Command, cfg: &RunConfig) -> CliResult<RunConfig> {
    if let Some(c) = cfg.command {
        if c != command {
            return config_err(format!(
                "config is for command \"{}\" but \"{}\" was requested",
                c.name(),
                command.name()
            ));
        }
    }
    let mut out = cfg.clone();
    out.command = Some(command);
    if command == Command::Kappa {
        return Ok(out);
    }
    require(cfg.mu, "mu")?;
    require(cfg.sigma, "sigma")?;
    require(cfg.gamma, "gamma")?;
    out.r = Some(cfg.r.unwrap_or(0.0));
    let uses_grid = matches!(
        command,
        Command::Gaps | Command::Boundaries | Command::Stats
    );
    if command == Command::Gaps {
        if cfg.epsilon.is_some() {
            return config_err(
                "gaps fits exponents over \"epsilon_grid\" (default grid when absent), not a single \"epsilon\"",
            );
        }
        if cfg.epsilon_grid.is_none() {
            out.epsilon_grid = Some(DEFAULT_EPSILON_GRID.to_vec());
        }
    } else if cfg.epsilon.is_none() && cfg.epsilon_grid.is_none() {
        return config_err("missing required key \"epsilon\" (or \"epsilon_grid\")");
    }
    if cfg.epsilon_grid.is_some() && !uses_grid {
        return config_err(format!(
            "\"epsilon_grid\" is not used by \"{}\"",
            command.name()
        ));
    }
    if let Some(grid) = &out.epsilon_grid {
        if grid.is_empty() || grid.iter().any(|e| !(*e >= 0.0 && *e < 1.0)) {
            return config_err("\"epsilon_grid\" must be non-empty with entries in [0, 1)");
        }
    }
    match command {
        Command::Boundaries => {
            out.order = Some(cfg.order.unwrap_or(2));
            if out.order > Some(2) {
                return config_err("\"order\" must be 0, 1 or 2");
            }
        }
        Command::Gaps => {
            out.theta = Some(cfg.theta.clone().unwrap_or_else(|| DEFAULT_THETAS.to_vec()));
        }
        Command::Simulate => {
            let sim = cfg.sim.unwrap_or(SimConfig::new(1_000.0, 1e-3, 0));
            sim.validate()?;
            out.sim = Some(sim);
            out.policy = Some(cfg.policy.unwrap_or_default());
        }
        Command::SwapDemo => {
            out.sim = Some(
                cfg.sim
                    .unwrap_or(SimConfig::new(2.0, 1e-3, 0).with_paths(DEFAULT_SWAP_PATHS)),
            );
            out.mesh_list = Some(
                cfg.mesh_list
                    .clone()
                    .unwrap_or_else(|| DEFAULT_MESH.to_vec()),
            );
        }
        Command::Frontier => match (&cfg.gamma_grid, &cfg.pi_grid) {
            (Some(_), Some(_)) => {
                return config_err("give either \"gamma_grid\" or \"pi_grid\", not both")
            }
            (None, None) => return config_err("frontier needs \"gamma_grid\" or \"pi_grid\""),
            (None, Some(_)) => out.half_width = Some(cfg.half_width.unwrap_or(DEFAULT_HALF_WIDTH)),
            (Some(_), None) => {}
        },
        Command::Stats | Command::Kappa => {}
    }
    Ok(out)
}

fn epsilons(cfg: &RunConfig) -> Vec<f64> {
    match (&cfg.epsilon_grid, cfg.epsilon) {
        (Some(g), _) => g.clone(),
        (None, Some(e)) => vec![e],
        (None, None) => Vec::new(),
    }
}

/// Runs `command` on `cfg` and returns its report.
pub fn run(command: Command, cfg: &RunConfig) -> CliResult<Report> {
    let cfg = resolve(command, cfg)?;
    match command {
        Command::Boundaries => cmd_boundaries(cfg),
        Command::Stats => cmd_stats(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Frontier => cmd_frontier(cfg),
        Command::Gaps => cmd_gaps(cfg),
        Command::SwapDemo => cmd_swap_demo(cfg),
        Command::Kappa => cmd_kappa(cfg),
    }
}

fn band_cells(band: &Band) -> Vec<Cell> {
    vec![
        band.pi_minus().into(),
        band.pi_plus().into(),
        band.zeta_minus().into(),
        band.zeta_plus().into(),
    ]
}

fn pi_cells(lo: f64, hi: f64) -> Vec<Cell> {
    let z = |p: f64| p / (1.0 - p);
    vec![lo.into(), hi.into(), z(lo).into(), z(hi).into()]
}

pub fn cmd_boundaries(cfg: RunConfig) -> CliResult<Report> {
    let mut rep = Report::new(
        Command::Boundaries,
        cfg.clone(),
        &[
            "method",
            "theta",
            "epsilon",
            "pi_minus",
            "pi_plus",
            "zeta_minus",
            "zeta_plus",
            "residual_1",
            "residual_2",
            "iterations",
        ],
    );
    let order = cfg.order.unwrap_or(2);
    for eps in epsilons(&cfg) {
        let p = market(&cfg, eps)?;
        let row = |method: &str,
                   theta: Option<f64>,
                   geom: Vec<Cell>,
                   res: [Option<f64>; 2],
                   it: Option<usize>| {
            let mut r: Vec<Cell> = vec![method.into(), theta.into(), eps.into()];
            r.extend(geom);
            r.push(res[0].into());
            r.push(res[1].into());
            r.push(it.map_or(Cell::Missing, Cell::from));
            r
        };
        if p.gamma == 0.0 {
            let (lo, hi) = risk_neutral_boundaries(&p)?;
            rep.push(row(
                "risk-neutral-asym",
                None,
                pi_cells(lo, hi),
                [None; 2],
                None,
            ));
            continue;
        }
        if eps == 0.0 {
            let pi = p.merton_fraction()?;
            rep.push(row("frictionless", None, pi_cells(pi, pi), [None; 2], None));
            continue;
        }
        let (band, w) = solve_optimal_fbp(&p)?;
        let [a, b] = w.residuals();
        rep.push(row(
            "optimal-exact",
            None,
            band_cells(&band),
            [Some(a), Some(b)],
            Some(w.iterations()),
        ));
        let (lo, hi) = optimal_boundaries_asym(&p, order)?;
        rep.push(row("optimal-asym", None, pi_cells(lo, hi), [None; 2], None));
        let sol = solve_shadow_system(&p)?;
        let shadow = sol.band()?;
        let [a, b] = sol.residuals();
        rep.push(row(
            "shadow-exact",
            None,
            band_cells(&shadow),
            [Some(a), Some(b)],
            Some(sol.iterations()),
        ));
        let (lo, hi) = shadow_boundaries_asym(&p, order)?;
        rep.push(row("shadow-asym", None, pi_cells(lo, hi), [None; 2], None));
        for &theta in cfg.theta.as_deref().unwrap_or(&[]) {
            let b = theta_band(&shadow, &p, theta)?;
            rep.push(row("theta", Some(theta), band_cells(&b), [None; 2], None));
        }
    }
    Ok(rep)
}

pub fn cmd_stats(cfg: RunConfig) -> CliResult<Report> {
    let mut rep = Report::new(
        Command::Stats,
        cfg.clone(),
        &[
            "policy",
            "theta",
            "epsilon",
            "pi_minus",
            "pi_plus",
            "mean",
            "variance",
            "atc",
            "esr",
            "mean_asym",
            "variance_asym",
            "atc_asym",
            "esr_asym",
        ],
    );
    for eps in epsilons(&cfg) {
        let p = market(&cfg, eps)?;
        if p.gamma == 0.0 {
            return config_err("stats needs gamma > 0");
        }
        let mut bands: Vec<(&str, Option<f64>, Band)> = Vec::new();
        if eps == 0.0 {
            let pi = p.merton_fraction()?;
            bands.push(("frictionless", None, Band::point(pi / (1.0 - pi), 0.0)?));
        } else {
            bands.push(("optimal", None, solve_optimal_fbp(&p)?.0));
            let shadow = solve_shadow_system(&p)?.band()?;
            bands.push(("shadow", None, shadow));
            for &theta in cfg.theta.as_deref().unwrap_or(&[]) {
                bands.push(("theta", Some(theta), theta_band(&shadow, &p, theta)?));
            }
        }
        for (name, theta, band) in bands {
            let s = perf::policy_stats(&band, &p)?;
            let series = match name {
                "optimal" | "frictionless" => Some(optimal_stats_asym(&p, MeanBracket::Corrected)?),
                "shadow" => shadow_stats_asym(&p, VarianceBracket::Amended).ok(),
                _ => None,
            };
            let ev = |f: fn(
                &crate::asymptotics::StatsSeries,
            ) -> &crate::asymptotics::SeriesExpansion| {
                Cell::from(series.as_ref().map(|s| f(s).eval(eps)))
            };
            rep.push(vec![
                name.into(),
                theta.into(),
                eps.into(),
                band.pi_minus().into(),
                band.pi_plus().into(),
                s.mean.into(),
                s.variance.into(),
                s.atc.into(),
                s.esr.into(),
                ev(|s| &s.mean),
                ev(|s| &s.variance),
                ev(|s| &s.atc),
                ev(|s| &s.esr),
            ]);
        }
    }
    Ok(rep)
}

pub fn cmd_simulate(cfg: RunConfig) -> CliResult<Report> {
    let eps = require(cfg.epsilon, "epsilon")?;
    let p = market(&cfg, eps)?;
    let sim_cfg = cfg.sim.expect("resolved");
    let band = if eps == 0.0 {
        let pi = p.merton_fraction()?;
        Band::point(pi / (1.0 - pi), 0.0)?
    } else {
        match cfg.policy.unwrap_or_default() {
            Policy::Optimal => solve_optimal_fbp(&p)?.0,
            Policy::Shadow => solve_shadow_system(&p)?.band()?,
        }
    };
    let sim = simulate_policy(&band, &p, &sim_cfg)?;
    let mut rep = Report::new(
        Command::Simulate,
        cfg.clone(),
        &[
            "quantity",
            "lower",
            "upper",
            "estimate",
            "std_error",
            "exact",
            "z_score",
            "seed",
            "n_paths",
        ],
    );
    let seed = Cell::from(sim_cfg.seed);
    let paths = Cell::from(sim_cfg.n_paths);
    let exact = if band.is_degenerate() {
        None
    } else {
        Some(perf::policy_stats(&band, &p)?)
    };
    let mut stat = |name: &str, est: crate::numerics::stats::Estimate, exact: Option<f64>| {
        rep.push(vec![
            name.into(),
            Cell::Missing,
            Cell::Missing,
            est.value.into(),
            est.std_error.into(),
            exact.into(),
            exact.map(|x| est.z_score(x)).into(),
            seed.clone(),
            paths.clone(),
        ]);
    };
    stat("mean", sim.mean_hat, exact.map(|s| s.mean));
    stat("variance", sim.var_hat, exact.map(|s| s.variance));
    stat("atc", sim.atc_hat, exact.map(|s| s.atc));
    stat("buy_rate", sim.buy_rate, None);
    stat("sell_rate", sim.sell_rate, None);
    rep.push(vec![
        "liquidation_margin".into(),
        Cell::Missing,
        Cell::Missing,
        sim.liquidation_margin.into(),
        Cell::Missing,
        Cell::Missing,
        Cell::Missing,
        seed.clone(),
        paths.clone(),
    ]);
    let density = if band.is_degenerate() {
        None
    } else {
        Some(stationary_density(&band, &p)?)
    };
    let h = &sim.occupation_histogram;
    for (i, m) in h.mass.iter().enumerate() {
        let (lo, hi) = (h.edges[i], h.edges[i + 1]);
        let exact = density.as_ref().map(|d| d.mass(lo, hi));
        rep.push(vec![
            "occupation".into(),
            lo.into(),
            hi.into(),
            m.value.into(),
            m.std_error.into(),
            exact.into(),
            exact.map(|x| m.z_score(x)).into(),
            seed.clone(),
            paths.clone(),
        ]);
    }
    Ok(rep)
}

pub fn cmd_frontier(cfg: RunConfig) -> CliResult<Report> {
    let eps = require(cfg.epsilon, "epsilon")?;
    let p = market(&cfg, eps)?;
    let sweep = match (&cfg.gamma_grid, &cfg.pi_grid) {
        (Some(g), _) => FrontierSweep::Gamma(g.clone()),
        (None, Some(c)) => FrontierSweep::Bands(proportional_band_sweep(
            c,
            cfg.half_width.unwrap_or(DEFAULT_HALF_WIDTH),
            eps,
        )?),
        (None, None) => unreachable!("resolved config has a sweep"),
    };
    let rows = run_frontier(&p, &sweep)?;
    let mut rep = Report::new(
        Command::Frontier,
        cfg.clone(),
        &[
            "gamma",
            "pi_minus",
            "pi_plus",
            "mean",
            "sigma_hat",
            "atc",
            "net_drift",
        ],
    );
    for r in rows {
        rep.push(vec![
            r.gamma.into(),
            r.pi_minus.into(),
            r.pi_plus.into(),
            r.mean.into(),
            r.sigma_hat.into(),
            r.atc.into(),
            r.net_drift.into(),
        ]);
    }
    Ok(rep)
}

pub fn cmd_gaps(cfg: RunConfig) -> CliResult<Report> {
    let grid = epsilons(&cfg);
    let thetas = cfg.theta.clone().unwrap_or_else(|| DEFAULT_THETAS.to_vec());
    let p = market(&cfg, grid[0])?;
    let study = run_gap_study_with(&p, &grid, &thetas)?;
    let gap_names = [GAP_OPTIMAL_SHADOW, GAP_THETA, GAP_SHADOW_SERIES];
    let mut columns: Vec<String> = [
        "epsilon",
        "optimal_pi_minus",
        "optimal_pi_plus",
        "shadow_pi_minus",
        "shadow_pi_plus",
        "esr_optimal",
        "esr_shadow",
        "esr_optimal_asym",
        "esr_shadow_asym",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for t in &thetas {
        columns.push(format!("esr_theta_{t}"));
    }
    for g in gap_names {
        columns.push(format!("gap_{g}"));
    }
    for g in gap_names {
        columns.push(format!("exponent_{g}"));
        columns.push(format!("exponent_{g}_ci_low"));
        columns.push(format!("exponent_{g}_ci_high"));
    }
    columns.push("failures".into());
    let mut rep = Report {
        command: Command::Gaps,
        config: cfg.clone(),
        columns,
        rows: Vec::new(),
    };
    for row in &study.rows {
        let mut cells: Vec<Cell> = vec![row.epsilon.into()];
        for b in [&row.optimal, &row.shadow] {
            cells.push(b.map(|b| b.pi_minus()).into());
            cells.push(b.map(|b| b.pi_plus()).into());
        }
        cells.extend([
            row.esr_optimal.into(),
            row.esr_shadow.into(),
            row.esr_optimal_asym.into(),
            row.esr_shadow_asym.into(),
        ]);
        for e in &row.thetas {
            cells.push(e.esr.into());
        }
        for g in gap_names {
            cells.push(row.gaps.get(g).copied().into());
        }
        for g in gap_names {
            let fit = study.exponent(g);
            cells.push(fit.map(|f| f.slope).into());
            cells.push(fit.map(|f| f.slope_ci.0).into());
            cells.push(fit.map(|f| f.slope_ci.1).into());
        }
        cells.push(if row.failures.is_empty() {
            Cell::Missing
        } else {
            Cell::Text(row.failures.join("; "))
        });
        rep.push(cells);
    }
    Ok(rep)
}

pub fn cmd_swap_demo(cfg: RunConfig) -> CliResult<Report> {
    let eps = require(cfg.epsilon, "epsilon")?;
    let p = market(&cfg, eps)?;
    let mesh = cfg.mesh_list.clone().expect("resolved");
    let res = swap_demo(&p, &mesh, &cfg.sim.expect("resolved"))?;
    let mut rep = Report::new(
        Command::SwapDemo,
        cfg.clone(),
        &[
            "n",
            "cost",
            "std_error",
            "fitted_growth_exponent",
            "seed",
            "n_paths",
        ],
    );
    for (i, &n) in res.mesh_sizes.iter().enumerate() {
        rep.push(vec![
            n.into(),
            res.costs[i].into(),
            res.cost_std_errors[i].into(),
            res.fitted_growth_exponent.into(),
            res.seed.into(),
            res.n_paths.into(),
        ]);
    }
    Ok(rep)
}

pub fn cmd_kappa(cfg: RunConfig) -> CliResult<Report> {
    let k = kappa();
    let mut rep = Report::new(Command::Kappa, cfg, &["kappa", "residual"]);
    rep.push(vec![k.into(), kappa_residual(k).into()]);
    Ok(rep)
}
