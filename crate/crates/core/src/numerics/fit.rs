//! Ordinary least squares for convergence-rate estimation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    /// 95% confidence interval for the slope.
    pub slope_ci: (f64, f64),
    pub n: usize,
}

fn t_quantile(dof: usize) -> f64 {
    if dof == 0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(f64::INFINITY)
}

/// Fit `y = intercept + slope·x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::Domain("x and y lengths differ".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::Domain(
            "at least two points are needed for a fit".into(),
        ));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_se, intercept_se) = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        let s2 = rss / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let t = t_quantile(n.saturating_sub(2));
    Ok(LinearFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        slope_ci: (slope - t * slope_se, slope + t * slope_se),
        n,
    })
}

/// Fit `log|y| = intercept + slope·log x`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive abscissae".into()));
    }
    if ys.iter().any(|&y| y == 0.0 || !y.is_finite()) {
        return Err(Error::Domain(
            "log-log fit needs nonzero finite ordinates".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    linear_fit(&lx, &ly)
}
