//! Adaptive Dormand-Prince 5(4) integration with step-restart dense output.
//!
//! Dense values are produced by taking one fresh Runge-Kutta step from the start of the
//! accepted step that contains the query point. That step is shorter than the accepted one,
//! so the local error at the query point is bounded by the controlled tolerance.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; `None` picks a fraction of the interval.
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-12,
            atol: 1e-20,
            h_init: None,
            max_steps: 1_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// One Dormand-Prince step. Returns the fifth-order solution, the error estimate and the
/// derivative at the new point (first-same-as-last).
fn dp_step<const N: usize, F>(
    f: &mut F,
    x: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> ([f64; N], [f64; N], [f64; N])
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let k2 = f(x + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = f(x + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(
        x + C4 * h,
        &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
    );
    let k5 = f(
        x + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        x + h,
        &axpy(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    );
    let y_new = axpy(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = f(x + h, &y_new);
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y_new, err, k7)
}

/// Accepted steps of an integration; evaluate anywhere in the span with [`DenseSolution::eval`].
#[derive(Debug, Clone)]
pub struct DenseSolution<const N: usize> {
    xs: Vec<f64>,
    ys: Vec<[f64; N]>,
    ks: Vec<[f64; N]>,
}

impl<const N: usize> DenseSolution<N> {
    pub fn x_start(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_end(&self) -> f64 {
        *self.xs.last().expect("non-empty")
    }

    pub fn y_end(&self) -> [f64; N] {
        *self.ys.last().expect("non-empty")
    }

    pub fn steps(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn mesh(&self) -> &[f64] {
        &self.xs
    }

    /// Solution at `x`, which must lie within the integrated span.
    pub fn eval<F>(&self, f: &mut F, x: f64) -> Result<[f64; N]>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let (lo, hi) = if self.x_start() <= self.x_end() {
            (self.x_start(), self.x_end())
        } else {
            (self.x_end(), self.x_start())
        };
        let slack = 1e-13 * (hi - lo).abs().max(hi.abs());
        if !(x >= lo - slack && x <= hi + slack) {
            return Err(Error::Domain(format!(
                "{x} outside integrated span [{lo}, {hi}]"
            )));
        }
        let forward = self.x_end() >= self.x_start();
        // index of the last mesh point not past x in the direction of integration
        let idx = if forward {
            self.xs.partition_point(|&t| t <= x)
        } else {
            self.xs.partition_point(|&t| t >= x)
        };
        let i = idx.saturating_sub(1).min(self.xs.len() - 1);
        let h = x - self.xs[i];
        if h == 0.0 {
            return Ok(self.ys[i]);
        }
        let (y, _, _) = dp_step(f, self.xs[i], &self.ys[i], &self.ks[i], h);
        Ok(y)
    }
}

/// Integrate `y' = f(x, y)` from `x0` to `x1` (either direction).
pub fn dopri5<const N: usize, F>(
    f: &mut F,
    x0: f64,
    x1: f64,
    y0: [f64; N],
    opts: &OdeOptions,
) -> Result<DenseSolution<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let span = x1 - x0;
    if !span.is_finite() {
        return Err(Error::Integration("non-finite integration span".into()));
    }
    let mut sol = DenseSolution {
        xs: vec![x0],
        ys: vec![y0],
        ks: vec![f(x0, &y0)],
    };
    if span == 0.0 {
        return Ok(sol);
    }
    let dir = span.signum();
    let h_min = 1e-14 * span.abs().max(x0.abs());
    let mut h = opts.h_init.map(|h| h.abs()).unwrap_or(span.abs() * 1e-3) * dir;
    let mut x = x0;
    let mut y = y0;
    let mut k1 = sol.ks[0];
    let mut rejected_last = false;

    for _ in 0..opts.max_steps {
        if (x1 - x) * dir <= 0.0 {
            return Ok(sol);
        }
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        let (y_new, err, k7) = dp_step(f, x, &y, &k1, h);
        let mut norm = 0.0;
        for i in 0..N {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            norm += (err[i] / sc).powi(2);
        }
        let norm = (norm / N as f64).sqrt();
        if !norm.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            rejected_last = true;
            if h.abs() < h_min {
                return Err(Error::Integration(format!(
                    "non-finite state near x = {x}; step size underflow"
                )));
            }
            continue;
        }
        if norm <= 1.0 {
            x = if (x + h - x1) * dir >= 0.0 { x1 } else { x + h };
            y = y_new;
            k1 = k7;
            sol.xs.push(x);
            sol.ys.push(y);
            sol.ks.push(k1);
            let mut fac = if norm == 0.0 {
                5.0
            } else {
                0.9 * norm.powf(-0.2)
            };
            fac = fac.clamp(0.2, 5.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h *= fac;
            rejected_last = false;
        } else {
            let fac = (0.9 * norm.powf(-0.2)).clamp(0.1, 1.0);
            h *= fac;
            rejected_last = true;
        }
        if h.abs() < h_min {
            return Err(Error::Integration(format!(
                "step size underflow at x = {x}"
            )));
        }
    }
    Err(Error::Integration(format!(
        "maximum number of steps {} exceeded",
        opts.max_steps
    )))
}
