//! Scalar bracketing and damped two-dimensional Newton iteration.

use crate::error::{Error, Result};

/// Brent's method on a sign-changing bracket `[a, b]`.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Domain(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::convergence("Brent iteration", max_iter, &[b], &[fb]))
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Stop as soon as the max-norm residual is below this.
    pub tol: f64,
    /// Accept a stagnated iterate whose residual is below this.
    pub accept: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-15,
            accept: 1e-12,
            max_iter: 100,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOutcome {
    pub x: [f64; 2],
    pub residual: [f64; 2],
    pub iterations: usize,
}

fn norm(r: &[f64; 2]) -> f64 {
    r[0].abs().max(r[1].abs())
}

/// Newton's method for `F(x) = 0` in two unknowns with step halving on the max-norm
/// residual. `system` returns the residual and the Jacobian `J[i][j] = ∂F_i/∂x_j`; an
/// `Err` at a trial point counts as a failed step.
pub fn damped_newton2<F>(mut system: F, x0: [f64; 2], opts: &NewtonOptions) -> Result<NewtonOutcome>
where
    F: FnMut([f64; 2]) -> Result<([f64; 2], [[f64; 2]; 2])>,
{
    let mut x = x0;
    let (mut r, mut jac) = system(x)?;
    for it in 0..opts.max_iter {
        let rn = norm(&r);
        if rn <= opts.tol {
            return Ok(NewtonOutcome {
                x,
                residual: r,
                iterations: it,
            });
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::convergence("singular Jacobian", it, &x, &r));
        }
        let dx = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = [x[0] + lambda * dx[0], x[1] + lambda * dx[1]];
            if let Ok((rt, jt)) = system(trial) {
                if rt.iter().all(|v| v.is_finite()) && norm(&rt) < rn {
                    accepted = Some((trial, rt, jt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((xt, rt, jt)) => {
                x = xt;
                r = rt;
                jac = jt;
            }
            None if rn <= opts.accept => {
                return Ok(NewtonOutcome {
                    x,
                    residual: r,
                    iterations: it,
                });
            }
            None => {
                return Err(Error::convergence("line search stalled", it, &x, &r));
            }
        }
    }
    if norm(&r) <= opts.accept {
        return Ok(NewtonOutcome {
            x,
            residual: r,
            iterations: opts.max_iter,
        });
    }
    Err(Error::convergence("iteration limit", opts.max_iter, &x, &r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cube_root() {
        let x = brent(|x| x * x * x - 2.0, 0.0, 2.0, 1e-15, 200).unwrap();
        assert!((x - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn brent_rejects_unbracketed() {
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_err());
    }

    #[test]
    fn newton_solves_circle_line() {
        // x² + y² = 4, x = y
        let out = damped_newton2(
            |v| {
                Ok((
                    [v[0] * v[0] + v[1] * v[1] - 4.0, v[0] - v[1]],
                    [[2.0 * v[0], 2.0 * v[1]], [1.0, -1.0]],
                ))
            },
            [3.0, 0.5],
            &NewtonOptions::default(),
        )
        .unwrap();
        let s = 2f64.sqrt();
        assert!((out.x[0] - s).abs() < 1e-14 && (out.x[1] - s).abs() < 1e-14);
    }

    #[test]
    fn newton_reports_failure_without_root() {
        let res = damped_newton2(
            |v| Ok(([v[0] * v[0] + 1.0, v[1]], [[2.0 * v[0], 0.0], [0.0, 1.0]])),
            [1.0, 1.0],
            &NewtonOptions::default(),
        );
        assert!(matches!(res, Err(Error::Convergence { .. })));
    }
}
