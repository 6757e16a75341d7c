//! Bracketed scalar root finding and 1-D minimization.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("function returned a non-finite value at x = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Finds a root of `f` on `[lo, hi]` with a bisection/secant hybrid
/// (Illinois variant of regula falsi, falling back to bisection whenever the
/// interpolated step leaves the bracket or stalls).
///
/// Terminates when `|f(x)| <= f_tol` or the bracket has collapsed to machine
/// precision. The returned residual is `f(x)` at the reported point.
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, f_tol: f64) -> Result<Root, RootError>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let mut fb = f(b);
    for (x, v) in [(a, fa), (b, fb)] {
        if !v.is_finite() {
            return Err(RootError::NonFinite(x));
        }
    }
    if fa == 0.0 {
        return Ok(Root { x: a, residual: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, residual: 0.0, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange { lo, hi, f_lo: fa, f_hi: fb });
    }

    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    let mut side = 0i8;
    for it in 1..=400 {
        let width = b - a;
        let mut x = (a * fb - b * fa) / (fb - fa);
        // Every third step is a plain bisection to guarantee shrinkage.
        if !x.is_finite() || x <= a || x >= b || it % 3 == 0 {
            x = a + 0.5 * width;
        }
        let fx = f(x);
        if !fx.is_finite() {
            return Err(RootError::NonFinite(x));
        }
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx.abs() <= f_tol || fx == 0.0 {
            return Ok(Root { x, residual: fx, iterations: it });
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        let mid = 0.5 * (a + b);
        if b - a <= 4.0 * f64::EPSILON * mid.abs().max(1e-300) {
            return Ok(Root { x: best.0, residual: best.1, iterations: it });
        }
    }
    Ok(Root { x: best.0, residual: best.1, iterations: 400 })
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
/// Returns the abscissa of the smallest value seen.
pub fn golden_section_min<F>(mut f: F, lo: f64, hi: f64, x_tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > x_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}
