//! Bracketed root finding for the strictly monotone scalar equations that
//! appear at every layer of the equilibrium solvers.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Relative step size below which the iteration is considered converged.
    pub x_tol: f64,
    /// Absolute residual accepted as a root.
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            x_tol: 4.0 * f64::EPSILON,
            f_tol: 0.0,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Safeguarded Newton iteration on `[lo, hi]`.
///
/// `f` returns the value and derivative. The endpoints must bracket a sign
/// change. A Newton step is taken whenever it stays strictly inside the
/// current bracket and shrinks fast enough; otherwise the bracket is bisected.
pub fn newton_bisect<F>(
    stage: &'static str,
    mut f: F,
    lo: f64,
    hi: f64,
    x0: f64,
    opts: RootOptions,
) -> Result<Root>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let f_lo = f(lo).0;
    if f_lo == 0.0 {
        return Ok(Root { x: lo, residual: 0.0, iterations: 0 });
    }
    let f_hi = f(hi).0;
    if f_hi == 0.0 {
        return Ok(Root { x: hi, residual: 0.0, iterations: 0 });
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::solver(
            stage,
            format!("no sign change on [{lo:e}, {hi:e}]: f = ({f_lo:e}, {f_hi:e})"),
        ));
    }
    let lo_negative = f_lo < 0.0;

    let mut x = if x0.is_finite() && x0 > lo && x0 < hi {
        x0
    } else {
        0.5 * (lo + hi)
    };
    let mut step_old = hi - lo;
    let mut step = step_old;
    for it in 1..=opts.max_iter {
        let (fx, dfx) = f(x);
        if !fx.is_finite() {
            return Err(Error::solver(stage, format!("non-finite value at x = {x:e}")));
        }
        if fx.abs() <= opts.f_tol || fx == 0.0 {
            return Ok(Root { x, residual: fx, iterations: it });
        }
        if (fx < 0.0) == lo_negative {
            lo = x;
        } else {
            hi = x;
        }

        let newton = x - fx / dfx;
        let use_newton = dfx.is_finite()
            && dfx != 0.0
            && newton > lo
            && newton < hi
            && (2.0 * fx).abs() <= (step_old * dfx).abs();
        step_old = step;
        let next = if use_newton {
            step = fx / dfx;
            newton
        } else {
            step = 0.5 * (hi - lo);
            lo + step
        };

        let scale = x.abs().max(next.abs()).max(f64::MIN_POSITIVE);
        if next == x || (next - x).abs() <= opts.x_tol * scale || hi - lo <= opts.x_tol * scale {
            let residual = f(next).0;
            return Ok(Root { x: next, residual, iterations: it + 1 });
        }
        x = next;
    }
    let residual = f(x).0;
    Err(Error::solver(
        stage,
        format!(
            "no convergence after {} iterations (x = {x:e}, residual = {residual:e})",
            opts.max_iter
        ),
    ))
}

/// Plain bisection for an increasing `f` with `f(lo) < 0 < f(hi)`.
///
/// Stops when the bracket has shrunk below `x_tol` (relative), to adjacent
/// floats, or `f` vanishes.
pub fn bisect_increasing<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
    max_iter: usize,
) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut iterations = 0;
    while iterations < max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= x_tol * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
        iterations += 1;
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(Root { x: mid, residual: 0.0, iterations });
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let residual = f(x)?;
    Ok(Root { x, residual, iterations })
}

/// Walks outward from `start` in steps `step, 2 step, 4 step, ...` until the
/// increasing function `g` changes sign. Returns a bracket `(lo, hi)` with
/// `g(lo) <= 0 <= g(hi)`.
pub fn expand_bracket_increasing<F>(
    stage: &'static str,
    mut g: F,
    start: f64,
    step: f64,
    limit: f64,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g0 = g(start)?;
    if g0 == 0.0 {
        return Ok((start, start));
    }
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut inner = start;
    let mut h = step;
    loop {
        let outer = start + dir * h;
        if (outer - start).abs() > limit {
            return Err(Error::solver(
                stage,
                format!("bracket expansion passed |x| > {limit:e} without a sign change (g({start}) = {g0:e})"),
            ));
        }
        let go = g(outer)?;
        if go.signum() != g0.signum() || go == 0.0 {
            return Ok(if dir > 0.0 { (inner, outer) } else { (outer, inner) });
        }
        inner = outer;
        h *= 2.0;
    }
}

/// Solves `a (e^t - 1) + b t = rhs` for `t` with `a, b > 0`.
pub fn exp_linear_root(a: f64, b: f64, rhs: f64) -> Option<f64> {
    exp_linear_root_from(a, b, rhs, f64::NAN)
}

/// As [`exp_linear_root`], starting Newton from `hint` when it is finite.
///
/// The left side is convex and increasing. A Newton step from below the root
/// lands above it, and from above the iterates decrease monotonically onto
/// it, so the iteration needs no further safeguard than the bracket.
pub fn exp_linear_root_from(a: f64, b: f64, rhs: f64, hint: f64) -> Option<f64> {
    if rhs == 0.0 {
        return Some(0.0);
    }
    let (lo, hi) = if rhs > 0.0 {
        (0.0, (rhs / b).min((rhs / a).ln_1p()))
    } else {
        (rhs / b, ((rhs + a) / b).min(0.0))
    };
    let g = |t: f64| a * t.exp_m1() + b * t - rhs;
    let newton = |t: f64, gt: f64| t - gt / (a * t.exp() + b);
    let mut t = if hint.is_finite() { hint.clamp(lo, hi) } else { hi };
    let gt = g(t);
    if gt < 0.0 {
        t = newton(t, gt).min(hi);
    }
    for _ in 0..100 {
        let gt = g(t);
        if gt <= 0.0 {
            return Some(t);
        }
        let next = newton(t, gt).max(lo);
        if next >= t {
            return Some(t);
        }
        t = next;
    }
    None
}
