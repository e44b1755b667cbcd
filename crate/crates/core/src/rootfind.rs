//! One-dimensional root finding: bracket scans, Brent's method, and a
//! Newton iteration safeguarded by bisection.

use crate::error::{Error, Result};

/// Stopping rule shared by the scalar solvers.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub xtol: f64,
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            xtol: 1e-300,
            rtol: 4.0 * f64::EPSILON,
            max_iter: 200,
        }
    }
}

fn no_bracket(a: f64, b: f64, fa: f64, fb: f64) -> Error {
    Error::Solver {
        message: format!("no sign change on [{a:e}, {b:e}] (f = {fa:e}, {fb:e})"),
        best: vec![if fa.abs() < fb.abs() { a } else { b }],
        residual: fa.abs().min(fb.abs()),
    }
}

/// Brent's method on a bracketing interval.
pub fn brent<F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(no_bracket(a, b, fa, fb));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
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
        let tol1 = 2.0 * tol.rtol * b.abs() + 0.5 * tol.xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic / secant step
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else {
            tol1.copysign(xm)
        };
        fb = f(b);
    }
    Err(Error::Solver {
        message: "brent: iteration limit".into(),
        best: vec![b],
        residual: fb.abs(),
    })
}

/// Newton's method kept inside a shrinking bracket; any step that leaves the
/// bracket or fails to halve the residual is replaced by bisection.
/// `fdf` returns the value and derivative.
pub fn newton_bisect<F>(mut fdf: F, lo: f64, hi: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (flo, _) = fdf(lo);
    let (fhi, _) = fdf(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(no_bracket(lo, hi, flo, fhi));
    }
    // orient so that f(xl) < 0
    let (mut xl, mut xh) = if flo < 0.0 { (lo, hi) } else { (hi, lo) };
    let mut x = 0.5 * (lo + hi);
    let mut dx_old = (hi - lo).abs();
    let mut dx = dx_old;
    let (mut f, mut df) = fdf(x);
    for _ in 0..tol.max_iter {
        let newton_leaves = ((x - xh) * df - f) * ((x - xl) * df - f) > 0.0;
        let slow = (2.0 * f).abs() > (dx_old * df).abs();
        if newton_leaves || slow || df == 0.0 || !df.is_finite() {
            dx_old = dx;
            dx = 0.5 * (xh - xl);
            x = xl + dx;
        } else {
            dx_old = dx;
            dx = f / df;
            x -= dx;
        }
        if dx.abs() <= tol.rtol * x.abs() + tol.xtol {
            return Ok(x);
        }
        let fd = fdf(x);
        f = fd.0;
        df = fd.1;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            xl = x;
        } else {
            xh = x;
        }
    }
    Err(Error::Solver {
        message: "newton_bisect: iteration limit".into(),
        best: vec![x],
        residual: f.abs(),
    })
}

/// Scans `points` logarithmically spaced abscissae on `[lo, hi]` (both > 0)
/// and returns every adjacent pair across which `f` changes sign.
pub fn log_brackets<F>(mut f: F, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    assert!(lo > 0.0 && hi > lo && points >= 2);
    let (l0, l1) = (lo.ln(), hi.ln());
    let step = (l1 - l0) / (points - 1) as f64;
    let mut out = Vec::new();
    let mut prev_x = lo;
    let mut prev_f = f(lo);
    for k in 1..points {
        let x = if k == points - 1 {
            hi
        } else {
            (l0 + step * k as f64).exp()
        };
        let fx = f(x);
        if prev_f.is_finite() && fx.is_finite() && (prev_f == 0.0 || prev_f.signum() != fx.signum())
        {
            out.push((prev_x, x));
        }
        prev_x = x;
        prev_f = fx;
    }
    out
}

/// Root of a function known to be increasing in `x > 0`, found by growing a
/// bracket geometrically from `guess` and then running Brent.
pub fn increasing_root<F>(mut f: F, guess: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut lo = guess.max(f64::MIN_POSITIVE);
    let mut hi = lo;
    let f0 = f(lo);
    if f0 == 0.0 {
        return Ok(lo);
    }
    let mut grown = 0;
    if f0 < 0.0 {
        while f(hi) < 0.0 {
            lo = hi;
            hi *= 4.0;
            grown += 1;
            if grown > 600 || !hi.is_finite() {
                return Err(no_bracket(guess, hi, f0, f(hi)));
            }
        }
    } else {
        while f(lo) > 0.0 {
            hi = lo;
            lo *= 0.25;
            grown += 1;
            if grown > 600 || lo == 0.0 {
                return Err(no_bracket(lo, guess, f(lo), f0));
            }
        }
    }
    brent(f, lo, hi, tol)
}

/// Result of [`global_min_log`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    /// The minimizer is an end point of the search interval.
    pub at_bound: bool,
}

/// Global minimizer of `f` on `[lo, hi]`. Every sign change of `df` from
/// negative to positive on a log grid is refined with Brent; those local
/// minima and the two end points are compared by value.
pub fn global_min_log<F, D>(f: F, mut df: D, lo: f64, hi: f64, points: usize, tol: Tolerance) -> Minimum
where
    F: Fn(f64) -> f64,
    D: FnMut(f64) -> f64,
{
    let mut best = Minimum { x: lo, value: f(lo), at_bound: true };
    let fhi = f(hi);
    if fhi < best.value {
        best = Minimum { x: hi, value: fhi, at_bound: true };
    }
    let brackets: Vec<(f64, f64)> = {
        let mut grid = Vec::new();
        let (l0, l1) = (lo.ln(), hi.ln());
        for k in 0..points {
            let x = if k + 1 == points { hi } else { (l0 + (l1 - l0) * k as f64 / (points - 1) as f64).exp() };
            grid.push((x, df(x)));
        }
        grid.windows(2)
            .filter(|w| w[0].1 < 0.0 && w[1].1 >= 0.0)
            .map(|w| (w[0].0, w[1].0))
            .collect()
    };
    for (a, b) in brackets {
        if let Ok(x) = brent(&mut df, a, b, tol) {
            let v = f(x);
            if v < best.value {
                best = Minimum { x, value: v, at_bound: false };
            }
        }
    }
    best
}
