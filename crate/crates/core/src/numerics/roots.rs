//! Bracketed scalar root finding.

/// Bisection down to a coarse bracket, then safeguarded secant steps.
/// Returns `None` when `f(a)` and `f(b)` share a sign.
pub fn bisect_secant<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !(fa.is_finite() && fb.is_finite()) {
        return None;
    }
    let coarse = 1e-3 * (b - a).abs();
    while (b - a).abs() > coarse {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    for _ in 0..200 {
        let mut x = b - fb * (b - a) / (fb - fa);
        if !(x > a.min(b) && x < a.max(b)) {
            x = 0.5 * (a + b);
        }
        let fx = f(x);
        if fx.abs() <= tol || (b - a).abs() <= tol * x.abs().max(1.0) {
            return Some(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
    }
    Some(0.5 * (a + b))
}

/// Plain bisection until `|f| < ftol` or the bracket collapses.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, ftol: f64) -> Option<f64> {
    let fa = f(a);
    let fb = f(b);
    if fa.signum() == fb.signum() {
        return None;
    }
    let sa = fa.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm.abs() < ftol || m == a || m == b {
            return Some(m);
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}
