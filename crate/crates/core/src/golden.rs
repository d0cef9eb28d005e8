//! Golden-section search for unimodal functions of one variable.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Maximizes `f` on `[lo, hi]`, assumed unimodal there. Returns the
/// maximizer and the maximum after the bracket has shrunk below `tol`
/// (absolute) or `max_iter` steps.
pub fn maximize(mut lo: f64, mut hi: f64, tol: f64, max_iter: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..max_iter {
        if (hi - lo).abs() <= tol {
            break;
        }
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        }
    }
    // The endpoints are candidates too when the maximum sits on the boundary.
    let mut best = if fa >= fb { (a, fa) } else { (b, fb) };
    for t in [lo, hi] {
        let ft = f(t);
        if ft > best.1 {
            best = (t, ft);
        }
    }
    best
}

/// Minimizes `f` on `[lo, hi]`.
pub fn minimize(lo: f64, hi: f64, tol: f64, max_iter: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let (x, v) = maximize(lo, hi, tol, max_iter, |t| -f(t));
    (x, -v)
}
