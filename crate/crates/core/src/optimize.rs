//! Scalar search routines shared by the oracles.

/// Inverse golden ratio, `(sqrt(5) - 1) / 2`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
///
/// Runs a fixed number of iterations and then returns the best of the final
/// interior probe and both endpoints, so monotone functions are handled
/// exactly at the edges. Returns `(x, f(x))`.
pub fn golden_section_max<F>(f: F, lo: f64, hi: f64, iterations: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    debug_assert!(lo <= hi);
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iterations {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Largest `x` in `[lo, hi]` (to within `tol`) with `pred(x)` true, assuming
/// `pred` is true on a prefix of the interval. `pred(lo)` is taken as true.
pub fn bisect_last_true<P>(pred: P, lo: f64, hi: f64, tol: f64) -> f64
where
    P: Fn(f64) -> bool,
{
    if pred(hi) {
        return hi;
    }
    let (mut good, mut bad) = (lo, hi);
    while bad - good > tol {
        let mid = 0.5 * (good + bad);
        if mid <= good || mid >= bad {
            break;
        }
        if pred(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_peak() {
        let (x, fx) = golden_section_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 80);
        assert!((x - 0.3).abs() < 1e-7);
        assert!(fx.abs() < 1e-14);
    }

    #[test]
    fn monotone_returns_endpoint() {
        let (x, _) = golden_section_max(|x| x, 0.0, 2.0, 80);
        assert_eq!(x, 2.0);
        let (x, _) = golden_section_max(|x| -x, 0.0, 2.0, 80);
        assert_eq!(x, 0.0);
    }

    #[test]
    fn degenerate_interval() {
        let (x, fx) = golden_section_max(|x| x * 2.0, 1.5, 1.5, 80);
        assert_eq!((x, fx), (1.5, 3.0));
    }

    #[test]
    fn bisection_threshold() {
        let x = bisect_last_true(|x| x <= 0.37, 0.0, 1.0, 1e-10);
        assert!((x - 0.37).abs() <= 1e-10 && x <= 0.37);
        assert_eq!(bisect_last_true(|_| true, 0.0, 1.0, 1e-3), 1.0);
    }
}
