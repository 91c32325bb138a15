//! Bisection on monotone maps.
//!
//! Cutoff maps may jump at tariff kinks, so root finding here never assumes
//! continuity: it locates the crossing of a level by a nondecreasing map.

const MAX_ITER: usize = 200;

/// Smallest `x` in `(lo, hi]` with `g(x) >= level`, for nondecreasing `g`
/// with `g(lo) < level <= g(hi)`. Bisects to adjacent floating-point
/// resolution and returns the upper end of the final bracket.
pub fn lower_crossing<G: Fn(f64) -> f64>(g: G, level: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Largest `x` in `[lo, hi)` with `g(x) <= level`, for nondecreasing `g`
/// with `g(lo) <= level < g(hi)`. Returns the lower end of the final
/// bracket.
pub fn upper_crossing<G: Fn(f64) -> f64>(g: G, level: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
