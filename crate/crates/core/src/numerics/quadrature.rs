//! Adaptive Simpson quadrature with caller-supplied panel boundaries.
//!
//! Integrands in this crate are piecewise smooth: tariff kinks and the
//! edges of the type support introduce derivative jumps. Callers pass those
//! locations as panel boundaries so every panel sees a smooth integrand.

const MAX_DEPTH: u32 = 50;
const INITIAL_PANELS: usize = 4;

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -adaptive_simpson(f, b, a, tol);
    }
    // A single Simpson panel can be fooled by integrands that vanish at
    // its three nodes; start from a few equal panels.
    let width = (b - a) / INITIAL_PANELS as f64;
    let panel_tol = tol / INITIAL_PANELS as f64;
    (0..INITIAL_PANELS)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == INITIAL_PANELS {
                b
            } else {
                lo + width
            };
            simpson_panel(&f, lo, hi, panel_tol)
        })
        .sum()
}

/// Integrate over `[points[0], points[last]]`, splitting at every interior
/// point. Points need not be sorted or unique; non-finite points are
/// ignored. The tolerance is shared in proportion to panel width.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = points.iter().copied().filter(|p| p.is_finite()).collect();
    pts.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    pts.dedup();
    if pts.len() < 2 {
        return 0.0;
    }
    let total = pts[pts.len() - 1] - pts[0];
    pts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let share = ((w[1] - w[0]) / total).max(1e-6);
            adaptive_simpson(&f, w[0], w[1], tol * share)
        })
        .sum()
}

fn simpson_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(f, a, fa, m, fm, b, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || lm <= a || rm >= b {
        return left + right + delta / 15.0;
    }
    refine(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_exact() {
        let v = adaptive_simpson(|x| 3.0 * x * x * x - x + 2.0, 0.0, 2.0, 1e-12);
        assert!((v - (12.0 - 2.0 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn smooth_transcendental() {
        let v = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-10);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let v = adaptive_simpson(|x| x, 1.0, 0.0, 1e-12);
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn kink_handled_by_panels() {
        // |x - 1/3| on [0, 1]
        let f = |x: f64| (x - 1.0 / 3.0).abs();
        let exact = 0.5 * (1.0 / 9.0) + 0.5 * (4.0 / 9.0);
        let v = integrate_panels(f, &[0.0, 1.0 / 3.0, 1.0], 1e-12);
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn jump_handled_by_panels() {
        let f = |x: f64| if x < 0.5 { 1.0 } else { 3.0 };
        let v = integrate_panels(f, &[0.0, 0.5, 1.0, 0.5], 1e-12);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn sqrt_singular_derivative() {
        let v = adaptive_simpson(f64::sqrt, 0.0, 1.0, 1e-10);
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
    }
}
