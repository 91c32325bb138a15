//! Profit- and welfare-maximizing quadratic tariffs `P(q) = (A/2) q² + B q`,
//! their first-order residuals, and a derivative-free numerical oracle.
//!
//! The closed forms assume quadratic preferences, uniform types and that the
//! optimal tariff leaves every type above `θ_P(0)`, i.e. `B - h1 >= θ0`.
//! The oracle maximizes the true functional, so it disagrees with the closed
//! forms exactly when that last condition fails.

use crate::error::{Error, Result};
use crate::market::{CutoffMode, MarketEnv};
use crate::numerics::{integrate_panels, NelderMead};
use crate::tariffs::PriceScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Profit,
    Welfare,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Self::Profit => "profit",
            Self::Welfare => "welfare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticOptimum {
    pub a: f64,
    pub b: f64,
    pub q_star: f64,
    pub value: f64,
    pub objective: Objective,
}

impl QuadraticOptimum {
    pub fn scheme(&self) -> PriceScheme {
        PriceScheme::Quadratic {
            a: self.a,
            b: self.b,
        }
    }
}

fn require_quadratic(env: &MarketEnv) -> Result<(f64, f64)> {
    env.quadratic_prefs()
}

/// `A = [(1-a1)c2 + (3a1-1)h2] / [(1-a1)(2-3a1)]`,
/// `B = [(1-2a1)(θ1+h1) + (1-a1)c1] / (2-3a1)`.
pub fn optimal_profit_scheme(env: &MarketEnv) -> Result<QuadraticOptimum> {
    let (h1, h2) = require_quadratic(env)?;
    let a1 = env.a1();
    if a1 >= 2.0 / 3.0 {
        return Err(Error::hypothesis(format!("a1 < 2/3 (a1 = {a1})")));
    }
    let (c1, c2, t1) = (env.c1(), env.c2(), env.theta1());
    let reach = t1 + h1 - c1;
    let denom = 2.0 - 3.0 * a1;
    let a = ((1.0 - a1) * c2 + (3.0 * a1 - 1.0) * h2) / ((1.0 - a1) * denom);
    let b = ((1.0 - 2.0 * a1) * (t1 + h1) + (1.0 - a1) * c1) / denom;
    let slope = (1.0 - a1) * c2 + h2;
    let q_star = (1.0 - a1) * reach / slope;
    let value = (1.0 - a1).powi(2) * reach.powi(3) / (6.0 * env.type_width() * denom * slope);
    Ok(QuadraticOptimum {
        a,
        b,
        q_star,
        value,
        objective: Objective::Profit,
    })
}

/// `A = c2 / (1-a1)`, `B = c1`: marginal-cost pricing in perceived terms.
pub fn optimal_welfare_scheme(env: &MarketEnv) -> Result<QuadraticOptimum> {
    let (h1, h2) = require_quadratic(env)?;
    let a1 = env.a1();
    if a1 >= 1.0 {
        return Err(Error::hypothesis(format!("a1 < 1 (a1 = {a1})")));
    }
    let (c1, c2, t1) = (env.c1(), env.c2(), env.theta1());
    let reach = t1 + h1 - c1;
    Ok(QuadraticOptimum {
        a: c2 / (1.0 - a1),
        b: c1,
        q_star: reach / (c2 + h2),
        value: reach.powi(3) / (6.0 * env.type_width() * (c2 + h2)),
        objective: Objective::Welfare,
    })
}

/// Max profit over max welfare,
/// `(1-a1)²(c2+h2) / [(2-3a1)((1-a1)c2+h2)]`.
pub fn profit_welfare_ratio(env: &MarketEnv) -> Result<f64> {
    let (_, h2) = require_quadratic(env)?;
    let a1 = env.a1();
    if a1 >= 2.0 / 3.0 {
        return Err(Error::hypothesis(format!("a1 < 2/3 (a1 = {a1})")));
    }
    let c2 = env.c2();
    Ok((1.0 - a1).powi(2) * (c2 + h2) / ((2.0 - 3.0 * a1) * ((1.0 - a1) * c2 + h2)))
}

/// First-order conditions of a quadratic scheme in two forms.
///
/// `r1`, `r2` are the polynomial reductions (the `B`- and `A`-conditions
/// with the positive factors cleared); `d_b`, `d_a` are the partial
/// derivatives of the functional obtained by Leibniz's rule and evaluated
/// by quadrature. Without clipping at `θ0` they satisfy
/// `r1 = d_b·Δθ·2k/q*` and `r2 = d_a·Δθ·6k/q*²` (profit), with an extra
/// `1/(1-a1)` on the `A`-condition for welfare.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocResiduals {
    pub r1: f64,
    pub r2: f64,
    pub d_a: f64,
    pub d_b: f64,
}

impl FocResiduals {
    /// `(rA, rB)`.
    pub fn polynomial_pair(&self) -> (f64, f64) {
        (self.r2, self.r1)
    }
}

struct FocSetup {
    a1: f64,
    h2: f64,
    k: f64,
    s: f64,
    q_star: f64,
    q_clip: f64,
}

fn foc_setup(env: &MarketEnv, a: f64, b: f64) -> Result<FocSetup> {
    let (h1, h2) = require_quadratic(env)?;
    let a1 = env.a1();
    let k = (1.0 - a1) * a + h2;
    let s = env.theta1() + h1 - b;
    if s <= 0.0 {
        return Err(Error::DegenerateScheme(format!("q* = 0 for B = {b}")));
    }
    if k <= 0.0 {
        return Err(Error::NonmonotoneCutoff(format!(
            "(1 - a1) A + h2 = {k} <= 0"
        )));
    }
    let q_star = s / k;
    let q_clip = ((env.theta0() + h1 - b) / k).clamp(0.0, q_star);
    Ok(FocSetup {
        a1,
        h2,
        k,
        s,
        q_star,
        q_clip,
    })
}

// Leibniz derivative ∫ [g_x (1-F) - m f ∂θ_P/∂x] dq, with f = 0 below the
// clip point and ∂θ_P/∂A = (1-a1) q, ∂θ_P/∂B = 1.
fn leibniz<G, M, T>(env: &MarketEnv, setup: &FocSetup, b: f64, g: G, markup: M, dtheta: T) -> f64
where
    G: Fn(f64) -> f64,
    M: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
{
    let (h1, _) = env.quadratic_prefs().expect("checked by foc_setup");
    let density = 1.0 / env.type_width();
    let theta = |q: f64| setup.k * q + b - h1;
    integrate_panels(
        |q| {
            let th = theta(q);
            let inside = q >= setup.q_clip;
            let tail = if inside {
                (env.theta1() - th) * density
            } else {
                1.0
            };
            let dens = if inside { density } else { 0.0 };
            g(q) * tail - markup(q) * dens * dtheta(q)
        },
        &[0.0, setup.q_clip, setup.q_star],
        1e-14,
    )
}

fn check_proportional(name: &str, appendix: f64, scaled: f64) -> Result<()> {
    if (appendix - scaled).abs() > 1e-8 * (1.0 + appendix.abs()) {
        return Err(Error::OracleDisagreement(format!(
            "{name}: polynomial residual {appendix} vs Leibniz quadrature {scaled}"
        )));
    }
    Ok(())
}

/// Profit first-order residuals, zero at the closed-form optimum.
pub fn profit_foc_residuals(env: &MarketEnv, a: f64, b: f64) -> Result<FocResiduals> {
    let st = foc_setup(env, a, b)?;
    let (c1, c2, a1, h2) = (env.c1(), env.c2(), st.a1, st.h2);
    let r1 = st.s * (c2 + h2 - a1 * a) - 2.0 * (b - c1) * st.k;
    let r2 =
        st.s * (-(1.0 - a1) * a + h2 + 2.0 * c2 * (1.0 - a1)) - 3.0 * (1.0 - a1) * (b - c1) * st.k;
    let markup = |q: f64| (a - c2) * q + b - c1;
    let d_a = leibniz(env, &st, b, |q| q, markup, |q| (1.0 - a1) * q);
    let d_b = leibniz(env, &st, b, |_| 1.0, markup, |_| 1.0);
    if st.q_clip == 0.0 {
        let w = env.type_width();
        check_proportional("profit B-condition", r1, d_b * w * 2.0 * st.k / st.q_star)?;
        check_proportional(
            "profit A-condition",
            r2,
            d_a * w * 6.0 * st.k / st.q_star.powi(2),
        )?;
    }
    Ok(FocResiduals { r1, r2, d_a, d_b })
}

/// Welfare first-order residuals, zero at the closed-form optimum.
pub fn welfare_foc_residuals(env: &MarketEnv, a: f64, b: f64) -> Result<FocResiduals> {
    let st = foc_setup(env, a, b)?;
    let (c1, c2, a1, h2, k, s) = (env.c1(), env.c2(), st.a1, st.h2, st.k, st.s);
    if a1 >= 1.0 {
        return Err(Error::hypothesis(format!("a1 < 1 (a1 = {a1})")));
    }
    let pa = (1.0 - a1) * a;
    let r1 = s * (2.0 * k + c2 - 2.0 * h2 - 3.0 * pa) - 2.0 * (b - c1) * k;
    let r2 = 2.0 * s * (3.0 * k + c2 - 3.0 * h2 - 4.0 * pa) - 3.0 * (b - c1) * k;
    let integrand = |q: f64| (2.0 * pa + h2 - c2) * q + b - c1;
    let d_a = leibniz(
        env,
        &st,
        b,
        |q| 2.0 * (1.0 - a1) * q,
        integrand,
        |q| (1.0 - a1) * q,
    );
    let d_b = leibniz(env, &st, b, |_| 1.0, integrand, |_| 1.0);
    if st.q_clip == 0.0 {
        let w = env.type_width();
        check_proportional("welfare B-condition", r1, d_b * w * 2.0 * k / st.q_star)?;
        check_proportional(
            "welfare A-condition",
            r2,
            d_a * w / (1.0 - a1) * 6.0 * k / st.q_star.powi(2),
        )?;
    }
    Ok(FocResiduals { r1, r2, d_a, d_b })
}

/// Search box and polish settings for the numerical oracle.
#[derive(Debug, Clone)]
pub struct OracleSettings {
    pub grid_points: usize,
    /// `A ∈ [-s, s]·(c2 + h2)`.
    pub a_scale: f64,
    /// `B ∈ [lo, hi]·(θ1 + h1)`.
    pub b_range: (f64, f64),
    pub polish: NelderMead,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            grid_points: 41,
            a_scale: 5.0,
            b_range: (-1.0, 2.0),
            polish: NelderMead::default(),
        }
    }
}

/// Grid search plus simplex polish on the quadrature functionals; an
/// oracle independent of the closed forms.
pub fn numeric_quadratic_search(env: &MarketEnv, objective: Objective) -> Result<QuadraticOptimum> {
    numeric_quadratic_search_with(env, objective, &OracleSettings::default())
}

pub fn numeric_quadratic_search_with(
    env: &MarketEnv,
    objective: Objective,
    settings: &OracleSettings,
) -> Result<QuadraticOptimum> {
    let (h1, h2) = require_quadratic(env)?;
    let value = |a: f64, b: f64| -> f64 {
        let s = PriceScheme::Quadratic { a, b };
        let v = match objective {
            Objective::Profit => env.expected_profit_quadrature(&s),
            Objective::Welfare => env.expected_welfare_quadrature(&s),
        };
        v.unwrap_or(f64::NEG_INFINITY)
    };
    let a_half = settings.a_scale * (env.c2() + h2);
    let reach = env.theta1() + h1;
    let (b_lo, b_hi) = (settings.b_range.0 * reach, settings.b_range.1 * reach);
    let n = settings.grid_points.max(2);
    let at = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (at(-a_half, a_half, i), at(b_lo, b_hi, j));
            let v = value(a, b);
            if v > best.2 {
                best = (a, b, v);
            }
        }
    }
    let step = [
        2.0 * a_half / (n - 1) as f64,
        (b_hi - b_lo) / (n - 1) as f64,
    ];
    let min = settings
        .polish
        .minimize(|x| -value(x[0], x[1]), &[best.0, best.1], &step);
    let (a, b, v) = if -min.value >= best.2 {
        (min.x[0], min.x[1], -min.value)
    } else {
        best
    };
    let closed = match objective {
        Objective::Profit => optimal_profit_scheme(env),
        Objective::Welfare => optimal_welfare_scheme(env),
    };
    if let Ok(c) = closed {
        if c.value > 0.0 && v <= 0.0 {
            return Err(Error::OracleDisagreement(format!(
                "oracle {} {v} is nonpositive while the closed form gives {}",
                objective.name(),
                c.value
            )));
        }
    }
    let scheme = PriceScheme::Quadratic { a, b };
    let map = env.cutoff_map(&scheme, CutoffMode::Perceived)?;
    let q_star = map.q_star().finite().ok_or(Error::UnboundedDomain)?;
    Ok(QuadraticOptimum {
        a,
        b,
        q_star,
        value: v,
        objective,
    })
}

/// Compares the oracle against the closed form; `tol` bounds the
/// coefficient gap and `rel_tol` the relative value gap.
pub fn oracle_agreement(
    closed: &QuadraticOptimum,
    oracle: &QuadraticOptimum,
    tol: f64,
    rel_tol: f64,
) -> Result<()> {
    let coef = (closed.a - oracle.a).abs().max((closed.b - oracle.b).abs());
    let rel = (closed.value - oracle.value).abs() / closed.value.abs().max(f64::MIN_POSITIVE);
    if coef > tol || rel > rel_tol {
        return Err(Error::OracleDisagreement(format!(
            "closed form (A, B, value) = ({}, {}, {}) vs oracle ({}, {}, {})",
            closed.a, closed.b, closed.value, oracle.a, oracle.b, oracle.value
        )));
    }
    Ok(())
}
