//! Surface functions of the bias parameter `a1` and the cost ratio
//! `p = c2 / h2` at the profit-maximizing quadratic tariff, and sign checks
//! of their derivatives.
//!
//! With `S = (θ1 + h1 - c1)³ / (6 (θ1 - θ0) h2)`, welfare, consumer surplus
//! and efficiency cost at the profit optimum are `S·F`, `S·H` and `S·G`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::market::MarketEnv;
use crate::numerics::central_difference;
use crate::perception::PerceptionKernel;
use crate::quadratic_optimum::{optimal_profit_scheme, optimal_welfare_scheme};
use crate::report::Table;

const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-4;
const CROSS_CHECKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticsPoint {
    pub a1: f64,
    pub p: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub f_aux: f64,
}

fn check_domain(a1: f64, p: f64) -> Result<()> {
    if !(0.0..2.0 / 3.0).contains(&a1) {
        return Err(Error::domain(format!("a1 must lie in [0, 2/3), got {a1}")));
    }
    if !(p.is_finite() && p >= 0.0) {
        return Err(Error::domain(format!(
            "p must be finite and nonnegative, got {p}"
        )));
    }
    Ok(())
}

fn f_raw(a: f64, p: f64) -> f64 {
    let m = (1.0 - a) * p + 1.0;
    (1.0 - a).powi(2) / ((2.0 - 3.0 * a).powi(2) * m * m)
        * (3.0 * (1.0 - 2.0 * a) * m + (1.0 - a) * a * (p + 3.0))
}

fn h_raw(a: f64, p: f64) -> f64 {
    let m = (1.0 - a) * p + 1.0;
    (1.0 - a).powi(2) * ((1.0 - 3.0 * a) * m + a * (1.0 - a) * (p + 3.0))
        / ((2.0 - 3.0 * a).powi(2) * m * m)
}

fn g_raw(a: f64, p: f64) -> f64 {
    1.0 / (p + 1.0) - f_raw(a, p)
}

fn f_aux_raw(a: f64, p: f64) -> f64 {
    (a.powi(3) - 2.0 * a * a + a) * p * p + (-5.0 * a * a + 7.0 * a - 2.0) * p + 18.0 * a.powi(3)
        - 24.0 * a * a
        + 12.0 * a
        - 2.0
}

/// Evaluates `F`, `G`, `H` and the auxiliary polynomial `f`.
pub fn shape_functions(a1: f64, p: f64) -> Result<StaticsPoint> {
    check_domain(a1, p)?;
    Ok(StaticsPoint {
        a1,
        p,
        f: f_raw(a1, p),
        g: g_raw(a1, p),
        h: h_raw(a1, p),
        f_aux: f_aux_raw(a1, p),
    })
}

/// Auxiliary polynomial `f(a1, p)` alone; defined for all real arguments.
pub fn aux_polynomial(a1: f64, p: f64) -> f64 {
    f_aux_raw(a1, p)
}

/// `∂F/∂a1` as a rational function.
pub fn df_da1(a: f64, p: f64) -> f64 {
    let num = (a - 1.0)
        * ((4.0 * a.powi(3) - 10.0 * a * a + 8.0 * a - 2.0) * p * p
            + (-9.0 * a.powi(3) + 10.0 * a * a + a - 2.0) * p
            + 18.0 * a.powi(3)
            - 15.0 * a * a
            + 3.0 * a);
    num / ((3.0 * a - 2.0).powi(3) * (p * a - p - 1.0).powi(3))
}

/// `∂H/∂a1`; its numerator is `(a1 - 1)·f(a1, p)`.
pub fn dh_da1(a: f64, p: f64) -> f64 {
    (a - 1.0) * f_aux_raw(a, p) / ((3.0 * a - 2.0).powi(3) * (p * a - p - 1.0).powi(3))
}

/// `∂G/∂p` as a rational function.
pub fn dg_dp(a: f64, p: f64) -> f64 {
    let (a2, a3, a4, a5) = (a * a, a.powi(3), a.powi(4), a.powi(5));
    let c3 = 4.0 * a5 - 16.0 * a4 + 25.0 * a3 - 19.0 * a2 + 7.0 * a - 1.0;
    let c2 = -4.0 * a5 + 2.0 * a4 + 18.0 * a3 - 29.0 * a2 + 16.0 * a - 3.0;
    let c1 = 7.0 * a5 - 11.0 * a4 + 9.0 * a3 - 13.0 * a2 + 11.0 * a - 3.0;
    let c0 = 6.0 * a5 - 17.0 * a4 + 12.0 * a3 - 3.0 * a2 + 2.0 * a - 1.0;
    let num = ((c3 * p + c2) * p + c1) * p + c0;
    -num / ((3.0 * a - 2.0).powi(2) * (p + 1.0).powi(2) * ((a - 1.0) * p - 1.0).powi(3))
}

/// Central difference of `g` against the printed derivative; disagreement
/// beyond `1e-4` relative is an error.
fn verified_derivative<G: Fn(f64) -> f64>(name: &str, g: G, x: f64, printed: f64) -> Result<f64> {
    let fd = central_difference(g, x, FD_STEP);
    if (fd - printed).abs() > FD_REL_TOL * printed.abs().max(1e-4) {
        return Err(Error::OracleDisagreement(format!(
            "{name} at {x}: finite difference {fd} vs closed form {printed}"
        )));
    }
    Ok(fd)
}

/// Verified `∂F/∂a1`.
pub fn welfare_bias_derivative(a1: f64, p: f64) -> Result<f64> {
    check_domain(a1, p)?;
    verified_derivative("dF/da1", |a| f_raw(a, p), a1, df_da1(a1, p))
}

/// Verified `∂H/∂a1`.
pub fn surplus_bias_derivative(a1: f64, p: f64) -> Result<f64> {
    check_domain(a1, p)?;
    verified_derivative("dH/da1", |a| h_raw(a, p), a1, dh_da1(a1, p))
}

/// Verified `∂G/∂p`.
pub fn efficiency_cost_cost_derivative(a1: f64, p: f64) -> Result<f64> {
    check_domain(a1, p)?;
    let p0 = p.max(FD_STEP);
    verified_derivative("dG/dp", |x| g_raw(a1, x), p0, dg_dp(a1, p0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
    Zero,
    Undetermined,
}

impl Sign {
    fn of(x: f64) -> Self {
        if x > 0.0 {
            Self::Positive
        } else if x < 0.0 {
            Self::Negative
        } else {
            Self::Zero
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Positive => "+",
            Self::Negative => "-",
            Self::Zero => "0",
            Self::Undetermined => "undetermined",
        })
    }
}

/// Whether a sign is a proven region claim or read off the derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Theorem,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignReport {
    pub sign: Sign,
    pub basis: Basis,
    /// Finite-difference derivative at the point.
    pub derivative: f64,
    /// Interior minimizer in `a1`, for the profit sign.
    pub minimizer: Option<f64>,
}

fn claimed(sign: Sign, derivative: f64, what: &str) -> Result<SignReport> {
    if Sign::of(derivative) != sign {
        return Err(Error::OracleDisagreement(format!(
            "{what}: region claims {sign} but the derivative is {derivative}"
        )));
    }
    Ok(SignReport {
        sign,
        basis: Basis::Theorem,
        derivative,
        minimizer: None,
    })
}

/// Sign of `∂W/∂a1` at the profit optimum: `+` on `(1/3, 1/2)`, `-` above
/// `(1 + √73)/18`, undetermined elsewhere.
pub fn welfare_bias_derivative_sign(a1: f64, p: f64) -> Result<SignReport> {
    let d = welfare_bias_derivative(a1, p)?;
    let upper = (1.0 + 73f64.sqrt()) / 18.0;
    if a1 > 1.0 / 3.0 && a1 < 0.5 {
        claimed(Sign::Positive, d, "dW/da1")
    } else if a1 > upper {
        claimed(Sign::Negative, d, "dW/da1")
    } else {
        Ok(SignReport {
            sign: Sign::Undetermined,
            basis: Basis::Numeric,
            derivative: d,
            minimizer: None,
        })
    }
}

/// Sign of `∂π/∂a1` at the profit optimum, that of
/// `c2 (1 - a1) + h2 (3 a1 - 1)`.
pub fn profit_bias_derivative_sign(a1: f64, c2: f64, h2: f64) -> Result<SignReport> {
    if !(0.0..2.0 / 3.0).contains(&a1) {
        return Err(Error::domain(format!("a1 must lie in [0, 2/3), got {a1}")));
    }
    if !(c2 >= 0.0 && h2 >= 0.0 && c2 + h2 > 0.0) {
        return Err(Error::hypothesis("c2 + h2 > 0"));
    }
    let criterion = c2 * (1.0 - a1) + h2 * (3.0 * a1 - 1.0);
    let profit = |a: f64| (1.0 - a).powi(2) / ((2.0 - 3.0 * a) * ((1.0 - a) * c2 + h2));
    let step = FD_STEP.min(a1.max(FD_STEP));
    let derivative = central_difference(profit, a1.max(step), step);
    let minimizer = (h2 > c2).then(|| (h2 - c2) / (3.0 * h2 - c2));
    let sign = if criterion.abs() <= 1e-14 * (c2 + h2) {
        Sign::Zero
    } else {
        Sign::of(criterion)
    };
    if sign != Sign::Zero && criterion.abs() > 1e-6 * (c2 + h2) && Sign::of(derivative) != sign {
        return Err(Error::OracleDisagreement(format!(
            "dpi/da1: criterion {criterion} vs finite difference {derivative}"
        )));
    }
    Ok(SignReport {
        sign,
        basis: Basis::Theorem,
        derivative,
        minimizer,
    })
}

/// Sign of `∂CS/∂a1` at the profit optimum: `+` when `p <= 1.94` and
/// `a1 < max{(1-p)/(3-p), (p-1)/(p+1)}`, `-` when `a1 > 0.4`, and the
/// numerical sign elsewhere.
pub fn surplus_bias_derivative_sign(a1: f64, p: f64) -> Result<SignReport> {
    let d = surplus_bias_derivative(a1, p)?;
    if p <= 1.94 && a1 < surplus_positive_bound(p) {
        claimed(Sign::Positive, d, "dCS/da1")
    } else if a1 > 0.4 {
        claimed(Sign::Negative, d, "dCS/da1")
    } else {
        Ok(SignReport {
            sign: Sign::of(d),
            basis: Basis::Numeric,
            derivative: d,
            minimizer: None,
        })
    }
}

/// `max{(1-p)/(3-p), (p-1)/(p+1)}`.
pub fn surplus_positive_bound(p: f64) -> f64 {
    ((1.0 - p) / (3.0 - p)).max((p - 1.0) / (p + 1.0))
}

/// `S = (θ1 + h1 - c1)³ / (6 (θ1 - θ0) h2)`.
fn surface_scale(env: &MarketEnv) -> Result<f64> {
    let (h1, h2) = env.quadratic_prefs()?;
    if h2 <= 0.0 {
        return Err(Error::hypothesis("h2 > 0"));
    }
    Ok((env.theta1() + h1 - env.c1()).powi(3) / (6.0 * env.type_width() * h2))
}

/// Maximal welfare minus welfare at the profit-maximizing quadratic tariff.
pub fn efficiency_cost(env: &MarketEnv) -> Result<f64> {
    let best = optimal_welfare_scheme(env)?;
    let monopoly = optimal_profit_scheme(env)?;
    Ok(best.value - env.quadratic_welfare_polynomial(monopoly.a, monopoly.b)?)
}

/// `S·G(a1, c2/h2)`.
pub fn efficiency_cost_closed_form(env: &MarketEnv) -> Result<f64> {
    let scale = surface_scale(env)?;
    let (_, h2) = env.quadratic_prefs()?;
    Ok(scale * shape_functions(env.a1(), env.c2() / h2)?.g)
}

/// One row of the surface table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub point: StaticsPoint,
    pub profit: f64,
    pub welfare: f64,
    pub surplus: f64,
    pub efficiency_cost: f64,
}

pub const SWEEP_HEADER: [&str; 9] = [
    "a1",
    "p",
    "F",
    "G",
    "H",
    "profit",
    "welfare",
    "surplus",
    "efficiency_cost",
];

/// Surface table over `a1_grid × p_grid`, each env taken from `template`
/// with kernel `MixDirac(a1)` and `c2 = p·h2`.
///
/// Up to five rows chosen by `seed` are re-evaluated by quadrature of the
/// market functionals. Rows whose profit-optimal tariff excludes low types
/// (`B - h1 < θ0`) are not cross-checked: the closed forms do not describe
/// them.
pub fn sweep(
    template: &MarketEnv,
    a1_grid: &[f64],
    p_grid: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let (h1, h2) = template.quadratic_prefs()?;
    let mut rows = Vec::with_capacity(a1_grid.len() * p_grid.len());
    let mut envs = Vec::with_capacity(rows.capacity());
    for &a1 in a1_grid {
        for &p in p_grid {
            let point = shape_functions(a1, p)?;
            let env = MarketEnv::quadratic(
                template.theta0(),
                template.theta1(),
                h1,
                h2,
                template.c1(),
                p * h2,
                PerceptionKernel::mix_dirac(a1)?,
            )?;
            let scale = surface_scale(&env)?;
            let profit = optimal_profit_scheme(&env)?.value;
            rows.push(SweepRow {
                point,
                profit,
                welfare: scale * point.f,
                surplus: scale * point.h,
                efficiency_cost: scale * point.g,
            });
            envs.push(env);
        }
    }
    let eligible: Vec<usize> = (0..rows.len())
        .filter(|&i| {
            let opt = optimal_profit_scheme(&envs[i]).expect("computed above");
            opt.b - h1 >= template.theta0()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..CROSS_CHECKS.min(eligible.len()) {
        let i = eligible[rng.gen_range(0..eligible.len())];
        cross_check(&envs[i], &rows[i])?;
    }
    Ok(rows)
}

fn cross_check(env: &MarketEnv, row: &SweepRow) -> Result<()> {
    let scheme = optimal_profit_scheme(env)?.scheme();
    let profit = env.expected_profit_quadrature(&scheme)?;
    let welfare = env.expected_welfare_quadrature(&scheme)?;
    let cost = optimal_welfare_scheme(env)?.value - welfare;
    for (name, closed, quad) in [
        ("profit", row.profit, profit),
        ("welfare", row.welfare, welfare),
        ("surplus", row.surplus, welfare - profit),
        ("efficiency_cost", row.efficiency_cost, cost),
    ] {
        if (closed - quad).abs() > 1e-9 * (1.0 + closed.abs()) {
            return Err(Error::OracleDisagreement(format!(
                "{name} at a1 = {}, p = {}: closed form {closed} vs quadrature {quad}",
                row.point.a1, row.point.p
            )));
        }
    }
    Ok(())
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(SWEEP_HEADER);
    for r in rows {
        let p = &r.point;
        t.push_numbers(&[
            p.a1,
            p.p,
            p.f,
            p.g,
            p.h,
            r.profit,
            r.welfare,
            r.surplus,
            r.efficiency_cost,
        ]);
    }
    t
}

/// `(a1, p, G)` triplets for plotting the efficiency-cost surface.
pub fn figure1_table(a1_grid: &[f64], p_grid: &[f64]) -> Result<Table> {
    let mut t = Table::new(["a1", "p", "G"]);
    for &a1 in a1_grid {
        for &p in p_grid {
            t.push_numbers(&[a1, p, shape_functions(a1, p)?.g]);
        }
    }
    Ok(t)
}
