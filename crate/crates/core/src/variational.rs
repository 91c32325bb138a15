//! Euler–Lagrange diagnostics for consumers who perceive
//! `β·P(q)/q + (1 - β)·P'(q)`.
//!
//! Profit is `∫_0^{q*} H(q, P, P') dq` with
//! `H = (P' - C')(1 - F(β P/q + (1 - β) P' - h'))`. This module evaluates
//! the Euler–Lagrange residual and the endpoint conditions of a supplied
//! tariff; it does not solve the boundary-value problem.

use crate::error::{Error, Result};
use crate::market::{CutoffMode, MarketEnv};
use crate::numerics::{central_difference, integrate_panels, relative_step};
use crate::tariffs::{PiecewiseLinear, PriceScheme};

const MIN_Q: f64 = 1e-6;
const REL_STEP: f64 = 1e-5;
const STEP_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct VariationalProblem {
    env: MarketEnv,
    scheme: PriceScheme,
    beta: f64,
}

impl VariationalProblem {
    /// The env's kernel must mix the average and the marginal price.
    pub fn new(env: MarketEnv, scheme: PriceScheme) -> Result<Self> {
        let beta = env.kernel().average_weight().ok_or_else(|| {
            Error::InvalidKernel(
                "variational checks need a kernel mixing average and marginal price".into(),
            )
        })?;
        Ok(Self { env, scheme, beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn env(&self) -> &MarketEnv {
        &self.env
    }

    pub fn scheme(&self) -> &PriceScheme {
        &self.scheme
    }

    /// `H(q, P, P')`.
    pub fn integrand(&self, q: f64, p: f64, dp: f64) -> f64 {
        let avg = if q > 0.0 { p / q } else { dp };
        let theta = self.beta * avg + (1.0 - self.beta) * dp - self.env.prefs().h_prime(q);
        (dp - self.env.cost_prime(q)) * (1.0 - self.env.cdf(theta))
    }

    fn along(&self, q: f64) -> (f64, f64) {
        (self.scheme.price_at(q), self.scheme.marginal_at(q))
    }

    /// `∂H/∂P - d/dq ∂H/∂P'` along the tariff, all derivatives by central
    /// differences with steps relative to the local magnitudes.
    pub fn euler_lagrange_residual(&self, q: f64) -> Result<f64> {
        if !(q >= MIN_Q) {
            return Err(Error::domain(format!(
                "evaluation needs q >= {MIN_Q}, got {q}"
            )));
        }
        let hq = relative_step(q, REL_STEP, STEP_FLOOR);
        for k in self.scheme.kinks() {
            if (q - k).abs() <= 2.0 * hq {
                return Err(Error::AtKink { q });
            }
        }
        let d_dp = |x: f64| {
            let (p, dp) = self.along(x);
            let h = relative_step(dp, REL_STEP, STEP_FLOOR);
            central_difference(|v| self.integrand(x, p, v), dp, h)
        };
        let (p, dp) = self.along(q);
        let hp = relative_step(p, REL_STEP, STEP_FLOOR);
        let d_p = central_difference(|v| self.integrand(q, v, dp), p, hp);
        Ok(d_p - central_difference(d_dp, q, hq))
    }

    /// `(β P(q*)/q* + (1-β) P'(q*) - h'(q*) - θ1, P'(q*) - C'(q*))`. The
    /// second entry vanishes at an unconstrained optimum only for `β < 1`.
    pub fn transversality_check(&self) -> Result<(f64, f64)> {
        let q = self
            .env
            .max_quantity(&self.scheme, CutoffMode::Perceived)?
            .finite()
            .ok_or(Error::UnboundedDomain)?;
        let (_, dp) = self.along(q);
        let avg = self.scheme.average_at(q);
        let gap = self.beta * avg + (1.0 - self.beta) * dp
            - self.env.prefs().h_prime(q)
            - self.env.theta1();
        Ok((gap, dp - self.env.cost_prime(q)))
    }

    /// `∫_0^{q*} H(q, P(q), P'(q)) dq`.
    pub fn objective(&self) -> Result<f64> {
        let map = self.env.cutoff_map(&self.scheme, CutoffMode::Perceived)?;
        let top = map.finite_top()?;
        let panels = map.quantity_panels(top);
        Ok(integrate_panels(
            |q| {
                let (p, dp) = self.along(q);
                self.integrand(q, p, dp)
            },
            &panels,
            1e-12,
        ))
    }

    /// Residuals on `n` interior points of `(0, q*)`, skipping kinks.
    pub fn residual_profile(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        let top = self
            .env
            .max_quantity(&self.scheme, CutoffMode::Perceived)?
            .finite()
            .ok_or(Error::UnboundedDomain)?;
        let mut out = Vec::with_capacity(n);
        for i in 1..=n {
            let q = top * i as f64 / (n + 1) as f64;
            match self.euler_lagrange_residual(q) {
                Ok(r) => out.push((q, r)),
                Err(Error::AtKink { .. }) | Err(Error::Domain(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

/// One ascent step of [`polish_piecewise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolishStep {
    pub iteration: usize,
    pub objective: f64,
    /// Largest weak-form residual over segments.
    pub max_residual: f64,
}

#[derive(Debug, Clone)]
pub struct PolishReport {
    pub scheme: PiecewiseLinear,
    pub steps: Vec<PolishStep>,
}

impl PolishReport {
    pub fn residual_nonincreasing(&self) -> bool {
        self.steps
            .windows(2)
            .all(|w| w[1].max_residual <= w[0].max_residual)
    }
}

/// Projected gradient ascent of the profit over convex piecewise-linear
/// tariffs with fixed breakpoints.
///
/// On a piecewise-linear tariff `P'` is constant per segment, so the
/// pointwise Euler–Lagrange residual says little; the report tracks its
/// weak form instead: the projected gradient step in each slope, with the
/// gradient taken per unit segment width.
pub fn polish_piecewise(
    env: &MarketEnv,
    start: PiecewiseLinear,
    iterations: usize,
) -> Result<PolishReport> {
    let breaks = start.breakpoints().to_vec();
    let n = breaks.len();
    let widths: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < n {
                breaks[i + 1] - breaks[i]
            } else {
                breaks[i] - breaks[i - 1].min(breaks[i])
            }
        })
        .map(|w| if w > 0.0 { w } else { 1.0 })
        .collect();
    let value = |slopes: &[f64]| -> f64 {
        PiecewiseLinear::new(breaks.clone(), slopes.to_vec())
            .and_then(|pl| VariationalProblem::new(env.clone(), PriceScheme::PiecewiseLinear(pl)))
            .and_then(|vp| vp.objective())
            .unwrap_or(f64::NEG_INFINITY)
    };
    let gradient = |slopes: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let h = relative_step(slopes[i], 1e-6, 1e-7);
                let mut up = slopes.to_vec();
                let mut down = slopes.to_vec();
                up[i] += h;
                down[i] = (down[i] - h).max(0.0);
                (value(&up) - value(&down)) / (up[i] - down[i])
            })
            .collect()
    };
    let mut slopes = project(start.slopes());
    let mut current = value(&slopes);
    if !current.is_finite() {
        return Err(Error::DegenerateScheme(
            "starting tariff has no finite profit".into(),
        ));
    }
    let ascent = |s: &[f64], g: &[f64], t: f64| -> Vec<f64> {
        let raw: Vec<f64> = s
            .iter()
            .zip(g)
            .zip(&widths)
            .map(|((s, gi), w)| s + t * gi / w)
            .collect();
        project(&raw)
    };
    let mut steps = Vec::with_capacity(iterations + 1);
    let mut rate = 1.0;
    for iteration in 0..=iterations {
        let g = gradient(&slopes);
        let mapped = ascent(&slopes, &g, 1.0);
        let max_residual = mapped
            .iter()
            .zip(&slopes)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        steps.push(PolishStep {
            iteration,
            objective: current,
            max_residual,
        });
        if iteration == iterations {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let trial = ascent(&slopes, &g, rate);
            let v = value(&trial);
            if v > current {
                slopes = trial;
                current = v;
                rate *= 1.5;
                accepted = true;
                break;
            }
            rate *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(PolishReport {
        scheme: PiecewiseLinear::new(breaks, slopes)?,
        steps,
    })
}

// Nearest nondecreasing, nonnegative slope sequence (pool adjacent
// violators). Nondecreasing slopes keep the tariff convex, which keeps every
// mixture cutoff increasing.
fn project(slopes: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(slopes.len());
    for &s in slopes {
        blocks.push((s, 1));
        while blocks.len() > 1 {
            let (v2, n2) = blocks[blocks.len() - 1];
            let (v1, n1) = blocks[blocks.len() - 2];
            if v1 <= v2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().expect("two blocks") =
                ((v1 * n1 as f64 + v2 * n2 as f64) / n as f64, n);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, n)| std::iter::repeat_n(v.max(0.0), n))
        .collect()
}

/// `n` equal segments on `[0, span]` priced at marginal cost of each
/// segment's midpoint.
pub fn marginal_cost_start(env: &MarketEnv, n: usize, span: f64) -> Result<PiecewiseLinear> {
    let n = n.max(1);
    let breaks: Vec<f64> = (0..n).map(|i| span * i as f64 / n as f64).collect();
    let slopes = breaks
        .iter()
        .map(|b| env.cost_prime(b + 0.5 * span / n as f64))
        .collect();
    PiecewiseLinear::new(breaks, slopes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::PerceptionKernel;
    use approx::assert_abs_diff_eq;

    fn e1(beta: f64) -> MarketEnv {
        MarketEnv::quadratic(
            0.0,
            1.0,
            0.0,
            1.0,
            0.0,
            1.0,
            PerceptionKernel::beta_mix(beta).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rational_optimum_has_zero_residual() {
        let vp =
            VariationalProblem::new(e1(0.0), PriceScheme::quadratic(0.0, 0.5).unwrap()).unwrap();
        for i in 1..50 {
            let q = 0.5 * i as f64 / 50.0;
            assert!(
                vp.euler_lagrange_residual(q).unwrap().abs() <= 1e-5,
                "q = {q}"
            );
        }
    }

    #[test]
    fn marginal_cost_pricing_residual() {
        // Zero markup leaves -d/dq (1 - F(θ_P)) = f·θ_P' = 2 for P' = C' = q.
        let vp =
            VariationalProblem::new(e1(0.0), PriceScheme::quadratic(1.0, 0.0).unwrap()).unwrap();
        for q in [0.1, 0.25, 0.4] {
            assert_abs_diff_eq!(vp.euler_lagrange_residual(q).unwrap(), 2.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn residual_profile_at_beta_one() {
        let vp =
            VariationalProblem::new(e1(1.0), PriceScheme::quadratic(4.0, 0.0).unwrap()).unwrap();
        let profile = vp.residual_profile(10).unwrap();
        assert_eq!(profile.len(), 10);
        assert!(profile.iter().all(|(_, r)| r.is_finite()));
    }

    #[test]
    fn kink_and_small_q_rejected() {
        let vp = VariationalProblem::new(e1(0.0), PriceScheme::two_tier(0.4, 0.9, 0.5).unwrap())
            .unwrap();
        assert!(matches!(
            vp.euler_lagrange_residual(0.5),
            Err(Error::AtKink { .. })
        ));
        assert!(vp.euler_lagrange_residual(1e-9).is_err());
    }

    #[test]
    fn transversality_examples() {
        let vp =
            VariationalProblem::new(e1(0.0), PriceScheme::quadratic(0.0, 0.5).unwrap()).unwrap();
        let (gap, markup) = vp.transversality_check().unwrap();
        assert!(gap.abs() < 1e-12 && markup.abs() < 1e-12);
        let vp = VariationalProblem::new(e1(0.0), PriceScheme::flat(0.6).unwrap()).unwrap();
        let (gap, markup) = vp.transversality_check().unwrap();
        assert!(gap.abs() < 1e-12);
        assert_abs_diff_eq!(markup, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn objective_matches_market_profit() {
        for beta in [0.0, 0.3, 0.5, 1.0] {
            let env = e1(beta);
            for (a, b) in [(4.0, 0.0), (0.0, 0.5), (1.5, 0.2)] {
                let s = PriceScheme::quadratic(a, b).unwrap();
                let vp = VariationalProblem::new(env.clone(), s.clone()).unwrap();
                assert_abs_diff_eq!(
                    vp.objective().unwrap(),
                    env.expected_profit(&s).unwrap(),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn non_mixture_kernel_rejected() {
        let env = e1(0.0)
            .with_kernel(PerceptionKernel::mix_dirac(0.3).unwrap())
            .unwrap();
        assert!(VariationalProblem::new(env, PriceScheme::flat(0.5).unwrap()).is_err());
    }

    #[test]
    fn polish_improves_profit() {
        let env = MarketEnv::quadratic(
            0.0,
            1.0,
            0.0,
            1.0,
            0.0,
            0.5,
            PerceptionKernel::beta_mix(0.5).unwrap(),
        )
        .unwrap();
        let start = marginal_cost_start(&env, 20, 1.0).unwrap();
        let report = polish_piecewise(&env, start, 15).unwrap();
        let first = report.steps.first().unwrap();
        let last = report.steps.last().unwrap();
        assert!(last.objective > first.objective);
        assert!(last.max_residual < 1e-3 * first.max_residual);
        // A convex piecewise tariff can beat the best quadratic one.
        assert!(
            last.objective
                >= crate::quadratic_optimum::optimal_profit_scheme(&env)
                    .unwrap()
                    .value
        );
    }
}
