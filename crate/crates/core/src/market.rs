//! Population layer: cutoff types, the maximum quantity, and the profit,
//! welfare, surplus and aggregate-consumption functionals for uniformly
//! distributed types.

use crate::consumer::{cutoff, Preferences};
use crate::error::{Error, Result};
use crate::numerics::{integrate_panels, lower_crossing};
use crate::perception::PerceptionKernel;
use crate::tariffs::PriceScheme;

const QUAD_TOL: f64 = 1e-12;
const MONOTONE_GRID: usize = 1024;

/// Preferences, cost `C(q) = c1 q + (c2/2) q²`, types uniform on
/// `[θ0, θ1]`, and the consumers' perception kernel.
#[derive(Debug, Clone)]
pub struct MarketEnv {
    prefs: Preferences,
    c1: f64,
    c2: f64,
    theta0: f64,
    theta1: f64,
    kernel: PerceptionKernel,
    a1: f64,
}

impl MarketEnv {
    pub fn new(
        prefs: Preferences,
        c1: f64,
        c2: f64,
        theta0: f64,
        theta1: f64,
        kernel: PerceptionKernel,
    ) -> Result<Self> {
        for (name, v) in [("c1", c1), ("c2", c2), ("theta0", theta0)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidEnv(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if !(theta1.is_finite() && theta1 > theta0) {
            return Err(Error::InvalidEnv(format!(
                "need theta1 > theta0, got [{theta0}, {theta1}]"
            )));
        }
        let h1 = prefs.h_prime(0.0);
        let h2 = -prefs.h_second(0.0);
        if c2 + h2 <= 0.0 {
            return Err(Error::hypothesis("c2 + h2 > 0"));
        }
        if theta1 + h1 - c1 <= 0.0 {
            return Err(Error::hypothesis("theta1 + h1 - c1 > 0"));
        }
        let a1 = kernel.mean_fraction()?;
        Ok(Self {
            prefs,
            c1,
            c2,
            theta0,
            theta1,
            kernel,
            a1,
        })
    }

    /// Quadratic preferences `h(q) = h1 q - (h2/2) q²`.
    pub fn quadratic(
        theta0: f64,
        theta1: f64,
        h1: f64,
        h2: f64,
        c1: f64,
        c2: f64,
        kernel: PerceptionKernel,
    ) -> Result<Self> {
        Self::new(
            Preferences::quadratic(h1, h2)?,
            c1,
            c2,
            theta0,
            theta1,
            kernel,
        )
    }

    pub fn with_kernel(&self, kernel: PerceptionKernel) -> Result<Self> {
        Self::new(
            self.prefs.clone(),
            self.c1,
            self.c2,
            self.theta0,
            self.theta1,
            kernel,
        )
    }

    pub fn prefs(&self) -> &Preferences {
        &self.prefs
    }

    pub fn kernel(&self) -> &PerceptionKernel {
        &self.kernel
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn type_width(&self) -> f64 {
        self.theta1 - self.theta0
    }

    /// `(h1, h2)`, or a hypothesis error for general preferences.
    pub fn quadratic_prefs(&self) -> Result<(f64, f64)> {
        self.prefs
            .quadratic_coefficients()
            .ok_or_else(|| Error::hypothesis("quadratic preferences h(q) = h1 q - (h2/2) q^2"))
    }

    /// `a1 < 2/3`: the closed-form profit optimum applies.
    pub fn prop2_valid(&self) -> bool {
        self.a1 < 2.0 / 3.0 && self.prefs.quadratic_coefficients().is_some()
    }

    /// `a1 < 1`: the closed-form welfare optimum applies.
    pub fn prop3_valid(&self) -> bool {
        self.a1 < 1.0 && self.prefs.quadratic_coefficients().is_some()
    }

    pub fn cost(&self, q: f64) -> f64 {
        self.c1 * q + 0.5 * self.c2 * q * q
    }

    pub fn cost_prime(&self, q: f64) -> f64 {
        self.c1 + self.c2 * q
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        ((theta - self.theta0) / self.type_width()).clamp(0.0, 1.0)
    }

    pub fn pdf(&self, theta: f64) -> f64 {
        if (self.theta0..=self.theta1).contains(&theta) {
            1.0 / self.type_width()
        } else {
            0.0
        }
    }

    /// Search cap for the maximum quantity.
    pub fn q_cap(&self) -> f64 {
        let h1 = self.prefs.h_prime(0.0);
        let h2 = -self.prefs.h_second(0.0);
        10.0 * (self.theta1 + h1 + 1.0) / (self.c2 + h2).max(f64::EPSILON)
    }

    fn mode_kernel(&self, mode: CutoffMode) -> PerceptionKernel {
        match mode {
            CutoffMode::Perceived => self.kernel.clone(),
            CutoffMode::Rational => PerceptionKernel::Dirac0,
            CutoffMode::Average => PerceptionKernel::Uniform,
        }
    }

    /// `θ_P(q)`, `θ̂_P(q)` or `θ̃_P(q)` per `mode`.
    pub fn cutoff_type(&self, scheme: &PriceScheme, q: f64, mode: CutoffMode) -> Result<f64> {
        if q.is_nan() || q < 0.0 {
            return Err(Error::domain(format!(
                "quantity must be nonnegative, got {q}"
            )));
        }
        Ok(cutoff(&self.prefs, &self.mode_kernel(mode), scheme, q))
    }

    /// The cutoff map with its verified monotone range.
    pub fn cutoff_map<'a>(
        &'a self,
        scheme: &'a PriceScheme,
        mode: CutoffMode,
    ) -> Result<CutoffMap<'a>> {
        CutoffMap::build(self, scheme, self.mode_kernel(mode))
    }

    pub fn max_quantity(&self, scheme: &PriceScheme, mode: CutoffMode) -> Result<MaxQuantity> {
        Ok(self.cutoff_map(scheme, mode)?.q_star)
    }

    /// `∫_0^{q*} (P' - C')(1 - F(θ_P)) dq`. Quadratic schemes with
    /// quadratic preferences use the exact polynomial antiderivative.
    pub fn expected_profit(&self, scheme: &PriceScheme) -> Result<f64> {
        match scheme {
            PriceScheme::Quadratic { a, b } if self.prefs.quadratic_coefficients().is_some() => {
                self.quadratic_profit_polynomial(*a, *b)
            }
            _ => self.expected_profit_quadrature(scheme),
        }
    }

    pub fn expected_profit_quadrature(&self, scheme: &PriceScheme) -> Result<f64> {
        let map = self.cutoff_map(scheme, CutoffMode::Perceived)?;
        let top = map.finite_top()?;
        let panels = map.quantity_panels(top);
        Ok(integrate_panels(
            |q| (scheme.marginal_at(q) - self.cost_prime(q)) * (1.0 - self.cdf(map.value(q))),
            &panels,
            QUAD_TOL,
        ))
    }

    /// `∫ (P(q(θ)) - C(q(θ))) dF(θ)` over per-type responses.
    pub fn expected_profit_type_space(&self, scheme: &PriceScheme) -> Result<f64> {
        let map = self.cutoff_map(scheme, CutoffMode::Perceived)?;
        map.finite_top()?;
        Ok(map.type_integral(|_, q| scheme.price_at(q) - self.cost(q)))
    }

    /// `∫_0^{q*} [(dP̃'/dq - h'') q + P̃' - C'] (1 - F(θ_P)) dq` for schemes
    /// without kinks; kinked schemes are integrated over types instead,
    /// since bunching puts mass where the quantity-space form has none.
    pub fn expected_welfare(&self, scheme: &PriceScheme) -> Result<f64> {
        match scheme {
            PriceScheme::Quadratic { a, b } if self.prefs.quadratic_coefficients().is_some() => {
                self.quadratic_welfare_polynomial(*a, *b)
            }
            s if !s.kinks().is_empty() => self.expected_welfare_type_space(s),
            s => self.expected_welfare_quadrature(s),
        }
    }

    pub fn expected_welfare_quadrature(&self, scheme: &PriceScheme) -> Result<f64> {
        let map = self.cutoff_map(scheme, CutoffMode::Perceived)?;
        let top = map.finite_top()?;
        let panels = map.quantity_panels(top);
        let k = &self.kernel;
        Ok(integrate_panels(
            |q| {
                let slope = k.perceived_slope(scheme, q) - self.prefs.h_second(q);
                (slope * q + k.perceived_at(scheme, q) - self.cost_prime(q))
                    * (1.0 - self.cdf(map.value(q)))
            },
            &panels,
            QUAD_TOL,
        ))
    }

    /// `∫ (θ q(θ) + h(q(θ)) - C(q(θ))) dF(θ)`.
    pub fn expected_welfare_type_space(&self, scheme: &PriceScheme) -> Result<f64> {
        let map = self.cutoff_map(scheme, CutoffMode::Perceived)?;
        map.finite_top()?;
        Ok(map.type_integral(|t, q| t * q + self.prefs.h(q) - self.cost(q)))
    }

    /// Welfare minus profit.
    pub fn consumer_surplus(&self, scheme: &PriceScheme) -> Result<f64> {
        Ok(self.expected_welfare(scheme)? - self.expected_profit(scheme)?)
    }

    /// Exact profit of `P(q) = (A/2) q² + B q`, accounting for types below
    /// `θ_P(0)` that buy nothing.
    pub fn quadratic_profit_polynomial(&self, a: f64, b: f64) -> Result<f64> {
        self.quadratic_functional(a, b, a - self.c2, b - self.c1)
    }

    /// Exact welfare of `P(q) = (A/2) q² + B q`.
    pub fn quadratic_welfare_polynomial(&self, a: f64, b: f64) -> Result<f64> {
        let (_, h2) = self.quadratic_prefs()?;
        let slope = 2.0 * (1.0 - self.a1) * a + h2 - self.c2;
        self.quadratic_functional(a, b, slope, b - self.c1)
    }

    // ∫_0^{q*} (β q + α)(1 - F(kq + B - h1)) dq in closed form.
    fn quadratic_functional(&self, a: f64, b: f64, beta: f64, alpha: f64) -> Result<f64> {
        let (h1, h2) = self.quadratic_prefs()?;
        let k = (1.0 - self.a1) * a + h2;
        let base = b - h1;
        if base >= self.theta1 {
            return Ok(0.0);
        }
        if k < 0.0 {
            return Err(Error::NonmonotoneCutoff(format!(
                "(1 - a1) A + h2 = {k} < 0"
            )));
        }
        if k == 0.0 {
            return Err(Error::UnboundedDomain);
        }
        let q_star = (self.theta1 - base) / k;
        let q_clip = ((self.theta0 - base) / k).clamp(0.0, q_star);
        let w = self.type_width();
        // On [q_clip, q*]: 1 - F = (θ1 - base - k q) / Δθ.
        let below = poly_product_integral(alpha, beta, 1.0, 0.0, 0.0, q_clip);
        let above = poly_product_integral(
            alpha,
            beta,
            (self.theta1 - base) / w,
            -k / w,
            q_clip,
            q_star,
        );
        Ok(below + above)
    }

    /// `E[q(θ)]` for the population perceiving prices per `mode`.
    pub fn mean_consumption(&self, scheme: &PriceScheme, mode: CutoffMode) -> Result<f64> {
        let map = self.cutoff_map(scheme, mode)?;
        map.finite_top()?;
        Ok(map.type_integral(|_, q| q))
    }

    /// `(1 - λ) E[q̂] + λ E[q̃]` for a population with a fraction `λ`
    /// perceiving the average price and the rest the true marginal price.
    pub fn aggregate_consumption(&self, scheme: &PriceScheme, lambda: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::domain(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        let rational = self.mean_consumption(scheme, CutoffMode::Rational)?;
        let average = self.mean_consumption(scheme, CutoffMode::Average)?;
        Ok((1.0 - lambda) * rational + lambda * average)
    }
}

/// `∫_x^y (α + β q)(γ + δ q) dq`.
pub(crate) fn poly_product_integral(
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    x: f64,
    y: f64,
) -> f64 {
    let d1 = y - x;
    let d2 = (y * y - x * x) / 2.0;
    let d3 = (y * y * y - x * x * x) / 3.0;
    alpha * gamma * d1 + (alpha * delta + beta * gamma) * d2 + beta * delta * d3
}

/// Which price the consumers respond to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffMode {
    /// The kernel-weighted perceived marginal price.
    Perceived,
    /// The true marginal price.
    Rational,
    /// The average price.
    Average,
}

/// The maximum quantity bought by any type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxQuantity {
    Finite(f64),
    /// The cutoff stays below `θ1` up to the search cap.
    Unbounded,
}

impl MaxQuantity {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(q) => Some(q),
            Self::Unbounded => None,
        }
    }
}

/// `q ↦ θ_P(q)` with its monotonicity verified on `[0, q*]`.
#[derive(Debug)]
pub struct CutoffMap<'a> {
    env: &'a MarketEnv,
    scheme: &'a PriceScheme,
    kernel: PerceptionKernel,
    q_star: MaxQuantity,
}

impl<'a> CutoffMap<'a> {
    fn build(
        env: &'a MarketEnv,
        scheme: &'a PriceScheme,
        kernel: PerceptionKernel,
    ) -> Result<Self> {
        let mut map = Self {
            env,
            scheme,
            kernel,
            q_star: MaxQuantity::Unbounded,
        };
        let theta1 = env.theta1;
        if map.value(0.0) >= theta1 {
            map.q_star = MaxQuantity::Finite(0.0);
            return Ok(map);
        }
        let cap = env.q_cap();
        let mut hi = cap.min(1.0);
        while map.value(hi) < theta1 {
            if hi >= cap {
                map.check_monotone(cap)?;
                return Ok(map);
            }
            hi = (2.0 * hi).min(cap);
        }
        let q = lower_crossing(|q| map.value(q), theta1, 0.0, hi);
        map.check_monotone(q)?;
        map.q_star = MaxQuantity::Finite(q);
        Ok(map)
    }

    fn check_monotone(&self, top: f64) -> Result<()> {
        let mut prev = self.value(0.0);
        for i in 1..=MONOTONE_GRID {
            let q = top * i as f64 / MONOTONE_GRID as f64;
            let v = self.value(q);
            if v < prev - 1e-12 * (1.0 + prev.abs()) {
                return Err(Error::NonmonotoneCutoff(format!(
                    "cutoff falls from {prev} to {v} near q = {q}"
                )));
            }
            prev = v;
        }
        Ok(())
    }

    pub fn value(&self, q: f64) -> f64 {
        cutoff(&self.env.prefs, &self.kernel, self.scheme, q)
    }

    pub fn q_star(&self) -> MaxQuantity {
        self.q_star
    }

    pub(crate) fn finite_top(&self) -> Result<f64> {
        self.q_star.finite().ok_or(Error::UnboundedDomain)
    }

    /// Smallest `q` with `θ_P(q) >= θ`, or 0 below `θ_P(0)`.
    pub fn inverse(&self, theta: f64) -> f64 {
        if theta <= self.value(0.0) {
            return 0.0;
        }
        let top = match self.q_star {
            MaxQuantity::Finite(q) => q,
            MaxQuantity::Unbounded => self.env.q_cap(),
        };
        if theta >= self.value(top) {
            return top;
        }
        lower_crossing(|q| self.value(q), theta, 0.0, top)
    }

    fn breaks_below(&self, top: f64) -> Vec<f64> {
        self.kernel
            .breaks(self.scheme)
            .into_iter()
            .filter(|b| *b < top)
            .collect()
    }

    // [0, q*] split where the cutoff bends, jumps or enters the type range.
    pub(crate) fn quantity_panels(&self, top: f64) -> Vec<f64> {
        let mut panels = vec![0.0, top];
        panels.extend(self.breaks_below(top));
        if top > 0.0 && self.value(0.0) < self.env.theta0 && self.value(top) > self.env.theta0 {
            panels.push(lower_crossing(|q| self.value(q), self.env.theta0, 0.0, top));
        }
        panels
    }

    /// `∫ g(θ, q(θ)) dF(θ)` split where `q(θ)` has corners or plateaus.
    fn type_integral<G: Fn(f64, f64) -> f64>(&self, g: G) -> f64 {
        let (lo, hi) = (self.env.theta0, self.env.theta1);
        let top = self.q_star.finite().unwrap_or(self.env.q_cap());
        let mut panels = vec![lo, hi, self.value(0.0)];
        for b in self.breaks_below(top) {
            panels.push(self.value(b));
            panels.push(self.left_value(b));
        }
        panels.retain(|t| (lo..=hi).contains(t));
        let density = 1.0 / self.env.type_width();
        integrate_panels(|t| g(t, self.inverse(t)) * density, &panels, QUAD_TOL)
    }

    fn left_value(&self, q: f64) -> f64 {
        self.value(q.next_down().max(0.0))
    }
}
