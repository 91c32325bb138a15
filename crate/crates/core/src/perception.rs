//! Perceived marginal price.
//!
//! A consumer at quantity `q` perceives `∫_0^q P'(q - ε) dF_q(ε)`: a weighted
//! average of the marginal prices at or below `q`. Every built-in kernel is a
//! mixture of point masses at fixed fractions of `q` and a uniform
//! component on `[0, q]`, so its mean is a constant fraction `a1` of `q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::integrate_panels;
use crate::tariffs::PriceScheme;

const QUAD_TOL: f64 = 1e-12;

/// The family `{F_q}` of weighting distributions on `[0, q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRecord", into = "KernelRecord")]
pub enum PerceptionKernel {
    /// Point mass at `ε = 0`: the true marginal price.
    Dirac0,
    /// Uniform on `[0, q]`: the average price.
    Uniform,
    /// `λ δ_q + (1 - λ) δ_0`: marginal price at zero with weight `λ`.
    MixDirac {
        lambda: f64,
    },
    /// `β U[0, q] + (1 - β) δ_0`: average price with weight `β`.
    BetaMix {
        beta: f64,
    },
    Custom(CustomKernel),
}

/// Point masses at `nodes[i] · q` with `weights[i]`, nodes in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomKernel {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    declared_a1: Option<f64>,
}

impl CustomKernel {
    /// `declared_a1`, when given, must match the kernel's actual mean
    /// fraction; a mismatch is reported as an assumption violation.
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, declared_a1: Option<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidKernel(format!(
                "custom kernel needs matching non-empty nodes and weights ({} vs {})",
                nodes.len(),
                weights.len()
            )));
        }
        if nodes.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidKernel(
                "custom kernel nodes must lie in [0, 1]".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidKernel(
                "custom kernel weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidKernel(format!(
                "custom kernel weights sum to {total}, not 1"
            )));
        }
        if let Some(a1) = declared_a1 {
            if !a1.is_finite() {
                return Err(Error::InvalidKernel("declared a1 must be finite".into()));
            }
        }
        let kernel = Self {
            nodes,
            weights,
            declared_a1,
        };
        kernel.check_linear_mean()?;
        Ok(kernel)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn computed_a1(&self) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum()
    }

    // ∫ ε dF_q = a1 q at a few scales.
    fn check_linear_mean(&self) -> Result<()> {
        let a1 = self.declared_a1.unwrap_or_else(|| self.computed_a1());
        for q in [0.5, 1.0, 2.0] {
            let mean: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| w * x * q)
                .sum();
            if (mean - a1 * q).abs() > 1e-9 {
                return Err(Error::AssumptionViolation(format!(
                    "mean of F_q at q = {q} is {mean}, expected a1·q = {}",
                    a1 * q
                )));
            }
        }
        Ok(())
    }
}

impl PerceptionKernel {
    pub fn mix_dirac(lambda: f64) -> Result<Self> {
        unit_interval("lambda", lambda)?;
        Ok(Self::MixDirac { lambda })
    }

    pub fn beta_mix(beta: f64) -> Result<Self> {
        unit_interval("beta", beta)?;
        Ok(Self::BetaMix { beta })
    }

    pub fn custom(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        CustomKernel::new(nodes, weights, None).map(Self::Custom)
    }

    /// Mean fraction `a1` with `∫ ε dF_q(ε) = a1 q`.
    pub fn mean_fraction(&self) -> Result<f64> {
        Ok(match self {
            Self::Dirac0 => 0.0,
            Self::Uniform => 0.5,
            Self::MixDirac { lambda } => *lambda,
            Self::BetaMix { beta } => 0.5 * beta,
            Self::Custom(k) => {
                k.check_linear_mean()?;
                k.computed_a1()
            }
        })
    }

    /// Weight on the average price when the kernel is a mixture of the
    /// average and the true marginal price.
    pub fn average_weight(&self) -> Option<f64> {
        match self {
            Self::Dirac0 => Some(0.0),
            Self::Uniform => Some(1.0),
            Self::BetaMix { beta } => Some(*beta),
            Self::MixDirac { lambda } if *lambda == 0.0 => Some(0.0),
            _ => None,
        }
    }

    // Point masses as (fraction of q, weight).
    fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Dirac0 => vec![(0.0, 1.0)],
            Self::Uniform => Vec::new(),
            Self::MixDirac { lambda } => vec![(1.0, *lambda), (0.0, 1.0 - lambda)],
            Self::BetaMix { beta } => vec![(0.0, 1.0 - beta)],
            Self::Custom(k) => k
                .nodes
                .iter()
                .copied()
                .zip(k.weights.iter().copied())
                .collect(),
        }
    }

    // Σ wᵢ f(xᵢ) over the atoms, without allocating.
    fn atom_sum<G: Fn(f64) -> f64>(&self, f: G) -> f64 {
        match self {
            Self::Dirac0 => f(0.0),
            Self::Uniform => 0.0,
            Self::MixDirac { lambda } => lambda * f(1.0) + (1.0 - lambda) * f(0.0),
            Self::BetaMix { beta } => (1.0 - beta) * f(0.0),
            Self::Custom(k) => k.nodes.iter().zip(&k.weights).map(|(x, w)| w * f(*x)).sum(),
        }
    }

    /// Quantities where the perceived marginal price of `scheme` may jump
    /// or bend: `k / (1 - x)` for each kink `k` and atom fraction `x < 1`.
    pub(crate) fn breaks(&self, scheme: &PriceScheme) -> Vec<f64> {
        let kinks = scheme.kinks();
        if kinks.is_empty() {
            return kinks;
        }
        let mut out = Vec::new();
        for k in kinks {
            if self.uniform_weight() > 0.0 {
                out.push(k);
            }
            for (x, w) in self.atoms() {
                if w > 0.0 && x < 1.0 {
                    out.push(k / (1.0 - x));
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn uniform_weight(&self) -> f64 {
        match self {
            Self::Uniform => 1.0,
            Self::BetaMix { beta } => *beta,
            _ => 0.0,
        }
    }

    /// Perceived marginal price at `q`.
    ///
    /// Quadratic schemes use `A(1 - a1) q + B`; other schemes combine the
    /// kernel's atoms with the exact average price. At `q = 0` every kernel
    /// returns `P'(0+)`.
    pub fn perceived_marginal(&self, scheme: &PriceScheme, q: f64) -> Result<f64> {
        if q.is_nan() || q < 0.0 {
            return Err(Error::domain(format!(
                "quantity must be nonnegative, got {q}"
            )));
        }
        if let (PriceScheme::Quadratic { a, b }, false) = (scheme, matches!(self, Self::Custom(_)))
        {
            let a1 = self.mean_fraction()?;
            return Ok(a * (1.0 - a1) * q + b);
        }
        Ok(self.perceived_at(scheme, q))
    }

    /// Same quantity as [`perceived_marginal`](Self::perceived_marginal),
    /// without the domain check, for hot loops.
    pub(crate) fn perceived_at(&self, scheme: &PriceScheme, q: f64) -> f64 {
        if q == 0.0 {
            return scheme.marginal_at(0.0);
        }
        let atoms = self.atom_sum(|x| scheme.marginal_at(q * (1.0 - x)));
        let u = self.uniform_weight();
        if u == 0.0 {
            atoms
        } else {
            atoms + u * scheme.average_at(q)
        }
    }

    /// Perceived marginal price by direct integration of `P'(q - ε)` against
    /// `F_q`: atoms are summed, the uniform part is integrated by adaptive
    /// Simpson with the scheme's kinks as panel boundaries.
    pub fn perceived_marginal_quadrature(&self, scheme: &PriceScheme, q: f64) -> Result<f64> {
        if q.is_nan() || q < 0.0 {
            return Err(Error::domain(format!(
                "quantity must be nonnegative, got {q}"
            )));
        }
        if q == 0.0 {
            return Ok(scheme.marginal_at(0.0));
        }
        let atoms: f64 = self
            .atoms()
            .iter()
            .map(|&(x, w)| w * scheme.marginal_at(q * (1.0 - x)))
            .sum();
        let u = self.uniform_weight();
        if u == 0.0 {
            return Ok(atoms);
        }
        let mut panels = vec![0.0, q];
        panels.extend(scheme.kinks().into_iter().filter(|k| *k < q).map(|k| q - k));
        // P'(q - ε) with the right-derivative convention seen from below.
        let integrand = |eps: f64| scheme.marginal_left_at((q - eps).max(0.0)) / q;
        Ok(atoms + u * integrate_panels(integrand, &panels, QUAD_TOL))
    }

    /// `d/dq` of the perceived marginal price away from kinks.
    pub fn perceived_slope(&self, scheme: &PriceScheme, q: f64) -> f64 {
        let atoms = self.atom_sum(|x| (1.0 - x) * scheme.curvature(q * (1.0 - x)));
        let u = self.uniform_weight();
        if u == 0.0 {
            return atoms;
        }
        let avg_slope = if q < 1e-12 {
            0.5 * scheme.curvature(0.0)
        } else {
            (scheme.marginal_at(q) - scheme.average_at(q)) / q
        };
        atoms + u * avg_slope
    }

    /// Render as a `[kernel]`-style TOML block body.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("kernel records always serialize")
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

/// Wire form `{kind, lambda?, beta?, nodes?, weights?, a1?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum KernelRecord {
    Dirac0,
    Uniform,
    MixDirac {
        lambda: f64,
    },
    BetaMix {
        beta: f64,
    },
    Custom {
        nodes: Vec<f64>,
        weights: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a1: Option<f64>,
    },
}

impl TryFrom<KernelRecord> for PerceptionKernel {
    type Error = Error;

    fn try_from(r: KernelRecord) -> Result<Self> {
        match r {
            KernelRecord::Dirac0 => Ok(Self::Dirac0),
            KernelRecord::Uniform => Ok(Self::Uniform),
            KernelRecord::MixDirac { lambda } => Self::mix_dirac(lambda),
            KernelRecord::BetaMix { beta } => Self::beta_mix(beta),
            KernelRecord::Custom { nodes, weights, a1 } => {
                CustomKernel::new(nodes, weights, a1).map(Self::Custom)
            }
        }
    }
}

impl From<PerceptionKernel> for KernelRecord {
    fn from(k: PerceptionKernel) -> Self {
        match k {
            PerceptionKernel::Dirac0 => Self::Dirac0,
            PerceptionKernel::Uniform => Self::Uniform,
            PerceptionKernel::MixDirac { lambda } => Self::MixDirac { lambda },
            PerceptionKernel::BetaMix { beta } => Self::BetaMix { beta },
            PerceptionKernel::Custom(c) => Self::Custom {
                nodes: c.nodes,
                weights: c.weights,
                a1: c.declared_a1,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn quad(a: f64, b: f64) -> PriceScheme {
        PriceScheme::quadratic(a, b).unwrap()
    }

    #[test]
    fn perceived_examples() {
        let k = PerceptionKernel::Uniform;
        assert_abs_diff_eq!(
            k.perceived_marginal(&quad(2.0, 0.0), 1.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let tt = PriceScheme::two_tier(0.4, 0.9, 0.5).unwrap();
        for q in [0.1, 0.5, 0.8] {
            assert_eq!(
                PerceptionKernel::Dirac0.perceived_marginal(&tt, q).unwrap(),
                tt.marginal_price(q).unwrap()
            );
        }
        let mix = PerceptionKernel::mix_dirac(0.3).unwrap();
        assert_abs_diff_eq!(
            mix.perceived_marginal(&quad(2.0, 0.0), 1.0).unwrap(),
            1.4,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            mix.perceived_marginal_quadrature(&quad(2.0, 0.0), 1.0)
                .unwrap(),
            1.4,
            epsilon = 1e-15
        );
    }

    #[test]
    fn mean_fraction_examples() {
        assert_eq!(PerceptionKernel::Dirac0.mean_fraction().unwrap(), 0.0);
        assert_eq!(PerceptionKernel::Uniform.mean_fraction().unwrap(), 0.5);
        assert_eq!(
            PerceptionKernel::mix_dirac(0.3)
                .unwrap()
                .mean_fraction()
                .unwrap(),
            0.3
        );
        assert_eq!(
            PerceptionKernel::beta_mix(0.6)
                .unwrap()
                .mean_fraction()
                .unwrap(),
            0.3
        );
        let c = PerceptionKernel::custom(vec![0.0, 0.5, 1.0], vec![0.25, 0.5, 0.25]).unwrap();
        assert_abs_diff_eq!(c.mean_fraction().unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn declared_mean_mismatch_is_assumption_violation() {
        let err = CustomKernel::new(vec![0.0, 1.0], vec![0.5, 0.5], Some(0.3)).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolation(_)), "{err}");
        assert!(CustomKernel::new(vec![0.0, 1.0], vec![0.5, 0.5], Some(0.5)).is_ok());
    }

    #[test]
    fn invalid_kernels_rejected() {
        assert!(PerceptionKernel::mix_dirac(1.5).is_err());
        assert!(PerceptionKernel::beta_mix(-0.1).is_err());
        assert!(PerceptionKernel::custom(vec![0.0, 1.2], vec![0.5, 0.5]).is_err());
        assert!(PerceptionKernel::custom(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(PerceptionKernel::custom(vec![], vec![]).is_err());
    }

    #[test]
    fn negative_quantity_is_domain_error() {
        assert!(matches!(
            PerceptionKernel::Uniform.perceived_marginal(&quad(1.0, 0.0), -0.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn uniform_on_two_tier_is_average_price() {
        let tt = PriceScheme::two_tier(0.4, 0.9, 0.5).unwrap();
        for q in [0.2, 0.5, 0.75, 2.0] {
            let exact = tt.average_price(q).unwrap();
            assert_abs_diff_eq!(
                PerceptionKernel::Uniform
                    .perceived_marginal(&tt, q)
                    .unwrap(),
                exact,
                epsilon = 1e-15
            );
            assert_abs_diff_eq!(
                PerceptionKernel::Uniform
                    .perceived_marginal_quadrature(&tt, q)
                    .unwrap(),
                exact,
                epsilon = 1e-11
            );
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        let tt = PriceScheme::two_tier(0.4, 0.9, 0.5).unwrap();
        let kernels = [
            PerceptionKernel::Dirac0,
            PerceptionKernel::Uniform,
            PerceptionKernel::mix_dirac(0.4).unwrap(),
            PerceptionKernel::beta_mix(0.7).unwrap(),
            PerceptionKernel::custom(vec![0.1, 0.6], vec![0.3, 0.7]).unwrap(),
        ];
        for k in &kernels {
            for s in [quad(1.5, 0.2), tt.clone()] {
                for q in [0.3, 0.9, 1.7] {
                    if s.kinks().iter().any(|kink| {
                        k.atoms()
                            .iter()
                            .any(|(x, _)| ((q * (1.0 - x)) - kink).abs() < 1e-3)
                    }) {
                        continue;
                    }
                    let h = 1e-6;
                    let fd = (k.perceived_at(&s, q + h) - k.perceived_at(&s, q - h)) / (2.0 * h);
                    assert_abs_diff_eq!(k.perceived_slope(&s, q), fd, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn wire_round_trip() {
        for k in [
            PerceptionKernel::Dirac0,
            PerceptionKernel::Uniform,
            PerceptionKernel::mix_dirac(0.25).unwrap(),
            PerceptionKernel::beta_mix(0.5).unwrap(),
            PerceptionKernel::Custom(
                CustomKernel::new(vec![0.0, 0.4], vec![0.5, 0.5], Some(0.2)).unwrap(),
            ),
        ] {
            let back: PerceptionKernel = toml::from_str(&k.to_toml()).unwrap();
            assert_eq!(back, k);
        }
    }

    fn kernel_strategy() -> impl Strategy<Value = PerceptionKernel> {
        prop_oneof![
            Just(PerceptionKernel::Dirac0),
            Just(PerceptionKernel::Uniform),
            (0.0..=1.0f64).prop_map(|l| PerceptionKernel::mix_dirac(l).unwrap()),
            (0.0..=1.0f64).prop_map(|b| PerceptionKernel::beta_mix(b).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn quadratic_identity_matches_quadrature(
            k in kernel_strategy(), a in -3.0..3.0f64, b in -1.0..2.0f64, q in 0.0..4.0f64
        ) {
            let s = quad(a, b);
            let a1 = k.mean_fraction().unwrap();
            let closed = a * (1.0 - a1) * q + b;
            prop_assert!((k.perceived_marginal(&s, q).unwrap() - closed).abs() <= 1e-12);
            prop_assert!((k.perceived_marginal_quadrature(&s, q).unwrap() - closed).abs() <= 1e-9);
        }

        #[test]
        fn beta_mix_decomposes(beta in 0.0..=1.0f64, a in -3.0..3.0f64, b in -1.0..2.0f64, q in 1e-3..4.0f64) {
            let s = quad(a, b);
            let k = PerceptionKernel::beta_mix(beta).unwrap();
            let mix = beta * s.average_price(q).unwrap() + (1.0 - beta) * s.marginal_price(q).unwrap();
            prop_assert!((k.perceived_marginal_quadrature(&s, q).unwrap() - mix).abs() <= 1e-9);
        }

        #[test]
        fn linear_in_the_tariff(
            k in kernel_strategy(),
            s1 in (0.0..2.0f64, 0.0..2.0f64, 0.05..2.0f64),
            s2 in (0.0..2.0f64, 0.0..2.0f64, 0.05..2.0f64),
            q in 1e-3..4.0f64,
        ) {
            let a = PriceScheme::two_tier(s1.0, s1.1, s1.2).unwrap();
            let b = PriceScheme::two_tier(s2.0, s2.1, s2.2).unwrap();
            let sum = PriceScheme::PiecewiseLinear(a.to_piecewise().unwrap().add(&b.to_piecewise().unwrap()));
            let lhs = k.perceived_marginal(&sum, q).unwrap();
            let rhs = k.perceived_marginal(&a, q).unwrap() + k.perceived_marginal(&b, q).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn zero_quantity_gives_initial_marginal(k in kernel_strategy(), b in -1.0..2.0f64, a in -2.0..2.0f64) {
            let s = quad(a, b);
            prop_assert_eq!(k.perceived_marginal(&s, 0.0).unwrap(), b);
        }
    }
}
