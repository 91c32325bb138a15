//! Consumer preferences, the perceived-price best response, and the
//! adjustment dynamic whose steady state it is.

use std::fmt;
use std::io;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{lower_crossing, upper_crossing};
use crate::perception::PerceptionKernel;
use crate::tariffs::PriceScheme;

const MONOTONE_GRID: usize = 1024;
const DEFAULT_CAP: f64 = 1e6;

/// A strictly concave `h` with `h(0) = 0`, for utilities `qθ + h(q)` beyond
/// the quadratic family.
pub trait ConcaveUtility: Send + Sync {
    fn value(&self, q: f64) -> f64;
    fn marginal(&self, q: f64) -> f64;
    fn curvature(&self, q: f64) -> f64;
}

/// The non-type part of utility, `u(q, θ) = qθ + h(q)`.
#[derive(Clone)]
pub enum Preferences {
    /// `h(q) = h1 q - (h2 / 2) q²`.
    Quadratic {
        h1: f64,
        h2: f64,
    },
    General(Arc<dyn ConcaveUtility>),
}

impl fmt::Debug for Preferences {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Quadratic { h1, h2 } => f
                .debug_struct("Quadratic")
                .field("h1", h1)
                .field("h2", h2)
                .finish(),
            Self::General(_) => f.write_str("General(..)"),
        }
    }
}

impl Preferences {
    /// `h2 = 0` is accepted; strict concavity of the problem then has to
    /// come from the cost side (`c2 > 0`).
    pub fn quadratic(h1: f64, h2: f64) -> Result<Self> {
        if !(h1.is_finite() && h1 >= 0.0) {
            return Err(Error::InvalidEnv(format!(
                "h1 must be finite and nonnegative, got {h1}"
            )));
        }
        if !(h2.is_finite() && h2 >= 0.0) {
            return Err(Error::InvalidEnv(format!(
                "h2 must be finite and nonnegative, got {h2}"
            )));
        }
        Ok(Self::Quadratic { h1, h2 })
    }

    /// Wraps a general `h`, checking `h(0) = 0` and a strictly decreasing
    /// marginal on `[0, span]`.
    pub fn general(h: Arc<dyn ConcaveUtility>, span: f64) -> Result<Self> {
        if h.value(0.0).abs() > 1e-12 {
            return Err(Error::InvalidEnv(format!(
                "h(0) must be 0, got {}",
                h.value(0.0)
            )));
        }
        let n = 256;
        let mut prev = h.marginal(0.0);
        for i in 1..=n {
            let q = span * i as f64 / n as f64;
            let m = h.marginal(q);
            if !(m < prev) {
                return Err(Error::InvalidEnv(format!(
                    "h is not strictly concave near q = {q}"
                )));
            }
            prev = m;
        }
        Ok(Self::General(h))
    }

    pub fn h(&self, q: f64) -> f64 {
        match self {
            Self::Quadratic { h1, h2 } => h1 * q - 0.5 * h2 * q * q,
            Self::General(h) => h.value(q),
        }
    }

    pub fn h_prime(&self, q: f64) -> f64 {
        match self {
            Self::Quadratic { h1, h2 } => h1 - h2 * q,
            Self::General(h) => h.marginal(q),
        }
    }

    pub fn h_second(&self, q: f64) -> f64 {
        match self {
            Self::Quadratic { h2, .. } => -h2,
            Self::General(h) => h.curvature(q),
        }
    }

    /// `(h1, h2)` for quadratic preferences.
    pub fn quadratic_coefficients(&self) -> Option<(f64, f64)> {
        match self {
            Self::Quadratic { h1, h2 } => Some((*h1, *h2)),
            Self::General(_) => None,
        }
    }

    /// `u_q(q, θ) = θ + h'(q)`.
    pub fn marginal_utility(&self, q: f64, theta: f64) -> Result<f64> {
        if q.is_nan() || q < 0.0 {
            return Err(Error::domain(format!(
                "quantity must be nonnegative, got {q}"
            )));
        }
        Ok(theta + self.h_prime(q))
    }
}

/// `θ_P(q) = P̃'(q) - h'(q)`: the type for whom `q` is the best response.
pub(crate) fn cutoff(
    prefs: &Preferences,
    kernel: &PerceptionKernel,
    scheme: &PriceScheme,
    q: f64,
) -> f64 {
    kernel.perceived_at(scheme, q) - prefs.h_prime(q)
}

/// Best response with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponse {
    pub quantity: f64,
    /// `u_q(0, θ) <= P̃'(0)`: the consumer stays at zero.
    pub corner: bool,
    /// The response sits on a tariff kink (a bunching point).
    pub at_kink: bool,
    /// End of an interval of roots when the cutoff map is flat at `θ`.
    pub plateau_end: Option<f64>,
}

/// Largest quantity searched before demand is declared unbounded.
#[derive(Debug, Clone, Copy)]
pub struct SearchSettings {
    pub cap: f64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self { cap: DEFAULT_CAP }
    }
}

/// Steady-state consumption of type `θ`: the smallest `q` with
/// `θ_P(q) >= θ`, or 0 when `θ <= θ_P(0)`.
pub fn best_response(
    prefs: &Preferences,
    kernel: &PerceptionKernel,
    scheme: &PriceScheme,
    theta: f64,
) -> Result<f64> {
    best_response_with(prefs, kernel, scheme, theta, SearchSettings::default()).map(|r| r.quantity)
}

pub fn best_response_with(
    prefs: &Preferences,
    kernel: &PerceptionKernel,
    scheme: &PriceScheme,
    theta: f64,
    settings: SearchSettings,
) -> Result<BestResponse> {
    if !theta.is_finite() {
        return Err(Error::domain(format!("type must be finite, got {theta}")));
    }
    let c = |q: f64| cutoff(prefs, kernel, scheme, q);
    if theta <= c(0.0) {
        return Ok(BestResponse {
            quantity: 0.0,
            corner: true,
            at_kink: false,
            plateau_end: None,
        });
    }
    let mut hi = 1.0;
    let mut last = c(0.0);
    loop {
        let v = c(hi);
        if v >= theta {
            break;
        }
        if v < last - 1e-12 * (1.0 + last.abs()) {
            return Err(Error::NonmonotoneCutoff(format!(
                "cutoff falls from {last} to {v} by q = {hi}"
            )));
        }
        last = v;
        hi *= 2.0;
        if hi > settings.cap {
            return Err(Error::UnboundedDemand { cap: settings.cap });
        }
    }
    check_monotone(&c, hi)?;
    let mut q = lower_crossing(c, theta, 0.0, hi);
    let mut at_kink = false;
    for k in scheme.kinks() {
        if (q - k).abs() <= 1e-12 * (1.0 + k) {
            q = k;
            at_kink = true;
        }
    }
    let plateau_end = plateau_end(&c, theta, q, settings.cap);
    Ok(BestResponse {
        quantity: q,
        corner: false,
        at_kink,
        plateau_end,
    })
}

// Right end of `{q : θ_P(q) = θ}` when that set is a nontrivial interval.
fn plateau_end<C: Fn(f64) -> f64>(c: &C, theta: f64, q: f64, cap: f64) -> Option<f64> {
    if c(q) > theta {
        return None;
    }
    let mut hi = 2.0 * q.max(0.5);
    while c(hi) <= theta {
        if hi >= cap {
            return Some(cap);
        }
        hi = (2.0 * hi).min(cap);
    }
    let end = upper_crossing(c, theta, q, hi);
    (end - q > 1e-9).then_some(end)
}

fn check_monotone<C: Fn(f64) -> f64>(c: &C, hi: f64) -> Result<()> {
    let mut prev = c(0.0);
    for i in 1..=MONOTONE_GRID {
        let q = hi * i as f64 / MONOTONE_GRID as f64;
        let v = c(q);
        if v < prev - 1e-12 * (1.0 + prev.abs()) {
            return Err(Error::NonmonotoneCutoff(format!(
                "cutoff falls from {prev} to {v} near q = {q}"
            )));
        }
        prev = v;
    }
    Ok(())
}

/// Explicit-Euler settings for the adjustment dynamic.
#[derive(Debug, Clone, Copy)]
pub struct DynamicsSettings {
    pub q0: f64,
    pub gain: f64,
    pub step: f64,
    pub max_steps: usize,
    pub tol: f64,
}

impl Default for DynamicsSettings {
    fn default() -> Self {
        Self {
            q0: 0.1,
            gain: 1.0,
            step: 0.1,
            max_steps: 100_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub q: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub converged: bool,
}

impl Trajectory {
    pub fn terminal(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.q)
    }

    /// CSV with columns `step,q,drift`.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,q,drift")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{}",
                p.step,
                crate::report::fmt_sig(p.q),
                crate::report::fmt_sig(p.drift)
            )?;
        }
        Ok(())
    }
}

/// Iterates `q ← max(0, q + step·gain·(u_q(q, θ) - P̃'(q)))` until the
/// update is below `tol`.
///
/// The step is halved whenever the drift changes sign, so paths that reach
/// a kink settle on it instead of chattering across it. On smooth cutoffs
/// with `step·gain·θ_P' < 1` no halving occurs.
pub fn simulate_dynamics(
    prefs: &Preferences,
    kernel: &PerceptionKernel,
    scheme: &PriceScheme,
    theta: f64,
    settings: DynamicsSettings,
) -> Result<Trajectory> {
    let DynamicsSettings {
        q0,
        gain,
        step,
        max_steps,
        tol,
    } = settings;
    if !(q0 > 0.0 && q0.is_finite()) {
        return Err(Error::domain(format!(
            "initial quantity must be positive, got {q0}"
        )));
    }
    if !(gain > 0.0 && step > 0.0 && tol > 0.0) {
        return Err(Error::domain("gain, step and tolerance must be positive"));
    }
    let drift = |q: f64| theta + prefs.h_prime(q) - kernel.perceived_at(scheme, q);
    let mut points = Vec::with_capacity(max_steps.min(4096) + 1);
    let mut q = q0;
    let mut d = drift(q);
    let mut rate = step * gain;
    points.push(TrajectoryPoint {
        step: 0,
        q,
        drift: d,
    });
    for t in 1..=max_steps {
        let next = (q + rate * d).max(0.0);
        let dq = next - q;
        let d_next = drift(next);
        if d_next * d < 0.0 {
            rate *= 0.5;
        }
        q = next;
        d = d_next;
        points.push(TrajectoryPoint {
            step: t,
            q,
            drift: d,
        });
        if dq.abs() < tol {
            return Ok(Trajectory {
                points,
                converged: true,
            });
        }
    }
    Err(Error::ConvergenceFailure {
        steps: max_steps,
        trajectory: Box::new(Trajectory {
            points,
            converged: false,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_prefs() -> Preferences {
        Preferences::quadratic(0.0, 1.0).unwrap()
    }

    #[test]
    fn marginal_utility_examples() {
        let p = unit_prefs();
        assert_eq!(p.marginal_utility(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(p.marginal_utility(0.5, 1.0).unwrap(), 0.5);
        let p2 = Preferences::quadratic(2.0, 3.0).unwrap();
        assert_eq!(p2.marginal_utility(1.0, 0.0).unwrap(), -1.0);
        assert!(p.marginal_utility(-1.0, 0.0).is_err());
    }

    #[test]
    fn best_response_examples() {
        let p = unit_prefs();
        let flat = PriceScheme::flat(0.5).unwrap();
        assert_abs_diff_eq!(
            best_response(&p, &PerceptionKernel::Dirac0, &flat, 1.0).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        for k in [
            PerceptionKernel::Dirac0,
            PerceptionKernel::Uniform,
            PerceptionKernel::mix_dirac(0.4).unwrap(),
        ] {
            assert_eq!(best_response(&p, &k, &flat, 0.3).unwrap(), 0.0);
        }
        let tt = PriceScheme::two_tier(0.4, 0.9, 0.5).unwrap();
        let q = best_response(&p, &PerceptionKernel::Uniform, &tt, 1.0).unwrap();
        assert_abs_diff_eq!(q, (0.1 + 1.01f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn bunching_at_kink() {
        let p = unit_prefs();
        let tt = PriceScheme::two_tier(0.4, 0.9, 0.5).unwrap();
        for theta in [0.95, 1.1, 1.3] {
            let r = best_response_with(
                &p,
                &PerceptionKernel::Dirac0,
                &tt,
                theta,
                SearchSettings::default(),
            )
            .unwrap();
            assert_eq!(r.quantity, 0.5);
            assert!(r.at_kink);
        }
    }

    #[test]
    fn plateau_reported() {
        let p = Preferences::quadratic(0.0, 0.0).unwrap();
        let s = PriceScheme::piecewise_linear(vec![0.0, 1.0, 2.0], vec![0.2, 0.5, 0.8]).unwrap();
        let r = best_response_with(
            &p,
            &PerceptionKernel::Dirac0,
            &s,
            0.5,
            SearchSettings::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.quantity, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.plateau_end.unwrap(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn unbounded_and_nonmonotone() {
        let p = Preferences::quadratic(0.0, 0.0).unwrap();
        let flat = PriceScheme::flat(0.5).unwrap();
        assert!(matches!(
            best_response(&p, &PerceptionKernel::Dirac0, &flat, 1.0),
            Err(Error::UnboundedDemand { .. })
        ));
        let concave = PriceScheme::quadratic(-3.0, 1.0).unwrap();
        let err =
            best_response(&unit_prefs(), &PerceptionKernel::Dirac0, &concave, 1.5).unwrap_err();
        assert!(matches!(err, Error::NonmonotoneCutoff(_)), "{err}");
    }

    #[test]
    fn dynamics_examples() {
        let p = unit_prefs();
        let flat = PriceScheme::flat(0.5).unwrap();
        let t = simulate_dynamics(
            &p,
            &PerceptionKernel::Dirac0,
            &flat,
            1.0,
            DynamicsSettings::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(t.terminal(), 0.5, epsilon = 1e-8);
        let quad = PriceScheme::quadratic(4.0, 0.0).unwrap();
        let settings = DynamicsSettings {
            q0: 1.0,
            ..Default::default()
        };
        let t = simulate_dynamics(&p, &PerceptionKernel::Uniform, &quad, 1.0, settings).unwrap();
        // 1 - q = 2q
        assert_abs_diff_eq!(t.terminal(), 1.0 / 3.0, epsilon = 1e-8);
        let t = simulate_dynamics(&p, &PerceptionKernel::Uniform, &flat, 0.3, settings).unwrap();
        assert_eq!(t.terminal(), 0.0);
    }

    #[test]
    fn dynamics_settles_on_kink() {
        let tt = PriceScheme::two_tier(0.4, 0.9, 0.5).unwrap();
        let t = simulate_dynamics(
            &unit_prefs(),
            &PerceptionKernel::Dirac0,
            &tt,
            1.1,
            DynamicsSettings::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(t.terminal(), 0.5, epsilon = 1e-8);
    }

    #[test]
    fn convergence_failure_carries_trajectory() {
        let flat = PriceScheme::flat(0.5).unwrap();
        let settings = DynamicsSettings {
            max_steps: 3,
            ..Default::default()
        };
        match simulate_dynamics(
            &unit_prefs(),
            &PerceptionKernel::Dirac0,
            &flat,
            1.0,
            settings,
        ) {
            Err(Error::ConvergenceFailure { steps, trajectory }) => {
                assert_eq!(steps, 3);
                assert_eq!(trajectory.points.len(), 4);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_csv_header() {
        let flat = PriceScheme::flat(0.5).unwrap();
        let t = simulate_dynamics(
            &unit_prefs(),
            &PerceptionKernel::Dirac0,
            &flat,
            1.0,
            DynamicsSettings::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,q,drift\n0,0.1,"));
        assert_eq!(text.lines().count(), t.points.len() + 1);
    }

    #[derive(Debug)]
    struct LogUtility;

    impl ConcaveUtility for LogUtility {
        fn value(&self, q: f64) -> f64 {
            (1.0 + q).ln() - q * q
        }
        fn marginal(&self, q: f64) -> f64 {
            1.0 / (1.0 + q) - 2.0 * q
        }
        fn curvature(&self, q: f64) -> f64 {
            -1.0 / ((1.0 + q) * (1.0 + q)) - 2.0
        }
    }

    #[test]
    fn general_utility_hook() {
        let p = Preferences::general(Arc::new(LogUtility), 10.0).unwrap();
        let flat = PriceScheme::flat(0.5).unwrap();
        let q = best_response(&p, &PerceptionKernel::Dirac0, &flat, 0.5).unwrap();
        assert_abs_diff_eq!(p.marginal_utility(q, 0.5).unwrap(), 0.5, epsilon = 1e-10);
    }

    #[derive(Debug)]
    struct Convex;

    impl ConcaveUtility for Convex {
        fn value(&self, q: f64) -> f64 {
            q * q
        }
        fn marginal(&self, q: f64) -> f64 {
            2.0 * q
        }
        fn curvature(&self, _q: f64) -> f64 {
            2.0
        }
    }

    #[test]
    fn general_utility_rejects_convex() {
        assert!(Preferences::general(Arc::new(Convex), 1.0).is_err());
    }

    proptest! {
        #[test]
        fn quadratic_closed_form(
            a in -0.5..4.0f64, b in 0.0..1.5f64, h1 in 0.0..1.0f64, h2 in 0.2..2.0f64,
            lambda in 0.0..=1.0f64, theta in 0.0..3.0f64,
        ) {
            let k = PerceptionKernel::mix_dirac(lambda).unwrap();
            let slope = (1.0 - lambda) * a + h2;
            prop_assume!(slope > 0.05);
            let p = Preferences::quadratic(h1, h2).unwrap();
            let s = PriceScheme::quadratic(a, b).unwrap();
            let expected = ((theta + h1 - b) / slope).max(0.0);
            let q = best_response(&p, &k, &s, theta).unwrap();
            prop_assert!((q - expected).abs() <= 1e-10 * (1.0 + expected));
        }

        #[test]
        fn response_monotone_in_type(
            p2 in 0.0..1.0f64, jump in 0.0..1.0f64, qbar in 0.1..1.0f64,
            t1 in 0.0..2.0f64, t2 in 0.0..2.0f64, uniform in any::<bool>(),
        ) {
            let s = PriceScheme::two_tier(p2, p2 + jump, qbar).unwrap();
            let k = if uniform { PerceptionKernel::Uniform } else { PerceptionKernel::Dirac0 };
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let p = unit_prefs();
            prop_assert!(best_response(&p, &k, &s, lo).unwrap() <= best_response(&p, &k, &s, hi).unwrap());
        }
    }
}
