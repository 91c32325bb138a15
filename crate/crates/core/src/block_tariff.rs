//! Aggregate consumption under a flat tariff and a two-tier increasing
//! block tariff, for a population mixing rational and average-price
//! consumers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::consumer::Preferences;
use crate::error::{Error, Result};
use crate::market::{CutoffMode, MarketEnv};
use crate::numerics::{lower_crossing, upper_crossing};
use crate::perception::PerceptionKernel;
use crate::report::Table;
use crate::tariffs::PriceScheme;

const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `p2 <= p1 < p3` and `p2 - h'(q̄) <= θ1 < p1 - h'(q̄)`.
    FlatBelowThreshold,
    /// `p1 = p2`.
    EqualBaseRate,
    Other,
}

impl Regime {
    pub fn tag(self) -> &'static str {
        match self {
            Self::FlatBelowThreshold => "prop7",
            Self::EqualBaseRate => "prop8",
            Self::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockTariffs {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub qbar: f64,
}

impl BlockTariffs {
    pub fn flat(&self) -> Result<PriceScheme> {
        PriceScheme::flat(self.p1)
    }

    pub fn two_tier(&self) -> Result<PriceScheme> {
        PriceScheme::two_tier(self.p2, self.p3, self.qbar)
    }

    pub fn regime(&self, env: &MarketEnv) -> Regime {
        let hq = env.prefs().h_prime(self.qbar);
        let ordered = self.p2 <= self.p1 && self.p1 < self.p3;
        if ordered && self.p1 == self.p2 {
            Regime::EqualBaseRate
        } else if ordered && self.p2 - hq <= env.theta1() && env.theta1() < self.p1 - hq {
            Regime::FlatBelowThreshold
        } else {
            Regime::Other
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockComparison {
    pub q_flat: f64,
    pub q_two_tier: f64,
    /// `Q_flat - Q_two_tier`.
    pub delta: f64,
    pub regime: Regime,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Regime(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )))
    }
}

/// Compares `Q(Flat(p1))` with `Q(TwoTier(p2, p3, q̄))` at mixing fraction
/// `λ`, and checks the regime's ordering claim.
pub fn compare_block_vs_flat(
    env: &MarketEnv,
    tariffs: BlockTariffs,
    lambda: f64,
) -> Result<BlockComparison> {
    let BlockTariffs { p1, p2, p3, qbar } = tariffs;
    if !(p2 <= p1 && p1 < p3) {
        return Err(Error::Regime(format!(
            "need p2 <= p1 < p3, got ({p2}, {p1}, {p3})"
        )));
    }
    if !(qbar > 0.0) {
        return Err(Error::Regime(format!("need qbar > 0, got {qbar}")));
    }
    check_lambda(lambda)?;
    let cmp = compare_unchecked(env, tariffs, lambda)?;
    check_claim(&cmp, lambda)?;
    Ok(cmp)
}

fn compare_unchecked(
    env: &MarketEnv,
    tariffs: BlockTariffs,
    lambda: f64,
) -> Result<BlockComparison> {
    let q_flat = env.aggregate_consumption(&tariffs.flat()?, lambda)?;
    let q_two_tier = env.aggregate_consumption(&tariffs.two_tier()?, lambda)?;
    Ok(BlockComparison {
        q_flat,
        q_two_tier,
        delta: q_flat - q_two_tier,
        regime: tariffs.regime(env),
    })
}

fn check_claim(cmp: &BlockComparison, lambda: f64) -> Result<()> {
    match cmp.regime {
        Regime::FlatBelowThreshold if cmp.q_two_tier <= cmp.q_flat => {
            Err(Error::OracleDisagreement(format!(
                "block tariff should raise consumption at lambda = {lambda}: Q1 = {}, Q2 = {}",
                cmp.q_flat, cmp.q_two_tier
            )))
        }
        Regime::EqualBaseRate if cmp.delta < -SLACK => Err(Error::OracleDisagreement(format!(
            "block tariff should not raise consumption at lambda = {lambda}: dQ = {}",
            cmp.delta
        ))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRow {
    pub lambda: f64,
    pub q_flat: f64,
    pub q_two_tier: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockComparisonReport {
    pub tariffs: BlockTariffs,
    pub regime: Regime,
    pub rows: Vec<BlockRow>,
    /// Least-squares slope of `ΔQ` in `λ`.
    pub slope: f64,
    /// Largest deviation of `ΔQ` from its fitted line.
    pub affine_residual: f64,
}

impl BlockComparisonReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["lambda", "Q_flat", "Q_twotier", "dQ", "regime"]);
        for r in &self.rows {
            let mut row: Vec<String> = [r.lambda, r.q_flat, r.q_two_tier, r.delta]
                .iter()
                .map(|x| crate::report::fmt_sig(*x))
                .collect();
            row.push(self.regime.tag().into());
            t.push(row);
        }
        t
    }
}

/// Rows over `lambdas`. With `p1 = p2` also checks that `ΔQ` is
/// nonincreasing in `λ`; other regimes are descriptive.
pub fn lambda_sweep(
    env: &MarketEnv,
    tariffs: BlockTariffs,
    lambdas: &[f64],
) -> Result<BlockComparisonReport> {
    if !(tariffs.qbar > 0.0) {
        return Err(Error::Regime(format!(
            "need qbar > 0, got {}",
            tariffs.qbar
        )));
    }
    let mut rows = Vec::with_capacity(lambdas.len());
    let mut regime = tariffs.regime(env);
    for &lambda in lambdas {
        check_lambda(lambda)?;
        let cmp = compare_unchecked(env, tariffs, lambda)?;
        check_claim(&cmp, lambda)?;
        regime = cmp.regime;
        rows.push(BlockRow {
            lambda,
            q_flat: cmp.q_flat,
            q_two_tier: cmp.q_two_tier,
            delta: cmp.delta,
        });
    }
    if regime == Regime::EqualBaseRate {
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        for w in sorted.windows(2) {
            if w[1].delta > w[0].delta + SLACK {
                return Err(Error::OracleDisagreement(format!(
                    "dQ rises from {} to {} between lambda = {} and {}",
                    w[0].delta, w[1].delta, w[0].lambda, w[1].lambda
                )));
            }
        }
    }
    let (slope, affine_residual) = line_fit(&rows);
    Ok(BlockComparisonReport {
        tariffs,
        regime,
        rows,
        slope,
        affine_residual,
    })
}

fn line_fit(rows: &[BlockRow]) -> (f64, f64) {
    let n = rows.len() as f64;
    if rows.len() < 2 {
        return (0.0, 0.0);
    }
    let mx = rows.iter().map(|r| r.lambda).sum::<f64>() / n;
    let my = rows.iter().map(|r| r.delta).sum::<f64>() / n;
    let sxx: f64 = rows.iter().map(|r| (r.lambda - mx).powi(2)).sum();
    let sxy: f64 = rows.iter().map(|r| (r.lambda - mx) * (r.delta - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let resid = rows
        .iter()
        .map(|r| (r.delta - (my + slope * (r.lambda - mx))).abs())
        .fold(0.0, f64::max);
    (slope, resid)
}

/// Fraction of rational types choosing exactly `q̄`, found by bisection on
/// the type at which responses reach and leave `q̄`.
pub fn bunching_mass(env: &MarketEnv, p2: f64, p3: f64, qbar: f64) -> Result<f64> {
    let scheme = PriceScheme::two_tier(p2, p3, qbar)?;
    let map = env.cutoff_map(&scheme, CutoffMode::Rational)?;
    let (lo, hi) = (env.theta0(), env.theta1());
    let q = |t: f64| map.inverse(t);
    let step = |t: f64| if q(t) >= qbar { 1.0 } else { 0.0 };
    if q(hi) < qbar {
        return Ok(0.0);
    }
    let enter = if q(lo) >= qbar {
        lo
    } else {
        lower_crossing(step, 0.5, lo, hi)
    };
    let above = |t: f64| if q(t) > qbar { 1.0 } else { 0.0 };
    let leave = if q(hi) <= qbar {
        hi
    } else {
        upper_crossing(above, 0.5, enter, hi)
    };
    Ok(env.cdf(leave) - env.cdf(enter))
}

/// `F(p3 - h'(q̄)) - F(p2 - h'(q̄))`.
pub fn bunching_mass_closed_form(env: &MarketEnv, p2: f64, p3: f64, qbar: f64) -> f64 {
    let hq = env.prefs().h_prime(qbar);
    (env.cdf(p3 - hq) - env.cdf(p2 - hq)).clamp(0.0, 1.0)
}

/// A randomized draw of environment and tariffs.
#[derive(Debug, Clone)]
pub struct Draw {
    pub env: MarketEnv,
    pub tariffs: BlockTariffs,
}

fn draw_env(theta1: f64, h2: f64) -> Result<MarketEnv> {
    MarketEnv::new(
        Preferences::quadratic(0.0, h2)?,
        0.0,
        0.0,
        0.0,
        theta1,
        PerceptionKernel::Dirac0,
    )
}

/// `n` seeded draws inside the window `p2 - h'(q̄) <= θ1 < p1 - h'(q̄)`.
pub fn flat_below_threshold_draws(seed: u64, n: usize) -> Result<Vec<Draw>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let h2 = rng.gen_range(0.5..2.0);
            let qbar = rng.gen_range(0.1..1.0);
            let p2 = rng.gen_range(0.0..0.5);
            let p1 = p2 + rng.gen_range(0.05..1.0);
            let p3 = p1 + rng.gen_range(0.05..1.0);
            let (lo, hi) = (p2 + h2 * qbar, p1 + h2 * qbar);
            let theta1 = lo + (hi - lo) * rng.gen_range(0.01..0.99);
            Ok(Draw {
                env: draw_env(theta1, h2)?,
                tariffs: BlockTariffs { p1, p2, p3, qbar },
            })
        })
        .collect()
}

/// `n` seeded draws with `p1 = p2`.
pub fn equal_base_rate_draws(seed: u64, n: usize) -> Result<Vec<Draw>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let h2 = rng.gen_range(0.5..2.0);
            let qbar = rng.gen_range(0.1..1.0);
            let p2 = rng.gen_range(0.0..0.8);
            let p3 = p2 + rng.gen_range(0.05..1.0);
            let theta1 = rng.gen_range(0.5..3.0);
            Ok(Draw {
                env: draw_env(theta1, h2)?,
                tariffs: BlockTariffs {
                    p1: p2,
                    p2,
                    p3,
                    qbar,
                },
            })
        })
        .collect()
}
