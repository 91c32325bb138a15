//! Tariff functions `P` with `P(0) = 0`.
//!
//! Every scheme answers three exact queries: total payment, marginal price
//! and average price. Kinked schemes report the right derivative at a kink,
//! so a consumer sitting on the threshold of a two-tier tariff faces the
//! upper rate for incremental units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A tariff. Build through the validating constructors or deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemeRecord", into = "SchemeRecord")]
pub enum PriceScheme {
    /// `P(q) = (a/2) q^2 + b q`.
    Quadratic {
        a: f64,
        b: f64,
    },
    /// `P(q) = p1 q`.
    Flat {
        p1: f64,
    },
    /// Rate `p2` up to `qbar`, rate `p3` beyond it.
    TwoTier {
        p2: f64,
        p3: f64,
        qbar: f64,
    },
    PiecewiseLinear(PiecewiseLinear),
}

/// Continuous piecewise-linear tariff. Segment `i` starts at
/// `breakpoints[i]` and carries `slopes[i]`; the last segment is unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    // P at each breakpoint
    levels: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::InvalidScheme(
                "piecewise-linear scheme needs at least one segment".into(),
            ));
        }
        if breakpoints.len() != slopes.len() {
            return Err(Error::InvalidScheme(format!(
                "{} breakpoints but {} slopes",
                breakpoints.len(),
                slopes.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidScheme("first breakpoint must be 0".into()));
        }
        if breakpoints.iter().chain(&slopes).any(|v| !v.is_finite()) {
            return Err(Error::InvalidScheme(
                "breakpoints and slopes must be finite".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidScheme(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        let mut levels = Vec::with_capacity(breakpoints.len());
        let mut acc = 0.0;
        levels.push(acc);
        for i in 1..breakpoints.len() {
            acc += slopes[i - 1] * (breakpoints[i] - breakpoints[i - 1]);
            levels.push(acc);
        }
        Ok(Self {
            breakpoints,
            slopes,
            levels,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    // Index of the segment containing q, right-continuous at breakpoints.
    fn segment(&self, q: f64) -> usize {
        self.breakpoints
            .partition_point(|&b| b <= q)
            .saturating_sub(1)
    }

    fn price(&self, q: f64) -> f64 {
        let i = self.segment(q);
        self.levels[i] + self.slopes[i] * (q - self.breakpoints[i])
    }

    fn slope_right(&self, q: f64) -> f64 {
        self.slopes[self.segment(q)]
    }

    fn slope_left(&self, q: f64) -> f64 {
        let i = self
            .breakpoints
            .partition_point(|&b| b < q)
            .saturating_sub(1);
        self.slopes[i]
    }

    /// Pointwise sum of two piecewise-linear tariffs.
    pub fn add(&self, other: &PiecewiseLinear) -> PiecewiseLinear {
        let mut bps: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        let slopes = bps
            .iter()
            .map(|&b| self.slope_right(b) + other.slope_right(b))
            .collect();
        PiecewiseLinear::new(bps, slopes).expect("merged breakpoints stay valid")
    }
}

impl PriceScheme {
    pub fn quadratic(a: f64, b: f64) -> Result<Self> {
        Self::Quadratic { a, b }.validated()
    }

    pub fn flat(p1: f64) -> Result<Self> {
        Self::Flat { p1 }.validated()
    }

    pub fn two_tier(p2: f64, p3: f64, qbar: f64) -> Result<Self> {
        Self::TwoTier { p2, p3, qbar }.validated()
    }

    pub fn piecewise_linear(breakpoints: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        PiecewiseLinear::new(breakpoints, slopes).map(Self::PiecewiseLinear)
    }

    fn validated(self) -> Result<Self> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidScheme(format!(
                    "{name} must be finite, got {v}"
                )))
            }
        };
        match &self {
            Self::Quadratic { a, b } => {
                finite("A", *a)?;
                finite("B", *b)?;
            }
            Self::Flat { p1 } => finite("p1", *p1)?,
            Self::TwoTier { p2, p3, qbar } => {
                finite("p2", *p2)?;
                finite("p3", *p3)?;
                finite("qbar", *qbar)?;
                if *qbar <= 0.0 {
                    return Err(Error::InvalidScheme(format!(
                        "qbar must be positive, got {qbar}"
                    )));
                }
            }
            Self::PiecewiseLinear(_) => {}
        }
        Ok(self)
    }

    /// Total payment `P(q)`.
    pub fn price(&self, q: f64) -> Result<f64> {
        check_quantity(q)?;
        Ok(self.price_at(q))
    }

    /// `P'(q)`, taking the right derivative at kinks.
    pub fn marginal_price(&self, q: f64) -> Result<f64> {
        check_quantity(q)?;
        Ok(self.marginal_at(q))
    }

    /// `P(q)/q`, extended to `q = 0` by `P'(0+)`.
    pub fn average_price(&self, q: f64) -> Result<f64> {
        check_quantity(q)?;
        Ok(self.average_at(q))
    }

    pub(crate) fn price_at(&self, q: f64) -> f64 {
        match self {
            Self::Quadratic { a, b } => 0.5 * a * q * q + b * q,
            Self::Flat { p1 } => p1 * q,
            Self::TwoTier { p2, p3, qbar } => {
                if q <= *qbar {
                    p2 * q
                } else {
                    p2 * qbar + p3 * (q - qbar)
                }
            }
            Self::PiecewiseLinear(pw) => pw.price(q),
        }
    }

    pub(crate) fn marginal_at(&self, q: f64) -> f64 {
        match self {
            Self::Quadratic { a, b } => a * q + b,
            Self::Flat { p1 } => *p1,
            Self::TwoTier { p2, p3, qbar } => {
                if q < *qbar {
                    *p2
                } else {
                    *p3
                }
            }
            Self::PiecewiseLinear(pw) => pw.slope_right(q),
        }
    }

    /// Left derivative; equals `marginal_at` away from kinks.
    pub(crate) fn marginal_left_at(&self, q: f64) -> f64 {
        match self {
            Self::TwoTier { p2, p3, qbar } => {
                if q <= *qbar {
                    *p2
                } else {
                    *p3
                }
            }
            Self::PiecewiseLinear(pw) => pw.slope_left(q),
            _ => self.marginal_at(q),
        }
    }

    pub(crate) fn average_at(&self, q: f64) -> f64 {
        if q == 0.0 {
            self.marginal_at(0.0)
        } else {
            self.price_at(q) / q
        }
    }

    /// `P''(q)` away from kinks (zero for piecewise-linear schemes).
    pub fn curvature(&self, _q: f64) -> f64 {
        match self {
            Self::Quadratic { a, .. } => *a,
            _ => 0.0,
        }
    }

    /// Interior points where `P'` jumps.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Self::TwoTier { p2, p3, qbar } if p2 != p3 => vec![*qbar],
            Self::PiecewiseLinear(pw) => pw
                .breakpoints
                .windows(2)
                .zip(pw.slopes.windows(2))
                .filter(|(_, s)| s[0] != s[1])
                .map(|(b, _)| b[1])
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.kinks().is_empty()
    }

    /// Convex schemes have nondecreasing marginal price.
    pub fn is_convex(&self) -> bool {
        match self {
            Self::Quadratic { a, .. } => *a >= 0.0,
            Self::Flat { .. } => true,
            Self::TwoTier { p2, p3, .. } => p3 >= p2,
            Self::PiecewiseLinear(pw) => pw.slopes.windows(2).all(|s| s[1] >= s[0]),
        }
    }

    /// Exact piecewise-linear representation, when one exists.
    pub fn to_piecewise(&self) -> Option<PiecewiseLinear> {
        match self {
            Self::Quadratic { a, b } if *a == 0.0 => PiecewiseLinear::new(vec![0.0], vec![*b]).ok(),
            Self::Quadratic { .. } => None,
            Self::Flat { p1 } => PiecewiseLinear::new(vec![0.0], vec![*p1]).ok(),
            Self::TwoTier { p2, p3, qbar } => {
                PiecewiseLinear::new(vec![0.0, *qbar], vec![*p2, *p3]).ok()
            }
            Self::PiecewiseLinear(pw) => Some(pw.clone()),
        }
    }

    /// Render as a `[scheme]`-style TOML block body.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scheme records always serialize")
    }
}

fn check_quantity(q: f64) -> Result<()> {
    if q.is_nan() || q < 0.0 {
        Err(Error::domain(format!(
            "quantity must be nonnegative, got {q}"
        )))
    } else {
        Ok(())
    }
}

/// Wire form of a scheme: `{kind, A, B}`, `{kind, p1}`,
/// `{kind, p2, p3, qbar}` or `{kind, breakpoints, slopes}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SchemeRecord {
    Quadratic {
        #[serde(rename = "A")]
        a: f64,
        #[serde(rename = "B")]
        b: f64,
    },
    Flat {
        p1: f64,
    },
    TwoTier {
        p2: f64,
        p3: f64,
        qbar: f64,
    },
    PiecewiseLinear {
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
    },
}

impl TryFrom<SchemeRecord> for PriceScheme {
    type Error = Error;

    fn try_from(r: SchemeRecord) -> Result<Self> {
        match r {
            SchemeRecord::Quadratic { a, b } => PriceScheme::quadratic(a, b),
            SchemeRecord::Flat { p1 } => PriceScheme::flat(p1),
            SchemeRecord::TwoTier { p2, p3, qbar } => PriceScheme::two_tier(p2, p3, qbar),
            SchemeRecord::PiecewiseLinear {
                breakpoints,
                slopes,
            } => PriceScheme::piecewise_linear(breakpoints, slopes),
        }
    }
}

impl From<PriceScheme> for SchemeRecord {
    fn from(s: PriceScheme) -> Self {
        match s {
            PriceScheme::Quadratic { a, b } => SchemeRecord::Quadratic { a, b },
            PriceScheme::Flat { p1 } => SchemeRecord::Flat { p1 },
            PriceScheme::TwoTier { p2, p3, qbar } => SchemeRecord::TwoTier { p2, p3, qbar },
            PriceScheme::PiecewiseLinear(pw) => SchemeRecord::PiecewiseLinear {
                breakpoints: pw.breakpoints,
                slopes: pw.slopes,
            },
        }
    }
}
