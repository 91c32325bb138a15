//! TOML configuration: `[env]` (with an optional `[env.kernel]`), an
//! optional top-level `[kernel]` that overrides it, `[scheme]` and `[grid]`.
//!
//! ```toml
//! [env]
//! theta0 = 0.0
//! theta1 = 1.0
//! h1 = 0.0
//! h2 = 1.0
//! c1 = 0.0
//! c2 = 1.0
//! kernel = { kind = "uniform" }
//!
//! [scheme]
//! id = "anchor"
//! kind = "quadratic"
//! A = 4.0
//! B = 0.0
//!
//! [grid]
//! a1 = "0:0.6:13"
//! p = "0:4:9"
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketEnv;
use crate::perception::PerceptionKernel;
use crate::tariffs::PriceScheme;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub env: Option<EnvConfig>,
    pub kernel: Option<PerceptionKernel>,
    pub scheme: Option<SchemeConfig>,
    pub grid: Option<GridConfig>,
}

impl ConfigFile {
    /// The environment with the top-level kernel taking precedence.
    pub fn market_env(&self) -> Result<MarketEnv> {
        let env = self
            .env
            .as_ref()
            .ok_or_else(|| Error::Config("missing [env] table".into()))?;
        env.build(self.kernel.clone())
    }

    pub fn scheme(&self) -> Result<PriceScheme> {
        self.scheme
            .as_ref()
            .map(|s| s.scheme.clone())
            .ok_or_else(|| Error::Config("missing [scheme] table".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub theta0: f64,
    pub theta1: f64,
    pub h1: f64,
    pub h2: f64,
    pub c1: f64,
    pub c2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<PerceptionKernel>,
}

impl EnvConfig {
    /// Defaults to rational perception when no kernel is given.
    pub fn build(&self, kernel_override: Option<PerceptionKernel>) -> Result<MarketEnv> {
        let kernel = kernel_override
            .or_else(|| self.kernel.clone())
            .unwrap_or(PerceptionKernel::Dirac0);
        MarketEnv::quadratic(
            self.theta0,
            self.theta1,
            self.h1,
            self.h2,
            self.c1,
            self.c2,
            kernel,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub scheme: PriceScheme,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub a1: Option<GridSpec>,
    pub p: Option<GridSpec>,
    pub lambda: Option<GridSpec>,
}

/// `n` evenly spaced points from `lo` to `hi`, written `lo:hi:n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("grid needs n >= 1".into()));
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config(format!(
                "grid bounds must be finite, got {lo}:{hi}"
            )));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let last = (self.n - 1) as f64;
        (0..self.n)
            .map(|i| {
                if i + 1 == self.n {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / last
                }
            })
            .collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "grid spec must be lo:hi:n, got {s:?}"
            )));
        }
        let num = |field: &str, v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("grid {field} {v:?}: {e}")))
        };
        let n = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("grid n {:?}: {e}", parts[2])))?;
        Self::new(num("lo", parts[0])?, num("hi", parts[1])?, n)
    }
}

impl TryFrom<String> for GridSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GridSpec> for String {
    fn from(g: GridSpec) -> Self {
        g.to_string()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

fn config_error(e: toml::de::Error) -> Error {
    Error::Config(e.to_string().trim_end().to_string())
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    toml::from_str(text).map_err(config_error)
}

/// A scheme table body, e.g. `kind = "flat"` and `p1 = 0.6`.
pub fn parse_scheme(text: &str) -> Result<PriceScheme> {
    toml::from_str::<SchemeConfig>(text)
        .map(|s| s.scheme)
        .map_err(config_error)
}

/// A kernel table body, e.g. `kind = "beta_mix"` and `beta = 0.5`.
pub fn parse_kernel(text: &str) -> Result<PerceptionKernel> {
    toml::from_str(text).map_err(config_error)
}

pub fn parse_grid_spec(text: &str) -> Result<GridSpec> {
    text.parse()
}

/// Renders a scheme as a `[scheme]` table that [`parse_config`] accepts.
pub fn scheme_table(scheme: &PriceScheme, id: Option<&str>) -> String {
    let cfg = SchemeConfig {
        id: id.map(str::to_string),
        scheme: scheme.clone(),
    };
    let body = toml::to_string(&cfg).expect("scheme configs always serialize");
    format!("[scheme]\n{body}")
}
