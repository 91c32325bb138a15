//! Monopoly nonlinear pricing when consumers respond to a perceived,
//! weighted-average marginal price.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod block_tariff;
pub mod comparative_statics;
pub mod config;
pub mod consumer;
pub mod error;
pub mod market;
pub mod numerics;
pub mod perception;
pub mod quadratic_optimum;
pub mod report;
pub mod tariffs;
pub mod variational;

pub use consumer::{best_response, simulate_dynamics, DynamicsSettings, Preferences, Trajectory};
pub use error::{Error, Result};
pub use market::{CutoffMode, MarketEnv, MaxQuantity};
pub use perception::PerceptionKernel;
pub use tariffs::PriceScheme;
