//! Calibration toolkit for an agent-based limit order book market simulator.
//!
//! - [`lob`]: continuous double auction order book with price-time priority.
//! - [`pgps`]: liquidity provider / taker agents producing a mid-price series.
//! - [`objectives`]: Kolmogorov-Smirnov and simulated-moments discrepancies.
//! - [`ncs`]: Improved Negatively Correlated Search and a random-search baseline.
//! - [`landscape`]: 2-D grid scans of the objective with top-k masks.
//! - [`harness`]: synthetic targets, calibration campaigns and reports.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod landscape;
pub mod lob;
pub mod ncs;
pub mod objectives;
pub mod pgps;
pub mod seed;
pub mod series;
pub mod stats;

pub use bounds::Bounds;
pub use error::{Error, Result};
pub use lob::{LimitOrder, MatchResult, MidPrice, Order, OrderBook, Side, Trade};
pub use ncs::{calibrate, random_search, CalibrationResult, NcsConfig};
pub use objectives::{ks_critical_value, ks_statistic, moments, MomentVector, Objective, ObjectiveKind, SimulationObjective};
pub use pgps::{simulate, PgpsParams, SimConfig};
pub use series::MidPriceSeries;
