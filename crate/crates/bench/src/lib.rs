//! Shared fixtures for the benchmarks.

use fmcal_core::{simulate, MidPriceSeries, PgpsParams, SimConfig};

/// A mid-volatility parameter vector inside the synthetic bounds.
pub fn reference_params() -> PgpsParams {
    PgpsParams { alpha: 0.1, mu: 0.03, delta: 0.015, delta_s: 0.0005, lambda0: 150.0, c_lambda: 13.0 }
}

pub fn sim_config(horizon: usize) -> SimConfig {
    SimConfig { horizon, ..SimConfig::default() }
}

pub fn reference_series(horizon: usize, seed: u64) -> MidPriceSeries {
    simulate(&reference_params(), &sim_config(horizon), seed).expect("reference parameters simulate")
}
