//! Event-driven market simulation and quote replay.

pub mod cox;
pub mod eventlog;
pub mod portfolio;
pub mod quotes;
pub mod replay;

use serde::{Deserialize, Serialize};

pub use cox::{simulate, OrderLife, PriceModel, SimConfig};
pub use eventlog::{Event, EventKind};
pub use portfolio::{Metrics, PortfolioState};
pub use quotes::QuoteRecord;
pub use replay::{replay_quotes, ReplayConfig};

/// State sampled at one decision epoch, after that epoch's immediate fills.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub value: f64,
    pub gmv: f64,
    pub net: f64,
    pub beta: f64,
    pub holdings: Vec<f64>,
    pub passive_fills: usize,
    pub aggressive_fills: usize,
    /// Cumulative cost of fills against the arrival midpoint, currency.
    pub slippage: f64,
}

/// What a simulation or replay produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub events: Vec<Event>,
    pub series: Vec<SeriesRow>,
    pub initial: PortfolioState,
    pub state: PortfolioState,
    pub rejects: usize,
    pub skipped: usize,
}

/// Running fill tallies shared by both engines.
#[derive(Debug, Clone, Default)]
pub(crate) struct Tally {
    pub passive: usize,
    pub aggressive: usize,
    pub slippage: f64,
    pub arrival: Vec<f64>,
}

impl Tally {
    pub fn new(arrival: Vec<f64>) -> Self {
        Self {
            arrival,
            ..Self::default()
        }
    }

    pub fn record(&mut self, asset: usize, signed: f64, price: f64, passive: bool) {
        if passive {
            self.passive += 1;
        } else {
            self.aggressive += 1;
        }
        self.slippage += signed * (price - self.arrival[asset]);
    }

    pub fn row(&self, t: f64, state: &PortfolioState, betas: &[f64]) -> SeriesRow {
        let m = state.metrics(betas);
        SeriesRow {
            t,
            value: m.value,
            gmv: m.gmv,
            net: m.net,
            beta: m.beta,
            holdings: state.shares.clone(),
            passive_fills: self.passive,
            aggressive_fills: self.aggressive,
            slippage: self.slippage,
        }
    }
}
