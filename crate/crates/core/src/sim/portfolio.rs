use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::router::Side;

/// Holdings, per-position cash and last marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    pub shares: Vec<f64>,
    pub cash: Vec<f64>,
    pub mids: Vec<f64>,
}

/// Exposure summary at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub value: f64,
    pub gmv: f64,
    pub net: f64,
    pub beta: f64,
}

impl PortfolioState {
    pub fn flat(mids: Vec<f64>) -> Self {
        let d = mids.len();
        Self {
            shares: vec![0.0; d],
            cash: vec![0.0; d],
            mids,
        }
    }

    /// Positions bought (or sold short) at the marks with borrowed cash, so
    /// each starts at zero value.
    pub fn financed(shares: Vec<f64>, mids: Vec<f64>) -> Result<Self> {
        ensure!(
            shares.len() == mids.len(),
            Validation,
            "shares and prices differ in length"
        );
        let cash = shares.iter().zip(&mids).map(|(n, p)| -n * p).collect();
        Ok(Self { shares, cash, mids })
    }

    pub fn dim(&self) -> usize {
        self.shares.len()
    }

    /// Buy (or sell) `volume` shares at `price`.
    pub fn fill(&mut self, asset: usize, side: Side, volume: f64, price: f64) {
        let signed = side.sign() * volume;
        self.shares[asset] += signed;
        self.cash[asset] -= signed * price;
    }

    pub fn mark(&mut self, asset: usize, mid: f64) {
        self.mids[asset] = mid;
    }

    pub fn position_value(&self, asset: usize) -> f64 {
        self.shares[asset] * self.mids[asset] + self.cash[asset]
    }

    pub fn value(&self) -> f64 {
        (0..self.dim()).map(|i| self.position_value(i)).sum()
    }

    pub fn metrics(&self, betas: &[f64]) -> Metrics {
        let exposure = |i: usize| self.shares[i] * self.mids[i];
        Metrics {
            value: self.value(),
            gmv: (0..self.dim()).map(|i| exposure(i).abs()).sum(),
            net: (0..self.dim()).map(exposure).sum(),
            beta: (0..self.dim())
                .map(|i| exposure(i) * betas.get(i).copied().unwrap_or(0.0))
                .sum(),
        }
    }
}
