//! Inside-quote records: file format, stream hash and a synthetic generator.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ensure, Error, Result};
use crate::numerics::linalg::{from_rows, sqrtm};

pub const QUOTES_HEADER: &str = "# momenta-quotes v1";
const COLUMNS: &str = "timestamp_ns,symbol,bid,ask,bid_size,ask_size";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteRecord {
    pub timestamp_ns: i64,
    pub symbol: String,
    pub bid: f64,
    pub ask: f64,
    pub bid_size: f64,
    pub ask_size: f64,
}

impl QuoteRecord {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }

    pub fn is_crossed(&self) -> bool {
        self.bid > self.ask
    }

    fn line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.timestamp_ns, self.symbol, self.bid, self.ask, self.bid_size, self.ask_size
        )
    }
}

/// Reads a quote file. The version comment is optional; any other comment
/// line is rejected.
pub fn read_quotes<R: BufRead>(reader: R) -> Result<Vec<QuoteRecord>> {
    let mut lines = reader.lines().enumerate().peekable();
    if let Some((_, Ok(first))) = lines.peek() {
        if first.starts_with('#') {
            ensure!(
                first.trim() == QUOTES_HEADER,
                Data,
                "unsupported quote file version '{first}'"
            );
            lines.next();
        }
    }
    let mut out = Vec::new();
    let mut saw_header = false;
    for (no, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            ensure!(
                line == COLUMNS,
                Data,
                "line {}: expected columns '{COLUMNS}', got '{line}'",
                no + 1
            );
            saw_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        ensure!(
            f.len() == 6,
            Data,
            "line {}: expected 6 fields, got {}",
            no + 1,
            f.len()
        );
        let num = |s: &str, what: &str| -> Result<f64> {
            let x: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("line {}: bad {what} '{s}'", no + 1)))?;
            ensure!(x.is_finite(), Data, "line {}: {what} is not finite", no + 1);
            Ok(x)
        };
        let rec = QuoteRecord {
            timestamp_ns: f[0]
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("line {}: bad timestamp '{}'", no + 1, f[0])))?,
            symbol: f[1].trim().to_string(),
            bid: num(f[2], "bid")?,
            ask: num(f[3], "ask")?,
            bid_size: num(f[4], "bid_size")?,
            ask_size: num(f[5], "ask_size")?,
        };
        ensure!(
            rec.bid_size >= 0.0 && rec.ask_size >= 0.0,
            Data,
            "line {}: negative size",
            no + 1
        );
        out.push(rec);
    }
    ensure!(saw_header, Data, "quote file has no column header");
    Ok(out)
}

pub fn write_quotes<W: Write>(mut w: W, quotes: &[QuoteRecord]) -> Result<()> {
    writeln!(w, "{QUOTES_HEADER}")?;
    writeln!(w, "{COLUMNS}")?;
    for q in quotes {
        writeln!(w, "{}", q.line())?;
    }
    Ok(())
}

/// SHA-256 over the canonical text of the stream.
pub fn stream_hash(quotes: &[QuoteRecord]) -> String {
    let mut h = Sha256::new();
    for q in quotes {
        h.update(q.line().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Correlated arithmetic Brownian midprices quoted on a tick grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub symbols: Vec<String>,
    pub start_prices: Vec<f64>,
    /// Covariance of daily price changes, price²/day.
    pub covariance: Vec<Vec<f64>>,
    /// Multiplies the covariance.
    pub noise_scale: f64,
    /// Price drift per day.
    pub drift: Vec<f64>,
    /// Market return per day; adds `market_drift·betaⁱ·start_priceⁱ` to each
    /// asset's drift.
    pub market_drift: f64,
    pub betas: Vec<f64>,
    pub tick: f64,
    /// Spread states in ticks and their probabilities.
    pub spread_ticks: Vec<u32>,
    pub spread_probs: Vec<f64>,
    /// Probability per update that the spread state is redrawn.
    pub spread_switch: f64,
    /// Displayed sizes are drawn uniformly in lots from this range.
    pub size_lots: (u32, u32),
    pub lot: f64,
    pub updates_per_day: usize,
    pub days: f64,
    pub start_ns: i64,
    pub day_ns: i64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            symbols: vec!["A".into()],
            start_prices: vec![100.0],
            covariance: vec![vec![1.0]],
            noise_scale: 1.0,
            drift: vec![0.0],
            market_drift: 0.0,
            betas: Vec::new(),
            tick: 0.01,
            spread_ticks: vec![1, 2, 3],
            spread_probs: vec![0.6, 0.3, 0.1],
            spread_switch: 0.05,
            size_lots: (1, 10),
            lot: 100.0,
            updates_per_day: 2000,
            days: 1.0,
            start_ns: 0,
            day_ns: 23_400_000_000_000,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.symbols.len();
        ensure!(d >= 1, Config, "synthetic market needs a symbol");
        ensure!(
            self.start_prices.len() == d
                && (self.drift.is_empty() || self.drift.len() == d)
                && (self.betas.is_empty() || self.betas.len() == d)
                && self.covariance.len() == d,
            Config,
            "synthetic market vectors must have {d} entries"
        );
        ensure!(self.tick > 0.0, Config, "tick must be positive");
        ensure!(
            !self.spread_ticks.is_empty()
                && self.spread_ticks.len() == self.spread_probs.len()
                && self.spread_ticks.iter().all(|&s| s >= 1),
            Config,
            "spread states need matching probabilities and at least one tick"
        );
        ensure!(
            self.size_lots.0 >= 1 && self.size_lots.0 <= self.size_lots.1,
            Config,
            "bad size range"
        );
        ensure!(
            self.updates_per_day >= 1 && self.days > 0.0 && self.day_ns > 0,
            Config,
            "bad time grid"
        );
        ensure!(
            (0.0..=1.0).contains(&self.spread_switch),
            Config,
            "spread_switch must lie in [0, 1]"
        );
        Ok(())
    }

    pub fn generate(&self, seed: u64) -> Result<Vec<QuoteRecord>> {
        self.validate()?;
        let d = self.symbols.len();
        let cov = from_rows(&self.covariance)? * self.noise_scale;
        let root: DMatrix<f64> = sqrtm(&cov)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = (self.updates_per_day as f64 * self.days).round() as usize;
        let h = 1.0 / self.updates_per_day as f64;
        let inv_tick = (1.0 / self.tick).round();
        let spread_dist = rand::distr::weighted::WeightedIndex::new(&self.spread_probs)
            .map_err(|e| Error::Config(format!("spread probabilities: {e}")))?;
        let mut mids = DVector::from_column_slice(&self.start_prices);
        let drift = DVector::from_fn(d, |i, _| {
            self.drift.get(i).copied().unwrap_or(0.0)
                + self.market_drift
                    * self.betas.get(i).copied().unwrap_or(0.0)
                    * self.start_prices[i]
        });
        let mut spreads: Vec<u32> = (0..d)
            .map(|_| self.spread_ticks[rng.sample(&spread_dist)])
            .collect();
        let mut out = Vec::with_capacity((steps + 1) * d);
        for k in 0..=steps {
            if k > 0 {
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                mids += &drift * h + &root * z * h.sqrt();
            }
            let ts = self.start_ns + ((k as f64 * h) * self.day_ns as f64).round() as i64;
            for i in 0..d {
                if k > 0 && rng.random::<f64>() < self.spread_switch {
                    spreads[i] = self.spread_ticks[rng.sample(&spread_dist)];
                }
                let s = spreads[i] as i64;
                // bid sits half a spread under the mid, snapped down to the grid
                let bid_ticks = ((mids[i] * inv_tick) - 0.5 * s as f64).floor().max(1.0) as i64;
                let lots = |rng: &mut ChaCha8Rng| {
                    rng.random_range(self.size_lots.0..=self.size_lots.1) as f64 * self.lot
                };
                out.push(QuoteRecord {
                    timestamp_ns: ts,
                    symbol: self.symbols[i].clone(),
                    bid: bid_ticks as f64 / inv_tick,
                    ask: (bid_ticks + s) as f64 / inv_tick,
                    bid_size: lots(&mut rng),
                    ask_size: lots(&mut rng),
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_and_hash() {
        let cfg = SyntheticConfig {
            updates_per_day: 50,
            ..SyntheticConfig::default()
        };
        let q = cfg.generate(7).unwrap();
        assert_eq!(q.len(), 51);
        let mut buf = Vec::new();
        write_quotes(&mut buf, &q).unwrap();
        let back = read_quotes(&buf[..]).unwrap();
        assert_eq!(back, q);
        assert_eq!(stream_hash(&back), stream_hash(&q));
        assert_ne!(stream_hash(&cfg.generate(8).unwrap()), stream_hash(&q));
        assert!(q
            .iter()
            .all(|r| r.bid < r.ask && ((r.ask - r.bid) * 100.0).round() >= 1.0));
    }

    #[test]
    fn rejects_bad_lines() {
        let text = "timestamp_ns,symbol,bid,ask,bid_size,ask_size\n1,A,10.0,x,1,1\n";
        assert!(matches!(read_quotes(text.as_bytes()), Err(Error::Data(_))));
        let text = "# momenta-quotes v9\ntimestamp_ns,symbol,bid,ask,bid_size,ask_size\n";
        assert!(read_quotes(text.as_bytes()).is_err());
        let text = "timestamp_ns,symbol,bid,ask,bid_size,ask_size\n1,A,10.0,10.01,100,200\n";
        assert_eq!(read_quotes(text.as_bytes()).unwrap()[0].ask_size, 200.0);
    }
}
