//! Deterministic replay of inside quotes with conservative passive fills.
//!
//! A resting buy fills only when an update brings the ask down to its limit,
//! and then only up to the size shown at that ask. The shown size is used up
//! by our fills and comes back only when the ask price moves. Sells mirror.

use serde::{Deserialize, Serialize};

use super::eventlog::{Event, EventKind};
use super::portfolio::PortfolioState;
use super::quotes::QuoteRecord;
use super::{RunOutput, Tally};
use crate::error::{ensure, Error, Result};
use crate::policy::{MarketView, Policy};
use crate::router::{Action, Side, VenueState};
use crate::venue::{allowed_levels, Level, VenueBook};

pub const DAY_NS: i64 = 23_400_000_000_000;

fn default_day() -> i64 {
    DAY_NS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    /// Asset order; quotes for other symbols are skipped.
    pub symbols: Vec<String>,
    pub cadence_ns: i64,
    /// Time after the first quote before trading starts.
    #[serde(default)]
    pub start_offset_ns: i64,
    /// Length of one time unit ("day") in nanoseconds.
    #[serde(default = "default_day")]
    pub day_ns: i64,
    #[serde(default)]
    pub initial_holdings: Vec<f64>,
    #[serde(default)]
    pub betas: Vec<f64>,
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.symbols.len();
        ensure!(d >= 1, Config, "replay needs at least one symbol");
        ensure!(self.cadence_ns > 0, Config, "cadence_ns must be positive");
        ensure!(self.day_ns > 0, Config, "day_ns must be positive");
        ensure!(
            self.start_offset_ns >= 0,
            Config,
            "start_offset_ns must be >= 0"
        );
        ensure!(
            self.initial_holdings.is_empty() || self.initial_holdings.len() == d,
            Config,
            "initial_holdings needs {d} entries"
        );
        ensure!(
            self.betas.is_empty() || self.betas.len() == d,
            Config,
            "betas needs {d} entries"
        );
        Ok(())
    }
}

/// Inside quote of one symbol plus the shown size not yet taken by us.
#[derive(Debug, Clone, Copy)]
struct Book {
    bid: f64,
    ask: f64,
    bid_size: f64,
    ask_size: f64,
    bid_left: f64,
    ask_left: f64,
}

impl Book {
    fn update(prev: Option<Book>, q: &QuoteRecord) -> Book {
        let (bid_left, ask_left) = match prev {
            Some(p) => (
                if p.bid == q.bid {
                    p.bid_left.min(q.bid_size)
                } else {
                    q.bid_size
                },
                if p.ask == q.ask {
                    p.ask_left.min(q.ask_size)
                } else {
                    q.ask_size
                },
            ),
            None => (q.bid_size, q.ask_size),
        };
        Book {
            bid: q.bid,
            ask: q.ask,
            bid_size: q.bid_size,
            ask_size: q.ask_size,
            bid_left,
            ask_left,
        }
    }

    fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }

    /// Opposite quote and shown size left for an order on `side`.
    fn opposite(&mut self, side: Side) -> (f64, &mut f64) {
        match side {
            Side::Buy => (self.ask, &mut self.ask_left),
            Side::Sell => (self.bid, &mut self.bid_left),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Resting {
    asset: usize,
    venue: usize,
    side: Side,
    level: Level,
    price: f64,
    left: f64,
}

fn venue_state(book: &Book, tick: f64, states: &[u32]) -> VenueState {
    let raw = ((book.ask - book.bid) / tick).round().max(0.0) as u32;
    // nearest modelled spread state
    let spread_ticks = *states
        .iter()
        .min_by_key(|&&s| (s as i64 - raw as i64).abs())
        .expect("spread states are nonempty");
    let depth = book.bid_size + book.ask_size;
    let imbalance = if depth > 0.0 {
        (book.bid_size - book.ask_size) / depth
    } else {
        0.0
    };
    VenueState {
        spread_ticks,
        imbalance,
    }
}

struct Replay<'a> {
    cfg: &'a ReplayConfig,
    book: &'a VenueBook,
    policy: &'a mut dyn Policy,
    books: Vec<Option<Book>>,
    origin: i64,
    state: Option<PortfolioState>,
    initial: Option<PortfolioState>,
    tally: Tally,
    betas: Vec<f64>,
    resting: Vec<Resting>,
    events: Vec<Event>,
    series: Vec<super::SeriesRow>,
    rejects: usize,
    skipped: usize,
    filled: bool,
}

impl Replay<'_> {
    fn time(&self, ts: i64) -> f64 {
        (ts - self.origin) as f64 / self.cfg.day_ns as f64
    }

    fn tick(&self, i: usize) -> f64 {
        self.book.for_asset(i)[0].tick()
    }

    fn apply_quote(&mut self, i: usize, q: &QuoteRecord) {
        let t = self.time(q.timestamp_ns);
        let mut b = Book::update(self.books[i], q);
        if let Some(state) = self.state.as_mut() {
            state.mark(i, b.mid());
            let mut marked = false;
            for o in self
                .resting
                .iter_mut()
                .filter(|o| o.asset == i && o.left > 0.0)
            {
                let (quote, left) = b.opposite(o.side);
                let crosses = match o.side {
                    Side::Buy => quote <= o.price,
                    Side::Sell => quote >= o.price,
                };
                if !crosses || *left <= 0.0 {
                    continue;
                }
                let volume = o.left.min(*left);
                *left -= volume;
                o.left -= volume;
                if !marked {
                    self.events
                        .push(Event::new(EventKind::Mark, t).asset(i).price(b.mid()));
                    marked = true;
                }
                state.fill(i, o.side, volume, o.price);
                self.tally.record(i, o.side.sign() * volume, o.price, true);
                self.filled = true;
                self.events.push(
                    Event::new(EventKind::LimitFill, t)
                        .asset(i)
                        .venue(o.venue)
                        .side(o.side)
                        .level(o.level)
                        .volume(volume)
                        .price(o.price),
                );
            }
            self.resting.retain(|o| o.left > 0.0);
        }
        self.books[i] = Some(b);
    }

    fn decide(&mut self, ts: i64) -> Result<()> {
        let t = self.time(ts);
        let d = self.cfg.symbols.len();
        let books: Vec<Book> = self
            .books
            .iter()
            .map(|b| b.expect("books are ready"))
            .collect();
        let mids: Vec<f64> = books.iter().map(Book::mid).collect();
        if self.state.is_none() {
            let holdings = if self.cfg.initial_holdings.is_empty() {
                vec![0.0; d]
            } else {
                self.cfg.initial_holdings.clone()
            };
            let s = PortfolioState::financed(holdings, mids.clone())?;
            self.initial = Some(s.clone());
            self.state = Some(s);
            self.tally = Tally::new(mids.clone());
        }
        for (i, &m) in mids.iter().enumerate() {
            self.state.as_mut().expect("state").mark(i, m);
            self.events
                .push(Event::new(EventKind::Mark, t).asset(i).price(m));
        }
        self.events.push(Event::new(EventKind::Decision, t));
        let states: Vec<Vec<VenueState>> = (0..d)
            .map(|i| {
                let venues = self.book.for_asset(i);
                let s = venue_state(&books[i], self.tick(i), &venues[0].regime.spread_states);
                vec![s; venues.len()]
            })
            .collect();
        let plan = {
            let state = self.state.as_ref().expect("state");
            let view = MarketView {
                t,
                dt: self.cfg.cadence_ns as f64 / self.cfg.day_ns as f64,
                mids: &mids,
                venues: &states,
                holdings: &state.shares,
                filled: self.filled,
            };
            self.policy.decide(&view)?
        };
        self.filled = false;
        self.resting.clear();
        for order in &plan.orders {
            let (i, n) = (order.asset, order.venue);
            let v = order.action.volume();
            let valid = i < d
                && n < self.book.for_asset(i).len()
                && v > 0.0
                && v.is_finite()
                && match order.action {
                    Action::Limit { level, .. } => allowed_levels(states[i][n].spread_ticks)
                        .map(|l| l.contains(&level))
                        .unwrap_or(false),
                    _ => true,
                };
            if !valid {
                self.rejects += 1;
                let mut e = Event::new(EventKind::Reject, t).asset(i).venue(n);
                if v.is_finite() {
                    e = e.volume(v);
                }
                self.events.push(e);
                continue;
            }
            match order.action {
                Action::Limit {
                    side,
                    level,
                    volume,
                } => {
                    let b = &books[i];
                    let shift = level.0 as f64 * self.tick(i);
                    let price = match side {
                        Side::Buy => b.bid - shift,
                        Side::Sell => b.ask + shift,
                    };
                    self.events.push(
                        Event::new(EventKind::Post, t)
                            .asset(i)
                            .venue(n)
                            .side(side)
                            .level(level)
                            .volume(volume)
                            .price(price),
                    );
                    self.resting.push(Resting {
                        asset: i,
                        venue: n,
                        side,
                        level,
                        price,
                        left: volume,
                    });
                }
                Action::Market { side, volume } => {
                    let b = self.books[i].as_mut().expect("book");
                    let (price, left) = b.opposite(side);
                    let volume = volume.min(*left);
                    if volume <= 0.0 {
                        continue;
                    }
                    *left -= volume;
                    let state = self.state.as_mut().expect("state");
                    state.fill(i, side, volume, price);
                    self.tally.record(i, side.sign() * volume, price, false);
                    self.filled = true;
                    self.events.push(
                        Event::new(EventKind::MarketFill, t)
                            .asset(i)
                            .venue(n)
                            .side(side)
                            .volume(volume)
                            .price(price),
                    );
                }
                Action::Wait => {}
            }
        }
        let row = self
            .tally
            .row(t, self.state.as_ref().expect("state"), &self.betas);
        self.series.push(row);
        Ok(())
    }
}

/// Replays `quotes` (sorted by time) and lets `policy` trade every
/// `cadence_ns` once every symbol has a quote.
pub fn replay_quotes(
    cfg: &ReplayConfig,
    quotes: &[QuoteRecord],
    book: &VenueBook,
    policy: &mut dyn Policy,
) -> Result<RunOutput> {
    cfg.validate()?;
    let d = cfg.symbols.len();
    ensure!(
        book.assets() == d,
        Config,
        "venue book has {} assets, replay {d} symbols",
        book.assets()
    );
    for w in quotes.windows(2) {
        ensure!(
            w[1].timestamp_ns >= w[0].timestamp_ns,
            Data,
            "quote stream is not sorted: {} follows {}",
            w[1].timestamp_ns,
            w[0].timestamp_ns
        );
    }
    let Some(first) = quotes.first() else {
        return Err(Error::Data("quote stream is empty".into()));
    };
    let start = first.timestamp_ns + cfg.start_offset_ns;
    let last = quotes[quotes.len() - 1].timestamp_ns;
    let mut r = Replay {
        cfg,
        book,
        policy,
        books: vec![None; d],
        origin: start,
        state: None,
        initial: None,
        tally: Tally::default(),
        betas: if cfg.betas.is_empty() {
            vec![0.0; d]
        } else {
            cfg.betas.clone()
        },
        resting: Vec::new(),
        events: Vec::new(),
        series: Vec::new(),
        rejects: 0,
        skipped: 0,
        filled: false,
    };
    let mut next = start;
    for q in quotes {
        while q.timestamp_ns > next && next <= last {
            if r.books.iter().all(Option::is_some) {
                r.decide(next)?;
            }
            next += cfg.cadence_ns;
        }
        let asset = cfg.symbols.iter().position(|s| *s == q.symbol);
        match asset {
            Some(i) if !q.is_crossed() => r.apply_quote(i, q),
            _ => {
                r.skipped += 1;
                let mut e = Event::new(EventKind::Skip, r.time(q.timestamp_ns));
                if let Some(i) = asset {
                    e = e.asset(i);
                }
                r.events.push(e);
            }
        }
    }
    while next <= last {
        if r.books.iter().all(Option::is_some) {
            r.decide(next)?;
        }
        next += cfg.cadence_ns;
    }
    let state = r
        .state
        .clone()
        .unwrap_or_else(|| PortfolioState::flat(vec![0.0; d]));
    Ok(RunOutput {
        events: r.events,
        series: r.series,
        initial: r.initial.unwrap_or_else(|| state.clone()),
        state,
        rejects: r.rejects,
        skipped: r.skipped,
    })
}
