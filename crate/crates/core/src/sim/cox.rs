//! Gillespie-style simulation: Brownian mids, Markov regimes per venue and
//! Cox fills on resting limit orders.

use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::eventlog::{Event, EventKind};
use super::portfolio::PortfolioState;
use super::{RunOutput, Tally};
use crate::error::{ensure, Error, Result};
use crate::numerics::linalg::{from_rows, is_symmetric, sqrtm};
use crate::policy::{MarketView, Order, Policy};
use crate::router::{Action, Side, VenueState};
use crate::venue::{allowed_levels, Level, RegimeClass, VenueBook, VenueModel};

/// Arithmetic Brownian mids, per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceModel {
    pub start: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    #[serde(default)]
    pub drift: Vec<f64>,
}

/// What happens to a resting order's volume when it fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderLife {
    /// Fills use up the order.
    #[default]
    Consumed,
    /// The posted volume is a rate control held until the next decision;
    /// every arrival executes a fraction of it.
    Persistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    pub prices: PriceModel,
    /// Starting shares; empty means flat.
    #[serde(default)]
    pub initial_holdings: Vec<f64>,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub order_life: OrderLife,
}

impl SimConfig {
    pub fn dim(&self) -> usize {
        self.prices.start.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        ensure!(d >= 1, Config, "price model needs at least one asset");
        ensure!(
            self.horizon > 0.0 && self.horizon.is_finite(),
            Config,
            "horizon must be positive"
        );
        ensure!(
            self.dt > 0.0 && self.dt.is_finite(),
            Config,
            "dt must be positive, got {}",
            self.dt
        );
        ensure!(
            self.prices.covariance.len() == d,
            Config,
            "covariance must be {d}x{d}"
        );
        ensure!(
            self.prices.drift.is_empty() || self.prices.drift.len() == d,
            Config,
            "drift needs {d} entries"
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
        ensure!(
            self.prices.start.iter().all(|p| p.is_finite()),
            Config,
            "start prices must be finite"
        );
        let cov = from_rows(&self.prices.covariance)?;
        ensure!(
            is_symmetric(&cov, 1e-12),
            Config,
            "price covariance is not symmetric"
        );
        Ok(())
    }

    fn betas(&self) -> Vec<f64> {
        if self.betas.is_empty() {
            vec![0.0; self.dim()]
        } else {
            self.betas.clone()
        }
    }
}

/// Exact Gaussian increments of the mids.
struct Mids {
    root: DMatrix<f64>,
    drift: DVector<f64>,
    now: DVector<f64>,
}

impl Mids {
    fn new(model: &PriceModel) -> Result<Self> {
        let d = model.start.len();
        Ok(Self {
            root: sqrtm(&from_rows(&model.covariance)?)?,
            drift: if model.drift.is_empty() {
                DVector::zeros(d)
            } else {
                DVector::from_column_slice(&model.drift)
            },
            now: DVector::from_column_slice(&model.start),
        })
    }

    fn advance(&mut self, h: f64, rng: &mut ChaCha8Rng) {
        if h <= 0.0 {
            return;
        }
        let z = DVector::from_fn(self.now.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.now += &self.drift * h + &self.root * z * h.sqrt();
    }
}

/// Regime chain state of one venue.
#[derive(Debug, Clone, Copy)]
struct Regime {
    spread: usize,
    imbalance: usize,
}

#[derive(Debug, Clone, Copy)]
struct Resting {
    asset: usize,
    venue: usize,
    side: Side,
    level: Level,
    volume: f64,
}

#[derive(Debug, Clone, Copy)]
enum Candidate {
    Spread(usize, usize),
    Imbalance(usize, usize),
    Fill(usize),
}

fn leave_rate(gen: &Option<Vec<Vec<f64>>>, k: usize) -> f64 {
    gen.as_ref().map_or(0.0, |g| -g[k][k])
}

fn jump(gen: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> usize {
    let total = -gen[k][k];
    let mut u = rng.random::<f64>() * total;
    let mut last = k;
    for (j, &r) in gen[k].iter().enumerate() {
        if j == k || r <= 0.0 {
            continue;
        }
        last = j;
        if u < r {
            return j;
        }
        u -= r;
    }
    last
}

struct World<'a> {
    book: &'a VenueBook,
    regimes: Vec<Vec<Regime>>,
}

impl World<'_> {
    fn venue(&self, i: usize, n: usize) -> &VenueModel {
        &self.book.for_asset(i)[n]
    }

    fn state(&self, i: usize, n: usize) -> VenueState {
        let v = self.venue(i, n);
        let r = self.regimes[i][n];
        VenueState {
            spread_ticks: v.regime.spread_states[r.spread],
            imbalance: v.regime.imbalance_states[r.imbalance],
        }
    }

    fn states(&self) -> Vec<Vec<VenueState>> {
        (0..self.regimes.len())
            .map(|i| {
                (0..self.regimes[i].len())
                    .map(|n| self.state(i, n))
                    .collect()
            })
            .collect()
    }

    fn class(&self, i: usize, n: usize) -> Result<RegimeClass> {
        let s = self.state(i, n);
        self.venue(i, n)
            .regime
            .classify(s.spread_ticks, s.imbalance)
    }

    /// Base arrival rate of a resting order, zero when its level is not
    /// available at the current spread.
    fn base_rate(&self, o: &Resting) -> Result<f64> {
        let s = self.state(o.asset, o.venue);
        if !allowed_levels(s.spread_ticks)?.contains(&o.level) {
            return Ok(0.0);
        }
        self.venue(o.asset, o.venue)
            .base_rate(self.class(o.asset, o.venue)?, o.level)
    }

    fn half_spread(&self, i: usize, n: usize) -> f64 {
        0.5 * self.state(i, n).spread_ticks as f64 * self.venue(i, n).tick()
    }

    /// Distance from the mid of a limit order at `level`.
    fn limit_offset(&self, i: usize, n: usize, level: Level) -> f64 {
        self.half_spread(i, n) + level.0 as f64 * self.venue(i, n).tick()
    }

    fn check(&self, order: &Order) -> std::result::Result<(), String> {
        let Order {
            asset,
            venue,
            action,
        } = *order;
        if asset >= self.regimes.len() || venue >= self.regimes[asset].len() {
            return Err(format!("no venue {venue} for asset {asset}"));
        }
        let v = action.volume();
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("volume {v} is not positive"));
        }
        if let Action::Limit { level, .. } = action {
            let s = self.state(asset, venue);
            let ok = allowed_levels(s.spread_ticks)
                .map(|l| l.contains(&level))
                .unwrap_or(false);
            if !ok {
                return Err(format!(
                    "level {level} unavailable at spread {}",
                    s.spread_ticks
                ));
            }
            let class = self.class(asset, venue).map_err(|e| e.to_string())?;
            self.venue(asset, venue)
                .base_rate(class, level)
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

fn initial_regimes(book: &VenueBook) -> Result<Vec<Vec<Regime>>> {
    book.venues
        .iter()
        .map(|vs| {
            vs.iter()
                .map(|v| {
                    let Some(dy) = &v.dynamics else {
                        return Ok(Regime {
                            spread: 0,
                            imbalance: 0,
                        });
                    };
                    let spread = v
                        .regime
                        .spread_states
                        .iter()
                        .position(|&s| s == dy.initial_spread)
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "venue '{}': initial spread is not a state",
                                v.name
                            ))
                        })?;
                    let imbalance = v
                        .regime
                        .imbalance_states
                        .iter()
                        .position(|&x| x == dy.initial_imbalance)
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "venue '{}': initial imbalance is not a state",
                                v.name
                            ))
                        })?;
                    Ok(Regime { spread, imbalance })
                })
                .collect()
        })
        .collect()
}

/// Runs one path. Decisions happen at `k·dt` and once more at the horizon.
pub fn simulate(cfg: &SimConfig, book: &VenueBook, policy: &mut dyn Policy) -> Result<RunOutput> {
    cfg.validate()?;
    let d = cfg.dim();
    ensure!(
        book.assets() == d,
        Config,
        "venue book has {} assets, price model {d}",
        book.assets()
    );
    let betas = cfg.betas();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mids = Mids::new(&cfg.prices)?;
    let mut world = World {
        book,
        regimes: initial_regimes(book)?,
    };
    let holdings = if cfg.initial_holdings.is_empty() {
        vec![0.0; d]
    } else {
        cfg.initial_holdings.clone()
    };
    let mut state = PortfolioState::financed(holdings, cfg.prices.start.clone())?;
    let initial = state.clone();
    let mut tally = Tally::new(cfg.prices.start.clone());
    let mut events = Vec::new();
    let mut series = Vec::new();
    let mut resting: Vec<Resting> = Vec::new();
    let mut rejects = 0;
    let mut filled = false;

    let epochs = (cfg.horizon / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let mut t = 0.0;
    for k in 0..=epochs {
        let t_dec = (k as f64 * cfg.dt).min(cfg.horizon);
        // events strictly before the decision
        loop {
            let mut cands: Vec<(Candidate, f64)> = Vec::new();
            for i in 0..d {
                for n in 0..world.regimes[i].len() {
                    if let Some(dy) = &world.venue(i, n).dynamics {
                        let r = world.regimes[i][n];
                        let a = leave_rate(&dy.spread_generator, r.spread);
                        if a > 0.0 {
                            cands.push((Candidate::Spread(i, n), a));
                        }
                        let b = leave_rate(&dy.imbalance_generator, r.imbalance);
                        if b > 0.0 {
                            cands.push((Candidate::Imbalance(i, n), b));
                        }
                    }
                }
            }
            for (j, o) in resting.iter().enumerate() {
                let r = world.base_rate(o)?;
                if r > 0.0 {
                    cands.push((Candidate::Fill(j), r));
                }
            }
            let total: f64 = cands.iter().map(|c| c.1).sum();
            let wait = if total > 0.0 {
                Exp::new(total)
                    .map_err(|e| Error::Numeric(e.to_string()))?
                    .sample(&mut rng)
            } else {
                f64::INFINITY
            };
            if t + wait >= t_dec {
                mids.advance(t_dec - t, &mut rng);
                t = t_dec;
                break;
            }
            mids.advance(wait, &mut rng);
            t += wait;
            let mut u = rng.random::<f64>() * total;
            let mut pick = cands[cands.len() - 1].0;
            for &(c, r) in &cands {
                if u < r {
                    pick = c;
                    break;
                }
                u -= r;
            }
            match pick {
                Candidate::Spread(i, n) | Candidate::Imbalance(i, n) => {
                    let dy = book.for_asset(i)[n]
                        .dynamics
                        .as_ref()
                        .expect("dynamics present");
                    let r = &mut world.regimes[i][n];
                    if let Candidate::Spread(..) = pick {
                        r.spread = jump(
                            dy.spread_generator.as_ref().expect("generator"),
                            r.spread,
                            &mut rng,
                        );
                    } else {
                        r.imbalance = jump(
                            dy.imbalance_generator.as_ref().expect("generator"),
                            r.imbalance,
                            &mut rng,
                        );
                    }
                    let s = world.state(i, n);
                    events.push(
                        Event::new(EventKind::Regime, t)
                            .asset(i)
                            .venue(n)
                            .volume(s.spread_ticks as f64)
                            .price(s.imbalance),
                    );
                }
                Candidate::Fill(j) => {
                    let o = resting[j];
                    let posted: f64 = resting
                        .iter()
                        .filter(|r| r.asset == o.asset && r.side == o.side)
                        .map(|r| r.volume)
                        .sum();
                    let venue = world.venue(o.asset, o.venue);
                    // thinning against the damped intensity
                    let accept = venue.intensity_damping().eval(posted);
                    if rng.random::<f64>() >= accept {
                        continue;
                    }
                    let class = world.class(o.asset, o.venue)?;
                    let eps = venue
                        .partial_fill_dist(class, o.level, posted)?
                        .sample(&mut rng);
                    let volume = eps * o.volume;
                    if volume <= 0.0 {
                        continue;
                    }
                    let mid = mids.now[o.asset];
                    let price = mid
                        - o.side.sign()
                            * (world.limit_offset(o.asset, o.venue, o.level) - venue.cost.fee);
                    state.mark(o.asset, mid);
                    events.push(Event::new(EventKind::Mark, t).asset(o.asset).price(mid));
                    state.fill(o.asset, o.side, volume, price);
                    tally.record(o.asset, o.side.sign() * volume, price, true);
                    filled = true;
                    events.push(
                        Event::new(EventKind::LimitFill, t)
                            .asset(o.asset)
                            .venue(o.venue)
                            .side(o.side)
                            .level(o.level)
                            .volume(volume)
                            .price(price),
                    );
                    if cfg.order_life == OrderLife::Consumed {
                        resting[j].volume -= volume;
                        if resting[j].volume <= 1e-12 * o.volume.max(1.0) {
                            resting.remove(j);
                        }
                    }
                }
            }
        }

        for i in 0..d {
            state.mark(i, mids.now[i]);
            events.push(Event::new(EventKind::Mark, t).asset(i).price(mids.now[i]));
        }
        events.push(Event::new(EventKind::Decision, t));
        let states = world.states();
        let dt_next = if k < epochs {
            ((k + 1) as f64 * cfg.dt).min(cfg.horizon) - t
        } else {
            cfg.dt
        };
        let plan = {
            let mids_now: Vec<f64> = mids.now.iter().copied().collect();
            let view = MarketView {
                t,
                dt: dt_next,
                mids: &mids_now,
                venues: &states,
                holdings: &state.shares,
                filled,
            };
            policy.decide(&view)?
        };
        filled = false;
        resting.clear();
        for order in &plan.orders {
            if let Err(why) = world.check(order) {
                log::debug!("rejected order at t={t}: {why}");
                rejects += 1;
                let mut e = Event::new(EventKind::Reject, t)
                    .asset(order.asset)
                    .venue(order.venue);
                let v = order.action.volume();
                if v.is_finite() {
                    e = e.volume(v);
                }
                events.push(e);
                continue;
            }
            let (i, n) = (order.asset, order.venue);
            match order.action {
                Action::Limit {
                    side,
                    level,
                    volume,
                } => {
                    let price = mids.now[i] - side.sign() * world.limit_offset(i, n, level);
                    events.push(
                        Event::new(EventKind::Post, t)
                            .asset(i)
                            .venue(n)
                            .side(side)
                            .level(level)
                            .volume(volume)
                            .price(price),
                    );
                    resting.push(Resting {
                        asset: i,
                        venue: n,
                        side,
                        level,
                        volume,
                    });
                }
                Action::Market { side, volume } => {
                    let venue = world.venue(i, n);
                    let per_share = world.half_spread(i, n) + venue.cost.market_impact * volume;
                    let price = mids.now[i] + side.sign() * per_share;
                    state.fill(i, side, volume, price);
                    tally.record(i, side.sign() * volume, price, false);
                    filled = true;
                    events.push(
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
        series.push(tally.row(t, &state, &betas));
    }
    Ok(RunOutput {
        events,
        series,
        initial,
        state,
        rejects,
        skipped: 0,
    })
}
