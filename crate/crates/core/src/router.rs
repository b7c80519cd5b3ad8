//! Static per-epoch order placement across venues, and the alpha that
//! drives it.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::roots;
use crate::schedule::Schedule;
use crate::venue::{allowed_levels, Level, RegimeClass, VenueBook, VenueModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn from_sign(x: f64) -> Side {
        if x >= 0.0 {
            Side::Buy
        } else {
            Side::Sell
        }
    }

    /// +1 for buys, −1 for sells.
    pub fn sign(self) -> f64 {
        match self {
            Side::Buy => 1.0,
            Side::Sell => -1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Limit {
        side: Side,
        level: Level,
        volume: f64,
    },
    Market {
        side: Side,
        volume: f64,
    },
    Wait,
}

impl Action {
    pub fn volume(&self) -> f64 {
        match *self {
            Action::Limit { volume, .. } | Action::Market { volume, .. } => volume,
            Action::Wait => 0.0,
        }
    }

    pub fn is_wait(&self) -> bool {
        matches!(self, Action::Wait)
    }
}

/// Actions indexed `[asset][venue]` and the achieved objective per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    pub actions: Vec<Vec<Action>>,
    pub objective: Vec<f64>,
}

impl ActionSet {
    pub fn wait(venues_per_asset: &[usize]) -> Self {
        Self {
            actions: venues_per_asset
                .iter()
                .map(|&n| vec![Action::Wait; n])
                .collect(),
            objective: vec![0.0; venues_per_asset.len()],
        }
    }

    pub fn total_objective(&self) -> f64 {
        self.objective.iter().sum()
    }
}

/// Observable state of one venue at decision time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VenueState {
    pub spread_ticks: u32,
    pub imbalance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caps {
    pub market: f64,
    pub limit: f64,
}

impl Caps {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.market > 0.0
                && self.market.is_finite()
                && self.limit > 0.0
                && self.limit.is_finite(),
            Validation,
            "volume caps must be positive and finite, got {self:?}"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouterOptions {
    pub max_sweeps: usize,
    pub stall_tol: f64,
    pub volume_tol: f64,
    /// Scales the limit branch: expected fills over the decision interval.
    pub fill_horizon: f64,
    pub branches: Branches,
}

/// Which order types the router may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branches {
    #[default]
    Both,
    LimitOnly,
    MarketOnly,
}

impl Default for RouterOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10,
            stall_tol: 1e-10,
            volume_tol: 1e-10,
            fill_horizon: 1.0,
            branches: Branches::Both,
        }
    }
}

/// Short-term alpha keyed by (asset, venue, regime class). Missing keys are 0.
pub type ShortAlpha = BTreeMap<(usize, usize, RegimeClass), f64>;

pub struct RouterInput<'a> {
    pub p_eff: &'a DVector<f64>,
    pub p_short: &'a ShortAlpha,
    pub states: &'a [Vec<VenueState>],
    pub book: &'a VenueBook,
    pub caps: &'a [Caps],
    pub options: RouterOptions,
}

/// Inputs for one asset with the side already fixed per venue.
struct AssetProblem<'a> {
    venues: &'a [VenueModel],
    states: &'a [VenueState],
    classes: Vec<RegimeClass>,
    sides: Vec<Side>,
    /// Alpha in the direction of `sides`; negative when trading against it.
    gain: Vec<f64>,
    caps: Caps,
    options: RouterOptions,
}

#[derive(Debug, Clone)]
struct Branch {
    actions: Vec<Action>,
    objective: f64,
}

impl AssetProblem<'_> {
    fn market(&self) -> Result<Branch> {
        let mut actions = Vec::with_capacity(self.venues.len());
        let mut total = 0.0;
        for (n, venue) in self.venues.iter().enumerate() {
            let a = self.gain[n];
            let spread = self.states[n].spread_ticks as f64 * venue.tick();
            let eta = venue.cost.market_impact;
            let slope = |v: f64| a - 0.5 * spread - 2.0 * eta * v;
            let v = roots::argmax_by_slope(slope, 0.0, self.caps.market, self.options.volume_tol)?;
            let gain = a * v - venue.market_cost(spread, v)?;
            if v > 0.0 && gain > 0.0 {
                actions.push(Action::Market {
                    side: self.sides[n],
                    volume: v,
                });
                total += gain;
            } else {
                actions.push(Action::Wait);
            }
        }
        Ok(Branch {
            actions,
            objective: total,
        })
    }

    /// Limit objective for one level assignment and volume vector.
    fn limit_objective(
        &self,
        levels: &[Level],
        gains: &[f64],
        rates: &[f64],
        vols: &[f64],
    ) -> Result<f64> {
        let total: f64 = vols.iter().sum();
        let mut j = 0.0;
        for (n, venue) in self.venues.iter().enumerate() {
            if vols[n] == 0.0 {
                continue;
            }
            let damp = venue.intensity_damping().eval(total);
            let mean = venue
                .partial_fill_dist(self.classes[n], levels[n], total)?
                .mean();
            j += rates[n] * damp * vols[n] * mean * gains[n];
        }
        Ok(self.options.fill_horizon * j)
    }

    fn limit_slope(
        &self,
        levels: &[Level],
        gains: &[f64],
        rates: &[f64],
        vols: &[f64],
        n: usize,
    ) -> Result<f64> {
        let total: f64 = vols.iter().sum();
        let mut d = 0.0;
        for (m, venue) in self.venues.iter().enumerate() {
            let damping = venue.intensity_damping();
            let f = damping.eval(total);
            let df = damping.derivative(total);
            let e = venue
                .partial_fill_dist(self.classes[m], levels[m], total)?
                .mean();
            let h = 1e-6 * (1.0 + total);
            let e_up = venue
                .partial_fill_dist(self.classes[m], levels[m], total + h)?
                .mean();
            let e_dn = venue
                .partial_fill_dist(self.classes[m], levels[m], (total - h).max(0.0))?
                .mean();
            let de = (e_up - e_dn) / (total + h - (total - h).max(0.0));
            let k = rates[m] * gains[m];
            if m == n {
                d += k * f * e;
            }
            d += k * vols[m] * (df * e + f * de);
        }
        Ok(self.options.fill_horizon * d)
    }

    fn limit_for_levels(&self, levels: &[Level]) -> Result<Branch> {
        let n_venues = self.venues.len();
        let mut gains = Vec::with_capacity(n_venues);
        let mut rates = Vec::with_capacity(n_venues);
        for (n, venue) in self.venues.iter().enumerate() {
            gains.push(
                self.gain[n] - venue.limit_cost_per_share(self.states[n].spread_ticks, levels[n]),
            );
            rates.push(venue.base_rate(self.classes[n], levels[n])?);
        }
        let active: Vec<usize> = (0..n_venues).filter(|&n| gains[n] > 0.0).collect();
        let mut best_vols = vec![0.0; n_venues];
        let mut best = 0.0;
        if !active.is_empty() {
            let cap = self.caps.limit;
            let starts = [0.0, 0.5 * cap, cap];
            for &s in &starts {
                let mut vols = vec![0.0; n_venues];
                for &n in &active {
                    vols[n] = s;
                }
                let mut last = self.limit_objective(levels, &gains, &rates, &vols)?;
                for _ in 0..self.options.max_sweeps {
                    for &n in &active {
                        let slope = |x: f64| {
                            let mut v = vols.clone();
                            v[n] = x;
                            self.limit_slope(levels, &gains, &rates, &v, n)
                                .unwrap_or(f64::NAN)
                        };
                        let x = roots::argmax_by_slope(slope, 0.0, cap, self.options.volume_tol)?;
                        let mut trial = vols.clone();
                        trial[n] = x;
                        let cur = self.limit_objective(levels, &gains, &rates, &vols)?;
                        if self.limit_objective(levels, &gains, &rates, &trial)? >= cur {
                            vols = trial;
                        }
                    }
                    let now = self.limit_objective(levels, &gains, &rates, &vols)?;
                    if !now.is_finite() {
                        return Err(Error::Unbounded("limit objective is not finite".into()));
                    }
                    let stalled = (now - last).abs() <= self.options.stall_tol * (1.0 + now.abs());
                    last = now;
                    if stalled {
                        break;
                    }
                }
                if last > best {
                    best = last;
                    best_vols = vols;
                }
            }
        }
        let actions = (0..n_venues)
            .map(|n| {
                if best_vols[n] > 0.0 {
                    Action::Limit {
                        side: self.sides[n],
                        level: levels[n],
                        volume: best_vols[n],
                    }
                } else {
                    Action::Wait
                }
            })
            .collect();
        Ok(Branch {
            actions,
            objective: best,
        })
    }

    fn limit(&self) -> Result<Branch> {
        let menus: Vec<&[Level]> = self
            .states
            .iter()
            .map(|s| allowed_levels(s.spread_ticks))
            .collect::<Result<_>>()?;
        let mut best = Branch {
            actions: vec![Action::Wait; self.venues.len()],
            objective: 0.0,
        };
        let mut idx = vec![0usize; menus.len()];
        loop {
            let levels: Vec<Level> = idx.iter().zip(&menus).map(|(&k, m)| m[k]).collect();
            let b = self.limit_for_levels(&levels)?;
            if b.objective > best.objective {
                best = b;
            }
            // odometer over level combinations
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    return Ok(best);
                }
                idx[pos] += 1;
                if idx[pos] < menus[pos].len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }
}

/// Limit-or-market choice per asset maximizing the static objective.
pub fn route(input: &RouterInput<'_>) -> Result<ActionSet> {
    let d = input.p_eff.len();
    ensure!(
        input.book.assets() == d,
        Validation,
        "alpha has {d} assets, book {}",
        input.book.assets()
    );
    ensure!(
        input.states.len() == d && input.caps.len() == d,
        Validation,
        "state and cap vectors must have {d} entries"
    );
    let mut actions = Vec::with_capacity(d);
    let mut objective = Vec::with_capacity(d);
    for i in 0..d {
        let (acts, obj) = route_asset(input, i, None)?;
        actions.push(acts);
        objective.push(obj);
    }
    Ok(ActionSet { actions, objective })
}

/// Routes one asset. With `side` given every venue trades that side, and an
/// alpha pointing the other way counts as a per-share loss.
pub(crate) fn route_asset(
    input: &RouterInput<'_>,
    i: usize,
    side: Option<Side>,
) -> Result<(Vec<Action>, f64)> {
    input.caps[i].validate()?;
    let venues = input.book.for_asset(i);
    let states = &input.states[i];
    ensure!(
        states.len() == venues.len(),
        Validation,
        "asset {i}: {} venue states for {} venues",
        states.len(),
        venues.len()
    );
    let classes: Vec<RegimeClass> = venues
        .iter()
        .zip(states)
        .map(|(v, s)| v.regime.classify(s.spread_ticks, s.imbalance))
        .collect::<Result<_>>()?;
    let (sides, gain): (Vec<Side>, Vec<f64>) = classes
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let a = input.p_eff[i] + input.p_short.get(&(i, n, *c)).copied().unwrap_or(0.0);
            match side {
                Some(s) => (s, s.sign() * a),
                None => (Side::from_sign(a), a.abs()),
            }
        })
        .unzip();
    let problem = AssetProblem {
        venues,
        states,
        classes,
        sides,
        gain,
        caps: input.caps[i],
        options: input.options,
    };
    let none = || Branch {
        actions: vec![Action::Wait; venues.len()],
        objective: 0.0,
    };
    let limit = match input.options.branches {
        Branches::MarketOnly => none(),
        _ => problem.limit()?,
    };
    let market = match input.options.branches {
        Branches::LimitOnly => none(),
        _ => problem.market()?,
    };
    let best = if limit.objective <= 0.0 && market.objective <= 0.0 {
        Branch {
            actions: vec![Action::Wait; venues.len()],
            objective: 0.0,
        }
    } else if market.objective > limit.objective {
        market
    } else {
        limit
    };
    Ok((best.actions, best.objective))
}

/// `∇V(t, q)` of the schedule restarted at `(t, q)`.
pub fn effective_alpha(schedule: &Schedule, t: f64, q: &DVector<f64>) -> Result<DVector<f64>> {
    schedule.value_gradient(t, q)
}

/// Recomputes the effective alpha on fills or after `interval` has elapsed.
#[derive(Debug, Clone)]
pub struct AlphaCache {
    interval: f64,
    scale: f64,
    last: Option<(f64, DVector<f64>)>,
    recomputes: usize,
}

impl AlphaCache {
    pub fn new(interval: f64, scale: f64) -> Self {
        Self {
            interval,
            scale,
            last: None,
            recomputes: 0,
        }
    }

    pub fn get(
        &mut self,
        schedule: &Schedule,
        t: f64,
        q: &DVector<f64>,
        filled: bool,
    ) -> Result<DVector<f64>> {
        let stale = match &self.last {
            None => true,
            Some((t0, _)) => filled || t - t0 > self.interval,
        };
        if stale {
            let p = effective_alpha(schedule, t, q)? * self.scale;
            self.last = Some((t, p));
            self.recomputes += 1;
        }
        Ok(self
            .last
            .as_ref()
            .map(|(_, p)| p.clone())
            .expect("set above"))
    }

    pub fn recomputes(&self) -> usize {
        self.recomputes
    }
}

/// How the calibration world turns an intended trade into a realized one.
#[derive(Debug, Clone, PartialEq)]
pub enum FillWorld {
    /// Every intended trade executes.
    MarketOrders,
    /// A posted order fills within the step with probability `fill_prob`,
    /// executing `mean_fraction` of its volume on average.
    Passive { fill_prob: f64, mean_fraction: f64 },
}

impl FillWorld {
    /// Passive world from a venue: one Poisson arrival window of length `dt`.
    pub fn from_venue(
        venue: &VenueModel,
        class: RegimeClass,
        level: Level,
        dt: f64,
    ) -> Result<Self> {
        let rate = venue.fill_intensity(class, level, 0.0)?;
        let mean = venue.partial_fill_dist(class, level, 0.0)?.mean();
        Ok(FillWorld::Passive {
            fill_prob: 1.0 - (-rate * dt).exp(),
            mean_fraction: mean,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationBudget {
    pub seeds: usize,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub scale: f64,
    pub gap: f64,
    pub degenerate: bool,
}

/// Picks `c` in `p_eff = c ∇V` so the simulated myopic gains along `q*`
/// match the gains `∫ |∇V|²/(2η)` of the unconstrained myopic agent.
pub fn calibrate_effective_alpha(
    schedule: &Schedule,
    world: &FillWorld,
    budget: CalibrationBudget,
) -> Result<Calibration> {
    if budget.seeds == 0 || budget.steps == 0 {
        return Ok(Calibration {
            scale: 1.0,
            gap: f64::NAN,
            degenerate: false,
        });
    }
    let problem = schedule.problem();
    let horizon = problem.horizon;
    let dt = horizon / budget.steps as f64;
    let mut per_step = Vec::with_capacity(budget.steps);
    for k in 0..budget.steps {
        let t = (k as f64 + 0.5) * dt;
        let q = schedule.position(t)?;
        let g = schedule.value_gradient(t, &q)?;
        let w: f64 = g
            .iter()
            .zip(problem.impact.iter())
            .map(|(p, l)| p * p / (2.0 * l))
            .sum();
        per_step.push(w * dt);
    }
    let reference: f64 = per_step.iter().sum();

    // realized fraction of each step's gain, per seed
    let mut realized = 0.0;
    for s in 0..budget.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed.wrapping_add(s as u64));
        for w in &per_step {
            let frac = match *world {
                FillWorld::MarketOrders => 1.0,
                FillWorld::Passive {
                    fill_prob,
                    mean_fraction,
                } => {
                    if rng.random::<f64>() < fill_prob {
                        mean_fraction
                    } else {
                        0.0
                    }
                }
            };
            realized += frac * w;
        }
    }
    realized /= budget.seeds as f64;
    if !(realized > 0.0) || !(reference > 0.0) {
        return Ok(Calibration {
            scale: 1.0,
            gap: (reference - realized).abs(),
            degenerate: true,
        });
    }
    let gap = |c: f64| (reference - c * c * realized).abs();
    let (scale, g) = roots::golden_min(gap, 0.01, 20.0, 1e-10);
    Ok(Calibration {
        scale,
        gap: g,
        degenerate: false,
    })
}
