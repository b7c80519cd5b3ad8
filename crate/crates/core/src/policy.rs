//! Decision policies behind one trait, built by name.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::mm::{mm_alpha, mm_route_with_alpha, MMCoefficients, MMRouteInput};
use crate::myopic::{choose_aggression, AggressiveOffset, BranchRule, Mode, MyopicContext};
use crate::registry::Registry;
use crate::router::{
    route_asset, Action, AlphaCache, Branches, Caps, RouterInput, RouterOptions, ShortAlpha, Side,
    VenueState,
};
use crate::schedule::Schedule;
use crate::venue::{Level, VenueBook};

/// What a policy sees at a decision epoch.
#[derive(Debug, Clone, Copy)]
pub struct MarketView<'a> {
    /// Days since the start.
    pub t: f64,
    /// Days until the next decision.
    pub dt: f64,
    pub mids: &'a [f64],
    pub venues: &'a [Vec<VenueState>],
    pub holdings: &'a [f64],
    /// Any fill since the previous decision.
    pub filled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Order {
    pub asset: usize,
    pub venue: usize,
    pub action: Action,
}

/// Orders for one epoch. Replaces every resting order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrderPlan {
    pub orders: Vec<Order>,
}

impl OrderPlan {
    pub fn push(&mut self, asset: usize, venue: usize, action: Action) {
        if !action.is_wait() {
            self.orders.push(Order {
                asset,
                venue,
                action,
            });
        }
    }
}

pub trait Policy: Send {
    fn name(&self) -> &str;
    fn decide(&mut self, view: &MarketView<'_>) -> Result<OrderPlan>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    /// Fill probability the aggression rule assumes for passive orders.
    pub fill_prob: f64,
    pub rule: BranchRule,
    pub offset: AggressiveOffset,
    /// Days between alpha refreshes absent fills.
    pub recompute_interval: f64,
    pub alpha_scale: f64,
    /// Per-venue caps for the market maker.
    pub mm_limit_cap: f64,
    pub mm_market_cap: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            fill_prob: 0.1,
            rule: BranchRule::CommonRate,
            offset: AggressiveOffset::Symmetric,
            recompute_interval: 0.0,
            alpha_scale: 1.0,
            mm_limit_cap: 100.0,
            mm_market_cap: 100.0,
        }
    }
}

/// Everything a policy constructor may draw on.
#[derive(Debug, Clone)]
pub struct PolicyContext {
    pub schedule: Option<Arc<Schedule>>,
    pub book: Arc<VenueBook>,
    pub mm: Option<Arc<MMCoefficients>>,
    pub params: PolicyParams,
}

impl PolicyContext {
    fn schedule(&self, who: &str) -> Result<Arc<Schedule>> {
        self.schedule
            .clone()
            .ok_or_else(|| crate::Error::Config(format!("policy '{who}' needs an execution block")))
    }
}

pub fn policy_registry() -> Registry<dyn Policy, PolicyContext> {
    Registry::new("policy")
        .with(
            "always-passive",
            |c: &PolicyContext| -> Result<Box<dyn Policy>> {
                Ok(Box::new(AlwaysPassive::new(
                    c.schedule("always-passive")?,
                    &c.book,
                )))
            },
        )
        .with(
            "momenta-guided",
            |c: &PolicyContext| -> Result<Box<dyn Policy>> {
                Ok(Box::new(MomentaGuided::new(
                    c.schedule("momenta-guided")?,
                    c.book.clone(),
                    &c.params,
                )?))
            },
        )
        .with(
            "market-maker",
            |c: &PolicyContext| -> Result<Box<dyn Policy>> {
                let mm = c.mm.clone().ok_or_else(|| {
                    crate::Error::Config("policy 'market-maker' needs an mm block".into())
                })?;
                Ok(Box::new(MarketMaker::new(mm, c.book.clone(), &c.params)?))
            },
        )
        .with("wait", |_: &PolicyContext| -> Result<Box<dyn Policy>> {
            Ok(Box::new(Idle))
        })
}

/// Never trades.
#[derive(Debug, Clone, Copy, Default)]
pub struct Idle;

impl Policy for Idle {
    fn name(&self) -> &str {
        "wait"
    }
    fn decide(&mut self, _: &MarketView<'_>) -> Result<OrderPlan> {
        Ok(OrderPlan::default())
    }
}

/// Signed quantity still to trade toward the target, and the part of it due
/// by the next epoch under the schedule.
fn schedule_gap(schedule: &Schedule, view: &MarketView<'_>, i: usize) -> Result<(f64, f64)> {
    let p = schedule.problem();
    let remaining = p.target[i] - view.holdings[i];
    let next = (view.t + view.dt).min(p.horizon);
    let planned = schedule.position(next)?[i];
    let due = planned - view.holdings[i];
    let due = if due * remaining > 0.0 {
        due.abs().min(remaining.abs())
    } else {
        0.0
    };
    Ok((remaining, due))
}

/// Joins the near side every epoch for the schedule's due quantity; never
/// crosses the spread.
#[derive(Debug)]
pub struct AlwaysPassive {
    schedule: Arc<Schedule>,
    venues: Vec<usize>,
}

impl AlwaysPassive {
    pub fn new(schedule: Arc<Schedule>, book: &VenueBook) -> Self {
        Self {
            schedule,
            venues: book.venues.iter().map(Vec::len).collect(),
        }
    }
}

impl Policy for AlwaysPassive {
    fn name(&self) -> &str {
        "always-passive"
    }

    fn decide(&mut self, view: &MarketView<'_>) -> Result<OrderPlan> {
        let mut plan = OrderPlan::default();
        if view.t >= self.schedule.horizon() {
            return Ok(plan);
        }
        for (i, &n) in self.venues.iter().enumerate() {
            let (remaining, due) = schedule_gap(&self.schedule, view, i)?;
            if due <= 0.0 {
                continue;
            }
            let side = Side::from_sign(remaining);
            for venue in 0..n {
                plan.push(
                    i,
                    venue,
                    Action::Limit {
                        side,
                        level: Level::JOIN,
                        volume: due / n as f64,
                    },
                );
            }
        }
        Ok(plan)
    }
}

/// Effective alpha from the schedule, passive/aggressive choice per asset,
/// then venue routing.
#[derive(Debug)]
pub struct MomentaGuided {
    schedule: Arc<Schedule>,
    book: Arc<VenueBook>,
    params: PolicyParams,
    cache: AlphaCache,
}

impl MomentaGuided {
    pub fn new(
        schedule: Arc<Schedule>,
        book: Arc<VenueBook>,
        params: &PolicyParams,
    ) -> Result<Self> {
        ensure!(
            params.fill_prob > 0.0 && params.fill_prob < 1.0,
            Config,
            "fill_prob must lie in (0, 1), got {}",
            params.fill_prob
        );
        ensure!(
            book.assets() == schedule.problem().dim(),
            Config,
            "venue book and execution block disagree on asset count"
        );
        Ok(Self {
            cache: AlphaCache::new(params.recompute_interval, params.alpha_scale),
            schedule,
            book,
            params: params.clone(),
        })
    }
}

impl Policy for MomentaGuided {
    fn name(&self) -> &str {
        "momenta-guided"
    }

    fn decide(&mut self, view: &MarketView<'_>) -> Result<OrderPlan> {
        let problem = self.schedule.problem();
        let d = problem.dim();
        let horizon = problem.horizon;
        let q = DVector::from_column_slice(view.holdings);
        let mut plan = OrderPlan::default();
        let remaining: Vec<f64> = (0..d).map(|i| problem.target[i] - q[i]).collect();
        if remaining.iter().all(|r| r.abs() < 1e-9) {
            return Ok(plan);
        }
        let t = view.t.min(horizon * (1.0 - 1e-6));
        let grad = self.cache.get(&self.schedule, t, &q, view.filled)?;
        let half_spread: Vec<f64> = (0..d)
            .map(|i| 0.5 * view.venues[i][0].spread_ticks as f64 * self.book.for_asset(i)[0].tick())
            .collect();
        let ctx = MyopicContext::new(
            problem.impact.iter().copied().collect(),
            half_spread,
            vec![self.params.fill_prob; d],
        )?
        .with_rule(self.params.rule)
        .with_offset(self.params.offset);
        let decisions = choose_aggression(&ctx, &grad)?;
        let p_eff = DVector::from_iterator(d, decisions.iter().map(|x| x.effective_alpha));
        let short = ShortAlpha::new();
        let late = view.t >= horizon;
        for i in 0..d {
            let dec = decisions[i];
            let mut volume = (dec.rate * view.dt).abs().min(remaining[i].abs());
            let mut branches = match dec.mode {
                Mode::Wait => continue,
                Mode::Passive => Branches::LimitOnly,
                Mode::Aggressive => Branches::MarketOnly,
            };
            if late {
                volume = remaining[i].abs();
                branches = Branches::MarketOnly;
            }
            if volume <= 0.0 || dec.effective_alpha * remaining[i] <= 0.0 {
                continue;
            }
            let caps: Vec<Caps> = (0..d)
                .map(|_| Caps {
                    market: volume,
                    limit: volume,
                })
                .collect();
            let input = RouterInput {
                p_eff: &p_eff,
                p_short: &short,
                states: view.venues,
                book: &self.book,
                caps: &caps,
                options: RouterOptions {
                    fill_horizon: view.dt,
                    branches,
                    ..RouterOptions::default()
                },
            };
            let (actions, _) = route_asset(&input, i, None)?;
            for (n, a) in actions.into_iter().enumerate() {
                plan.push(i, n, a);
            }
        }
        Ok(plan)
    }
}

/// Two-sided quoting with alpha `∇Ṽ`.
#[derive(Debug)]
pub struct MarketMaker {
    coeffs: Arc<MMCoefficients>,
    book: Arc<VenueBook>,
    caps: Vec<Caps>,
}

impl MarketMaker {
    pub fn new(
        coeffs: Arc<MMCoefficients>,
        book: Arc<VenueBook>,
        params: &PolicyParams,
    ) -> Result<Self> {
        ensure!(
            book.assets() == coeffs.dim(),
            Config,
            "venue book and mm block disagree on asset count"
        );
        let caps = vec![
            Caps {
                market: params.mm_market_cap,
                limit: params.mm_limit_cap,
            };
            coeffs.dim()
        ];
        for c in &caps {
            c.validate()?;
        }
        Ok(Self { coeffs, book, caps })
    }
}

impl Policy for MarketMaker {
    fn name(&self) -> &str {
        "market-maker"
    }

    fn decide(&mut self, view: &MarketView<'_>) -> Result<OrderPlan> {
        let t = view.t.min(self.coeffs.horizon());
        let q = DVector::from_column_slice(view.holdings);
        let alpha = mm_alpha(&self.coeffs, t, &q)?;
        let short = ShortAlpha::new();
        let input = MMRouteInput {
            p_short: &short,
            states: view.venues,
            book: &self.book,
            caps: &self.caps,
            options: RouterOptions {
                fill_horizon: view.dt,
                ..RouterOptions::default()
            },
        };
        let quotes = mm_route_with_alpha(&alpha, &input)?;
        let mut plan = OrderPlan::default();
        for i in 0..quotes.bid.len() {
            for (n, a) in quotes.bid[i].iter().enumerate() {
                plan.push(i, n, *a);
            }
            for (n, a) in quotes.ask[i].iter().enumerate() {
                plan.push(i, n, *a);
            }
        }
        Ok(plan)
    }
}
