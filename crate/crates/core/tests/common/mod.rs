//! Independent oracles and builders shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use momenta_core::mm::{Exponential, IntensityCurve, MMParams};
use momenta_core::router::{
    route, Action, ActionSet, Branches, Caps, RouterInput, RouterOptions, ShortAlpha, VenueState,
};
use momenta_core::schedule::ExecutionProblem;
use momenta_core::venue::{
    DampingSpec, Deficit, IntensityConfig, Level, PartialFillConfig, ProbEntry, RateEntry,
    RegimeClass, RegimeSpec, VenueBook, VenueConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Minimiser of the discretised action over piecewise-linear paths with
/// `n` steps: block-tridiagonal normal equations solved by block Thomas.
/// Returns the `n + 1` nodes.
pub fn qp_path(p: &ExecutionProblem, n: usize) -> Vec<DVector<f64>> {
    let d = p.dim();
    let h = p.horizon / n as f64;
    let lam = DMatrix::from_diagonal(&p.impact);
    let diag = 2.0 * &lam + p.risk_aversion * h * h * &p.covariance;
    let y0 = &p.initial - &p.target;
    // forward sweep over the interior nodes 1..n-1
    let mut inv: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut rhs: Vec<DVector<f64>> = Vec::with_capacity(n);
    for k in 1..n {
        let (m, r) = if k == 1 {
            (diag.clone(), &lam * &y0)
        } else {
            let pi = &inv[k - 2];
            (&diag - &lam * pi * &lam, &lam * pi * &rhs[k - 2])
        };
        inv.push(m.try_inverse().expect("oracle block is invertible"));
        rhs.push(r);
    }
    let mut y = vec![DVector::zeros(d); n + 1];
    y[0] = y0;
    for k in (1..n).rev() {
        let r = &rhs[k - 1] + &lam * &y[k + 1];
        y[k] = &inv[k - 1] * r;
    }
    y.into_iter().map(|x| x + &p.target).collect()
}

pub fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.2
}

pub fn random_problem(d: usize, rng: &mut ChaCha8Rng) -> ExecutionProblem {
    let initial = DVector::from_fn(d, |_, _| rng.random_range(-5.0..5.0));
    let target = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let impact = DVector::from_fn(d, |_, _| rng.random_range(0.5..2.0));
    ExecutionProblem::new(
        initial,
        target,
        rng.random_range(0.5..2.0),
        random_spd(d, rng),
        rng.random_range(0.1..2.0),
        impact,
    )
    .unwrap()
}

/// Two-asset pair with the long/short book and the daily return covariance
/// converted to price units; impact from 20 bp at 1% of daily dollar volume,
/// doubled for the ½vᵀΛv convention.
pub fn pair_problem() -> ExecutionProblem {
    let prices = [93.06, 105.985];
    let ret = [[15.5728e-4, 17.7558e-4], [17.7558e-4, 28.6519e-4]];
    let advp = [1.16e9, 6.13e9];
    let cov = DMatrix::from_fn(2, 2, |i, j| prices[i] * ret[i][j] * prices[j]);
    let impact = DVector::from_fn(2, |i, _| {
        2.0 * 20e-4 / (0.01 * advp[i]) * prices[i] * prices[i]
    });
    ExecutionProblem::new(
        DVector::from_vec(vec![1000.0, -485.0]),
        DVector::zeros(2),
        1.0,
        cov,
        1e-3,
        impact,
    )
    .unwrap()
}

pub fn scalar_problem() -> ExecutionProblem {
    ExecutionProblem::new(
        DVector::from_element(1, 1.0),
        DVector::zeros(1),
        1.0,
        DMatrix::from_element(1, 1, 1.0),
        1.0,
        DVector::from_element(1, 1.0),
    )
    .unwrap()
}

/// Classic fourth-order Runge-Kutta with fixed steps from `t0` to `t1`
/// (either direction). Returns the state at every step.
pub fn rk4<F>(f: F, t0: f64, y0: &[f64], t1: f64, steps: usize) -> Vec<(f64, Vec<f64>)>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.to_vec();
    let mut out = vec![(t0, y.clone())];
    let axpy =
        |y: &[f64], k: &[f64], s: f64| y.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &axpy(&y, &k1, 0.5 * h));
        let k3 = f(t + 0.5 * h, &axpy(&y, &k2, 0.5 * h));
        let k4 = f(t + h, &axpy(&y, &k3, h));
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push((t0 + (k + 1) as f64 * h, y.clone()));
    }
    out
}

/// Golden-section maximum of a unimodal `f` on `[a, b]`.
pub fn golden_argmax(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..200 {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn exp_damping(beta: f64) -> DampingSpec {
    let mut params = toml::Table::new();
    params.insert("beta".into(), toml::Value::Float(beta));
    DampingSpec {
        kind: "exp".into(),
        params,
    }
}

/// Raw parameters of one venue in a router instance. Spread states are
/// {1, 2, 3} ticks with one imbalance class.
#[derive(Debug, Clone)]
pub struct RawVenue {
    pub tick: f64,
    /// Base rate per (spread state index, level + 1).
    pub rates: [[f64; 3]; 3],
    pub beta_intensity: f64,
    pub omega: Vec<f64>,
    /// Outcome probabilities per (spread state index, level + 1).
    pub rho: [[Vec<f64>; 3]; 3],
    /// Per-outcome damping.
    pub beta_rho: Vec<f64>,
    pub fee: f64,
    pub market_impact: f64,
}

pub const SPREADS: [u32; 3] = [1, 2, 3];

impl RawVenue {
    pub fn random(rng: &mut ChaCha8Rng, outcomes: usize) -> Self {
        let mut omega: Vec<f64> = (0..outcomes).map(|_| rng.random_range(0.1..1.0)).collect();
        omega[outcomes - 1] = 1.0;
        let probs = |rng: &mut ChaCha8Rng| {
            (0..outcomes)
                .map(|_| rng.random_range(0.1..1.0))
                .collect::<Vec<_>>()
        };
        let rho: [[Vec<f64>; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| probs(rng)));
        Self {
            tick: 0.01,
            rates: std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(50.0..500.0))),
            beta_intensity: rng.random_range(0.0..2e-3),
            omega,
            rho,
            beta_rho: (0..outcomes).map(|_| rng.random_range(0.0..3e-3)).collect(),
            fee: rng.random_range(0.0..5e-3),
            market_impact: rng.random_range(1e-6..1e-4),
        }
    }

    pub fn config(&self, name: &str, asset: usize) -> VenueConfig {
        let regime = RegimeSpec::simple(self.tick, SPREADS.to_vec());
        let mut rates = Vec::new();
        let mut prob = Vec::new();
        for (k, s) in SPREADS.iter().enumerate() {
            let levels: &[i8] = if *s == 1 { &[0, 1] } else { &[-1, 0, 1] };
            for &l in levels {
                let idx = (l + 1) as usize;
                rates.push(RateEntry {
                    spread: format!("s{s}"),
                    imbalance: "all".into(),
                    level: Level(l),
                    rate: self.rates[k][idx],
                });
                prob.push(ProbEntry {
                    spread: format!("s{s}"),
                    imbalance: "all".into(),
                    level: Level(l),
                    p: self.rho[k][idx].clone(),
                });
            }
        }
        let mut cfg = VenueConfig {
            name: name.into(),
            asset,
            regime,
            intensity: IntensityConfig {
                damping: exp_damping(self.beta_intensity),
                rate: rates,
            },
            partial_fill: PartialFillConfig {
                omega: self.omega.clone(),
                deficit: Deficit::Renormalize,
                damping: self.beta_rho.iter().map(|&b| exp_damping(b)).collect(),
                prob,
            },
            cost: Default::default(),
            dynamics: None,
        };
        cfg.cost.fee = self.fee;
        cfg.cost.market_impact = self.market_impact;
        cfg
    }

    /// `E[ε]` at total posted volume `total`.
    pub fn mean_fill(&self, spread_idx: usize, level: i8, total: f64) -> f64 {
        let rho = &self.rho[spread_idx][(level + 1) as usize];
        let w: Vec<f64> = rho
            .iter()
            .zip(&self.beta_rho)
            .map(|(p, b)| p * (-b * total).exp())
            .collect();
        let s: f64 = w.iter().sum();
        w.iter().zip(&self.omega).map(|(w, o)| w * o).sum::<f64>() / s
    }
}

/// Limit objective of one asset: levels and volumes per venue.
pub fn limit_objective(
    venues: &[RawVenue],
    spread_idx: &[usize],
    gain: &[f64],
    levels: &[i8],
    vols: &[f64],
    horizon: f64,
) -> f64 {
    let total: f64 = vols.iter().sum();
    let mut j = 0.0;
    for (n, v) in venues.iter().enumerate() {
        if vols[n] == 0.0 {
            continue;
        }
        let rate =
            v.rates[spread_idx[n]][(levels[n] + 1) as usize] * (-v.beta_intensity * total).exp();
        j += rate * vols[n] * v.mean_fill(spread_idx[n], levels[n], total) * (gain[n] - v.fee);
    }
    horizon * j
}

/// `a v − (ψ/2) v − η v²` for one venue.
pub fn market_objective(v: &RawVenue, spread_idx: usize, gain: f64, vol: f64) -> f64 {
    let psi = SPREADS[spread_idx] as f64 * v.tick;
    gain * vol - 0.5 * psi * vol - v.market_impact * vol * vol
}

pub fn levels_for(spread_idx: usize) -> &'static [i8] {
    if SPREADS[spread_idx] == 1 {
        &[0, 1]
    } else {
        &[-1, 0, 1]
    }
}

/// Best objective of one asset over level combinations and a `points`-point
/// volume grid per venue, the market branch on the same grid, and waiting.
pub fn grid_oracle(
    venues: &[RawVenue],
    spread_idx: &[usize],
    gain: &[f64],
    limit_cap: f64,
    market_cap: f64,
    horizon: f64,
    points: usize,
) -> f64 {
    let grid = |cap: f64| (0..points).map(move |k| cap * k as f64 / (points - 1) as f64);
    let mut best_limit = 0.0f64;
    let n = venues.len();
    let menus: Vec<&[i8]> = spread_idx.iter().map(|&s| levels_for(s)).collect();
    let combos: Vec<Vec<i8>> = match n {
        1 => menus[0].iter().map(|&a| vec![a]).collect(),
        2 => menus[0]
            .iter()
            .flat_map(|&a| menus[1].iter().map(move |&b| vec![a, b]))
            .collect(),
        _ => panic!("oracle handles at most two venues"),
    };
    for levels in &combos {
        match n {
            1 => {
                for x in grid(limit_cap) {
                    best_limit = best_limit.max(limit_objective(
                        venues,
                        spread_idx,
                        gain,
                        levels,
                        &[x],
                        horizon,
                    ));
                }
            }
            _ => {
                for x in grid(limit_cap) {
                    for y in grid(limit_cap) {
                        best_limit = best_limit.max(limit_objective(
                            venues,
                            spread_idx,
                            gain,
                            levels,
                            &[x, y],
                            horizon,
                        ));
                    }
                }
            }
        }
    }
    let mut best_market = 0.0;
    for (k, v) in venues.iter().enumerate() {
        best_market += grid(market_cap)
            .map(|x| market_objective(v, spread_idx[k], gain[k], x))
            .fold(0.0, f64::max);
    }
    best_limit.max(best_market).max(0.0)
}

/// Policy driven by a closure, for scripted order flow.
pub struct Scripted<F>(pub F);

impl<F> momenta_core::policy::Policy for Scripted<F>
where
    F: FnMut(&momenta_core::policy::MarketView<'_>) -> momenta_core::policy::OrderPlan + Send,
{
    fn name(&self) -> &str {
        "scripted"
    }

    fn decide(
        &mut self,
        view: &momenta_core::policy::MarketView<'_>,
    ) -> momenta_core::Result<momenta_core::policy::OrderPlan> {
        Ok((self.0)(view))
    }
}

/// Mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Random routing problem: one to two assets, one to two venues each.
pub struct Instance {
    pub venues: Vec<Vec<RawVenue>>,
    pub spread_idx: Vec<Vec<usize>>,
    pub p_eff: DVector<f64>,
    pub p_short: ShortAlpha,
    pub caps: Vec<Caps>,
    pub horizon: f64,
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let d = rng.random_range(1..=2);
        let mut venues = Vec::new();
        let mut spread_idx = Vec::new();
        let mut p_short = ShortAlpha::new();
        let p_eff = DVector::from_fn(d, |_, _| {
            let m: f64 = rng.random_range(0.005..0.08);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        });
        for i in 0..d {
            let n = rng.random_range(1..=2);
            let mut vs = Vec::new();
            let mut ss = Vec::new();
            for k in 0..n {
                let outcomes = rng.random_range(1..=3);
                vs.push(RawVenue::random(rng, outcomes));
                let s = rng.random_range(0..3);
                ss.push(s);
                if rng.random_bool(0.5) {
                    let class = RegimeClass {
                        spread: s,
                        imbalance: 0,
                    };
                    p_short.insert((i, k, class), p_eff[i] * rng.random_range(-0.4..0.4));
                }
            }
            venues.push(vs);
            spread_idx.push(ss);
        }
        let caps = (0..d)
            .map(|_| Caps {
                market: rng.random_range(50.0..1000.0),
                limit: rng.random_range(50.0..1000.0),
            })
            .collect();
        Self {
            venues,
            spread_idx,
            p_eff,
            p_short,
            caps,
            horizon: 10f64.powf(rng.random_range(-5.0..-1.3)),
        }
    }

    pub fn book(&self) -> VenueBook {
        let cfgs: Vec<_> = self
            .venues
            .iter()
            .enumerate()
            .flat_map(|(i, vs)| {
                vs.iter()
                    .enumerate()
                    .map(move |(n, v)| v.config(&format!("v{i}{n}"), i))
            })
            .collect();
        VenueBook::from_configs(&cfgs, self.venues.len()).unwrap().0
    }

    pub fn states(&self) -> Vec<Vec<VenueState>> {
        self.spread_idx
            .iter()
            .map(|ss| {
                ss.iter()
                    .map(|&s| VenueState {
                        spread_ticks: SPREADS[s],
                        imbalance: 0.0,
                    })
                    .collect()
            })
            .collect()
    }

    pub fn gains(&self, i: usize) -> Vec<f64> {
        (0..self.venues[i].len())
            .map(|n| {
                let class = RegimeClass {
                    spread: self.spread_idx[i][n],
                    imbalance: 0,
                };
                (self.p_eff[i] + self.p_short.get(&(i, n, class)).copied().unwrap_or(0.0)).abs()
            })
            .collect()
    }

    pub fn route(&self, book: &VenueBook, branches: Branches) -> ActionSet {
        let states = self.states();
        route(&RouterInput {
            p_eff: &self.p_eff,
            p_short: &self.p_short,
            states: &states,
            book,
            caps: &self.caps,
            options: RouterOptions {
                fill_horizon: self.horizon,
                branches,
                ..RouterOptions::default()
            },
        })
        .unwrap()
    }

    /// Objective of the router's chosen actions, evaluated from raw parameters.
    pub fn evaluate(&self, i: usize, actions: &[Action]) -> f64 {
        let gain = self.gains(i);
        let vs = &self.venues[i];
        let ss = &self.spread_idx[i];
        if actions.iter().any(|a| matches!(a, Action::Market { .. })) {
            actions
                .iter()
                .enumerate()
                .map(|(n, a)| market_objective(&vs[n], ss[n], gain[n], a.volume()))
                .sum()
        } else {
            let mut levels = vec![0i8; vs.len()];
            let mut vols = vec![0.0; vs.len()];
            for (n, a) in actions.iter().enumerate() {
                if let Action::Limit { level, volume, .. } = a {
                    levels[n] = level.0;
                    vols[n] = *volume;
                }
            }
            limit_objective(vs, ss, &gain, &levels, &vols, self.horizon)
        }
    }
}

pub fn exp_curves(list: &[(f64, f64)]) -> Vec<Box<dyn IntensityCurve>> {
    list.iter()
        .map(|&(a, k)| Box::new(Exponential { a, k }) as Box<dyn IntensityCurve>)
        .collect()
}

/// Two-asset quoting problem with correlated prices.
pub fn mm_pair(horizon: f64, bid: &[(f64, f64)], ask: &[(f64, f64)]) -> MMParams {
    MMParams {
        gamma: 0.05,
        horizon,
        covariance: DMatrix::from_row_slice(2, 2, &[0.09, 0.048, 0.048, 0.16]),
        sizes: DVector::from_vec(vec![1.0, 2.0]),
        bid: exp_curves(bid),
        ask: exp_curves(ask),
    }
}

pub const SYM: [(f64, f64); 2] = [(2.0, 1.5), (1.0, 0.8)];
pub const ASK: [(f64, f64); 2] = [(1.2, 1.1), (1.6, 0.6)];

/// `(α₀, α₁, α₂)` of an exponential curve, written out independently.
pub fn exp_consts(a: f64, k: f64) -> [f64; 3] {
    let e = (-1.0f64).exp();
    [a / k * e, -a * e, a * k * e]
}
