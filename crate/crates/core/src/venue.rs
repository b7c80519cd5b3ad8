//! Per-venue order-book regimes, fill intensities, partial-fill
//! distributions and order costs.

use std::collections::BTreeMap;
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::registry::{param_f64, Params, Registry};

/// Limit level relative to the near-side best quote: −1 improves by a tick,
/// 0 joins, 1 sits one tick behind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Level(pub i8);

impl Level {
    pub const IMPROVE: Level = Level(-1);
    pub const JOIN: Level = Level(0);
    pub const BEHIND: Level = Level(1);
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const TIGHT_LEVELS: [Level; 2] = [Level::JOIN, Level::BEHIND];
const WIDE_LEVELS: [Level; 3] = [Level::IMPROVE, Level::JOIN, Level::BEHIND];

/// Levels available at a spread measured in ticks.
pub fn allowed_levels(spread_ticks: u32) -> Result<&'static [Level]> {
    match spread_ticks {
        0 => Err(Error::Validation("spread below one tick".into())),
        1 => Ok(&TIGHT_LEVELS),
        _ => Ok(&WIDE_LEVELS),
    }
}

/// Levels available at a spread in price units.
pub fn allowed_limits(spread: f64, tick: f64) -> Result<&'static [Level]> {
    ensure!(tick > 0.0, Validation, "tick must be positive, got {tick}");
    let ticks = spread / tick;
    let rounded = ticks.round();
    ensure!(
        (ticks - rounded).abs() <= 1e-9 * rounded.max(1.0) && rounded >= 0.0,
        Validation,
        "spread {spread} is not a multiple of tick {tick}"
    );
    allowed_levels(rounded as u32)
}

/// Volume damping `f: [0, ∞) → [0, 1]`, `f(0) = 1`, nonincreasing.
pub trait Damping: Send + Sync + fmt::Debug {
    fn eval(&self, volume: f64) -> f64;
    fn derivative(&self, volume: f64) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct NoDamping;

impl Damping for NoDamping {
    fn eval(&self, _: f64) -> f64 {
        1.0
    }
    fn derivative(&self, _: f64) -> f64 {
        0.0
    }
}

/// `exp(−β ℓ)`.
#[derive(Debug, Clone, Copy)]
pub struct ExpDamping {
    pub beta: f64,
}

impl Damping for ExpDamping {
    fn eval(&self, volume: f64) -> f64 {
        (-self.beta * volume).exp()
    }
    fn derivative(&self, volume: f64) -> f64 {
        -self.beta * (-self.beta * volume).exp()
    }
}

/// `1 / (1 + β ℓ)`.
#[derive(Debug, Clone, Copy)]
pub struct RationalDamping {
    pub beta: f64,
}

impl Damping for RationalDamping {
    fn eval(&self, volume: f64) -> f64 {
        1.0 / (1.0 + self.beta * volume)
    }
    fn derivative(&self, volume: f64) -> f64 {
        let d = 1.0 + self.beta * volume;
        -self.beta / (d * d)
    }
}

pub fn damping_registry() -> Registry<dyn Damping> {
    fn beta(p: &Params) -> Result<f64> {
        let b = param_f64(p, "beta", None)?;
        ensure!(
            b >= 0.0 && b.is_finite(),
            Config,
            "damping beta must be >= 0, got {b}"
        );
        Ok(b)
    }
    Registry::new("damping function")
        .with("none", |_: &Params| -> Result<Box<dyn Damping>> {
            Ok(Box::new(NoDamping))
        })
        .with("exp", |p: &Params| -> Result<Box<dyn Damping>> {
            Ok(Box::new(ExpDamping { beta: beta(p)? }))
        })
        .with("rational", |p: &Params| -> Result<Box<dyn Damping>> {
            Ok(Box::new(RationalDamping { beta: beta(p)? }))
        })
}

/// `kind` plus the constructor's parameters, as written in config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingSpec {
    pub kind: String,
    #[serde(flatten)]
    pub params: Params,
}

impl Default for DampingSpec {
    fn default() -> Self {
        Self {
            kind: "none".into(),
            params: Params::new(),
        }
    }
}

impl DampingSpec {
    pub fn build(&self) -> Result<Box<dyn Damping>> {
        damping_registry().build(&self.kind, &self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadClass {
    pub name: String,
    pub ticks: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceClass {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Regime class of one venue: indices into the spread and imbalance classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegimeClass {
    pub spread: usize,
    pub imbalance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub tick: f64,
    /// Spread states in ticks.
    pub spread_states: Vec<u32>,
    pub imbalance_states: Vec<f64>,
    pub spread_classes: Vec<SpreadClass>,
    pub imbalance_classes: Vec<ImbalanceClass>,
}

impl RegimeSpec {
    /// One spread class per state and a single imbalance class.
    pub fn simple(tick: f64, spread_states: Vec<u32>) -> Self {
        Self {
            tick,
            spread_classes: spread_states
                .iter()
                .map(|&s| SpreadClass {
                    name: format!("s{s}"),
                    ticks: vec![s],
                })
                .collect(),
            spread_states,
            imbalance_states: vec![0.0],
            imbalance_classes: vec![ImbalanceClass {
                name: "all".into(),
                min: -1.0,
                max: 1.0,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.tick > 0.0 && self.tick.is_finite(),
            Config,
            "tick must be positive"
        );
        ensure!(!self.spread_states.is_empty(), Config, "no spread states");
        ensure!(
            !self.imbalance_states.is_empty(),
            Config,
            "no imbalance states"
        );
        for &s in &self.spread_states {
            ensure!(s >= 1, Config, "spread state {s} is below one tick");
            let owners = self
                .spread_classes
                .iter()
                .filter(|c| c.ticks.contains(&s))
                .count();
            ensure!(
                owners == 1,
                Config,
                "spread state {s} belongs to {owners} classes, expected 1"
            );
        }
        for c in &self.spread_classes {
            for t in &c.ticks {
                ensure!(
                    self.spread_states.contains(t),
                    Config,
                    "class '{}' lists unknown spread {t}",
                    c.name
                );
            }
        }
        for &x in &self.imbalance_states {
            ensure!(
                (-1.0..=1.0).contains(&x),
                Config,
                "imbalance state {x} outside [-1, 1]"
            );
            let owners = self
                .imbalance_classes
                .iter()
                .filter(|c| c.min <= x && x <= c.max)
                .count();
            ensure!(
                owners == 1,
                Config,
                "imbalance state {x} belongs to {owners} classes, expected 1"
            );
        }
        Ok(())
    }

    pub fn classify(&self, spread_ticks: u32, imbalance: f64) -> Result<RegimeClass> {
        let spread = self
            .spread_classes
            .iter()
            .position(|c| c.ticks.contains(&spread_ticks))
            .ok_or_else(|| {
                Error::Validation(format!("spread {spread_ticks} ticks is not a known state"))
            })?;
        let imbalance = self
            .imbalance_classes
            .iter()
            .position(|c| c.min <= imbalance && imbalance <= c.max)
            .ok_or_else(|| {
                Error::Validation(format!("imbalance {imbalance} is not in any class"))
            })?;
        Ok(RegimeClass { spread, imbalance })
    }

    fn key(&self, class: RegimeClass, level: Level) -> TableKey {
        TableKey {
            spread: self.spread_classes[class.spread].name.clone(),
            imbalance: self.imbalance_classes[class.imbalance].name.clone(),
            level,
        }
    }

    /// Every (class, level) pair the states can produce.
    pub fn reachable(&self) -> Result<Vec<(RegimeClass, Level)>> {
        let mut out = Vec::new();
        for &s in &self.spread_states {
            for &x in &self.imbalance_states {
                let class = self.classify(s, x)?;
                for &level in allowed_levels(s)? {
                    if !out.contains(&(class, level)) {
                        out.push((class, level));
                    }
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct TableKey {
    spread: String,
    imbalance: String,
    level: Level,
}

impl fmt::Display for TableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, level {})",
            self.spread, self.imbalance, self.level
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub spread: String,
    pub imbalance: String,
    pub level: Level,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityConfig {
    #[serde(default)]
    pub damping: DampingSpec,
    pub rate: Vec<RateEntry>,
}

#[derive(Debug)]
pub struct IntensityTable {
    rates: BTreeMap<TableKey, f64>,
    damping: Box<dyn Damping>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Deficit {
    /// Rescale the damped probabilities to sum to one.
    #[default]
    Renormalize,
    /// Send the missing mass to a zero-fill outcome.
    ZeroFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbEntry {
    pub spread: String,
    pub imbalance: String,
    pub level: Level,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialFillConfig {
    pub omega: Vec<f64>,
    #[serde(default)]
    pub deficit: Deficit,
    /// One damping for all outcomes, or one per outcome.
    #[serde(default)]
    pub damping: Vec<DampingSpec>,
    pub prob: Vec<ProbEntry>,
}

impl PartialFillConfig {
    /// Deterministic full fills for every listed key.
    pub fn full_fill(keys: impl IntoIterator<Item = (String, String, Level)>) -> Self {
        Self {
            omega: vec![1.0],
            deficit: Deficit::Renormalize,
            damping: Vec::new(),
            prob: keys
                .into_iter()
                .map(|(spread, imbalance, level)| ProbEntry {
                    spread,
                    imbalance,
                    level,
                    p: vec![1.0],
                })
                .collect(),
        }
    }
}

#[derive(Debug)]
pub struct PartialFillTable {
    omega: Vec<f64>,
    probs: BTreeMap<TableKey, Vec<f64>>,
    dampings: Vec<Box<dyn Damping>>,
    deficit: Deficit,
}

/// Categorical law of the executed fraction ε.
#[derive(Debug, Clone, PartialEq)]
pub struct FillDistribution {
    pub outcomes: Vec<f64>,
    pub probs: Vec<f64>,
}

impl FillDistribution {
    pub fn mean(&self) -> f64 {
        self.outcomes
            .iter()
            .zip(&self.probs)
            .map(|(w, p)| w * p)
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.outcomes.len() == 1 {
            return self.outcomes[0];
        }
        let dist = WeightedIndex::new(&self.probs).expect("normalized weights");
        self.outcomes[dist.sample(rng)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    /// Quadratic market-order impact η_M.
    #[serde(default)]
    pub market_impact: f64,
    /// Per-share fee on passive executions.
    #[serde(default)]
    pub fee: f64,
    /// Credit passive executions with their distance from the midpoint.
    #[serde(default)]
    pub capture_spread: bool,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            market_impact: 0.0,
            fee: 0.0,
            capture_spread: false,
        }
    }
}

/// Dynamics of the venue state, read by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    /// Generator over `spread_states`, per day.
    #[serde(default)]
    pub spread_generator: Option<Vec<Vec<f64>>>,
    /// Generator over `imbalance_states`, per day.
    #[serde(default)]
    pub imbalance_generator: Option<Vec<Vec<f64>>>,
    pub initial_spread: u32,
    #[serde(default)]
    pub initial_imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VenueConfig {
    pub name: String,
    #[serde(default)]
    pub asset: usize,
    #[serde(flatten)]
    pub regime: RegimeSpec,
    pub intensity: IntensityConfig,
    pub partial_fill: PartialFillConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub dynamics: Option<DynamicsConfig>,
}

impl VenueConfig {
    /// Same base rate and full fills for every reachable (class, level).
    pub fn uniform(
        name: &str,
        asset: usize,
        regime: RegimeSpec,
        rate: f64,
        damping: DampingSpec,
    ) -> Result<Self> {
        let mut rates = Vec::new();
        let mut keys = Vec::new();
        for (class, level) in regime.reachable()? {
            let spread = regime.spread_classes[class.spread].name.clone();
            let imbalance = regime.imbalance_classes[class.imbalance].name.clone();
            rates.push(RateEntry {
                spread: spread.clone(),
                imbalance: imbalance.clone(),
                level,
                rate,
            });
            keys.push((spread, imbalance, level));
        }
        Ok(Self {
            name: name.into(),
            asset,
            regime,
            intensity: IntensityConfig {
                damping,
                rate: rates,
            },
            partial_fill: PartialFillConfig::full_fill(keys),
            cost: CostConfig::default(),
            dynamics: None,
        })
    }
}

/// One venue for one asset, with immutable tables.
#[derive(Debug)]
pub struct VenueModel {
    pub name: String,
    pub regime: RegimeSpec,
    pub intensity: IntensityTable,
    pub partial: PartialFillTable,
    pub cost: CostConfig,
    pub dynamics: Option<DynamicsConfig>,
}

/// Lines describing which (class, level) keys were checked.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoverageReport {
    pub lines: Vec<String>,
}

impl VenueModel {
    pub fn from_config(cfg: &VenueConfig) -> Result<(Self, CoverageReport)> {
        let regime = cfg.regime.clone();
        regime
            .validate()
            .map_err(|e| Error::Config(format!("venue '{}': {e}", cfg.name)))?;
        let ctx = |msg: String| Error::Config(format!("venue '{}': {msg}", cfg.name));

        let mut rates = BTreeMap::new();
        for r in &cfg.intensity.rate {
            if !(r.rate > 0.0 && r.rate.is_finite()) {
                return Err(ctx(format!("base rate must be > 0, got {}", r.rate)));
            }
            let key = TableKey {
                spread: r.spread.clone(),
                imbalance: r.imbalance.clone(),
                level: r.level,
            };
            if rates.insert(key.clone(), r.rate).is_some() {
                return Err(ctx(format!("duplicate rate for {key}")));
            }
        }

        let pf = &cfg.partial_fill;
        if pf.omega.is_empty() || pf.omega.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(ctx("fill proportions must lie in [0, 1]".into()));
        }
        let mut probs = BTreeMap::new();
        for e in &pf.prob {
            let key = TableKey {
                spread: e.spread.clone(),
                imbalance: e.imbalance.clone(),
                level: e.level,
            };
            if e.p.len() != pf.omega.len() {
                return Err(ctx(format!(
                    "{key}: {} probabilities for {} outcomes",
                    e.p.len(),
                    pf.omega.len()
                )));
            }
            if e.p.iter().any(|&p| !(p >= 0.0 && p.is_finite())) || e.p.iter().sum::<f64>() <= 0.0 {
                return Err(ctx(format!(
                    "{key}: probabilities must be >= 0 and not all zero"
                )));
            }
            if probs.insert(key.clone(), e.p.clone()).is_some() {
                return Err(ctx(format!("duplicate fill probabilities for {key}")));
            }
        }
        let dampings = match pf.damping.len() {
            0 => vec![Box::new(NoDamping) as Box<dyn Damping>],
            1 => vec![pf.damping[0].build()?],
            n if n == pf.omega.len() => pf
                .damping
                .iter()
                .map(DampingSpec::build)
                .collect::<Result<_>>()?,
            n => {
                return Err(ctx(format!(
                    "{n} fill dampings for {} outcomes",
                    pf.omega.len()
                )))
            }
        };

        if cfg.cost.market_impact < 0.0 || cfg.cost.fee < 0.0 {
            return Err(ctx("costs must be nonnegative".into()));
        }

        let mut report = CoverageReport::default();
        for (class, level) in regime.reachable()? {
            let key = regime.key(class, level);
            if !rates.contains_key(&key) {
                return Err(ctx(format!("no intensity for reachable key {key}")));
            }
            if !probs.contains_key(&key) {
                return Err(ctx(format!(
                    "no fill probabilities for reachable key {key}"
                )));
            }
            report.lines.push(format!("{}: {key} covered", cfg.name));
        }

        if let Some(dy) = &cfg.dynamics {
            if !regime.spread_states.contains(&dy.initial_spread) {
                return Err(ctx(format!(
                    "initial spread {} is not a state",
                    dy.initial_spread
                )));
            }
            check_generator(dy.spread_generator.as_deref(), regime.spread_states.len())
                .map_err(&ctx)?;
            check_generator(
                dy.imbalance_generator.as_deref(),
                regime.imbalance_states.len(),
            )
            .map_err(&ctx)?;
        }

        Ok((
            Self {
                name: cfg.name.clone(),
                regime,
                intensity: IntensityTable {
                    rates,
                    damping: cfg.intensity.damping.build()?,
                },
                partial: PartialFillTable {
                    omega: pf.omega.clone(),
                    probs,
                    dampings,
                    deficit: pf.deficit,
                },
                cost: cfg.cost.clone(),
                dynamics: cfg.dynamics.clone(),
            },
            report,
        ))
    }

    pub fn tick(&self) -> f64 {
        self.regime.tick
    }

    pub fn base_rate(&self, class: RegimeClass, level: Level) -> Result<f64> {
        let key = self.regime.key(class, level);
        self.intensity
            .rates
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Config(format!("venue '{}': no intensity for {key}", self.name)))
    }

    /// `f^λ(ℓ) · λ(class, level)`, with `ℓ` the asset's total posted volume.
    pub fn fill_intensity(&self, class: RegimeClass, level: Level, volume: f64) -> Result<f64> {
        ensure!(
            volume >= 0.0,
            Validation,
            "volume must be >= 0, got {volume}"
        );
        Ok(self.intensity.damping.eval(volume) * self.base_rate(class, level)?)
    }

    pub fn intensity_damping(&self) -> &dyn Damping {
        self.intensity.damping.as_ref()
    }

    pub fn partial_fill_dist(
        &self,
        class: RegimeClass,
        level: Level,
        volume: f64,
    ) -> Result<FillDistribution> {
        ensure!(
            volume >= 0.0,
            Validation,
            "volume must be >= 0, got {volume}"
        );
        let key = self.regime.key(class, level);
        let base = self.partial.probs.get(&key).ok_or_else(|| {
            Error::Config(format!(
                "venue '{}': no fill probabilities for {key}",
                self.name
            ))
        })?;
        let damp = |r: usize| {
            let d = if self.partial.dampings.len() == 1 {
                &self.partial.dampings[0]
            } else {
                &self.partial.dampings[r]
            };
            d.eval(volume)
        };
        let weights: Vec<f64> = base.iter().enumerate().map(|(r, p)| p * damp(r)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config(format!(
                "venue '{}': damped fill probabilities vanish for {key}",
                self.name
            )));
        }
        let mut outcomes = self.partial.omega.clone();
        let probs = match self.partial.deficit {
            Deficit::Renormalize => weights.iter().map(|w| w / total).collect(),
            Deficit::ZeroFill => {
                let raw: f64 = base.iter().sum();
                let mut p: Vec<f64> = weights.iter().map(|w| w / raw).collect();
                outcomes.push(0.0);
                p.push((1.0 - total / raw).max(0.0));
                p
            }
        };
        Ok(FillDistribution { outcomes, probs })
    }

    /// `(ψ/2) v + η_M v²` with `ψ` the spread in price units.
    pub fn market_cost(&self, spread: f64, volume: f64) -> Result<f64> {
        market_cost(spread, self.cost.market_impact, volume)
    }

    /// Cost per executed share of a passive order at `level`: the fee, less
    /// the distance from the midpoint when spread capture is on.
    pub fn limit_cost_per_share(&self, spread_ticks: u32, level: Level) -> f64 {
        if self.cost.capture_spread {
            let tick = self.regime.tick;
            self.cost.fee - (0.5 * spread_ticks as f64 * tick + level.0 as f64 * tick)
        } else {
            self.cost.fee
        }
    }

    pub fn limit_cost(&self, volume: f64) -> Result<f64> {
        limit_cost(self.cost.fee, volume)
    }
}

fn check_generator(gen: Option<&[Vec<f64>]>, n: usize) -> std::result::Result<(), String> {
    let Some(g) = gen else { return Ok(()) };
    if g.len() != n || g.iter().any(|r| r.len() != n) {
        return Err(format!("generator must be {n}x{n}"));
    }
    for (i, row) in g.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if i != j && !(x >= 0.0) {
                return Err(format!("generator entry ({i}, {j}) is negative"));
            }
        }
        let sum: f64 = row.iter().sum();
        let scale = row.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        if sum.abs() > 1e-9 * scale {
            return Err(format!("generator row {i} sums to {sum}, expected 0"));
        }
    }
    Ok(())
}

pub fn market_cost(spread: f64, impact: f64, volume: f64) -> Result<f64> {
    ensure!(
        volume >= 0.0,
        Validation,
        "order volume must be >= 0, got {volume}"
    );
    Ok(0.5 * spread * volume + impact * volume * volume)
}

pub fn limit_cost(fee: f64, volume: f64) -> Result<f64> {
    ensure!(
        volume >= 0.0,
        Validation,
        "order volume must be >= 0, got {volume}"
    );
    Ok(fee * volume)
}

/// Venues indexed `[asset][venue]`.
#[derive(Debug, Default)]
pub struct VenueBook {
    pub venues: Vec<Vec<VenueModel>>,
}

impl VenueBook {
    pub fn from_configs(cfgs: &[VenueConfig], assets: usize) -> Result<(Self, CoverageReport)> {
        let mut venues: Vec<Vec<VenueModel>> = (0..assets).map(|_| Vec::new()).collect();
        let mut report = CoverageReport::default();
        for cfg in cfgs {
            ensure!(
                cfg.asset < assets,
                Config,
                "venue '{}' names asset {} of {assets}",
                cfg.name,
                cfg.asset
            );
            let (model, r) = VenueModel::from_config(cfg)?;
            venues[cfg.asset].push(model);
            report.lines.extend(r.lines);
        }
        for (i, v) in venues.iter().enumerate() {
            ensure!(!v.is_empty(), Config, "asset {i} has no venue");
        }
        Ok((Self { venues }, report))
    }

    pub fn assets(&self) -> usize {
        self.venues.len()
    }

    pub fn for_asset(&self, i: usize) -> &[VenueModel] {
        &self.venues[i]
    }
}
