//! TOML configuration for the command-line runs.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::impact::{calibrate_impact, Impact};
use crate::error::{ensure, Error, Result};
use crate::mm::MMConfig;
use crate::numerics::linalg::from_rows;
use crate::policy::PolicyParams;
use crate::schedule::ExecutionProblem;
use crate::sim::quotes::SyntheticConfig;
use crate::sim::{ReplayConfig, SimConfig};
use crate::venue::{CostConfig, DampingSpec, DynamicsConfig, RegimeSpec, VenueConfig};

fn default_kappa() -> f64 {
    1e-3
}

/// Liquidation or acquisition problem, in shares and days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionBlock {
    pub initial: Vec<f64>,
    #[serde(default)]
    pub target: Vec<f64>,
    pub horizon: f64,
    #[serde(default = "default_kappa")]
    pub risk_aversion: f64,
    /// Covariance of daily price changes.
    #[serde(default)]
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Covariance of daily returns; needs `prices`.
    #[serde(default)]
    pub return_covariance: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub prices: Option<Vec<f64>>,
    /// Engine impact per share, `½ vᵀΛv` with `v` in shares per day.
    #[serde(default)]
    pub impact: Option<Vec<f64>>,
    /// Predicted daily dollar volume; calibrates the impact when `impact` is absent.
    #[serde(default)]
    pub advp: Option<Vec<f64>>,
    #[serde(default)]
    pub betas: Vec<f64>,
}

impl ExecutionBlock {
    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    fn need_prices(&self, what: &str) -> Result<&[f64]> {
        let p = self
            .prices
            .as_deref()
            .ok_or_else(|| Error::Config(format!("execution.{what} needs execution.prices")))?;
        ensure!(
            p.len() == self.dim(),
            Config,
            "execution.prices needs {} entries",
            self.dim()
        );
        ensure!(
            p.iter().all(|x| *x > 0.0),
            Config,
            "execution.prices must be positive"
        );
        Ok(p)
    }

    pub fn price_covariance(&self) -> Result<DMatrix<f64>> {
        match (&self.covariance, &self.return_covariance) {
            (Some(c), None) => from_rows(c),
            (None, Some(r)) => {
                let p = self.need_prices("return_covariance")?;
                let r = from_rows(r)?;
                ensure!(
                    r.nrows() == p.len(),
                    Config,
                    "execution.return_covariance must be {0}x{0}",
                    p.len()
                );
                Ok(DMatrix::from_fn(p.len(), p.len(), |i, j| {
                    p[i] * r[(i, j)] * p[j]
                }))
            }
            (Some(_), Some(_)) => Err(Error::Config(
                "execution: give either covariance or return_covariance, not both".into(),
            )),
            (None, None) => Err(Error::Config(
                "execution: missing covariance (or return_covariance)".into(),
            )),
        }
    }

    pub fn calibration(&self) -> Result<Option<Impact>> {
        self.advp.as_deref().map(calibrate_impact).transpose()
    }

    pub fn impact_per_share(&self) -> Result<Vec<f64>> {
        match (&self.impact, self.calibration()?) {
            (Some(l), _) => Ok(l.clone()),
            (None, Some(imp)) => {
                let p = self.need_prices("advp")?;
                let dollars: Vec<f64> = self.delta().iter().zip(p).map(|(x, p)| x * p).collect();
                imp.participation_warnings(&dollars);
                imp.per_share(p)
            }
            (None, None) => Err(Error::Config("execution: missing impact (or advp)".into())),
        }
    }

    fn delta(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.target.get(i).copied().unwrap_or(0.0) - self.initial[i])
            .collect()
    }

    pub fn problem(&self) -> Result<ExecutionProblem> {
        let d = self.dim();
        ensure!(d >= 1, Config, "execution.initial is empty");
        ensure!(
            self.target.is_empty() || self.target.len() == d,
            Config,
            "execution.target needs {d} entries"
        );
        ensure!(
            self.betas.is_empty() || self.betas.len() == d,
            Config,
            "execution.betas needs {d} entries"
        );
        let target = if self.target.is_empty() {
            vec![0.0; d]
        } else {
            self.target.clone()
        };
        let impact = self.impact_per_share()?;
        ensure!(
            impact.len() == d,
            Config,
            "execution impact needs {d} entries"
        );
        ExecutionProblem::new(
            DVector::from_column_slice(&self.initial),
            DVector::from_vec(target),
            self.horizon,
            self.price_covariance()?,
            self.risk_aversion,
            DVector::from_vec(impact),
        )
        .map_err(|e| Error::Config(format!("execution: {e}")))
    }
}

fn default_tick() -> f64 {
    0.01
}

fn default_spreads() -> Vec<u32> {
    vec![1, 2, 3]
}

/// Venue with one base rate everywhere and full fills.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformVenue {
    pub name: String,
    #[serde(default)]
    pub asset: usize,
    #[serde(default = "default_tick")]
    pub tick: f64,
    #[serde(default = "default_spreads")]
    pub spread_states: Vec<u32>,
    pub rate: f64,
    #[serde(default)]
    pub damping: DampingSpec,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub dynamics: Option<DynamicsConfig>,
}

impl UniformVenue {
    pub fn to_config(&self) -> Result<VenueConfig> {
        let mut cfg = VenueConfig::uniform(
            &self.name,
            self.asset,
            RegimeSpec::simple(self.tick, self.spread_states.clone()),
            self.rate,
            self.damping.clone(),
        )?;
        cfg.cost = self.cost.clone();
        cfg.dynamics = self.dynamics.clone();
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyBlock {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub params: PolicyParams,
}

fn default_arms() -> Vec<String> {
    vec!["always-passive".into(), "momenta-guided".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    /// Baseline first.
    #[serde(default = "default_arms")]
    pub arms: Vec<String>,
}

impl Default for CompareBlock {
    fn default() -> Self {
        Self {
            arms: default_arms(),
        }
    }
}

/// `seeds = 100` (0..100) or `seeds = [3, 5]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn list(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }

    /// A bare number is a count; anything with commas is a list.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |x: &str| Error::Config(format!("bad seed '{x}' in --seeds"));
        if s.contains(',') {
            let v = s
                .split(',')
                .filter(|x| !x.trim().is_empty())
                .map(|x| x.trim().parse().map_err(|_| bad(x)))
                .collect::<Result<Vec<u64>>>()?;
            Ok(Seeds::List(v))
        } else {
            Ok(Seeds::Count(s.parse().map_err(|_| bad(s))?))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    #[serde(default)]
    pub execution: Option<ExecutionBlock>,
    #[serde(default)]
    pub venue: Vec<VenueConfig>,
    #[serde(default)]
    pub uniform_venue: Vec<UniformVenue>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub mm: Option<MMConfig>,
    #[serde(default)]
    pub policy: PolicyBlock,
    #[serde(default)]
    pub replay: Option<ReplayConfig>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub compare: Option<CompareBlock>,
    #[serde(default)]
    pub seeds: Option<Seeds>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn execution(&self) -> Result<&ExecutionBlock> {
        self.execution
            .as_ref()
            .ok_or_else(|| Error::Config("missing [execution] block".into()))
    }

    pub fn sim(&self) -> Result<&SimConfig> {
        self.sim
            .as_ref()
            .ok_or_else(|| Error::Config("missing [sim] block".into()))
    }

    pub fn mm(&self) -> Result<&MMConfig> {
        self.mm
            .as_ref()
            .ok_or_else(|| Error::Config("missing [mm] block".into()))
    }

    pub fn replay(&self) -> Result<&ReplayConfig> {
        self.replay
            .as_ref()
            .ok_or_else(|| Error::Config("missing [replay] block".into()))
    }

    /// Every venue, full tables first.
    pub fn venues(&self) -> Result<Vec<VenueConfig>> {
        let mut out = self.venue.clone();
        for u in &self.uniform_venue {
            out.push(u.to_config()?);
        }
        ensure!(
            !out.is_empty(),
            Config,
            "no venues: add [[venue]] or [[uniform_venue]] blocks"
        );
        Ok(out)
    }

    /// Seeds from the command line, else the file, else `[0]`.
    pub fn seeds(&self, cli: Option<&Seeds>) -> Result<Vec<u64>> {
        let s = cli
            .or(self.seeds.as_ref())
            .map(Seeds::list)
            .unwrap_or_else(|| vec![0]);
        ensure!(!s.is_empty(), Config, "seed list is empty");
        Ok(s)
    }
}
