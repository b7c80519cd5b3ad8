//! Myopic agent: instantaneous profit maximization, the passive/aggressive
//! rule for a single limit-or-market choice, and the error bound between the
//! myopic gains and the schedule value.

use std::fmt;

use nalgebra::DVector;

use crate::error::{ensure, Error, Result};
use crate::numerics::{quadrature, roots};
use crate::registry::{param_f64, Params, Registry};
use crate::schedule::ExecutionProblem;

/// Separable convex trading cost, applied coordinatewise.
pub trait ScalarCost: Send + Sync + fmt::Debug {
    fn value(&self, v: f64) -> f64;
    fn slope(&self, v: f64) -> f64;
    /// Maximizer of `p v − c(v)` when known in closed form.
    fn argmax(&self, _p: f64) -> Option<f64> {
        None
    }
}

/// `c(v) = ½ η v²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCost {
    pub eta: f64,
}

impl ScalarCost for QuadraticCost {
    fn value(&self, v: f64) -> f64 {
        0.5 * self.eta * v * v
    }
    fn slope(&self, v: f64) -> f64 {
        self.eta * v
    }
    fn argmax(&self, p: f64) -> Option<f64> {
        Some(p / self.eta)
    }
}

/// `c(v) = a |v|^k / k`, `k > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCost {
    pub coef: f64,
    pub exponent: f64,
}

impl ScalarCost for PowerCost {
    fn value(&self, v: f64) -> f64 {
        self.coef * v.abs().powf(self.exponent) / self.exponent
    }
    fn slope(&self, v: f64) -> f64 {
        self.coef * v.abs().powf(self.exponent - 1.0) * v.signum()
    }
}

/// `c(v) = s |v|`. Not coercive: the myopic problem is unbounded once `|p| > s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCost {
    pub rate: f64,
}

impl ScalarCost for LinearCost {
    fn value(&self, v: f64) -> f64 {
        self.rate * v.abs()
    }
    fn slope(&self, v: f64) -> f64 {
        if v == 0.0 {
            0.0
        } else {
            self.rate * v.signum()
        }
    }
}

pub fn cost_registry() -> Registry<dyn ScalarCost> {
    Registry::new("cost function")
        .with("quadratic", |p: &Params| -> Result<Box<dyn ScalarCost>> {
            let eta = param_f64(p, "eta", None)?;
            ensure!(eta > 0.0, Config, "quadratic cost needs eta > 0, got {eta}");
            Ok(Box::new(QuadraticCost { eta }))
        })
        .with("power", |p: &Params| -> Result<Box<dyn ScalarCost>> {
            let coef = param_f64(p, "coef", Some(1.0))?;
            let exponent = param_f64(p, "exponent", None)?;
            ensure!(
                coef > 0.0 && exponent > 1.0,
                Config,
                "power cost needs coef > 0 and exponent > 1"
            );
            Ok(Box::new(PowerCost { coef, exponent }))
        })
        .with("linear", |p: &Params| -> Result<Box<dyn ScalarCost>> {
            let rate = param_f64(p, "rate", None)?;
            ensure!(rate >= 0.0, Config, "linear cost needs rate >= 0");
            Ok(Box::new(LinearCost { rate }))
        })
}

fn scalar_rate(p: f64, cost: &dyn ScalarCost) -> Result<f64> {
    if let Some(v) = cost.argmax(p) {
        return Ok(v);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let dir = p.signum();
    let gain_slope = |v: f64| p.abs() - dir * cost.slope(dir * v);
    // one-sided slope at the origin so kinks such as s|v| count
    if gain_slope(f64::MIN_POSITIVE) <= 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while gain_slope(hi) > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e300 {
            return Err(Error::Unbounded(format!(
                "cost is not coercive: gain keeps rising for alpha {p}"
            )));
        }
    }
    let v = roots::bisect(gain_slope, 0.0, hi, hi * 1e-15)?;
    Ok(dir * v)
}

/// `argmax_v ⟨p, v⟩ − c(v)` for a separable convex cost.
pub fn myopic_rate(p: &DVector<f64>, cost: &dyn ScalarCost) -> Result<DVector<f64>> {
    let rates = p
        .iter()
        .map(|&x| scalar_rate(x, cost))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(rates))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRule {
    /// Both branch objectives evaluated at the common rate `|p|/η`; flips at
    /// `|p| = 2s/(1 − f)`.
    #[default]
    CommonRate,
    /// Each branch at its own optimal rate; flips at `|p| = s/(1 − √f)`.
    IndependentOptima,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggressiveOffset {
    /// `p* = p + s·sgn(p)`.
    #[default]
    Symmetric,
    /// `p* = p + s` regardless of sign.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MyopicContext {
    pub eta: Vec<f64>,
    pub spread: Vec<f64>,
    pub fill_prob: Vec<f64>,
    pub rule: BranchRule,
    pub offset: AggressiveOffset,
}

impl MyopicContext {
    pub fn new(eta: Vec<f64>, spread: Vec<f64>, fill_prob: Vec<f64>) -> Result<Self> {
        let ctx = Self {
            eta,
            spread,
            fill_prob,
            rule: BranchRule::default(),
            offset: AggressiveOffset::default(),
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn uniform(d: usize, eta: f64, spread: f64, fill_prob: f64) -> Result<Self> {
        Self::new(vec![eta; d], vec![spread; d], vec![fill_prob; d])
    }

    pub fn with_rule(mut self, rule: BranchRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_offset(mut self, offset: AggressiveOffset) -> Self {
        self.offset = offset;
        self
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.eta.len();
        ensure!(
            self.spread.len() == d && self.fill_prob.len() == d,
            Validation,
            "context vectors must share one length"
        );
        for i in 0..d {
            ensure!(
                self.eta[i] > 0.0 && self.eta[i].is_finite(),
                Validation,
                "eta[{i}] must be > 0"
            );
            ensure!(
                self.spread[i] >= 0.0 && self.spread[i].is_finite(),
                Validation,
                "spread[{i}] must be >= 0"
            );
            let f = self.fill_prob[i];
            ensure!(
                f > 0.0 && f < 1.0,
                Validation,
                "fill probability[{i}] must lie in (0, 1), got {f}"
            );
        }
        Ok(())
    }

    /// `|p|` at which the decision switches to aggressive.
    pub fn threshold(&self, i: usize) -> f64 {
        let (s, f) = (self.spread[i], self.fill_prob[i]);
        match self.rule {
            BranchRule::CommonRate => 2.0 * s / (1.0 - f),
            BranchRule::IndependentOptima => s / (1.0 - f.sqrt()),
        }
    }

    /// `(passive, aggressive)` objectives for alpha `p` on asset `i`.
    pub fn branch_objectives(&self, i: usize, p: f64) -> (f64, f64) {
        let (eta, s, f) = (self.eta[i], self.spread[i], self.fill_prob[i]);
        let a = p.abs();
        match self.rule {
            BranchRule::CommonRate => {
                let v = a / eta;
                let base = a * v - 0.5 * eta * v * v;
                (f * base, base - s * v)
            }
            BranchRule::IndependentOptima => {
                let net = (a - s).max(0.0);
                (f * a * a / (2.0 * eta), net * net / (2.0 * eta))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Passive,
    Aggressive,
    Wait,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggressionDecision {
    pub mode: Mode,
    pub effective_alpha: f64,
    pub rate: f64,
    pub passive_objective: f64,
    pub aggressive_objective: f64,
}

/// Per-asset passive/aggressive/wait choice. Ties go to passive.
pub fn choose_aggression(
    ctx: &MyopicContext,
    grad_v: &DVector<f64>,
) -> Result<Vec<AggressionDecision>> {
    ctx.validate()?;
    ensure!(
        grad_v.len() == ctx.dim(),
        Validation,
        "alpha has {} entries, context {}",
        grad_v.len(),
        ctx.dim()
    );
    Ok(grad_v
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (passive, aggressive) = ctx.branch_objectives(i, p);
            let (eta, s, f) = (ctx.eta[i], ctx.spread[i], ctx.fill_prob[i]);
            if passive <= 0.0 && aggressive <= 0.0 {
                return AggressionDecision {
                    mode: Mode::Wait,
                    effective_alpha: 0.0,
                    rate: 0.0,
                    passive_objective: passive,
                    aggressive_objective: aggressive,
                };
            }
            if aggressive > passive {
                let alpha = match ctx.offset {
                    AggressiveOffset::Symmetric => p + s * p.signum(),
                    AggressiveOffset::Literal => p + s,
                };
                AggressionDecision {
                    mode: Mode::Aggressive,
                    effective_alpha: alpha,
                    rate: alpha.signum() * (alpha.abs() - s).max(0.0) / eta,
                    passive_objective: passive,
                    aggressive_objective: aggressive,
                }
            } else {
                let alpha = p / f.sqrt();
                AggressionDecision {
                    mode: Mode::Passive,
                    effective_alpha: alpha,
                    rate: alpha / eta,
                    passive_objective: passive,
                    aggressive_objective: aggressive,
                }
            }
        })
        .collect())
}

/// `W = ∫ₜᵀ Σᵢ pᵢ(s)² / (2ηᵢ) ds`.
pub fn myopic_value<F>(mut alpha: F, eta: &DVector<f64>, t: f64, horizon: f64) -> Result<f64>
where
    F: FnMut(f64) -> DVector<f64>,
{
    ensure!(
        eta.iter().all(|&e| e > 0.0),
        Validation,
        "eta must be positive"
    );
    ensure!(t <= horizon, Domain, "start {t} after horizon {horizon}");
    if t == horizon {
        return Ok(0.0);
    }
    quadrature::integrate(
        |s| {
            alpha(s)
                .iter()
                .zip(eta.iter())
                .map(|(p, e)| p * p / (2.0 * e))
                .sum()
        },
        t,
        horizon,
        1e-10,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub value: f64,
    /// False when `q` leaves the coordinate box between `q0` and `qT`.
    pub in_domain: bool,
}

/// `κ (T − t) |q − q_T|ᵀ Σ |q − q_T| / 2`.
pub fn error_bound(problem: &ExecutionProblem, t: f64, q: &DVector<f64>) -> Bound {
    let y = (q - &problem.target).abs();
    let value = 0.5
        * problem.risk_aversion
        * (problem.horizon - t).max(0.0)
        * y.dot(&(&problem.covariance * &y));
    let in_box = q
        .iter()
        .zip(problem.initial.iter().zip(problem.target.iter()))
        .all(|(&x, (&a, &b))| x >= a.min(b) && x <= a.max(b));
    Bound {
        value,
        in_domain: in_box && (0.0..=problem.horizon).contains(&t),
    }
}

/// The bound at `(0, q0)`. Dominates the whole box when Σ has no negative
/// entries.
pub fn uniform_bound(problem: &ExecutionProblem) -> f64 {
    error_bound(problem, 0.0, &problem.initial).value
}
