//! Closed-form multi-asset liquidation schedule and its value function.
//!
//! The running cost is the Lagrangian
//!
//! ```text
//! L(q, v) = ½ vᵀΛv + ½ κ (q − q_T)ᵀ Σ (q − q_T)
//! ```
//!
//! with `v = dq/dt`. Writing `Σ = C Cᵀ` (Cholesky) and `w = Cᵀ (q − q_T)`, the
//! Euler-Lagrange equation becomes `ẅ = κ CᵀΛ⁻¹C w`. With the spectral
//! decomposition `κ CᵀΛ⁻¹C = Ω D Ωᵀ` every mode `m = Ωᵀ w` solves
//! `m̈ₖ = Dₖ mₖ` and decays as `sinh(γₖ(T − t)) / sinh(γₖ T)`, `γₖ = √Dₖ`.
//!
//! Values are in gain form: `V(t, q) = −min ∫ L`, so the gradient on a long
//! position that must be sold is negative.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure, Error, Result};
use crate::numerics::linalg::{cholesky_lower, SymEigen};
use crate::numerics::quadrature;

/// Smooth-relaxation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionProblem {
    pub initial: DVector<f64>,
    pub target: DVector<f64>,
    /// Horizon in days.
    pub horizon: f64,
    pub covariance: DMatrix<f64>,
    pub risk_aversion: f64,
    /// Diagonal of the temporary-impact matrix Λ under the ½vᵀΛv convention.
    pub impact: DVector<f64>,
}

impl ExecutionProblem {
    pub fn new(
        initial: DVector<f64>,
        target: DVector<f64>,
        horizon: f64,
        covariance: DMatrix<f64>,
        risk_aversion: f64,
        impact: DVector<f64>,
    ) -> Result<Self> {
        let problem = Self {
            initial,
            target,
            horizon,
            covariance,
            risk_aversion,
            impact,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        ensure!(d >= 1, Validation, "problem needs at least one asset");
        ensure!(
            self.target.len() == d,
            Validation,
            "target has {} entries, expected {d}",
            self.target.len()
        );
        ensure!(
            self.impact.len() == d,
            Validation,
            "impact has {} entries, expected {d}",
            self.impact.len()
        );
        ensure!(
            self.covariance.nrows() == d && self.covariance.ncols() == d,
            Validation,
            "covariance must be {d}x{d}"
        );
        ensure!(
            self.horizon.is_finite() && self.horizon > 0.0,
            Validation,
            "horizon must be positive, got {}",
            self.horizon
        );
        ensure!(
            self.risk_aversion.is_finite() && self.risk_aversion > 0.0,
            Validation,
            "risk aversion must be positive, got {}",
            self.risk_aversion
        );
        ensure!(
            self.initial
                .iter()
                .chain(self.target.iter())
                .all(|x| x.is_finite()),
            Validation,
            "inventories must be finite"
        );
        for (i, &l) in self.impact.iter().enumerate() {
            ensure!(
                l.is_finite() && l > 0.0,
                Validation,
                "impact coefficient {i} must be > 0, got {l}"
            );
        }
        Ok(())
    }

    /// `½ vᵀΛv`.
    pub fn trading_cost(&self, v: &DVector<f64>) -> f64 {
        0.5 * v
            .iter()
            .zip(self.impact.iter())
            .map(|(x, l)| l * x * x)
            .sum::<f64>()
    }

    /// `½ κ (q − q_T)ᵀ Σ (q − q_T)`.
    pub fn risk_penalty(&self, q: &DVector<f64>) -> f64 {
        let y = q - &self.target;
        0.5 * self.risk_aversion * y.dot(&(&self.covariance * &y))
    }

    pub fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.trading_cost(v) + self.risk_penalty(q)
    }
}

/// `H(q, p) = ½ pᵀΛ⁻¹p − ½ κ (q − q_T)ᵀ Σ (q − q_T)`, the Fenchel conjugate
/// of the Lagrangian in `v`.
pub fn hamiltonian(problem: &ExecutionProblem, q: &DVector<f64>, p: &DVector<f64>) -> f64 {
    let kinetic: f64 = p
        .iter()
        .zip(problem.impact.iter())
        .map(|(x, l)| x * x / l)
        .sum();
    0.5 * kinetic - problem.risk_penalty(q)
}

/// `sinh(γ(τ − s)) / sinh(γτ)` without overflow.
fn decay(rate: f64, tau: f64, s: f64) -> f64 {
    let rest = (tau - s).max(0.0);
    if rate * tau < 1e-8 {
        return rest / tau;
    }
    (-rate * s).exp() * (-(-2.0 * rate * rest).exp_m1()) / (-(-2.0 * rate * tau).exp_m1())
}

/// d/ds of [`decay`].
fn decay_rate(rate: f64, tau: f64, s: f64) -> f64 {
    let rest = (tau - s).max(0.0);
    if rate * tau < 1e-8 {
        return -1.0 / tau;
    }
    -rate * (-rate * s).exp() * (1.0 + (-2.0 * rate * rest).exp()) / (-(-2.0 * rate * tau).exp_m1())
}

/// `γ coth(γτ)`, tending to `1/τ` as `γτ → 0`.
fn rate_coth(rate: f64, tau: f64) -> f64 {
    let x = rate * tau;
    if x < 1e-6 {
        return (1.0 + x * x / 3.0) / tau;
    }
    rate * (1.0 + (-2.0 * x).exp()) / (-(-2.0 * x).exp_m1())
}

/// Optimal path restarted at `(start, q)` and run to the horizon.
#[derive(Debug, Clone)]
pub struct PathSegment<'a> {
    schedule: &'a Schedule,
    start: f64,
    remaining: f64,
    modal0: DVector<f64>,
}

impl PathSegment<'_> {
    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn position(&self, t: f64) -> DVector<f64> {
        let s = t - self.start;
        let modal = DVector::from_iterator(
            self.modal0.len(),
            self.modal0
                .iter()
                .zip(self.schedule.rates.iter())
                .map(|(m, &g)| m * decay(g, self.remaining, s)),
        );
        &self.schedule.problem.target + &self.schedule.from_modal * modal
    }

    pub fn velocity(&self, t: f64) -> DVector<f64> {
        let s = t - self.start;
        let modal = DVector::from_iterator(
            self.modal0.len(),
            self.modal0
                .iter()
                .zip(self.schedule.rates.iter())
                .map(|(m, &g)| m * decay_rate(g, self.remaining, s)),
        );
        &self.schedule.from_modal * modal
    }

    /// Generalized momenta `p = Λ v`.
    pub fn momentum(&self, t: f64) -> DVector<f64> {
        self.velocity(t)
            .component_mul(&self.schedule.problem.impact)
    }
}

/// Solved schedule: cached Cholesky and spectral factors plus evaluators for
/// the path, its rate, the momenta and the value function.
#[derive(Debug, Clone)]
pub struct Schedule {
    problem: ExecutionProblem,
    cholesky: DMatrix<f64>,
    omega: DMatrix<f64>,
    spectrum: DVector<f64>,
    rates: DVector<f64>,
    to_modal: DMatrix<f64>,
    from_modal: DMatrix<f64>,
}

/// Builds the closed-form solution for `problem`.
pub fn solve_schedule(problem: ExecutionProblem) -> Result<Schedule> {
    Schedule::new(problem)
}

impl Schedule {
    pub fn new(problem: ExecutionProblem) -> Result<Self> {
        problem.validate()?;
        let c = cholesky_lower(&problem.covariance)?;
        let inv_impact = DMatrix::from_diagonal(&problem.impact.map(|l| 1.0 / l));
        let m = problem.risk_aversion * c.transpose() * inv_impact * &c;
        let eig = SymEigen::new(&m)?;
        if eig.min() <= 0.0 {
            return Err(Error::Decomposition(format!(
                "spectral matrix is not positive definite (min eigenvalue {})",
                eig.min()
            )));
        }
        let omega = eig.vectors.clone();
        let spectrum = eig.values.clone();
        let rates = spectrum.map(f64::sqrt);
        let to_modal = omega.transpose() * c.transpose();
        let c_t_inv = c
            .transpose()
            .try_inverse()
            .ok_or_else(|| Error::Decomposition("Cholesky factor is singular".into()))?;
        let from_modal = c_t_inv * &omega;
        Ok(Self {
            problem,
            cholesky: c,
            omega,
            spectrum,
            rates,
            to_modal,
            from_modal,
        })
    }

    pub fn problem(&self) -> &ExecutionProblem {
        &self.problem
    }

    pub fn horizon(&self) -> f64 {
        self.problem.horizon
    }

    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    /// Eigenvectors Ω of `κ CᵀΛ⁻¹C`.
    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Eigenvalues D of `κ CᵀΛ⁻¹C`, ascending.
    pub fn spectrum(&self) -> &DVector<f64> {
        &self.spectrum
    }

    /// Modal decay rates `√D`, per day.
    pub fn rates(&self) -> &DVector<f64> {
        &self.rates
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.problem.horizon).contains(&t) {
            return Err(Error::Domain(format!(
                "time {t} outside [0, {}]",
                self.problem.horizon
            )));
        }
        Ok(())
    }

    /// Optimal path from `(t, q)` to the target at the horizon.
    pub fn restart(&self, t: f64, q: &DVector<f64>) -> Result<PathSegment<'_>> {
        self.check_time(t)?;
        let remaining = self.problem.horizon - t;
        let y = q - &self.problem.target;
        if remaining <= 0.0 && y.amax() > 0.0 {
            return Err(Error::Domain(format!(
                "inventory off target at the horizon (t = {t})"
            )));
        }
        Ok(PathSegment {
            schedule: self,
            start: t,
            remaining: remaining.max(f64::MIN_POSITIVE),
            modal0: &self.to_modal * y,
        })
    }

    fn base_path(&self) -> PathSegment<'_> {
        PathSegment {
            schedule: self,
            start: 0.0,
            remaining: self.problem.horizon,
            modal0: &self.to_modal * (&self.problem.initial - &self.problem.target),
        }
    }

    /// `q*(t)`.
    pub fn position(&self, t: f64) -> Result<DVector<f64>> {
        self.check_time(t)?;
        Ok(self.base_path().position(t))
    }

    /// `v*(t) = dq*/dt`.
    pub fn velocity(&self, t: f64) -> Result<DVector<f64>> {
        self.check_time(t)?;
        Ok(self.base_path().velocity(t))
    }

    /// Generalized momenta along the schedule, `p(t) = Λ v*(t)`.
    pub fn momenta(&self, t: f64) -> Result<DVector<f64>> {
        self.check_time(t)?;
        Ok(self.base_path().momentum(t))
    }

    /// Value function by quadrature of the Lagrangian along the re-solved
    /// path from `(t, q)`.
    pub fn value_function(&self, t: f64, q: &DVector<f64>) -> Result<f64> {
        self.value_function_tol(t, q, 1e-10)
    }

    pub fn value_function_tol(&self, t: f64, q: &DVector<f64>, abs_tol: f64) -> Result<f64> {
        let path = self.restart(t, q)?;
        let horizon = self.problem.horizon;
        if horizon - t <= 0.0 {
            return Ok(0.0);
        }
        let cost = quadrature::integrate(
            |s| {
                self.problem
                    .lagrangian(&path.position(s), &path.velocity(s))
            },
            t,
            horizon,
            abs_tol,
        )?;
        Ok(-cost)
    }

    /// Same value in closed form: `V = −½ κ Σₖ mₖ² coth(γₖτ)/γₖ` with
    /// `m = Ωᵀ Cᵀ (q − q_T)`.
    pub fn value_closed_form(&self, t: f64, q: &DVector<f64>) -> Result<f64> {
        self.check_time(t)?;
        let tau = self.problem.horizon - t;
        let modal = &self.to_modal * (q - &self.problem.target);
        if tau <= 0.0 {
            return if modal.amax() == 0.0 {
                Ok(0.0)
            } else {
                Ok(f64::NEG_INFINITY)
            };
        }
        let kappa = self.problem.risk_aversion;
        let sum: f64 = modal
            .iter()
            .zip(self.rates.iter())
            .map(|(m, &g)| m * m * rate_coth(g, tau) / (g * g))
            .sum();
        Ok(-0.5 * kappa * sum)
    }

    /// `∇V(t, q)`: the momenta at the start of the path restarted at `(t, q)`.
    pub fn value_gradient(&self, t: f64, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_time(t)?;
        let y = q - &self.problem.target;
        let tau = self.problem.horizon - t;
        if tau <= 0.0 {
            if y.amax() == 0.0 {
                return Ok(DVector::zeros(y.len()));
            }
            return Err(Error::Domain(format!(
                "gradient unbounded at the horizon (t = {t})"
            )));
        }
        let modal = &self.to_modal * y;
        let kappa = self.problem.risk_aversion;
        let scaled = DVector::from_iterator(
            modal.len(),
            modal
                .iter()
                .zip(self.rates.iter())
                .map(|(m, &g)| m * rate_coth(g, tau) / (g * g)),
        );
        Ok(-kappa * self.to_modal.transpose() * scaled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(q0: f64, qt: f64) -> ExecutionProblem {
        ExecutionProblem::new(
            DVector::from_element(1, q0),
            DVector::from_element(1, qt),
            1.0,
            DMatrix::from_element(1, 1, 1.0),
            1.0,
            DVector::from_element(1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn sinh_curve_midpoint() {
        let s = solve_schedule(scalar(1.0, 0.0)).unwrap();
        let q = s.position(0.5).unwrap()[0];
        assert!((q - 0.5f64.sinh() / 1f64.sinh()).abs() < 1e-12);
        let p0 = s.momenta(0.0).unwrap()[0];
        assert!((p0 + 1f64.cosh() / 1f64.sinh()).abs() < 1e-12);
    }

    #[test]
    fn identity_case_is_flat() {
        let s = solve_schedule(scalar(3.0, 3.0)).unwrap();
        for &t in &[0.0, 0.3, 1.0] {
            assert_eq!(s.position(t).unwrap()[0], 3.0);
            assert_eq!(s.velocity(t).unwrap()[0], 0.0);
            assert_eq!(s.momenta(t).unwrap()[0], 0.0);
        }
        assert_eq!(
            s.value_function(0.2, &DVector::from_element(1, 3.0))
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn value_at_horizon_on_target_is_zero() {
        let s = solve_schedule(scalar(1.0, 0.0)).unwrap();
        assert_eq!(s.value_function(1.0, &DVector::zeros(1)).unwrap(), 0.0);
        assert!(s
            .value_gradient(1.0, &DVector::from_element(1, 0.5))
            .is_err());
    }

    #[test]
    fn quadrature_matches_closed_form_value() {
        let s = solve_schedule(scalar(1.0, 0.0)).unwrap();
        let q = DVector::from_element(1, 0.7);
        let a = s.value_function(0.25, &q).unwrap();
        let b = s.value_closed_form(0.25, &q).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        // closed form for the scalar case: −½ y² coth(τ)
        assert!((b + 0.5 * 0.49 / (0.75f64).tanh()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad_cov = ExecutionProblem::new(
            DVector::from_element(2, 1.0),
            DVector::zeros(2),
            1.0,
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            1.0,
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        assert!(matches!(
            solve_schedule(bad_cov),
            Err(Error::Decomposition(_))
        ));
        let bad_impact = ExecutionProblem::new(
            DVector::from_element(1, 1.0),
            DVector::zeros(1),
            1.0,
            DMatrix::from_element(1, 1, 1.0),
            1.0,
            DVector::from_element(1, 0.0),
        );
        assert!(matches!(bad_impact, Err(Error::Validation(_))));
        let s = solve_schedule(scalar(1.0, 0.0)).unwrap();
        assert!(matches!(s.position(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn large_rate_does_not_overflow() {
        let p = ExecutionProblem::new(
            DVector::from_element(1, 1000.0),
            DVector::zeros(1),
            1.0,
            DMatrix::from_element(1, 1, 1.0),
            1.0,
            DVector::from_element(1, 1e-6),
        )
        .unwrap();
        let s = solve_schedule(p).unwrap();
        assert!(s.rates()[0] > 900.0);
        let q = s.position(0.5).unwrap()[0];
        assert!(q.is_finite() && (0.0..1e-100).contains(&q));
        assert!(s
            .value_closed_form(0.0, &DVector::from_element(1, 1000.0))
            .unwrap()
            .is_finite());
    }
}
