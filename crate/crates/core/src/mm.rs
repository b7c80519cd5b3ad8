//! Quadratic approximation of the multi-asset market-making value function
//!
//! ```text
//! Ṽ(t, q) = −qᵀA(t)q − qᵀB(t) − C(t)
//! ```
//!
//! with `A` in closed form and `B`, `C` integrated backward from the horizon.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::linalg::{is_symmetric, sqrtm, SymEigen};
use crate::numerics::ode::{self, OdeOptions, Trajectory};
use crate::numerics::roots;
use crate::registry::{param_f64, Params, Registry};
use crate::router::{
    route_asset, Action, Caps, RouterInput, RouterOptions, ShortAlpha, Side, VenueState,
};
use crate::venue::VenueBook;

/// Trade intensity as a function of the quoted distance to the midpoint.
pub trait IntensityCurve: Send + Sync + fmt::Debug {
    fn intensity(&self, delta: f64) -> f64;

    /// `H(p) = sup_δ Λ(δ)(δ − p)`.
    fn hamiltonian(&self, p: f64) -> Result<f64>;

    /// `(H(0), H'(0), H''(0))`.
    fn hamiltonian_consts(&self) -> Result<[f64; 3]> {
        let h = 1e-3;
        let (m, z, pl) = (
            self.hamiltonian(-h)?,
            self.hamiltonian(0.0)?,
            self.hamiltonian(h)?,
        );
        Ok([z, (pl - m) / (2.0 * h), (pl - 2.0 * z + m) / (h * h)])
    }
}

/// `Λ(δ) = a e^{−kδ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    pub a: f64,
    pub k: f64,
}

impl IntensityCurve for Exponential {
    fn intensity(&self, delta: f64) -> f64 {
        self.a * (-self.k * delta).exp()
    }

    fn hamiltonian(&self, p: f64) -> Result<f64> {
        Ok(self.a / self.k * (-1.0 - self.k * p).exp())
    }

    fn hamiltonian_consts(&self) -> Result<[f64; 3]> {
        let e = (-1.0f64).exp();
        Ok([self.a / self.k * e, -self.a * e, self.a * self.k * e])
    }
}

/// `Λ(δ) = a / (1 + e^{k(δ − m)})`; the sup is found numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logistic {
    pub a: f64,
    pub k: f64,
    pub mid: f64,
}

impl IntensityCurve for Logistic {
    fn intensity(&self, delta: f64) -> f64 {
        self.a / (1.0 + (self.k * (delta - self.mid)).exp())
    }

    fn hamiltonian(&self, p: f64) -> Result<f64> {
        let hi = p.max(self.mid) + 60.0 / self.k;
        let (_, h) = roots::golden_max(|d| self.intensity(d) * (d - p), p, hi, 1e-12);
        if !h.is_finite() {
            return Err(Error::Numeric(format!(
                "no finite sup for the logistic curve at p = {p}"
            )));
        }
        Ok(h)
    }
}

pub fn curve_registry() -> Registry<dyn IntensityCurve> {
    Registry::new("intensity curve")
        .with(
            "exponential",
            |p: &Params| -> Result<Box<dyn IntensityCurve>> {
                let a = param_f64(p, "a", None)?;
                let k = param_f64(p, "k", None)?;
                ensure!(
                    a > 0.0 && k > 0.0,
                    Config,
                    "exponential curve needs a > 0 and k > 0"
                );
                Ok(Box::new(Exponential { a, k }))
            },
        )
        .with(
            "logistic",
            |p: &Params| -> Result<Box<dyn IntensityCurve>> {
                let a = param_f64(p, "a", None)?;
                let k = param_f64(p, "k", None)?;
                let mid = param_f64(p, "mid", Some(0.0))?;
                ensure!(
                    a > 0.0 && k > 0.0,
                    Config,
                    "logistic curve needs a > 0 and k > 0"
                );
                Ok(Box::new(Logistic { a, k, mid }))
            },
        )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub kind: String,
    #[serde(flatten)]
    pub params: Params,
}

impl CurveSpec {
    pub fn exponential(a: f64, k: f64) -> Self {
        Self {
            kind: "exponential".into(),
            params: toml::toml! { a = a
            k = k },
        }
    }

    pub fn build(&self) -> Result<Box<dyn IntensityCurve>> {
        curve_registry().build(&self.kind, &self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MMConfig {
    pub gamma: f64,
    pub horizon: f64,
    pub covariance: Vec<Vec<f64>>,
    pub sizes: Vec<f64>,
    pub bid: Vec<CurveSpec>,
    pub ask: Vec<CurveSpec>,
}

#[derive(Debug)]
pub struct MMParams {
    pub gamma: f64,
    pub horizon: f64,
    pub covariance: DMatrix<f64>,
    pub sizes: DVector<f64>,
    pub bid: Vec<Box<dyn IntensityCurve>>,
    pub ask: Vec<Box<dyn IntensityCurve>>,
}

impl MMParams {
    pub fn from_config(cfg: &MMConfig) -> Result<Self> {
        let d = cfg.sizes.len();
        ensure!(
            cfg.covariance.len() == d,
            Config,
            "market-making covariance must be {d}x{d}"
        );
        for row in &cfg.covariance {
            ensure!(
                row.len() == d,
                Config,
                "market-making covariance must be {d}x{d}"
            );
        }
        ensure!(
            cfg.bid.len() == d && cfg.ask.len() == d,
            Config,
            "need one bid and one ask curve per asset"
        );
        Ok(Self {
            gamma: cfg.gamma,
            horizon: cfg.horizon,
            covariance: DMatrix::from_fn(d, d, |i, j| cfg.covariance[i][j]),
            sizes: DVector::from_vec(cfg.sizes.clone()),
            bid: cfg
                .bid
                .iter()
                .map(CurveSpec::build)
                .collect::<Result<_>>()?,
            ask: cfg
                .ask
                .iter()
                .map(CurveSpec::build)
                .collect::<Result<_>>()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        ensure!(d >= 1, Validation, "need at least one asset");
        ensure!(
            self.gamma > 0.0 && self.gamma.is_finite(),
            Validation,
            "gamma must be positive"
        );
        ensure!(
            self.horizon > 0.0 && self.horizon.is_finite(),
            Validation,
            "horizon must be positive"
        );
        ensure!(
            self.sizes.iter().all(|&z| z > 0.0),
            Validation,
            "transaction sizes must be positive"
        );
        ensure!(
            self.bid.len() == d && self.ask.len() == d,
            Validation,
            "one curve per asset and side"
        );
        ensure!(
            self.covariance.nrows() == d && is_symmetric(&self.covariance, 1e-12),
            Validation,
            "covariance must be symmetric {d}x{d}"
        );
        Ok(())
    }
}

/// `α_j` per asset for one side.
pub fn hamiltonian_consts(curves: &[Box<dyn IntensityCurve>]) -> Result<Vec<[f64; 3]>> {
    curves.iter().map(|c| c.hamiltonian_consts()).collect()
}

/// Coefficient paths of `Ṽ` plus the constants they are built from.
#[derive(Debug, Clone)]
pub struct MMCoefficients {
    horizon: f64,
    gamma: f64,
    d_plus: DVector<f64>,
    d_minus: DVector<f64>,
    v_minus: DVector<f64>,
    /// `Tr(D₀,₁ᵇ + D₀,₁ᵃ)`.
    tr01: f64,
    /// Diagonal of `D₁,₂ᵇ + D₁,₂ᵃ`.
    d12: DVector<f64>,
    /// Diagonal of `D₂,₃ᵇ + D₂,₃ᵃ`.
    d23: DVector<f64>,
    a_hat: DMatrix<f64>,
    a_hat_eig: SymEigen,
    d_plus_inv_sqrt: DVector<f64>,
    gamma_mat: DMatrix<f64>,
    path: Trajectory,
}

/// Builds `A` (closed form), then integrates `B` and `C` backward from the
/// horizon with `B(T) = C(T) = 0`.
pub fn mm_coefficients(params: &MMParams) -> Result<MMCoefficients> {
    params.validate()?;
    let d = params.dim();
    let bid = hamiltonian_consts(&params.bid)?;
    let ask = hamiltonian_consts(&params.ask)?;
    let z = &params.sizes;
    let mut d_plus = DVector::zeros(d);
    let mut d_minus = DVector::zeros(d);
    let mut v_minus = DVector::zeros(d);
    let mut d12 = DVector::zeros(d);
    let mut d23 = DVector::zeros(d);
    let mut tr01 = 0.0;
    for i in 0..d {
        let (b, a, zi) = (bid[i], ask[i], z[i]);
        if !(b[2] + a[2] > 0.0) {
            return Err(Error::Validation(format!(
                "asset {i}: bid and ask curvature must sum to a positive value, got {}",
                b[2] + a[2]
            )));
        }
        d_plus[i] = zi * (b[2] + a[2]);
        d_minus[i] = zi * zi * (b[2] - a[2]);
        v_minus[i] = zi * (b[1] - a[1]);
        d12[i] = zi * zi * (b[1] + a[1]);
        d23[i] = zi.powi(3) * (b[2] + a[2]);
        tr01 += zi * (b[0] + a[0]);
    }
    let sqrt_dp = d_plus.map(f64::sqrt);
    let d_plus_inv_sqrt = sqrt_dp.map(|x| 1.0 / x);
    let scaled = DMatrix::from_fn(d, d, |i, j| {
        sqrt_dp[i] * params.covariance[(i, j)] * sqrt_dp[j]
    });
    let root = sqrtm(&scaled)?;
    let a_hat = params.gamma.sqrt() * &root;
    let a_hat_eig = SymEigen::new(&a_hat)?;
    if a_hat_eig.min() <= 0.0 {
        return Err(Error::Decomposition(
            "covariance is not positive definite".into(),
        ));
    }
    let gamma_mat = DMatrix::from_fn(d, d, |i, j| {
        d_plus_inv_sqrt[i] * root[(i, j)] * d_plus_inv_sqrt[j]
    });

    let mut coeffs = MMCoefficients {
        horizon: params.horizon,
        gamma: params.gamma,
        d_plus,
        d_minus,
        v_minus,
        tr01,
        d12,
        d23,
        a_hat,
        a_hat_eig,
        d_plus_inv_sqrt,
        gamma_mat,
        path: Trajectory::default(),
    };
    let mut y0 = vec![0.0; d + 1];
    y0[d] = 0.0;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| coeffs.rhs(t, y, dy);
    let opts = OdeOptions {
        rtol: 1e-10,
        atol: 1e-12,
        ..OdeOptions::default()
    };
    let path = ode::integrate(rhs, params.horizon, &y0, 0.0, opts)?;
    coeffs.path = path;
    Ok(coeffs)
}

impl MMCoefficients {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.d_plus.len()
    }

    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }

    pub fn d_plus(&self) -> &DVector<f64> {
        &self.d_plus
    }

    pub fn d_minus(&self) -> &DVector<f64> {
        &self.d_minus
    }

    pub fn v_minus(&self) -> &DVector<f64> {
        &self.v_minus
    }

    pub fn gamma_matrix(&self) -> &DMatrix<f64> {
        &self.gamma_mat
    }

    /// `1 / λ_min(Â)`, the slowest relaxation time of `A`.
    pub fn characteristic_time(&self) -> f64 {
        1.0 / self.a_hat_eig.min()
    }

    /// `A(t) = ½ D₊^{-½} Â tanh(Â(T − t)) D₊^{-½}`.
    pub fn a(&self, t: f64) -> DMatrix<f64> {
        let tau = (self.horizon - t).max(0.0);
        let core = self.a_hat_eig.apply(|x| x * (x * tau).tanh());
        let s = &self.d_plus_inv_sqrt;
        DMatrix::from_fn(core.nrows(), core.ncols(), |i, j| {
            0.5 * s[i] * core[(i, j)] * s[j]
        })
    }

    pub fn b(&self, t: f64) -> DVector<f64> {
        let y = self.path.eval(t);
        DVector::from_column_slice(&y[..self.dim()])
    }

    pub fn c(&self, t: f64) -> f64 {
        self.path.eval(t)[self.dim()]
    }

    /// `½ √γ Γ`.
    pub fn asymptotic_a(&self) -> DMatrix<f64> {
        0.5 * self.gamma.sqrt() * &self.gamma_mat
    }

    /// `−D₊⁻¹ (V₋ + ½ √γ D₋ 𝒟(Γ))`.
    pub fn asymptotic_b(&self) -> DVector<f64> {
        let diag = self.gamma_mat.diagonal();
        let inner = &self.v_minus + 0.5 * self.gamma.sqrt() * self.d_minus.component_mul(&diag);
        -inner.component_div(&self.d_plus)
    }

    /// `Ṽ(t, q)`.
    pub fn value(&self, t: f64, q: &DVector<f64>) -> f64 {
        -(q.dot(&(self.a(t) * q))) - q.dot(&self.b(t)) - self.c(t)
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let d = self.dim();
        let a = self.a(t);
        let b = DVector::from_column_slice(&y[..d]);
        let diag_a = a.diagonal();
        // B' = 2A (D₊B + V₋ + D₋𝒟(A))
        let inner =
            self.d_plus.component_mul(&b) + &self.v_minus + self.d_minus.component_mul(&diag_a);
        let db = 2.0 * &a * inner;
        dy[..d].copy_from_slice(db.as_slice());
        // C' = Tr D₀₁ + V₋ᵀB + Tr(D₁₂A) + ½BᵀD₊B + BᵀD₋𝒟(A) + ½𝒟(A)ᵀD₂₃𝒟(A)
        dy[d] = self.tr01
            + self.v_minus.dot(&b)
            + self.d12.dot(&diag_a)
            + 0.5 * b.dot(&self.d_plus.component_mul(&b))
            + b.dot(&self.d_minus.component_mul(&diag_a))
            + 0.5 * diag_a.dot(&self.d23.component_mul(&diag_a));
    }
}

/// Effective alpha of the market maker, `∇Ṽ = −2A(t)q − B(t)`.
pub fn mm_alpha(coeffs: &MMCoefficients, t: f64, q: &DVector<f64>) -> Result<DVector<f64>> {
    ensure!(
        (0.0..=coeffs.horizon).contains(&t),
        Domain,
        "time {t} outside [0, {}]",
        coeffs.horizon
    );
    ensure!(
        q.len() == coeffs.dim(),
        Validation,
        "inventory has {} entries, expected {}",
        q.len(),
        coeffs.dim()
    );
    Ok(-2.0 * coeffs.a(t) * q - coeffs.b(t))
}

/// Two-sided actions indexed `[asset][venue]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSet {
    pub bid: Vec<Vec<Action>>,
    pub ask: Vec<Vec<Action>>,
    pub objective: Vec<f64>,
}

impl QuoteSet {
    pub fn side_volume(&self, side: Side, asset: usize) -> f64 {
        let acts = match side {
            Side::Buy => &self.bid[asset],
            Side::Sell => &self.ask[asset],
        };
        acts.iter().map(Action::volume).sum()
    }
}

pub struct MMRouteInput<'a> {
    pub p_short: &'a ShortAlpha,
    pub states: &'a [Vec<VenueState>],
    pub book: &'a VenueBook,
    pub caps: &'a [Caps],
    pub options: RouterOptions,
}

/// Routes bid and ask sides separately with alpha `∇Ṽ(t, q)`.
pub fn mm_route(
    coeffs: &MMCoefficients,
    t: f64,
    q: &DVector<f64>,
    input: &MMRouteInput<'_>,
) -> Result<QuoteSet> {
    let alpha = mm_alpha(coeffs, t, q)?;
    mm_route_with_alpha(&alpha, input)
}

pub fn mm_route_with_alpha(alpha: &DVector<f64>, input: &MMRouteInput<'_>) -> Result<QuoteSet> {
    let d = alpha.len();
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
    let router = RouterInput {
        p_eff: alpha,
        p_short: input.p_short,
        states: input.states,
        book: input.book,
        caps: input.caps,
        options: input.options,
    };
    let mut out = QuoteSet {
        bid: Vec::with_capacity(d),
        ask: Vec::with_capacity(d),
        objective: Vec::with_capacity(d),
    };
    for i in 0..d {
        let (bid, ob) = route_asset(&router, i, Some(Side::Buy))?;
        let (ask, oa) = route_asset(&router, i, Some(Side::Sell))?;
        out.bid.push(bid);
        out.ask.push(ask);
        out.objective.push(ob + oa);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(gamma: f64, sigma2: f64, horizon: f64) -> MMParams {
        MMParams {
            gamma,
            horizon,
            covariance: DMatrix::from_element(1, 1, sigma2),
            sizes: DVector::from_element(1, 1.0),
            bid: vec![Box::new(Exponential { a: 1.0, k: 1.0 })],
            ask: vec![Box::new(Exponential { a: 1.0, k: 1.0 })],
        }
    }

    #[test]
    fn exponential_constants() {
        let c = Exponential { a: 1.0, k: 1.0 }.hamiltonian_consts().unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(c, [e, -e, e]);
        let c2 = Exponential { a: 2.0, k: 1.0 }.hamiltonian_consts().unwrap();
        for j in 0..3 {
            assert!((c2[j] - 2.0 * c[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn terminal_conditions() {
        let c = mm_coefficients(&scalar(0.1, 0.5, 2.0)).unwrap();
        assert_eq!(c.a(2.0)[(0, 0)], 0.0);
        assert_eq!(c.b(2.0)[0], 0.0);
        assert_eq!(c.c(2.0), 0.0);
        assert!(c.b(0.0)[0].abs() < 1e-14);
    }

    #[derive(Debug)]
    struct Flat;
    impl IntensityCurve for Flat {
        fn intensity(&self, _: f64) -> f64 {
            1.0
        }
        fn hamiltonian(&self, _: f64) -> Result<f64> {
            Ok(1.0)
        }
    }

    #[test]
    fn rejects_nonpositive_curvature() {
        let mut p = scalar(0.1, 0.5, 1.0);
        p.bid = vec![Box::new(Flat)];
        p.ask = vec![Box::new(Flat)];
        assert!(matches!(mm_coefficients(&p), Err(Error::Validation(_))));
    }
}
