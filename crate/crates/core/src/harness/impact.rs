//! Linear impact from predicted dollar volume, and beta-neutral sizing.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Impact of trading one percent of daily dollar volume.
pub const IMPACT_AT_ONE_PERCENT: f64 = 20e-4;
/// Participation above which the linear model is not trusted.
pub const PARTICIPATION_LIMIT: f64 = 0.05;

/// Impact coefficients in both cost conventions, per dollar traded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impact {
    pub advp: Vec<f64>,
    /// `λ` for a cost `λ v²`.
    pub quoted: Vec<f64>,
    /// `2λ` for the engine's `½ Λ v²`.
    pub engine: Vec<f64>,
}

impl Impact {
    /// Engine coefficients for `v` in shares per day at `prices`.
    pub fn per_share(&self, prices: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            prices.len() == self.engine.len(),
            Validation,
            "need {} prices",
            self.engine.len()
        );
        Ok(self
            .engine
            .iter()
            .zip(prices)
            .map(|(l, p)| l * p * p)
            .collect())
    }

    /// Assets whose planned dollar trade exceeds the participation limit.
    /// Each one is logged as a warning.
    pub fn participation_warnings(&self, dollars: &[f64]) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, (&x, &a)) in dollars.iter().zip(&self.advp).enumerate() {
            let rate = x.abs() / a;
            if rate > PARTICIPATION_LIMIT {
                log::warn!(
                    "asset {i}: planned trade is {:.1}% of daily volume; linear impact is unreliable above {:.0}%",
                    100.0 * rate,
                    100.0 * PARTICIPATION_LIMIT
                );
                out.push(i);
            }
        }
        out
    }
}

/// `λⁱ = 20e-4 / (0.01 advpⁱ)`, doubled for the engine.
pub fn calibrate_impact(advp: &[f64]) -> Result<Impact> {
    ensure!(!advp.is_empty(), Validation, "advp is empty");
    for (i, &a) in advp.iter().enumerate() {
        ensure!(
            a > 0.0 && a.is_finite(),
            Validation,
            "advp[{i}] must be positive, got {a}"
        );
    }
    let quoted: Vec<f64> = advp
        .iter()
        .map(|a| IMPACT_AT_ONE_PERCENT / (0.01 * a))
        .collect();
    Ok(Impact {
        advp: advp.to_vec(),
        engine: quoted.iter().map(|l| 2.0 * l).collect(),
        quoted,
    })
}

/// Short leg that offsets the beta of `n1` shares of the first asset.
pub fn size_beta_neutral(n1: f64, prices: [f64; 2], betas: [f64; 2]) -> Result<f64> {
    let denom = prices[1] * betas[1];
    ensure!(
        denom != 0.0 && denom.is_finite(),
        Validation,
        "second price or beta is zero"
    );
    let n2 = -(n1 * prices[0] * betas[0] / denom).round();
    // avoid -0
    Ok(if n2 == 0.0 { 0.0 } else { n2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_sizing() {
        assert_eq!(
            size_beta_neutral(1000.0, [93.06, 105.985], [0.705, 1.276]).unwrap(),
            -485.0
        );
        assert_eq!(
            size_beta_neutral(1000.0, [93.06, 105.985], [0.0, 1.276]).unwrap(),
            0.0
        );
        assert!(size_beta_neutral(1000.0, [93.06, 0.0], [0.705, 1.276]).is_err());
    }

    #[test]
    fn quoted_coefficients() {
        let imp = calibrate_impact(&[1.16e9, 6.13e9]).unwrap();
        assert!((imp.quoted[0] - 2e-3 / 1.16e7).abs() < 1e-22);
        assert!((imp.quoted[0] - 1.7241e-10).abs() < 1e-14);
        assert!((imp.quoted[1] - 3.2626e-11).abs() < 1e-15);
        assert_eq!(imp.engine[1], 2.0 * imp.quoted[1]);
        assert!(calibrate_impact(&[0.0]).is_err());
        assert_eq!(imp.participation_warnings(&[0.06 * 1.16e9, 1.0]), vec![0]);
    }
}
