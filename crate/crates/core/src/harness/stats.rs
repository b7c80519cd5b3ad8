//! Drift estimates and the paired tests used to compare arms.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::error::{ensure, Error, Result};

/// Least-squares slope of `y` on `t`. Zero for fewer than two points or a
/// degenerate time axis.
pub fn ols_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let tm = t[..n].iter().sum::<f64>() / n as f64;
    let ym = y[..n].iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for k in 0..n {
        let dt = t[k] - tm;
        sxy += dt * (y[k] - ym);
        sxx += dt * dt;
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub t: f64,
    /// H1: mean ≠ 0.
    pub p_two_sided: f64,
    /// H1: mean < 0.
    pub p_less: f64,
    /// H1: mean > 0.
    pub p_greater: f64,
}

/// One-sample t-test of mean zero. A sample with no spread gives t = 0 when
/// its mean is 0 and ±∞ otherwise.
pub fn one_sample_t(xs: &[f64]) -> Result<TTest> {
    let n = xs.len();
    ensure!(
        n >= 2,
        Validation,
        "t-test needs at least 2 observations, got {n}"
    );
    ensure!(
        xs.iter().all(|x| x.is_finite()),
        Numeric,
        "t-test sample is not finite"
    );
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = if sd > 0.0 {
        mean / (sd / (n as f64).sqrt())
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    let dist =
        StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    let below = if t.is_finite() {
        dist.cdf(t)
    } else if t > 0.0 {
        1.0
    } else {
        0.0
    };
    let above = if t.is_finite() {
        dist.sf(t)
    } else if t > 0.0 {
        0.0
    } else {
        1.0
    };
    Ok(TTest {
        n,
        mean,
        sd,
        t,
        p_two_sided: (2.0 * below.min(above)).min(1.0),
        p_less: below,
        p_greater: above,
    })
}

/// Paired t-test on `a − b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    ensure!(
        a.len() == b.len(),
        Validation,
        "paired samples differ in length ({} vs {})",
        a.len(),
        b.len()
    );
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    one_sample_t(&diff)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    /// P(at least `wins` wins | no effect), ties dropped.
    pub p_greater: f64,
}

/// One-sided sign test that `a` tends to exceed `b`.
pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    ensure!(
        a.len() == b.len(),
        Validation,
        "paired samples differ in length ({} vs {})",
        a.len(),
        b.len()
    );
    let (mut wins, mut losses, mut ties) = (0u64, 0u64, 0u64);
    for (x, y) in a.iter().zip(b) {
        if x > y {
            wins += 1;
        } else if x < y {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins + losses;
    let p_greater = if n == 0 || wins == 0 {
        1.0
    } else {
        Binomial::new(0.5, n)
            .map_err(|e| Error::Numeric(e.to_string()))?
            .sf(wins - 1)
    };
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_greater,
    })
}
