//! Dormand-Prince 5(4) integrator with step-size control and cubic Hermite
//! dense output. Integration may run backward (`t1 < t0`).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on |h|; keeps the Hermite interpolant accurate.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

/// Accepted steps of an integration, sorted in the direction of travel.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub dys: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.ys.first().map_or(0, Vec::len)
    }

    /// Cubic Hermite interpolation between accepted steps. Times outside the
    /// integrated range are clamped to the nearest end.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.ts.len();
        let forward = self.ts[n - 1] >= self.ts[0];
        // index k with t between ts[k] and ts[k+1]
        let pos = |x: f64| if forward { x } else { -x };
        let tt = pos(t);
        if tt <= pos(self.ts[0]) {
            return self.ys[0].clone();
        }
        if tt >= pos(self.ts[n - 1]) {
            return self.ys[n - 1].clone();
        }
        let k = self
            .ts
            .partition_point(|&s| pos(s) <= tt)
            .saturating_sub(1)
            .min(n - 2);
        let (t0, t1) = (self.ts[k], self.ts[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (0..self.dim())
            .map(|i| {
                h00 * self.ys[k][i]
                    + h10 * h * self.dys[k][i]
                    + h01 * self.ys[k + 1][i]
                    + h11 * h * self.dys[k + 1][i]
            })
            .collect()
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `(t0, y0)` to `t1`.
pub fn integrate<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, opts: OdeOptions) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    f(t, &y, &mut k[0]);
    let mut traj = Trajectory {
        ts: vec![t],
        ys: vec![y.clone()],
        dys: vec![k[0].clone()],
    };
    if span == 0.0 {
        return Ok(traj);
    }
    let mut h = (span * 1e-3).min(opts.max_step);
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut steps = 0usize;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Numeric(format!(
                "ode: step budget exhausted at t = {t}"
            )));
        }
        let remaining = (t1 - t).abs();
        if h > remaining {
            h = remaining;
        }
        let hs = h * dir;
        for stage in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(stage) {
                    acc += hs * A[stage][j] * kj[i];
                }
                tmp[i] = acc;
            }
            let (head, tail) = k.split_at_mut(stage);
            let _ = head;
            f(t + C[stage] * hs, &tmp, &mut tail[0]);
        }
        // 5th-order solution equals the last stage input (FSAL)
        let mut err_norm = 0.0f64;
        for i in 0..n {
            let mut hi = y[i];
            let mut lo = y[i];
            for s in 0..7 {
                hi += hs * B5[s] * k[s][i];
                lo += hs * B4[s] * k[s][i];
            }
            y_new[i] = hi;
            let scale = opts.atol + opts.rtol * y[i].abs().max(hi.abs());
            err_norm = err_norm.max(((hi - lo) / scale).abs());
        }
        if !err_norm.is_finite() {
            return Err(Error::Numeric(format!("ode: non-finite state at t = {t}")));
        }
        if err_norm <= 1.0 {
            t = if (t1 - (t + hs)) * dir <= 0.0 {
                t1
            } else {
                t + hs
            };
            y.copy_from_slice(&y_new);
            let last = k[6].clone();
            k[0].copy_from_slice(&last);
            traj.ts.push(t);
            traj.ys.push(y.clone());
            traj.dys.push(last);
        }
        let factor = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * factor).min(opts.max_step);
        if h < 1e-14 * span {
            return Err(Error::Numeric(format!(
                "ode: step size underflow at t = {t}"
            )));
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_forward_and_backward() {
        let traj = integrate(
            |_, y, dy| dy[0] = -2.0 * y[0],
            0.0,
            &[1.0],
            1.5,
            OdeOptions::default(),
        )
        .unwrap();
        let end = traj.ys.last().unwrap()[0];
        assert!((end - (-3.0f64).exp()).abs() < 1e-8);
        let mid = traj.eval(0.7)[0];
        assert!((mid - (-1.4f64).exp()).abs() < 1e-6);

        let back = integrate(
            |_, y, dy| dy[0] = y[0],
            1.0,
            &[1.0],
            0.0,
            OdeOptions::default(),
        )
        .unwrap();
        assert!((back.ys.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
        assert!((back.eval(0.5)[0] - (-0.5f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let opts = OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            ..Default::default()
        };
        let traj = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            10.0,
            opts,
        )
        .unwrap();
        let y = traj.ys.last().unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-8);
        assert!((y[1] + 10f64.sin()).abs() < 1e-8);
    }
}
