//! Dormand–Prince 5(4) integrator with embedded error control.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps ({max_steps}) reached at t = {t}")]
    MaxSteps { t: f64, max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Step control. With `fixed_steps` set the integrator takes that many equal
/// fifth-order steps and skips error control, which makes the numerical flow
/// a smooth function of its initial data (useful under finite differencing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub max_step: Option<f64>,
    pub fixed_steps: Option<usize>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-12, max_steps: 100_000, max_step: None, fixed_steps: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OdeStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl OdeStats {
    pub fn add(&mut self, o: &OdeStats) {
        self.steps += o.steps;
        self.rejected += o.rejected;
        self.evaluations += o.evaluations;
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

type StepOut = (Vec<f64>, Vec<f64>, Vec<f64>);

/// One step; returns the fifth-order solution, the error estimate and the
/// derivative at the new point.
fn step<E, F>(f: &mut F, t: f64, y: &[f64], k1: &[f64], h: f64) -> Result<StepOut, E>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
{
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(k1.to_vec());
    for s in 1..7 {
        let mut ys = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..n {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k.push(f(t + C[s] * h, &ys)?);
    }
    let mut y5 = y.to_vec();
    let mut err = vec![0.0; n];
    for (s, ks) in k.iter().enumerate() {
        for i in 0..n {
            y5[i] += h * B[s] * ks[i];
            err[i] += h * (B[s] - B4[s]) * ks[i];
        }
    }
    let k7 = k.pop().unwrap();
    Ok((y5, err, k7))
}

/// Integrate `y' = f(t, y)` from `t0` to `t1 > t0`.
pub fn integrate<E, F>(mut f: F, t0: f64, t1: f64, y0: &[f64], opts: &OdeOptions) -> Result<(Vec<f64>, OdeStats), E>
where
    E: From<OdeError>,
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
{
    let mut stats = OdeStats::default();
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok((y0.to_vec(), stats));
    }
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k1 = f(t, &y)?;
    stats.evaluations += 1;

    if let Some(steps) = opts.fixed_steps {
        let steps = steps.max(1);
        let h = span / steps as f64;
        for s in 0..steps {
            let (y5, _, k7) = step(&mut f, t, &y, &k1, h)?;
            stats.evaluations += 6;
            stats.steps += 1;
            y = y5;
            k1 = k7;
            t = t0 + (s + 1) as f64 * h;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { t }.into());
            }
        }
        return Ok((y, stats));
    }

    let hmax = opts.max_step.unwrap_or(span).min(span);
    let mut h = (0.01 * span).min(hmax);
    loop {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(OdeError::MaxSteps { t, max_steps: opts.max_steps }.into());
        }
        let last = t + h >= t1 - 1e-14 * span;
        if last {
            h = t1 - t;
        }
        let (y5, err, k7) = step(&mut f, t, &y, &k1, h)?;
        stats.evaluations += 6;
        let mut acc = 0.0;
        for i in 0..y.len() {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        let en = (acc / y.len().max(1) as f64).sqrt();
        if !en.is_finite() || y5.iter().any(|v| !v.is_finite()) {
            if h <= 1e-14 * span {
                return Err(OdeError::NonFinite { t }.into());
            }
            h *= 0.25;
            stats.rejected += 1;
            continue;
        }
        let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
        if en <= 1.0 {
            stats.steps += 1;
            t = if last { t1 } else { t + h };
            y = y5;
            k1 = k7;
            if last {
                return Ok((y, stats));
            }
            h = (h * factor).min(hmax);
        } else {
            stats.rejected += 1;
            h *= factor.min(1.0);
            if h < 1e-14 * span.max(t.abs()) {
                return Err(OdeError::StepUnderflow { t, h }.into());
            }
        }
    }
}
