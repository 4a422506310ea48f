use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::physics::DriftModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftFitConfig {
    /// Points of the log grid over B·T, where T is the series span.
    pub grid_points: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    /// Gauss-Newton is started from at most this many grid minima.
    pub max_starts: usize,
    pub max_iter: usize,
    /// Relative step size that counts as converged.
    pub tolerance: f64,
    /// Number of blocks used by the trend and drift-free checks.
    pub blocks: usize,
}

impl Default for DriftFitConfig {
    fn default() -> Self {
        Self {
            grid_points: 40,
            grid_lo: 0.1,
            grid_hi: 1000.0,
            max_starts: 3,
            max_iter: 200,
            tolerance: 1e-9,
            blocks: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    pub model: DriftModel,
    /// No significant change over the series; A and B carry no information.
    pub drift_free: bool,
    /// The series covers at least 10 / B.
    pub span_ok: bool,
    pub rms: f64,
    pub iterations: usize,
}

/// Fits the relaxation curve to a resistance series recorded at constant
/// load, with `times` measured from the load onset.
///
/// Given B the curve is linear in its other three parameters, so every
/// grid value of B gets an exact linear fit; the best few grid minima then
/// seed a damped Gauss-Newton refinement of all four parameters.
pub fn fit_drift(times: &[f64], values: &[f64], cfg: &DriftFitConfig) -> Result<DriftFit, CalibrationError> {
    let n = times.len();
    if n != values.len() {
        return Err(CalibrationError::InsufficientData(format!(
            "{} times for {} values",
            n,
            values.len()
        )));
    }
    let blocks = cfg.blocks.max(2);
    if n < 4 * blocks {
        return Err(CalibrationError::InsufficientData(format!("{n} samples, need {}", 4 * blocks)));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times[0] < 0.0 {
        return Err(CalibrationError::InsufficientData("times must be non-negative and increasing".into()));
    }
    let span = times[n - 1];

    let trend = block_trend(values, blocks);
    if trend.change.abs() <= 4.0 * trend.tolerance {
        let mean = values.iter().sum::<f64>() / n as f64;
        let rms = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let b = 1.0 / span;
        return Ok(DriftFit {
            model: DriftModel {
                r0: mean,
                delta_r: 0.0,
                a: 0.0,
                b,
            },
            drift_free: true,
            span_ok: false,
            rms,
            iterations: 0,
        });
    }
    if let Some(i) = trend.reversal(4.0) {
        return Err(CalibrationError::NonMonotoneTrend { block: i });
    }

    let tau: Vec<f64> = times.iter().map(|t| t / span).collect();
    let y = DVector::from_column_slice(values);
    let y_scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);

    // profile over the grid
    let g = cfg.grid_points.max(3);
    let ratio = (cfg.grid_hi / cfg.grid_lo).ln();
    let grid: Vec<f64> = (0..g).map(|i| cfg.grid_lo * (ratio * i as f64 / (g - 1) as f64).exp()).collect();
    let profile: Vec<Option<(f64, [f64; 3])>> = grid.iter().map(|&beta| linear_fit(&tau, &y, beta)).collect();
    let mut minima: Vec<usize> = (0..g)
        .filter(|&i| {
            let Some((s, _)) = profile[i] else { return false };
            let left = i == 0 || profile[i - 1].is_none_or(|(l, _)| s <= l);
            let right = i + 1 == g || profile[i + 1].is_none_or(|(r, _)| s <= r);
            left && right
        })
        .collect();
    minima.sort_by(|&a, &b| profile[a].unwrap().0.total_cmp(&profile[b].unwrap().0));
    minima.truncate(cfg.max_starts.max(1));

    let mut best: Option<(f64, [f64; 4], usize)> = None;
    let mut best_any = f64::INFINITY;
    for &i in &minima {
        let (sse0, c) = profile[i].unwrap();
        best_any = best_any.min(sse0);
        let start = [c[0], c[1], c[2], grid[i]];
        if let Some((sse, p, iters)) = gauss_newton(&tau, &y, start, y_scale, cfg) {
            best_any = best_any.min(sse);
            if best.as_ref().is_none_or(|b| sse < b.0) {
                best = Some((sse, p, iters));
            }
        }
    }
    let Some((sse, p, iterations)) = best else {
        return Err(CalibrationError::NoConvergence {
            best_rms: (best_any / n as f64).sqrt(),
        });
    };
    let b = p[3] / span;
    let delta_r = p[0];
    let model = DriftModel {
        r0: p[2] + p[0],
        delta_r,
        a: p[1] / span - b * delta_r,
        b,
    };
    Ok(DriftFit {
        span_ok: b * span >= 10.0,
        model,
        drift_free: false,
        rms: (sse / n as f64).sqrt(),
        iterations,
    })
}

struct Trend {
    means: Vec<f64>,
    change: f64,
    /// Standard error of a difference of two block means.
    tolerance: f64,
}

impl Trend {
    fn reversal(&self, k: f64) -> Option<usize> {
        let dir = self.change.signum();
        self.means
            .windows(2)
            .position(|w| (w[1] - w[0]) * dir < -k * self.tolerance)
    }
}

fn block_trend(values: &[f64], blocks: usize) -> Trend {
    let size = values.len() / blocks;
    let means: Vec<f64> = (0..blocks)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    // sample noise from successive differences, insensitive to slow trends
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let dm = d.iter().sum::<f64>() / d.len() as f64;
    let sigma = (d.iter().map(|x| (x - dm).powi(2)).sum::<f64>() / d.len() as f64 / 2.0).sqrt();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Trend {
        change: means[blocks - 1] - means[0],
        tolerance: (sigma * (2.0 / size as f64).sqrt()).max(1e-12 * scale),
        means,
    }
}

fn basis(tau: f64, beta: f64) -> [f64; 3] {
    let e = (-beta * tau).exp();
    [e, tau * e, 1.0]
}

/// Exact least squares for `c0·e + c1·τe + c2` at fixed β.
fn linear_fit(tau: &[f64], y: &DVector<f64>, beta: f64) -> Option<(f64, [f64; 3])> {
    let m = DMatrix::from_fn(tau.len(), 3, |i, j| basis(tau[i], beta)[j]);
    let c = solve_scaled(m.clone(), y)?;
    let r = y - m * &c;
    Some((r.norm_squared(), [c[0], c[1], c[2]]))
}

/// Least squares with column equilibration.
fn solve_scaled(mut m: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale: Vec<f64> = (0..m.ncols()).map(|j| m.column(j).norm().max(f64::MIN_POSITIVE)).collect();
    for (j, s) in scale.iter().enumerate() {
        m.column_mut(j).unscale_mut(*s);
    }
    let mut x = m.svd(true, true).solve(rhs, 1e-14).ok()?;
    for (xi, s) in x.iter_mut().zip(&scale) {
        *xi /= s;
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn model_at(p: &[f64; 4], tau: f64) -> f64 {
    let e = (-p[3] * tau).exp();
    (p[0] + p[1] * tau) * e + p[2]
}

fn sse(tau: &[f64], y: &DVector<f64>, p: &[f64; 4]) -> f64 {
    tau.iter().zip(y.iter()).map(|(&t, &v)| (v - model_at(p, t)).powi(2)).sum()
}

fn gauss_newton(
    tau: &[f64],
    y: &DVector<f64>,
    mut p: [f64; 4],
    y_scale: f64,
    cfg: &DriftFitConfig,
) -> Option<(f64, [f64; 4], usize)> {
    let n = tau.len();
    let mut cur = sse(tau, y, &p);
    for iter in 1..=cfg.max_iter {
        let mut jac = DMatrix::zeros(n, 4);
        let mut r = DVector::zeros(n);
        for (i, &t) in tau.iter().enumerate() {
            let e = (-p[3] * t).exp();
            jac[(i, 0)] = e;
            jac[(i, 1)] = t * e;
            jac[(i, 2)] = 1.0;
            jac[(i, 3)] = -t * (p[0] + p[1] * t) * e;
            r[i] = y[i] - ((p[0] + p[1] * t) * e + p[2]);
        }
        let step = solve_scaled(jac, &r)?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = [
                p[0] + lambda * step[0],
                p[1] + lambda * step[1],
                p[2] + lambda * step[2],
                p[3] + lambda * step[3],
            ];
            if trial[3] > 0.0 {
                let s = sse(tau, y, &trial);
                if s <= cur {
                    accepted = Some((trial, s));
                    break;
                }
            }
            lambda *= 0.5;
        }
        // relative size of the step in units where every parameter is O(1)
        let rel = |q: &[f64; 4], d: [f64; 4]| {
            let dn = (d[0] / y_scale).powi(2) + (d[1] / y_scale).powi(2) + (d[2] / y_scale).powi(2) + (d[3] / q[3]).powi(2);
            let qn = (q[0] / y_scale).powi(2) + (q[1] / y_scale).powi(2) + (q[2] / y_scale).powi(2) + 1.0;
            (dn / qn).sqrt()
        };
        let full = [step[0], step[1], step[2], step[3]];
        match accepted {
            Some((trial, s)) => {
                let d = [trial[0] - p[0], trial[1] - p[1], trial[2] - p[2], trial[3] - p[3]];
                p = trial;
                cur = s;
                if rel(&p, d) < cfg.tolerance {
                    return Some((cur, p, iter));
                }
            }
            // No descent along the Gauss-Newton direction: stationary point.
            None if rel(&p, full) < 1e-6 => return Some((cur, p, iter)),
            None => return None,
        }
    }
    None
}
