use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Actions are kept this far inside the open box; `tanh` rounds to ±1 past |u| ≈ 19.
pub const ACTION_LIMIT: f64 = 1.0 - 1e-7;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// A reparameterized draw from a tanh-squashed diagonal Gaussian.
#[derive(Debug, Clone)]
pub struct SquashedSample {
    pub action: Matrix,
    pub log_prob: Vec<f64>,
    std: Matrix,
    noise: Matrix,
    /// 1 where the raw log-std was inside the clamp range.
    pass: Matrix,
}

/// Splits a `[mean, log_std]` head output (`B × 2d`) and draws
/// `a = tanh(mean + std * noise)` along with `log π(a)`.
pub fn gaussian_policy_sample(raw: &Matrix, noise: &Matrix) -> Result<SquashedSample> {
    if raw.cols % 2 != 0 || noise.cols * 2 != raw.cols || noise.rows != raw.rows {
        return Err(Error::dims("policy head", 2 * noise.cols, raw.cols));
    }
    let (b, d) = (noise.rows, noise.cols);
    let mut action = Matrix::zeros(b, d);
    let mut std = Matrix::zeros(b, d);
    let mut pass = Matrix::zeros(b, d);
    let mut log_prob = vec![0.0; b];
    for r in 0..b {
        let row = raw.row(r);
        let mut lp = 0.0;
        for i in 0..d {
            let raw_ls = row[d + i];
            let ls = raw_ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let s = ls.exp();
            let e = noise.get(r, i);
            let u = row[i] + s * e;
            action.set(r, i, u.tanh().clamp(-ACTION_LIMIT, ACTION_LIMIT));
            std.set(r, i, s);
            pass.set(r, i, if raw_ls == ls { 1.0 } else { 0.0 });
            lp += -0.5 * e * e - ls - HALF_LOG_2PI - log_one_minus_tanh_sq(u);
        }
        log_prob[r] = lp;
    }
    Ok(SquashedSample {
        action,
        log_prob,
        std,
        noise: noise.clone(),
        pass,
    })
}

impl SquashedSample {
    /// Gradient with respect to the raw head output, given upstream
    /// gradients on the action and on the log-probability.
    pub fn backward(&self, d_action: &Matrix, d_log_prob: &[f64]) -> Result<Matrix> {
        let (b, d) = (self.action.rows, self.action.cols);
        if d_action.rows != b || d_action.cols != d || d_log_prob.len() != b {
            return Err(Error::dims("squashed sample gradient", b * d, d_action.data.len()));
        }
        let mut g = Matrix::zeros(b, 2 * d);
        for r in 0..b {
            let dl = d_log_prob[r];
            for i in 0..d {
                let a = self.action.get(r, i);
                let se = self.std.get(r, i) * self.noise.get(r, i);
                let da = d_action.get(r, i);
                // d tanh(u)/du = 1 - a², d[-log(1 - tanh²u)]/du = 2a
                let du = da * (1.0 - a * a) + dl * 2.0 * a;
                g.set(r, i, du);
                g.set(r, d + i, (du * se - dl) * self.pass.get(r, i));
            }
        }
        Ok(g)
    }
}

/// `tanh(mean)`, the deterministic evaluation action.
pub fn deterministic_action(raw: &Matrix) -> Matrix {
    let d = raw.cols / 2;
    let mut out = raw.columns(0, d);
    out.data.iter_mut().for_each(|v| *v = v.tanh().clamp(-ACTION_LIMIT, ACTION_LIMIT));
    out
}

/// Density of a given squashed action; `action` must lie in (-1, 1).
pub fn log_prob_of_action(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let u = a.atanh();
            let e = (u - m) / ls.exp();
            -0.5 * e * e - ls - HALF_LOG_2PI - log_one_minus_tanh_sq(u)
        })
        .sum()
}
