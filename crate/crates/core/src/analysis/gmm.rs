use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::log_sum_exp;

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 500;
pub const TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

impl GmmComponent {
    fn log_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (2.0 * std::f64::consts::PI * self.variance).ln() - d * d / (2.0 * self.variance)
    }
}

/// A one-dimensional Gaussian mixture fitted by EM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    /// Sorted by mean.
    pub components: Vec<GmmComponent>,
    /// Data log-likelihood after each EM iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

impl GmmFit {
    pub fn pdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.weight * c.log_pdf(x).exp()).sum()
    }

    pub fn means(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.mean).collect()
    }

    pub fn final_log_likelihood(&self) -> f64 {
        self.log_likelihood.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits `k` components. Means start at the `(i + 0.5) / k` quantiles, all
/// variances at the data variance and weights uniform, so the fit is a
/// deterministic function of the data.
pub fn fit_gmm(data: &[f64], k: usize) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::Invalid("GMM needs at least one component".into()));
    }
    if data.len() < k {
        return Err(Error::Data(format!("{} points cannot support {k} components", data.len())));
    }
    if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value {bad} in GMM data")));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR);
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut comps: Vec<GmmComponent> = (0..k)
        .map(|i| GmmComponent {
            mean: quantile(&sorted, (i as f64 + 0.5) / k as f64),
            variance: var,
            weight: 1.0 / k as f64,
        })
        .collect();

    let mut history = Vec::new();
    let mut converged = false;
    let mut resp = vec![0.0; data.len() * k];
    for _ in 0..MAX_ITERATIONS {
        let mut ll = 0.0;
        let mut row = vec![0.0; k];
        for (i, &x) in data.iter().enumerate() {
            for (j, c) in comps.iter().enumerate() {
                row[j] = c.weight.ln() + c.log_pdf(x);
            }
            let lse = log_sum_exp(&row);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (row[j] - lse).exp();
            }
        }
        for (j, c) in comps.iter_mut().enumerate() {
            let nk: f64 = (0..data.len()).map(|i| resp[i * k + j]).sum();
            if nk <= 0.0 {
                continue;
            }
            let m = data.iter().enumerate().map(|(i, x)| resp[i * k + j] * x).sum::<f64>() / nk;
            let v = data
                .iter()
                .enumerate()
                .map(|(i, x)| resp[i * k + j] * (x - m).powi(2))
                .sum::<f64>()
                / nk;
            *c = GmmComponent {
                mean: m,
                variance: v.max(VARIANCE_FLOOR),
                weight: nk / n,
            };
        }
        let done = history.last().is_some_and(|prev: &f64| (ll - prev).abs() < TOLERANCE);
        history.push(ll);
        if done {
            converged = true;
            break;
        }
    }
    comps.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    Ok(GmmFit {
        components: comps,
        log_likelihood: history,
        converged,
    })
}
