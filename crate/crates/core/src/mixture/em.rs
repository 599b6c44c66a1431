use alloc::vec;
use alloc::vec::Vec;

use super::{log_sum_exp, MixtureParams};
use crate::error::{Error, Result};
use crate::special::LN_SQRT_2PI;

/// Weight given to a component that lost all responsibility.
const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop when `|ΔLL| ≤ tol · |LL|`.
    pub tol: f64,
    pub sigma_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { max_iter: 500, tol: 1e-8, sigma_floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub params: MixtureParams,
    /// Total log-likelihood of the initial parameters and after every
    /// M-step; the last entry belongs to `params`.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

/// Maximum-likelihood mixture fit by expectation–maximisation.
///
/// Initialisation is deterministic: the sorted samples are cut into `m`
/// contiguous blocks of (nearly) equal size and each component starts at its
/// block's mean and population std with weight `1/m`. Sigmas are floored at
/// `config.sigma_floor` in every M-step.
pub fn em_fit(samples: &[f64], m: usize, config: &EmConfig) -> Result<EmFit> {
    if m == 0 {
        return Err(Error::InvalidConfig("kernel count must be at least 1"));
    }
    if samples.len() < m {
        return Err(Error::TooFewSamples { needed: m, got: samples.len() });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if !(config.sigma_floor > 0.0) {
        return Err(Error::InvalidConfig("sigma floor must be positive"));
    }

    let n = samples.len();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut weights = vec![1.0 / m as f64; m];
    let mut means = Vec::with_capacity(m);
    let mut sigmas = Vec::with_capacity(m);
    for k in 0..m {
        let block = &sorted[k * n / m..(k + 1) * n / m];
        let (mu, var) = moments(block.iter().map(|&x| (1.0, x)));
        means.push(mu);
        sigmas.push(libm::sqrt(var).max(config.sigma_floor));
    }

    let mut resp = vec![0.0; n * m];
    let mut history = Vec::new();
    let mut converged = false;
    for iter in 0..=config.max_iter {
        let ll = e_step(samples, &weights, &means, &sigmas, &mut resp);
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if (ll - prev).abs() <= config.tol * prev.abs() {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        if iter == config.max_iter {
            break;
        }

        for k in 0..m {
            let nk: f64 = (0..n).map(|i| resp[i * m + k]).sum();
            if nk <= 0.0 {
                weights[k] = WEIGHT_FLOOR;
                continue;
            }
            let (mu, var) = moments((0..n).map(|i| (resp[i * m + k], samples[i])));
            weights[k] = (nk / n as f64).max(WEIGHT_FLOOR);
            means[k] = mu;
            sigmas[k] = libm::sqrt(var).max(config.sigma_floor);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }

    Ok(EmFit {
        params: MixtureParams::new(weights, means, sigmas)?,
        log_likelihood: history,
        converged,
    })
}

/// Weighted mean and population variance, two-pass.
fn moments<I: Iterator<Item = (f64, f64)> + Clone>(pairs: I) -> (f64, f64) {
    let (sw, swx) = pairs.clone().fold((0.0, 0.0), |(sw, swx), (w, x)| (sw + w, swx + w * x));
    let mean = swx / sw;
    let var = pairs.map(|(w, x)| w * (x - mean) * (x - mean)).sum::<f64>() / sw;
    (mean, var)
}

fn e_step(samples: &[f64], weights: &[f64], means: &[f64], sigmas: &[f64], resp: &mut [f64]) -> f64 {
    let m = weights.len();
    let log_norm: Vec<f64> = (0..m)
        .map(|k| libm::log(weights[k]) - LN_SQRT_2PI - libm::log(sigmas[k]))
        .collect();
    let mut ll = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let row = &mut resp[i * m..(i + 1) * m];
        for k in 0..m {
            let z = (x - means[k]) / sigmas[k];
            row[k] = log_norm[k] - 0.5 * z * z;
        }
        let lse = log_sum_exp(row.iter().copied());
        for r in row.iter_mut() {
            *r = libm::exp(*r - lse);
        }
        ll += lse;
    }
    ll
}
