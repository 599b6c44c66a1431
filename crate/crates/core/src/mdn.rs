//! Mixture density network: a tanh feed-forward network whose `3m` outputs
//! parameterise an `m`-kernel Gaussian mixture over standardised knock
//! intensity.
//!
//! Parameters are held in one flat vector. The canonical order, used by
//! [`MdnModel::params`], [`MdnModel::gradient`] and the model file, is layer
//! by layer from the input side; within a layer the weight matrix comes
//! first in row-major `[output][input]` order, followed by the biases.
//!
//! The output layer is split as `[a_w (m) | a_μ (m) | a_σ (m)]` and mapped to
//! the mixture by
//!
//! ```text
//! w = softmax(a_w)        μ_z = a_μ        σ_z = exp(a_σ) + sigma_floor
//! μ = μ_z · std_y + mean_y                 σ = σ_z · std_y
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, OperatingPoint};
use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::normalize::{fit_normalizer, Normalizer};
use crate::rng::RandomStream;
use crate::special::LN_SQRT_2PI;

/// `a_σ` is clamped to this range before exponentiation.
const LOG_SIGMA_LIMIT: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MdnModel {
    /// Layer widths from input (3) to head (3m).
    widths: Vec<usize>,
    kernel_count: usize,
    params: Vec<f64>,
    normalizer: Normalizer,
    sigma_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// The step size follows a cosine from `learning_rate` in the first epoch
    /// down to `learning_rate · final_lr_fraction` in the last; 1 keeps it
    /// constant.
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Floor added to `σ_z`, in standardised output units.
    pub sigma_floor: f64,
    pub hidden_sizes: Vec<usize>,
    pub kernel_count: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            sigma_floor: 1e-6,
            hidden_sizes: vec![32, 32],
            kernel_count: 3,
        }
    }
}

impl TrainingConfig {
    /// Step size used throughout epoch `epoch` (0-based).
    pub fn epoch_learning_rate(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 || self.final_lr_fraction == 1.0 {
            return self.learning_rate;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        let f = self.final_lr_fraction;
        self.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive"));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::InvalidConfig("final learning-rate fraction must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("moment decay rates must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive"));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::InvalidConfig("sigma floor must be positive"));
        }
        if self.kernel_count == 0 {
            return Err(Error::InvalidConfig("kernel count must be at least 1"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidConfig("hidden layers must be non-empty"));
        }
        Ok(())
    }
}

/// Mean training NLL per epoch (knock-intensity units), and optionally the
/// NLL of a held-out set after each epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub held_out: Option<Vec<f64>>,
}

/// Reusable per-sample buffers for forward and backward passes.
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl MdnModel {
    /// Model with every weight and bias zero.
    pub fn zeros(
        hidden_sizes: &[usize],
        kernel_count: usize,
        normalizer: Normalizer,
        sigma_floor: f64,
    ) -> Result<Self> {
        if kernel_count == 0 {
            return Err(Error::InvalidModel("kernel count must be at least 1"));
        }
        if hidden_sizes.contains(&0) {
            return Err(Error::InvalidModel("hidden layers must be non-empty"));
        }
        if !(sigma_floor > 0.0) || !sigma_floor.is_finite() {
            return Err(Error::InvalidModel("sigma floor must be positive"));
        }
        let mut widths = vec![OperatingPoint::DIM];
        widths.extend_from_slice(hidden_sizes);
        widths.push(3 * kernel_count);
        let n = widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(MdnModel {
            widths,
            kernel_count,
            params: vec![0.0; n],
            normalizer,
            sigma_floor,
        })
    }

    /// Glorot-uniform weights `U(±√(6/(fan_in+fan_out)))`, zero biases,
    /// drawn layer by layer in canonical order.
    pub fn init(
        hidden_sizes: &[usize],
        kernel_count: usize,
        normalizer: Normalizer,
        sigma_floor: f64,
        rng: &mut RandomStream,
    ) -> Result<Self> {
        let mut model = Self::zeros(hidden_sizes, kernel_count, normalizer, sigma_floor)?;
        let mut offset = 0;
        for l in 0..model.n_layers() {
            let (fan_in, fan_out) = (model.widths[l], model.widths[l + 1]);
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for p in &mut model.params[offset..offset + fan_in * fan_out] {
                *p = rng.uniform_in(-limit, limit);
            }
            offset += fan_out * (fan_in + 1);
        }
        Ok(model)
    }

    /// Rebuilds a model from its stored parts; `params` in canonical order.
    pub fn from_parts(
        hidden_sizes: &[usize],
        kernel_count: usize,
        normalizer: Normalizer,
        sigma_floor: f64,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeros(hidden_sizes, kernel_count, normalizer, sigma_floor)?;
        model.set_params(&params)?;
        Ok(model)
    }

    pub fn kernel_count(&self) -> usize {
        self.kernel_count
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::InvalidModel("parameter count does not match architecture"));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn workspace(&self) -> Workspace {
        let widest = *self.widths.iter().max().unwrap_or(&0);
        Workspace {
            acts: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
            delta: Vec::with_capacity(widest),
            delta_prev: Vec::with_capacity(widest),
        }
    }

    /// Runs the network on a standardised input; the head pre-activations
    /// end up in `ws.acts.last()`.
    fn propagate(&self, x: &[f64; 3], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        let last = self.n_layers() - 1;
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_out * (n_in + 1)];
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let input = &head[l];
            let output = &mut tail[0];
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let z = b[j] + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>();
                output[j] = if l == last { z } else { libm::tanh(z) };
            }
            offset += n_out * (n_in + 1);
        }
    }

    /// Raw `3m` head outputs for an operating point.
    pub fn head_outputs(&self, u: &OperatingPoint) -> Vec<f64> {
        let mut ws = self.workspace();
        self.propagate(&self.normalizer.normalize_input(u), &mut ws);
        ws.acts.pop().unwrap_or_default()
    }

    /// Mixture parameters at `u`, in knock-intensity units.
    pub fn forward(&self, u: &OperatingPoint) -> Result<MixtureParams> {
        if !u.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        head_params(&self.head_outputs(u), &self.normalizer, self.sigma_floor)
    }

    /// `-(1/n) Σ log p̂(y_i | u_i)` in knock-intensity units.
    pub fn nll(&self, batch: &[(OperatingPoint, f64)]) -> Result<f64> {
        let prepared = self.prepare(batch)?;
        let mut ws = self.workspace();
        let total: f64 = prepared.iter().map(|(x, z)| self.sample_loss(x, *z, &mut ws)).sum();
        Ok(total / prepared.len() as f64 + libm::log(self.normalizer.output_std))
    }

    /// Exact gradient of [`MdnModel::nll`] in canonical parameter order.
    pub fn gradient(&self, batch: &[(OperatingPoint, f64)]) -> Result<Vec<f64>> {
        let prepared = self.prepare(batch)?;
        let mut grad = vec![0.0; self.params.len()];
        self.loss_and_gradient(&prepared, &mut grad, &mut self.workspace());
        Ok(grad)
    }

    /// Mixture CDF at `u` over an ascending grid.
    pub fn predict_cdf(&self, u: &OperatingPoint, grid: &[f64]) -> Result<Vec<f64>> {
        if grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::UnsortedGrid);
        }
        let params = self.forward(u)?;
        Ok(grid.iter().map(|&y| params.cdf(y)).collect())
    }

    pub fn predict_pdf(&self, u: &OperatingPoint, grid: &[f64]) -> Result<Vec<f64>> {
        let params = self.forward(u)?;
        Ok(grid.iter().map(|&y| params.pdf(y)).collect())
    }

    fn prepare(&self, batch: &[(OperatingPoint, f64)]) -> Result<Vec<([f64; 3], f64)>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        batch
            .iter()
            .map(|(u, y)| {
                if !y.is_finite() {
                    return Err(Error::NonFiniteInput);
                }
                Ok((self.normalizer.normalize_input(u), self.normalizer.normalize_output(*y)))
            })
            .collect()
    }

    /// `-log p_z(z | x)` for one standardised sample.
    fn sample_loss(&self, x: &[f64; 3], z: f64, ws: &mut Workspace) -> f64 {
        self.propagate(x, ws);
        let m = self.kernel_count;
        let out = &ws.acts[self.n_layers()];
        let log_w = log_softmax(&out[..m]);
        let terms = (0..m).map(|k| {
            let sigma = sigma_of(out[2 * m + k], self.sigma_floor);
            let r = (z - out[m + k]) / sigma;
            log_w[k] - LN_SQRT_2PI - libm::log(sigma) - 0.5 * r * r
        });
        -crate::mixture::log_sum_exp(terms.collect::<Vec<_>>().into_iter())
    }

    /// Accumulates the mean-loss gradient of `batch` into `grad` (which is
    /// overwritten) and returns the mean standardised-space loss.
    fn loss_and_gradient(&self, batch: &[([f64; 3], f64)], grad: &mut [f64], ws: &mut Workspace) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let m = self.kernel_count;
        let n_layers = self.n_layers();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut log_terms = vec![0.0; m];

        for (x, z) in batch {
            self.propagate(x, ws);
            let out = &ws.acts[n_layers];

            // head: loss = -lse_k(log w_k + log N(z; μ_k, σ_k))
            let log_w = log_softmax(&out[..m]);
            for k in 0..m {
                let sigma = sigma_of(out[2 * m + k], self.sigma_floor);
                let r = (z - out[m + k]) / sigma;
                log_terms[k] = log_w[k] - LN_SQRT_2PI - libm::log(sigma) - 0.5 * r * r;
            }
            let lse = crate::mixture::log_sum_exp(log_terms.iter().copied());
            total -= lse;

            ws.delta.clear();
            ws.delta.resize(3 * m, 0.0);
            for k in 0..m {
                let gamma = libm::exp(log_terms[k] - lse);
                let w = libm::exp(log_w[k]);
                let a_s = out[2 * m + k];
                let sigma = sigma_of(a_s, self.sigma_floor);
                let diff = z - out[m + k];
                ws.delta[k] = (w - gamma) * scale;
                ws.delta[m + k] = -gamma * diff / (sigma * sigma) * scale;
                let dsigma = if a_s.abs() < LOG_SIGMA_LIMIT { libm::exp(a_s) } else { 0.0 };
                ws.delta[2 * m + k] =
                    -gamma * (diff * diff / (sigma * sigma * sigma) - 1.0 / sigma) * dsigma * scale;
            }

            // backward through the layers
            let mut offset = self.params.len();
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
                offset -= n_out * (n_in + 1);
                let input = &ws.acts[l];
                let (gw, gb) = grad[offset..offset + n_out * (n_in + 1)].split_at_mut(n_in * n_out);
                for j in 0..n_out {
                    let d = ws.delta[j];
                    gb[j] += d;
                    for (g, a) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if l > 0 {
                    let w = &self.params[offset..offset + n_in * n_out];
                    ws.delta_prev.clear();
                    ws.delta_prev.resize(n_in, 0.0);
                    for j in 0..n_out {
                        let d = ws.delta[j];
                        for (p, wv) in ws.delta_prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                            *p += d * wv;
                        }
                    }
                    // tanh' = 1 - tanh²
                    for (p, a) in ws.delta_prev.iter_mut().zip(input) {
                        *p *= 1.0 - a * a;
                    }
                    core::mem::swap(&mut ws.delta, &mut ws.delta_prev);
                }
            }
        }
        total * scale
    }
}

fn sigma_of(a: f64, floor: f64) -> f64 {
    libm::exp(a.clamp(-LOG_SIGMA_LIMIT, LOG_SIGMA_LIMIT)) + floor
}

fn log_softmax(a: &[f64]) -> Vec<f64> {
    let lse = crate::mixture::log_sum_exp(a.iter().copied());
    a.iter().map(|v| v - lse).collect()
}

/// Maps raw head outputs to mixture parameters in knock-intensity units.
pub fn head_params(raw: &[f64], normalizer: &Normalizer, sigma_floor: f64) -> Result<MixtureParams> {
    if raw.is_empty() || !raw.len().is_multiple_of(3) {
        return Err(Error::InvalidModel("head width must be a positive multiple of 3"));
    }
    let m = raw.len() / 3;
    let mut weights: Vec<f64> = log_softmax(&raw[..m])
        .into_iter()
        .map(|lw| libm::exp(lw).max(f64::MIN_POSITIVE))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let means = raw[m..2 * m]
        .iter()
        .map(|&mu| normalizer.denormalize_output(mu))
        .collect();
    let sigmas = raw[2 * m..]
        .iter()
        .map(|&a| sigma_of(a, sigma_floor) * normalizer.output_std)
        .collect();
    MixtureParams::new(weights, means, sigmas)
}

/// Trains a fresh model on `data`; see [`train_monitored`].
pub fn train(data: &Dataset, config: &TrainingConfig, rng: &mut RandomStream) -> Result<(MdnModel, LossHistory)> {
    train_monitored(data, config, rng, None)
}

/// Fits the normaliser to `data`, initialises the network from `rng`, then
/// runs `config.epochs` epochs of mini-batch Adam on the mean NLL, with the
/// step size of [`TrainingConfig::epoch_learning_rate`]. Each epoch
/// reshuffles the samples with `rng`. The recorded training loss is the
/// sample-weighted mean of the mini-batch losses seen during the epoch.
pub fn train_monitored(
    data: &Dataset,
    config: &TrainingConfig,
    rng: &mut RandomStream,
    held_out: Option<&Dataset>,
) -> Result<(MdnModel, LossHistory)> {
    config.validate()?;
    let normalizer = fit_normalizer(data)?;
    let mut model = MdnModel::init(
        &config.hidden_sizes,
        config.kernel_count,
        normalizer,
        config.sigma_floor,
        rng,
    )?;
    let held_pairs: Option<Vec<(OperatingPoint, f64)>> = held_out.map(|d| d.pairs().collect());
    let mut history = LossHistory {
        train: Vec::with_capacity(config.epochs),
        held_out: held_pairs.as_ref().map(|_| Vec::with_capacity(config.epochs)),
    };

    let samples: Vec<([f64; 3], f64)> = data
        .pairs()
        .map(|(u, y)| (normalizer.normalize_input(&u), normalizer.normalize_output(y)))
        .collect();
    let log_std = libm::log(normalizer.output_std);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch: Vec<([f64; 3], f64)> = Vec::with_capacity(config.batch_size);
    let mut grad = vec![0.0; model.n_params()];
    let mut first_moment = vec![0.0; model.n_params()];
    let mut second_moment = vec![0.0; model.n_params()];
    let mut ws = model.workspace();
    let mut step = 0i32;

    for epoch in 0..config.epochs {
        let lr = config.epoch_learning_rate(epoch);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.index(i + 1));
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));
            let loss = model.loss_and_gradient(&batch, &mut grad, &mut ws);
            epoch_loss += loss * chunk.len() as f64;

            step += 1;
            let bias1 = 1.0 - libm::pow(config.beta1, step as f64);
            let bias2 = 1.0 - libm::pow(config.beta2, step as f64);
            for (((p, g), m1), m2) in model
                .params
                .iter_mut()
                .zip(&grad)
                .zip(&mut first_moment)
                .zip(&mut second_moment)
            {
                *m1 = config.beta1 * *m1 + (1.0 - config.beta1) * g;
                *m2 = config.beta2 * *m2 + (1.0 - config.beta2) * g * g;
                *p -= lr * (*m1 / bias1) / (libm::sqrt(*m2 / bias2) + config.epsilon);
            }
        }
        history.train.push(epoch_loss / samples.len() as f64 + log_std);
        if let (Some(pairs), Some(out)) = (&held_pairs, history.held_out.as_mut()) {
            out.push(model.nll(pairs)?);
        }
    }
    Ok((model, history))
}
