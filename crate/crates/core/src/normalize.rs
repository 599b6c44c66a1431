//! Affine standardisation of inputs and outputs.

use crate::data::{Dataset, OperatingPoint};
use crate::error::{Error, Result};

/// Lower bound applied to every fitted standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean/std of `u` and scalar mean/std of `y`.
///
/// Statistics are population moments (divide by `n`) over all `(u, y)`
/// pairs, so each condition is weighted by its number of cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub input_mean: [f64; 3],
    pub input_std: [f64; 3],
    pub output_mean: f64,
    pub output_std: f64,
}

impl Normalizer {
    /// Identity transform.
    pub fn identity() -> Self {
        Normalizer {
            input_mean: [0.0; 3],
            input_std: [1.0; 3],
            output_mean: 0.0,
            output_std: 1.0,
        }
    }

    /// Reassembles a normalizer from stored statistics.
    pub fn from_parts(
        input_mean: [f64; 3],
        input_std: [f64; 3],
        output_mean: f64,
        output_std: f64,
    ) -> Result<Self> {
        let finite = input_mean.iter().chain(&input_std).all(|v| v.is_finite())
            && output_mean.is_finite()
            && output_std.is_finite();
        if !finite || input_std.iter().any(|&s| s < STD_FLOOR) || output_std < STD_FLOOR {
            return Err(Error::InvalidModel("normalizer statistics"));
        }
        Ok(Normalizer { input_mean, input_std, output_mean, output_std })
    }

    pub fn normalize_input(&self, u: &OperatingPoint) -> [f64; 3] {
        let raw = u.to_array();
        core::array::from_fn(|d| (raw[d] - self.input_mean[d]) / self.input_std[d])
    }

    pub fn denormalize_input(&self, x: &[f64; 3]) -> [f64; 3] {
        core::array::from_fn(|d| x[d] * self.input_std[d] + self.input_mean[d])
    }

    pub fn normalize_output(&self, y: f64) -> f64 {
        (y - self.output_mean) / self.output_std
    }

    pub fn denormalize_output(&self, z: f64) -> f64 {
        z * self.output_std + self.output_mean
    }
}

/// Fits a [`Normalizer`] to the training pairs of `train`.
pub fn fit_normalizer(train: &Dataset) -> Result<Normalizer> {
    let n = train.n_samples();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let nf = n as f64;

    let mut in_sum = [0.0; 3];
    let mut out_sum = 0.0;
    for (u, y) in train.pairs() {
        let x = u.to_array();
        for d in 0..3 {
            in_sum[d] += x[d];
        }
        out_sum += y;
    }
    let input_mean = in_sum.map(|s| s / nf);
    let output_mean = out_sum / nf;

    let mut in_ss = [0.0; 3];
    let mut out_ss = 0.0;
    for (u, y) in train.pairs() {
        let x = u.to_array();
        for d in 0..3 {
            let dx = x[d] - input_mean[d];
            in_ss[d] += dx * dx;
        }
        out_ss += (y - output_mean) * (y - output_mean);
    }
    let floor = |ss: f64| libm::sqrt(ss / nf).max(STD_FLOOR);

    Ok(Normalizer {
        input_mean,
        input_std: in_ss.map(floor),
        output_mean,
        output_std: floor(out_ss),
    })
}
