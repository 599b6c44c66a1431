//! Asymptotic mean integrated squared error of an equal-weight,
//! equal-bandwidth Gaussian mixture density estimate.

use core::f64::consts::PI;

use crate::error::{Error, Result};

/// Kernel count and curvature `R = ‖p''‖²` (squared L2 norm of the second
/// derivative of the target density).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmiseInputs {
    count: f64,
    curvature: f64,
}

impl AmiseInputs {
    pub fn new(count: usize, curvature: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig("kernel count must be at least 1"));
        }
        if !(curvature > 0.0) || !curvature.is_finite() {
            return Err(Error::InvalidConfig("curvature must be positive"));
        }
        Ok(AmiseInputs { count: count as f64, curvature })
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }
}

/// `δ²R/4 + 1/(2m√(πδ))`.
pub fn amise(delta: f64, inputs: &AmiseInputs) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidBandwidth(delta));
    }
    let bias = 0.25 * delta * delta * inputs.curvature;
    let variance = 1.0 / (2.0 * inputs.count * libm::sqrt(PI * delta));
    Ok(bias + variance)
}

/// Minimiser of [`amise`]: `δ* = (1 / (2m√π R))^{2/5}`.
pub fn amise_optimal_delta(inputs: &AmiseInputs) -> f64 {
    let inner = 1.0 / (2.0 * inputs.count * libm::sqrt(PI) * inputs.curvature);
    libm::pow(inner, 0.4)
}

/// Closed-form minimum `m^{-4/5} · 5 R^{1/5} / (4^{7/5} π^{2/5})`.
///
/// `R^{1/5}` is `‖p''‖^{2/5}`; the kernel count stands in for the sample
/// size in the usual kernel-density form.
pub fn amise_minimum(inputs: &AmiseInputs) -> f64 {
    libm::pow(inputs.count, -0.8) * 5.0 * libm::pow(inputs.curvature, 0.2)
        / (libm::pow(4.0, 1.4) * libm::pow(PI, 0.4))
}
