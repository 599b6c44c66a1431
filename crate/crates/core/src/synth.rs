//! Synthetic ground truth: a closed-form two-kernel conditional mixture over
//! the operating grid, standing in for measured engine data.
//!
//! With `s = (speed - 1400)/600`, `q = (pressure - 5.5)/2.5`, `f = fit/3`:
//!
//! ```text
//! w2 = 0.15 + 0.7·logistic(1.8f + 0.9q + 0.3s)      w1 = 1 - w2
//! μ1 = 0.5 + 0.10q + 0.05s                          σ1 = 0.15
//! μ2 = 1.5 + 0.8f + 0.5q + 0.2s                     σ2 = 0.35 + 0.10·logistic(f)
//! ```
//!
//! Advancing the injection timing moves weight to the upper kernel and
//! shifts it right, so the distribution moves right as timing advances.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, KnockRecord, OperatingPoint};
use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::rng::{derive_stream_id, RandomStream};

/// Leading stream-id component of synthetic record streams.
pub const SYNTH_STREAM_TAG: u64 = 0x5359_4e54;

/// Coefficients of the ground-truth family. [`Default`] holds the fixed
/// repository constants; other values exist for experimentation only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthFamily {
    pub speed_center: f64,
    pub speed_scale: f64,
    pub pressure_center: f64,
    pub pressure_scale: f64,
    pub fit_scale: f64,
    pub w2_base: f64,
    pub w2_span: f64,
    /// Logistic slopes of `w2` in `(f, q, s)`.
    pub w2_slopes: [f64; 3],
    pub mu1: [f64; 3],
    pub sigma1: f64,
    /// `μ2 = c + a_f f + a_q q + a_s s`, stored as `[c, a_f, a_q, a_s]`.
    pub mu2: [f64; 4],
    pub sigma2_base: f64,
    pub sigma2_span: f64,
}

impl Default for GroundTruthFamily {
    fn default() -> Self {
        GroundTruthFamily {
            speed_center: 1400.0,
            speed_scale: 600.0,
            pressure_center: 5.5,
            pressure_scale: 2.5,
            fit_scale: 3.0,
            w2_base: 0.15,
            w2_span: 0.7,
            w2_slopes: [1.8, 0.9, 0.3],
            mu1: [0.5, 0.10, 0.05],
            sigma1: 0.15,
            mu2: [1.5, 0.8, 0.5, 0.2],
            sigma2_base: 0.35,
            sigma2_span: 0.10,
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

impl GroundTruthFamily {
    pub fn params(&self, u: &OperatingPoint) -> Result<MixtureParams> {
        let s = (u.speed() - self.speed_center) / self.speed_scale;
        let q = (u.manifold_pressure() - self.pressure_center) / self.pressure_scale;
        let f = u.fit() / self.fit_scale;
        let [af, aq, as_] = self.w2_slopes;
        let w2 = self.w2_base + self.w2_span * logistic(af * f + aq * q + as_ * s);
        let mu1 = self.mu1[0] + self.mu1[1] * q + self.mu1[2] * s;
        let mu2 = self.mu2[0] + self.mu2[1] * f + self.mu2[2] * q + self.mu2[3] * s;
        let sigma2 = self.sigma2_base + self.sigma2_span * logistic(f);
        MixtureParams::new(vec![1.0 - w2, w2], vec![mu1, mu2], vec![self.sigma1, sigma2])
    }

    pub fn cdf(&self, u: &OperatingPoint, grid: &[f64]) -> Result<Vec<f64>> {
        if grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::UnsortedGrid);
        }
        let p = self.params(u)?;
        Ok(grid.iter().map(|&y| p.cdf(y)).collect())
    }
}

/// Ground-truth mixture at `u` with the default coefficients.
pub fn true_params(u: &OperatingPoint) -> Result<MixtureParams> {
    GroundTruthFamily::default().params(u)
}

/// Ground-truth CDF at `u` over an ascending grid.
pub fn true_cdf(u: &OperatingPoint, grid: &[f64]) -> Result<Vec<f64>> {
    GroundTruthFamily::default().cdf(u, grid)
}

/// Rectangular operating grid and recording protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub speeds: Vec<f64>,
    pub pressures: Vec<f64>,
    pub fits: Vec<f64>,
    pub cycles_per_record: usize,
    pub records_per_condition: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    /// 800–2000 rpm in 400 rpm steps, 3–8 bar, BL-4 to BL+2, three records
    /// of 300 cycles per point.
    fn default() -> Self {
        GridSpec {
            speeds: vec![800.0, 1200.0, 1600.0, 2000.0],
            pressures: (3..=8).map(f64::from).collect(),
            fits: (-4..=2).map(f64::from).collect(),
            cycles_per_record: 300,
            records_per_condition: 3,
            seed: 1,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.speeds.is_empty() || self.pressures.is_empty() || self.fits.is_empty() {
            return Err(Error::InvalidConfig("grid axes must be non-empty"));
        }
        if self.cycles_per_record == 0 || self.records_per_condition == 0 {
            return Err(Error::InvalidConfig("cycles and records must be at least 1"));
        }
        Ok(())
    }

    /// Grid points, speed-major then pressure then timing.
    pub fn conditions(&self) -> Result<Vec<OperatingPoint>> {
        let mut out = Vec::with_capacity(self.speeds.len() * self.pressures.len() * self.fits.len());
        for &speed in &self.speeds {
            for &p in &self.pressures {
                for &fit in &self.fits {
                    out.push(OperatingPoint::new(speed, p, fit)?);
                }
            }
        }
        Ok(out)
    }
}

/// Draws every record of every grid condition from the ground truth.
///
/// Record `r` of condition `c` uses stream
/// `derive_stream_id(&[SYNTH_STREAM_TAG, c, r])` of `spec.seed`, so the
/// output does not depend on generation order.
pub fn generate_dataset(spec: &GridSpec) -> Result<Dataset> {
    generate_with(&GroundTruthFamily::default(), spec)
}

pub fn generate_with(family: &GroundTruthFamily, spec: &GridSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut records = Vec::new();
    for (c, u) in spec.conditions()?.into_iter().enumerate() {
        let params = family.params(&u)?;
        for r in 0..spec.records_per_condition {
            let mut rng = RandomStream::new(spec.seed, derive_stream_id(&[SYNTH_STREAM_TAG, c as u64, r as u64]));
            let ki = (0..spec.cycles_per_record).map(|_| params.sample_ancestral(&mut rng)).collect();
            records.push(KnockRecord::new(u, r as u32, ki)?);
        }
    }
    Ok(Dataset::new(records))
}
