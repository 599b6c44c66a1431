//! Univariate Gaussian mixtures.
//!
//! Kernels use the one-dimensional normalisation `1/(√(2π)σ)`, so every
//! valid [`MixtureParams`] integrates to one.

mod amise;
mod em;

pub use amise::{amise, amise_minimum, amise_optimal_delta, AmiseInputs};
pub use em::{em_fit, EmConfig, EmFit};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::special::{normal_cdf, FRAC_1_SQRT_2PI, LN_SQRT_2PI};

/// Largest tolerated deviation of the weight sum from one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// `θ = (w, μ, σ)` of an `m`-kernel mixture, in knock-intensity units.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    weights: Vec<f64>,
    means: Vec<f64>,
    sigmas: Vec<f64>,
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::InvalidMixture("no components"));
        }
        if means.len() != m || sigmas.len() != m {
            return Err(Error::InvalidMixture("component arrays differ in length"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMixture("weights must be positive"));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidMixture("weights must sum to one"));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMixture("means must be finite"));
        }
        if sigmas.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidMixture("sigmas must be positive"));
        }
        Ok(MixtureParams { weights, means, sigmas })
    }

    /// Single Gaussian `N(mean, sigma²)`.
    pub fn gaussian(mean: f64, sigma: f64) -> Result<Self> {
        Self::new(alloc::vec![1.0], alloc::vec![mean], alloc::vec![sigma])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Components reordered by ascending mean.
    pub fn sorted_by_mean(&self) -> MixtureParams {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.means[a].total_cmp(&self.means[b]));
        MixtureParams {
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            means: idx.iter().map(|&i| self.means[i]).collect(),
            sigmas: idx.iter().map(|&i| self.sigmas[i]).collect(),
        }
    }

    /// `log Σ w_i N(y; μ_i, σ_i)` via log-sum-exp.
    pub fn log_pdf(&self, y: f64) -> f64 {
        let terms = self.component_log_terms(y);
        log_sum_exp(terms)
    }

    fn component_log_terms(&self, y: f64) -> impl Iterator<Item = f64> + Clone + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sigmas)
            .map(move |((&w, &mu), &s)| {
                let z = (y - mu) / s;
                libm::log(w) - LN_SQRT_2PI - libm::log(s) - 0.5 * z * z
            })
    }

    pub fn pdf(&self, y: f64) -> f64 {
        libm::exp(self.log_pdf(y))
    }

    /// `Σ w_i Φ((y - μ_i)/σ_i)`.
    pub fn cdf(&self, y: f64) -> f64 {
        let c: f64 = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.sigmas)
            .map(|((&w, &mu), &s)| w * normal_cdf((y - mu) / s))
            .sum();
        c.clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sigmas)
            .map(|((w, m), s)| w * (s * s + (m - mean) * (m - mean)))
            .sum()
    }

    /// Exact draw: pick a component by weight, then a Gaussian variate.
    pub fn sample_ancestral(&self, rng: &mut RandomStream) -> f64 {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut k = self.len() - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        self.means[k] + self.sigmas[k] * rng.standard_normal()
    }

    /// Upper bound on the density: `B = Σ w_i / (√(2π) σ_i) ≥ sup_y pdf(y)`.
    pub fn density_sup_bound(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.sigmas)
            .map(|(w, s)| w * FRAC_1_SQRT_2PI / s)
            .sum()
    }
}

pub(crate) fn log_sum_exp<I: Iterator<Item = f64> + Clone>(terms: I) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(terms.map(|t| libm::exp(t - max)).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn random_params(rng: &mut RandomStream, m: usize) -> MixtureParams {
        let raw: Vec<f64> = (0..m).map(|_| 0.05 + rng.uniform()).collect();
        let total: f64 = raw.iter().sum();
        MixtureParams::new(
            raw.iter().map(|w| w / total).collect(),
            (0..m).map(|_| rng.uniform_in(-3.0, 3.0)).collect(),
            (0..m).map(|_| rng.uniform_in(0.05, 1.5)).collect(),
        )
        .unwrap()
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut s = f(a) + f(b);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + h * i as f64);
        }
        s * h / 3.0
    }

    #[test]
    fn validation() {
        assert!(MixtureParams::new(vec![], vec![], vec![]).is_err());
        assert!(MixtureParams::new(vec![0.5, 0.5], vec![0.0], vec![1.0, 1.0]).is_err());
        assert!(MixtureParams::new(vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(MixtureParams::new(vec![0.6, 0.6], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(MixtureParams::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(MixtureParams::new(vec![1.0], vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn standard_normal_peak() {
        let p = MixtureParams::gaussian(0.0, 1.0).unwrap();
        assert!((p.log_pdf(0.0) + 0.918_938_533_204_672_7).abs() < 1e-15);
        assert_eq!(p.cdf(0.0), 0.5);
    }

    #[test]
    fn symmetric_pair() {
        let p = MixtureParams::new(vec![0.5, 0.5], vec![-1.3, 1.3], vec![0.7, 0.7]).unwrap();
        for i in 0..50 {
            let y = i as f64 * 0.1;
            assert!((p.log_pdf(y) - p.log_pdf(-y)).abs() < 1e-14);
        }
    }

    #[test]
    fn log_pdf_matches_naive_sum() {
        let mut rng = RandomStream::new(31, 0);
        let p = random_params(&mut rng, 3);
        for i in 0..100 {
            let y = -4.0 + 0.08 * i as f64;
            let naive: f64 = (0..3)
                .map(|k| {
                    let z = (y - p.means()[k]) / p.sigmas()[k];
                    p.weights()[k] * libm::exp(-0.5 * z * z)
                        / (libm::sqrt(2.0 * core::f64::consts::PI) * p.sigmas()[k])
                })
                .sum();
            assert!((p.pdf(y) - naive).abs() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn total_mass() {
        let mut rng = RandomStream::new(32, 0);
        for m in [1, 2, 5] {
            let p = random_params(&mut rng, m);
            let hi = p.means().iter().cloned().fold(f64::MIN, f64::max)
                + 40.0 * p.sigmas().iter().cloned().fold(0.0, f64::max);
            let lo = p.means().iter().cloned().fold(f64::MAX, f64::min)
                - 40.0 * p.sigmas().iter().cloned().fold(0.0, f64::max);
            assert!(p.cdf(hi) >= 1.0 - 1e-9);
            assert!(p.cdf(lo) <= 1e-9);
            let (a, b) = (lo / 4.0 - 10.0, hi / 4.0 + 10.0);
            let mass = simpson(|y| p.pdf(y), a, b, 10_000);
            assert!((mass - 1.0).abs() < 1e-6, "m={m} mass={mass}");
        }
    }

    #[test]
    fn cdf_is_monotone() {
        let mut rng = RandomStream::new(33, 0);
        let p = random_params(&mut rng, 4);
        let mut prev = 0.0;
        for i in 0..2000 {
            let c = p.cdf(-10.0 + 0.01 * i as f64);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn ancestral_degenerate_component() {
        let floor = 1e-6;
        let p = MixtureParams::gaussian(5.0, floor).unwrap();
        let mut rng = RandomStream::new(1, 2);
        for _ in 0..1000 {
            assert!((p.sample_ancestral(&mut rng) - 5.0).abs() < 5.0 * floor);
        }
    }

    #[test]
    fn ancestral_component_frequency() {
        // components far apart so the selected component is identifiable
        let p = MixtureParams::new(vec![0.3, 0.7], vec![-100.0, 100.0], vec![1.0, 1.0]).unwrap();
        let mut rng = RandomStream::new(2, 0);
        let n = 100_000;
        let mut first = 0usize;
        let mut sum = 0.0;
        for _ in 0..n {
            let y = p.sample_ancestral(&mut rng);
            if y < 0.0 {
                first += 1;
            }
            sum += y;
        }
        assert!((first as f64 / n as f64 - 0.3).abs() < 0.005);
        let se = libm::sqrt(p.variance() / n as f64);
        assert!((sum / n as f64 - p.mean()).abs() < 3.0 * se);
    }

    #[test]
    fn sup_bound_single_gaussian_is_exact() {
        let p = MixtureParams::gaussian(0.0, 1.0).unwrap();
        assert!((p.density_sup_bound() - p.pdf(0.0)).abs() < 1e-16);
        assert!((p.density_sup_bound() - 0.398_94).abs() < 1e-5);
    }

    #[test]
    fn sup_bound_dominates() {
        let far = MixtureParams::new(vec![0.5, 0.5], vec![-50.0, 50.0], vec![1.0, 1.0]).unwrap();
        let grid_max = (0..100_000)
            .map(|i| far.pdf(-60.0 + 120.0 * i as f64 / 99_999.0))
            .fold(0.0, f64::max);
        assert!(far.density_sup_bound() >= grid_max);
        // the bound is loose by the factor m for separated equal components
        assert!((far.density_sup_bound() / grid_max - 2.0).abs() < 1e-3);

        let mut rng = RandomStream::new(34, 0);
        let p = random_params(&mut rng, 6);
        let b = p.density_sup_bound();
        for _ in 0..10_000 {
            assert!(p.pdf(rng.uniform_in(-6.0, 6.0)) <= b);
        }
    }

    #[test]
    fn sorting_by_mean() {
        let p = MixtureParams::new(vec![0.2, 0.8], vec![3.0, -1.0], vec![0.5, 1.5]).unwrap();
        let s = p.sorted_by_mean();
        assert_eq!(s.means(), &[-1.0, 3.0]);
        assert_eq!(s.weights(), &[0.8, 0.2]);
        assert_eq!(s.sigmas(), &[1.5, 0.5]);
    }
}
