//! Serial-correlation diagnostics, empirical distributions and error metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::special::normal_quantile;

/// Autocorrelation at lag `k`.
///
/// `r(k) = Σ_{i<n-k} (x_i - x̄)(x_{i+k} - x̄) / Σ_i (x_i - x̄)²`, the biased
/// estimator with the full-length denominator, so `r(0) = 1` and `|r(k)| ≤ 1`.
pub fn autocorrelation(series: &[f64], k: usize) -> Result<f64> {
    let n = series.len();
    if k >= n {
        return Err(Error::LagTooLarge { lag: k, len: n });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|x| (x - mean) * (x - mean)).sum();
    if denom == 0.0 {
        return Err(Error::ZeroVariance);
    }
    if k == 0 {
        return Ok(1.0);
    }
    let num: f64 = series
        .iter()
        .zip(&series[k..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum();
    Ok(num / denom)
}

/// `r(0..=max_lag)`.
pub fn autocorrelations(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    (0..=max_lag).map(|k| autocorrelation(series, k)).collect()
}

/// Half-width of the white-noise band for `r(k)`, `z_{(1+level)/2} / √n`.
pub fn white_noise_band(n: usize, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    Ok(normal_quantile(0.5 * (1.0 + level)) / libm::sqrt(n as f64))
}

/// Empirical CDF: right-continuous step function with steps of `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Ecdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_points(&self) -> &[f64] {
        &self.sorted
    }

    /// `#{samples ≤ x} / n`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Exact `sup_x |F(x) - G(x)|` against another empirical CDF.
    pub fn ks_distance(&self, other: &Ecdf) -> f64 {
        ks_sorted_two_sample(&self.sorted, &other.sorted)
    }
}

/// Shorthand for [`Ecdf::new`].
pub fn ecdf(samples: &[f64]) -> Result<Ecdf> {
    Ecdf::new(samples)
}

/// Equal-width relative-frequency histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub rel_freq: Vec<f64>,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.rel_freq.len()
    }

    /// Bin holding `x`: bins are `[lo, edge)` except the last, which is
    /// closed; values outside `[lo, hi]` go to the nearest edge bin.
    pub fn bin_of(&self, x: f64) -> usize {
        let n = self.n_bins();
        let lo = self.bin_edges[0];
        let hi = self.bin_edges[n];
        if x <= lo {
            return 0;
        }
        if x >= hi {
            return n - 1;
        }
        let idx = ((x - lo) / (hi - lo) * n as f64) as usize;
        idx.min(n - 1)
    }
}

/// Default bin count used when comparing two samples on shared bins.
pub const DEFAULT_BINS: usize = 50;

pub fn rel_freq_histogram(samples: &[f64], n_bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if n_bins == 0 {
        return Err(Error::InvalidHistogram("bin count must be at least 1"));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidHistogram("range must satisfy lo < hi"));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut bin_edges: Vec<f64> = (0..n_bins).map(|i| lo + width * i as f64).collect();
    bin_edges.push(hi);
    let mut hist = Histogram { bin_edges, rel_freq: vec![0.0; n_bins] };
    let mut counts = vec![0usize; n_bins];
    for &x in samples {
        counts[hist.bin_of(x)] += 1;
    }
    let n = samples.len() as f64;
    hist.rel_freq = counts.into_iter().map(|c| c as f64 / n).collect();
    Ok(hist)
}

/// `[min, max]` over the union of the given samples, widened to a unit-width
/// interval around the value when every sample is identical.
pub fn shared_range(sets: &[&[f64]]) -> Result<(f64, f64)> {
    let mut it = sets.iter().flat_map(|s| s.iter().copied());
    let first = it.next().ok_or(Error::EmptySamples)?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo < hi {
        Ok((lo, hi))
    } else {
        Ok((lo - 0.5, hi + 0.5))
    }
}

/// `E = sqrt(Σ (o_i - ô_i)²)`, not normalised by length.
pub fn fitting_error(o: &[f64], o_hat: &[f64]) -> Result<f64> {
    if o.len() != o_hat.len() {
        return Err(Error::LengthMismatch { left: o.len(), right: o_hat.len() });
    }
    if o.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(libm::sqrt(o.iter().zip(o_hat).map(|(a, b)| (a - b) * (a - b)).sum()))
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
///
/// At each distinct sample value both the left limit and the value of the
/// empirical CDF are compared with the reference, which gives the exact
/// supremum.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    let e = Ecdf::new(samples)?;
    let xs = e.sorted_points();
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        let below = i as f64 / n;
        let at = (j + 1) as f64 / n;
        d = d.max((f - below).abs()).max((at - f).abs());
        i = j + 1;
    }
    Ok(d)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(Ecdf::new(a)?.ks_distance(&Ecdf::new(b)?))
}

fn ks_sorted_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    // once one side is exhausted the gap can only shrink
    d
}

/// Mean and percentile interval of per-group errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupErrorSummary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_groups: usize,
}

/// Summarises errors over groups with an empirical percentile interval.
///
/// `lo`/`hi` are the `(1-level)/2` and `(1+level)/2` quantiles using linear
/// interpolation between order statistics: `h = (n-1)p`,
/// `q = x_⌊h⌋ + (h-⌊h⌋)(x_⌊h⌋+1 - x_⌊h⌋)` on the sorted errors.
pub fn group_error_summary(errors: &[f64], level: f64) -> Result<GroupErrorSummary> {
    if errors.len() < 2 {
        return Err(Error::TooFewGroups(errors.len()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    // clamp guards the ulp-level drift of a mean of identical values
    let lo = percentile(&sorted, 0.5 * (1.0 - level));
    let hi = percentile(&sorted, 0.5 * (1.0 + level));
    Ok(GroupErrorSummary {
        mean: mean.clamp(lo, hi),
        lo,
        hi,
        n_groups: errors.len(),
    })
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let k = libm::floor(h) as usize;
    if k + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[k] + (h - k as f64) * (sorted[k + 1] - sorted[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use crate::special::normal_cdf;

    #[test]
    fn autocorrelation_alternating() {
        let r = autocorrelation(&[1.0, -1.0, 1.0, -1.0], 1).unwrap();
        assert!((r + 0.75).abs() < 1e-15);
        assert_eq!(autocorrelation(&[3.0, 1.0, 4.0, 1.0, 5.0], 0).unwrap(), 1.0);
    }

    #[test]
    fn autocorrelation_errors() {
        assert_eq!(autocorrelation(&[2.0; 5], 1), Err(Error::ZeroVariance));
        assert_eq!(
            autocorrelation(&[1.0, 2.0], 2),
            Err(Error::LagTooLarge { lag: 2, len: 2 })
        );
    }

    #[test]
    fn white_noise_lag_one() {
        let mut rng = RandomStream::new(77, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.standard_normal()).collect();
        assert!(autocorrelation(&xs, 1).unwrap().abs() < 0.04);
    }

    #[test]
    fn bands() {
        assert!((white_noise_band(300, 0.95).unwrap() - 0.113_158).abs() < 1e-5);
        assert!((white_noise_band(10_000, 0.95).unwrap() - 0.0196).abs() < 1e-5);
        assert!((white_noise_band(100, 0.9973).unwrap() - 0.3).abs() < 1e-3);
        assert!(white_noise_band(100, 1.0).is_err());
        assert!(white_noise_band(100, 0.0).is_err());
        assert!(white_noise_band(1, 0.95).is_err());
    }

    #[test]
    fn ecdf_counts() {
        let e = ecdf(&[0.0]).unwrap();
        assert_eq!(e.eval(0.0), 1.0);
        assert_eq!(e.eval(-0.1), 0.0);
        let e = ecdf(&[3.0, 1.0, 2.0]).unwrap();
        assert!((e.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ecdf(&[]), Err(Error::EmptySamples));
    }

    #[test]
    fn ecdf_of_normal_at_zero() {
        let mut rng = RandomStream::new(8, 8);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.standard_normal()).collect();
        assert!((ecdf(&xs).unwrap().eval(0.0) - 0.5).abs() < 0.01);
    }

    #[test]
    fn histogram_boundaries() {
        let h = rel_freq_histogram(&[0.5], 2, 0.0, 1.0).unwrap();
        assert_eq!(h.rel_freq, vec![0.0, 1.0]);
        let h = rel_freq_histogram(&[1.0, 0.0, -3.0, 7.0], 4, 0.0, 1.0).unwrap();
        assert_eq!(h.rel_freq, vec![0.5, 0.0, 0.0, 0.5]);
        let h = rel_freq_histogram(&[2.0; 10], 5, 2.0, 3.0).unwrap();
        assert_eq!(h.rel_freq[0], 1.0);
        assert_eq!(h.bin_edges.len(), 6);
        assert!(rel_freq_histogram(&[], 3, 0.0, 1.0).is_err());
        assert!(rel_freq_histogram(&[1.0], 0, 0.0, 1.0).is_err());
        assert!(rel_freq_histogram(&[1.0], 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn histogram_of_uniforms() {
        let mut rng = RandomStream::new(4, 2);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.uniform()).collect();
        let h = rel_freq_histogram(&xs, 10, 0.0, 1.0).unwrap();
        assert!(h.rel_freq.iter().all(|f| (f - 0.1).abs() < 0.02));
        assert!((h.rel_freq.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fitting_error_arithmetic() {
        assert_eq!(fitting_error(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        let e = fitting_error(&[0.2, 0.5, 0.9], &[0.1, 0.5, 0.7]).unwrap();
        assert!((e - libm::sqrt(0.05)).abs() < 1e-15);
        assert_eq!(
            fitting_error(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn fitting_error_against_brute_force() {
        let mut rng = RandomStream::new(300, 1);
        let xs: Vec<f64> = (0..300).map(|_| rng.standard_normal()).collect();
        let e = ecdf(&xs).unwrap();
        let pts = e.sorted_points();
        let o: Vec<f64> = pts.iter().map(|&z| e.eval(z)).collect();
        let o_hat: Vec<f64> = pts.iter().map(|&z| normal_cdf(z)).collect();
        let fast = fitting_error(&o, &o_hat).unwrap();

        // brute force: count ≤ z by full scan, reference CDF by trapezoid quadrature
        let mut ss = 0.0;
        for &z in pts {
            let count = xs.iter().filter(|&&x| x <= z).count() as f64 / 300.0;
            let steps = 20_000;
            let lo = -12.0;
            let h = (z - lo) / steps as f64;
            let mut integral = 0.0;
            for s in 0..=steps {
                let t = lo + h * s as f64;
                let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
                integral += w * libm::exp(-0.5 * t * t);
            }
            integral *= h / libm::sqrt(2.0 * core::f64::consts::PI);
            ss += (count - integral) * (count - integral);
        }
        assert!((fast - libm::sqrt(ss)).abs() < 1e-6, "{fast} vs {}", libm::sqrt(ss));
    }

    #[test]
    fn ks_identities() {
        let xs = [0.3, 1.2, -0.4, 2.2];
        assert_eq!(ks_two_sample(&xs, &xs).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0], normal_cdf).unwrap(), 0.5);
        assert!(ks_statistic(&[], normal_cdf).is_err());
        // disjoint supports are at distance one
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[5.0, 6.0]).unwrap(), 1.0);
    }

    #[test]
    fn ks_brute_force_two_sample() {
        let mut rng = RandomStream::new(6, 6);
        for _ in 0..20 {
            let a: Vec<f64> = (0..37).map(|_| libm::round(rng.standard_normal() * 4.0)).collect();
            let b: Vec<f64> = (0..23).map(|_| libm::round(rng.standard_normal() * 4.0 + 1.0)).collect();
            let ea = ecdf(&a).unwrap();
            let eb = ecdf(&b).unwrap();
            let brute = a
                .iter()
                .chain(&b)
                .map(|&x| (ea.eval(x) - eb.eval(x)).abs())
                .fold(0.0, f64::max);
            assert!((ks_two_sample(&a, &b).unwrap() - brute).abs() < 1e-15);
        }
    }

    #[test]
    fn summary_percentiles() {
        let s = group_error_summary(&[0.25; 4], 0.99).unwrap();
        assert_eq!((s.mean, s.lo, s.hi), (0.25, 0.25, 0.25));
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = group_error_summary(&xs, 0.98).unwrap();
        assert!((s.lo - 1.99).abs() < 1e-12);
        assert!((s.hi - 99.01).abs() < 1e-12);
        assert!((s.mean - 50.5).abs() < 1e-12);
        assert_eq!(s.n_groups, 100);
        assert_eq!(group_error_summary(&[1.0], 0.99), Err(Error::TooFewGroups(1)));
    }

    #[test]
    fn summary_of_noisy_groups() {
        let mut rng = RandomStream::new(500, 0);
        let xs: Vec<f64> = (0..500).map(|_| 2.0 + 0.5 * rng.standard_normal()).collect();
        let s = group_error_summary(&xs, 0.99).unwrap();
        // 3 standard errors of the mean
        assert!((s.mean - 2.0).abs() < 3.0 * 0.5 / libm::sqrt(500.0));
        assert!(s.lo < s.mean && s.mean < s.hi);
    }
}
