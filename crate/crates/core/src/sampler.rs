//! Accept-reject generation of knock intensity from a mixture density.
//!
//! The proposal `g` is uniform on a support `[a, b]` wide enough that the
//! mixture mass outside it is negligible. With `B ≥ sup p(y)` and
//! `M = (b - a)·B`, a proposal `y_g ~ U[a, b]` is accepted when
//! `u ≤ p(y_g) / (M g(y_g)) = p(y_g) / B` for `u ~ U[0, 1]`.
//!
//! Simulated intensities are not clamped at zero.

use alloc::vec::Vec;

use crate::data::OperatingPoint;
use crate::error::{Error, Result};
use crate::mdn::MdnModel;
use crate::mixture::MixtureParams;
use crate::rng::RandomStream;

/// Consecutive rejections after which the envelope is declared broken.
pub const REJECTION_CAP: u64 = 1_000_000;

/// Default support half-width in kernel standard deviations.
pub const DEFAULT_TAIL_K: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub lo: f64,
    pub hi: f64,
    /// `B ≥ sup_y p(y)`.
    pub bound: f64,
    /// `M = (hi - lo) · B`.
    pub m: f64,
}

impl Envelope {
    /// Uniform proposal density on the support.
    pub fn proposal_density(&self) -> f64 {
        1.0 / (self.hi - self.lo)
    }
}

/// `a = min(μ_i - kσ_i)`, `b = max(μ_i + kσ_i)`, `B` from
/// [`MixtureParams::density_sup_bound`].
pub fn build_envelope(params: &MixtureParams, tail_k: f64) -> Envelope {
    let lo = params
        .means()
        .iter()
        .zip(params.sigmas())
        .map(|(m, s)| m - tail_k * s)
        .fold(f64::INFINITY, f64::min);
    let hi = params
        .means()
        .iter()
        .zip(params.sigmas())
        .map(|(m, s)| m + tail_k * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let bound = params.density_sup_bound();
    Envelope { lo, hi, bound, m: (hi - lo) * bound }
}

/// Draws one accepted sample; returns it with the number of proposals used.
pub fn accept_reject_counted(
    params: &MixtureParams,
    env: &Envelope,
    rng: &mut RandomStream,
) -> Result<(f64, u64)> {
    let scale = env.m * env.proposal_density();
    for trial in 1..=REJECTION_CAP {
        let y = rng.uniform_in(env.lo, env.hi);
        let u = rng.uniform();
        if u <= params.pdf(y) / scale {
            return Ok((y, trial));
        }
    }
    Err(Error::EnvelopeInconsistent { rejections: REJECTION_CAP })
}

pub fn accept_reject(params: &MixtureParams, env: &Envelope, rng: &mut RandomStream) -> Result<f64> {
    accept_reject_counted(params, env, rng).map(|(y, _)| y)
}

/// Proposal and acceptance counts over a run of cycles at one condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AcceptanceStats {
    pub trials: u64,
    pub accepted: u64,
}

impl AcceptanceStats {
    pub fn rate(&self) -> f64 {
        self.accepted as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulatedSeries {
    pub ki: Vec<f64>,
    pub conditions: Vec<OperatingPoint>,
    /// One entry per run of identical consecutive conditions.
    pub acceptance: Vec<AcceptanceStats>,
}

impl SimulatedSeries {
    pub fn len(&self) -> usize {
        self.ki.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ki.is_empty()
    }
}

/// `n` i.i.d. cycles at a fixed operating point.
pub fn simulate_steady(
    model: &MdnModel,
    u: &OperatingPoint,
    n: usize,
    rng: &mut RandomStream,
) -> Result<SimulatedSeries> {
    let mut series = SimulatedSeries::default();
    if n == 0 {
        return Ok(series);
    }
    let params = model.forward(u)?;
    let env = build_envelope(&params, DEFAULT_TAIL_K);
    let mut stats = AcceptanceStats::default();
    series.ki.reserve(n);
    for _ in 0..n {
        let (y, trials) = accept_reject_counted(&params, &env, rng)?;
        stats.trials += trials;
        stats.accepted += 1;
        series.ki.push(y);
    }
    series.conditions = alloc::vec![*u; n];
    series.acceptance.push(stats);
    Ok(series)
}

/// One draw per scheduled cycle from the density at that cycle's operating
/// point. Mixture parameters and envelope are recomputed only when the
/// condition changes.
pub fn simulate_transient(
    model: &MdnModel,
    schedule: &[OperatingPoint],
    rng: &mut RandomStream,
) -> Result<SimulatedSeries> {
    let first = schedule.first().ok_or(Error::EmptySchedule)?;
    let mut current = *first;
    let mut params = model.forward(&current)?;
    let mut env = build_envelope(&params, DEFAULT_TAIL_K);
    let mut stats = AcceptanceStats::default();
    let mut series = SimulatedSeries::default();
    series.ki.reserve(schedule.len());

    for u in schedule {
        if !u.same_as(&current) {
            series.acceptance.push(stats);
            stats = AcceptanceStats::default();
            current = *u;
            params = model.forward(&current)?;
            env = build_envelope(&params, DEFAULT_TAIL_K);
        }
        let (y, trials) = accept_reject_counted(&params, &env, rng)?;
        stats.trials += trials;
        stats.accepted += 1;
        series.ki.push(y);
    }
    series.acceptance.push(stats);
    series.conditions = schedule.to_vec();
    Ok(series)
}
