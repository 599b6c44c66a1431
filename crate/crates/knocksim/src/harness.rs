//! Validation protocols: leave-one-out steady validation, the EM kernel
//! sweep, and transient step simulation.
//!
//! Every task draws from its own [`RandomStream`] whose stream id is
//! `derive_stream_id(&[tag, i, j, ...])` over the task's indices, and results
//! are reduced in index order, so reports do not depend on how many worker
//! threads ran them.

use knocksim_core::mdn::train;
use knocksim_core::mixture::em_fit;
use knocksim_core::rng::derive_stream_id;
use knocksim_core::sampler::{simulate_steady, simulate_transient};
use knocksim_core::stats::{
    ecdf, fitting_error, group_error_summary, ks_two_sample, rel_freq_histogram, shared_range,
};
use knocksim_core::{
    split_leave_one_out, Dataset, EmConfig, Error, GroupErrorSummary, MdnModel, MixtureParams,
    OperatingPoint, RandomStream, Result, TrainingConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::formats::{expand_schedule, Segment};

/// Stream tag for training on all but one condition: `[TAG, held_out, m]`.
pub const HOLDOUT_TRAIN_TAG: u64 = 0x4c4f_4f54;
/// Stream tag for simulated groups: `[TAG, held_out, m, group]`.
pub const GROUP_STREAM_TAG: u64 = 0x4752_5550;
/// Stream tag for training on a whole dataset: `[TAG, m]`.
pub const FULL_TRAIN_TAG: u64 = 0x4655_4c4c;
/// Stream tag for transient runs: `[TAG, model_index]`.
pub const TRANSIENT_STREAM_TAG: u64 = 0x5452_4e53;

pub const STEADY_REPORT_FORMAT: &str = "knocksim-steady-report";
pub const TRANSIENT_REPORT_FORMAT: &str = "knocksim-transient-report";
pub const REPORT_VERSION: u32 = 1;

/// Interval level of the per-group error summaries.
pub const DEFAULT_LEVEL: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub enum Holdout {
    All,
    Conditions(Vec<usize>),
}

impl Holdout {
    pub fn resolve(&self, n_conditions: usize) -> Result<Vec<usize>> {
        match self {
            Holdout::All => Ok((0..n_conditions).collect()),
            Holdout::Conditions(ids) => {
                if ids.is_empty() {
                    return Err(Error::InvalidConfig("holdout list is empty"));
                }
                if let Some(&bad) = ids.iter().find(|&&c| c >= n_conditions) {
                    return Err(Error::UnknownCondition(bad));
                }
                Ok(ids.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyConfig {
    pub kernels: Vec<usize>,
    pub groups: usize,
    pub samples_per_group: usize,
    /// `kernel_count` is overridden by each entry of `kernels`.
    pub training: TrainingConfig,
    pub seed: u64,
    pub holdout: Holdout,
    pub level: f64,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        SteadyConfig {
            kernels: vec![1, 2, 3, 5],
            groups: 50,
            samples_per_group: 900,
            training: TrainingConfig::default(),
            seed: 0,
            holdout: Holdout::All,
            level: DEFAULT_LEVEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_groups: usize,
}

impl From<GroupErrorSummary> for Summary {
    fn from(s: GroupErrorSummary) -> Self {
        Summary { mean: s.mean, lo: s.lo, hi: s.hi, n_groups: s.n_groups }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingEcho {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub sigma_floor: f64,
    pub hidden_sizes: Vec<usize>,
}

impl From<&TrainingConfig> for TrainingEcho {
    fn from(c: &TrainingConfig) -> Self {
        TrainingEcho {
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            final_lr_fraction: c.final_lr_fraction,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
            sigma_floor: c.sigma_floor,
            hidden_sizes: c.hidden_sizes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub groups: usize,
    pub samples_per_group: usize,
    pub seed: u64,
    pub kernels: Vec<usize>,
    pub holdout: Vec<usize>,
    pub level: f64,
    pub training: TrainingEcho,
}

/// Pooled over every held-out condition and group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub kernel_count: usize,
    pub fitting_error: Summary,
    pub ks: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRun {
    pub kernel_count: usize,
    /// Absent when training ran for zero epochs.
    pub final_train_nll: Option<f64>,
    /// One entry per group.
    pub fitting_error: Vec<f64>,
    pub ks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutResult {
    pub condition_id: usize,
    pub speed_rpm: f64,
    pub manifold_bar: f64,
    pub fit_deg: f64,
    pub test_samples: usize,
    pub runs: Vec<KernelRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub format: String,
    pub version: u32,
    pub config: ReportConfig,
    pub summaries: Vec<KernelSummary>,
    pub conditions: Vec<HeldOutResult>,
}

impl ValidationReport {
    /// Per-m summaries rebuilt from the raw group errors.
    pub fn recompute_summaries(&self) -> Result<Vec<KernelSummary>> {
        summarise(&self.config.kernels, &self.conditions, self.config.level)
    }
}

fn summarise(kernels: &[usize], conditions: &[HeldOutResult], level: f64) -> Result<Vec<KernelSummary>> {
    kernels
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let mut e = Vec::new();
            let mut ks = Vec::new();
            for c in conditions {
                let run = &c.runs[k];
                e.extend_from_slice(&run.fitting_error);
                ks.extend_from_slice(&run.ks);
            }
            Ok(KernelSummary {
                kernel_count: m,
                fitting_error: group_error_summary(&e, level)?.into(),
                ks: group_error_summary(&ks, level)?.into(),
            })
        })
        .collect()
}

/// Fitting error and two-sample KS of one simulated group against the test
/// set. `E` compares the two ECDFs at the sorted test values.
pub fn group_errors(test_sorted: &[f64], simulated: &[f64]) -> Result<(f64, f64)> {
    let test = ecdf(test_sorted)?;
    let sim = ecdf(simulated)?;
    let o: Vec<f64> = test_sorted.iter().map(|&z| test.eval(z)).collect();
    let o_hat: Vec<f64> = test_sorted.iter().map(|&z| sim.eval(z)).collect();
    Ok((fitting_error(&o, &o_hat)?, ks_two_sample(test_sorted, simulated)?))
}

fn training_for(base: &TrainingConfig, m: usize) -> TrainingConfig {
    TrainingConfig { kernel_count: m, ..base.clone() }
}

/// Leave-one-out validation: for each held-out condition and kernel count,
/// train on the remaining conditions, simulate `groups` series of
/// `samples_per_group` cycles at the held-out point and score each against
/// the held-out measurements.
pub fn steady_validate(data: &Dataset, config: &SteadyConfig) -> Result<ValidationReport> {
    if config.kernels.is_empty() {
        return Err(Error::InvalidConfig("kernel list is empty"));
    }
    if config.groups < 2 {
        return Err(Error::TooFewGroups(config.groups));
    }
    if config.samples_per_group == 0 {
        return Err(Error::InvalidConfig("samples per group must be at least 1"));
    }
    if data.n_conditions() < 2 {
        return Err(Error::EmptySplit);
    }
    for &m in &config.kernels {
        training_for(&config.training, m).validate()?;
    }
    let holdout = config.holdout.resolve(data.n_conditions())?;

    let tasks: Vec<(usize, usize, usize)> = holdout
        .iter()
        .flat_map(|&c| config.kernels.iter().enumerate().map(move |(k, &m)| (c, k, m)))
        .collect();

    let runs: Vec<KernelRun> = tasks
        .par_iter()
        .map(|&(c, _, m)| holdout_run(data, config, c, m))
        .collect::<Result<_>>()?;

    let mut conditions = Vec::with_capacity(holdout.len());
    for (i, &c) in holdout.iter().enumerate() {
        let u = data.condition(c)?;
        let k = config.kernels.len();
        conditions.push(HeldOutResult {
            condition_id: c,
            speed_rpm: u.speed(),
            manifold_bar: u.manifold_pressure(),
            fit_deg: u.fit(),
            test_samples: data.samples_of(c)?.len(),
            runs: runs[i * k..(i + 1) * k].to_vec(),
        });
    }

    Ok(ValidationReport {
        format: STEADY_REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        summaries: summarise(&config.kernels, &conditions, config.level)?,
        config: ReportConfig {
            groups: config.groups,
            samples_per_group: config.samples_per_group,
            seed: config.seed,
            kernels: config.kernels.clone(),
            holdout,
            level: config.level,
            training: (&config.training).into(),
        },
        conditions,
    })
}

fn holdout_run(data: &Dataset, config: &SteadyConfig, c: usize, m: usize) -> Result<KernelRun> {
    let (train_set, test_set) = split_leave_one_out(data, c)?;
    let mut rng = RandomStream::new(config.seed, derive_stream_id(&[HOLDOUT_TRAIN_TAG, c as u64, m as u64]));
    let (model, history) = train(&train_set, &training_for(&config.training, m), &mut rng)?;

    let u = data.condition(c)?;
    let mut test = test_set.samples_of(0)?;
    test.sort_by(f64::total_cmp);

    let scored: Vec<(f64, f64)> = (0..config.groups)
        .into_par_iter()
        .map(|g| {
            let id = derive_stream_id(&[GROUP_STREAM_TAG, c as u64, m as u64, g as u64]);
            let series = simulate_steady(&model, &u, config.samples_per_group, &mut RandomStream::new(config.seed, id))?;
            group_errors(&test, &series.ki)
        })
        .collect::<Result<_>>()?;

    Ok(KernelRun {
        kernel_count: m,
        final_train_nll: history.train.last().copied(),
        fitting_error: scored.iter().map(|s| s.0).collect(),
        ks: scored.iter().map(|s| s.1).collect(),
    })
}

/// EM fitting errors of one condition for one kernel count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepErrors {
    /// Against the condition's ECDF at its sorted samples.
    pub cdf: f64,
    /// Against its relative-frequency histogram.
    pub rel_freq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub kernel_count: usize,
    pub outcome: Result<SweepErrors>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSweep {
    pub condition_id: usize,
    pub point: OperatingPoint,
    pub samples: usize,
    pub entries: Vec<SweepEntry>,
}

/// Probability mass of each histogram bin under `p`; the first and last bins
/// take the tails, as the histogram does for out-of-range samples.
pub fn bin_masses(p: &MixtureParams, edges: &[f64]) -> Vec<f64> {
    let n = edges.len() - 1;
    (0..n)
        .map(|j| {
            let lo = if j == 0 { 0.0 } else { p.cdf(edges[j]) };
            let hi = if j + 1 == n { 1.0 } else { p.cdf(edges[j + 1]) };
            hi - lo
        })
        .collect()
}

/// Both fitting errors of an EM fit with `m` kernels to `samples`.
pub fn em_fit_errors(samples: &[f64], m: usize, em: &EmConfig, n_bins: usize) -> Result<SweepErrors> {
    let fit = em_fit(samples, m, em)?;
    let e = ecdf(samples)?;
    let sorted = e.sorted_points();
    let o: Vec<f64> = sorted.iter().map(|&z| e.eval(z)).collect();
    let o_hat: Vec<f64> = sorted.iter().map(|&z| fit.params.cdf(z)).collect();
    let cdf = fitting_error(&o, &o_hat)?;

    let (lo, hi) = shared_range(&[samples])?;
    let hist = rel_freq_histogram(samples, n_bins, lo, hi)?;
    let rel_freq = fitting_error(&hist.rel_freq, &bin_masses(&fit.params, &hist.bin_edges))?;
    Ok(SweepErrors { cdf, rel_freq })
}

/// EM-fits every condition with each kernel count. A failure at one
/// condition is recorded in its entry and does not stop the sweep.
pub fn kernel_sweep_em(data: &Dataset, m_values: &[usize], em: &EmConfig, n_bins: usize) -> Result<Vec<ConditionSweep>> {
    if m_values.is_empty() {
        return Err(Error::InvalidConfig("kernel list is empty"));
    }
    (0..data.n_conditions())
        .into_par_iter()
        .map(|c| {
            let samples = data.samples_of(c)?;
            Ok(ConditionSweep {
                condition_id: c,
                point: data.condition(c)?,
                samples: samples.len(),
                entries: m_values
                    .iter()
                    .map(|&m| SweepEntry { kernel_count: m, outcome: em_fit_errors(&samples, m, em, n_bins) })
                    .collect(),
            })
        })
        .collect()
}

/// Mean error per kernel count over the conditions where the fit succeeded.
pub fn sweep_means(sweep: &[ConditionSweep]) -> Vec<(usize, SweepErrors)> {
    let Some(first) = sweep.first() else { return Vec::new() };
    (0..first.entries.len())
        .map(|k| {
            let ok: Vec<SweepErrors> = sweep.iter().filter_map(|c| c.entries[k].outcome.clone().ok()).collect();
            let n = ok.len() as f64;
            let mean = SweepErrors {
                cdf: ok.iter().map(|e| e.cdf).sum::<f64>() / n,
                rel_freq: ok.iter().map(|e| e.rel_freq).sum::<f64>() / n,
            };
            (first.entries[k].kernel_count, mean)
        })
        .collect()
}

/// Trains one model per kernel count on the whole dataset.
pub fn train_kernel_set(data: &Dataset, kernels: &[usize], training: &TrainingConfig, seed: u64) -> Result<Vec<MdnModel>> {
    kernels
        .par_iter()
        .map(|&m| {
            let mut rng = RandomStream::new(seed, derive_stream_id(&[FULL_TRAIN_TAG, m as u64]));
            train(data, &training_for(training, m), &mut rng).map(|(model, _)| model)
        })
        .collect()
}

/// The step protocol: fixed speed and pressure, fit held at `before` and
/// then at `after`.
pub fn step_schedule(speed: f64, pressure: f64, before: f64, after: f64, cycles_each: usize) -> Result<Vec<Segment>> {
    Ok(vec![
        Segment { cycles: cycles_each, point: OperatingPoint::new(speed, pressure, before)? },
        Segment { cycles: cycles_each, point: OperatingPoint::new(speed, pressure, after)? },
    ])
}

/// 1200 rpm, 7 bar, fit stepping from BL-3 to BL+1 after 300 cycles.
pub fn default_step_schedule() -> Vec<Segment> {
    step_schedule(1200.0, 7.0, -3.0, 1.0, 300).expect("valid operating points")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEcho {
    pub cycles: usize,
    pub speed_rpm: f64,
    pub manifold_bar: f64,
    pub fit_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub start: usize,
    pub len: usize,
    pub speed_rpm: f64,
    pub manifold_bar: f64,
    pub fit_deg: f64,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub acceptance_rate: f64,
    /// Two-sample KS against the same cycles of the reference series.
    pub ks_reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientRun {
    pub kernel_count: usize,
    pub ki: Vec<f64>,
    pub segments: Vec<SegmentStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientReport {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub schedule: Vec<SegmentEcho>,
    pub runs: Vec<TransientRun>,
}

/// Population mean and variance.
pub fn mean_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Start and length of each run of identical consecutive operating points.
pub fn change_points(points: &[OperatingPoint]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, u) in points.iter().enumerate() {
        match out.last_mut() {
            Some((start, len)) if points[*start].same_as(u) => *len += 1,
            _ => out.push((i, 1)),
        }
    }
    out
}

/// Simulates every model along the schedule and summarises each segment.
/// Model `i` uses stream `[TRANSIENT_STREAM_TAG, i]`.
pub fn transient_validate(
    models: &[MdnModel],
    schedule: &[Segment],
    reference: Option<&[f64]>,
    seed: u64,
) -> Result<TransientReport> {
    let points = expand_schedule(schedule);
    if points.is_empty() {
        return Err(Error::EmptySchedule);
    }
    if let Some(r) = reference {
        if r.len() != points.len() {
            return Err(Error::LengthMismatch { left: points.len(), right: r.len() });
        }
    }
    let bounds = change_points(&points);

    let runs = models
        .par_iter()
        .enumerate()
        .map(|(i, model)| {
            let mut rng = RandomStream::new(seed, derive_stream_id(&[TRANSIENT_STREAM_TAG, i as u64]));
            let series = simulate_transient(model, &points, &mut rng)?;
            let segments = bounds
                .iter()
                .zip(&series.acceptance)
                .map(|(&(start, len), acc)| {
                    let ki = &series.ki[start..start + len];
                    let (mean, variance) = mean_variance(ki);
                    let u = points[start];
                    Ok(SegmentStats {
                        start,
                        len,
                        speed_rpm: u.speed(),
                        manifold_bar: u.manifold_pressure(),
                        fit_deg: u.fit(),
                        mean,
                        variance,
                        acceptance_rate: acc.rate(),
                        ks_reference: reference.map(|r| ks_two_sample(ki, &r[start..start + len])).transpose()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TransientRun { kernel_count: model.kernel_count(), ki: series.ki, segments })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(TransientReport {
        format: TRANSIENT_REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        seed,
        schedule: schedule
            .iter()
            .map(|s| SegmentEcho {
                cycles: s.cycles,
                speed_rpm: s.point.speed(),
                manifold_bar: s.point.manifold_pressure(),
                fit_deg: s.point.fit(),
            })
            .collect(),
        runs,
    })
}
