//! Command-line surface.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use knocksim_core::mixture::{amise, amise_minimum, amise_optimal_delta};
use knocksim_core::mdn::train_monitored;
use knocksim_core::sampler::{simulate_steady, simulate_transient};
use knocksim_core::stats::{autocorrelations, ecdf, rel_freq_histogram, shared_range, white_noise_band};
use knocksim_core::synth::{generate_dataset, GridSpec};
use knocksim_core::{AmiseInputs, Dataset, EmConfig, OperatingPoint, RandomStream, TrainingConfig};

use crate::formats::{self, expand_schedule};
use crate::harness::{self, Holdout, SteadyConfig, DEFAULT_LEVEL};

#[derive(Debug, Parser)]
#[command(name = "knocksim", version, about = "Data-driven stochastic simulator of engine knock intensity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from the built-in ground-truth family.
    Synth(SynthArgs),
    /// Train a mixture density network on a dataset.
    Train(TrainArgs),
    /// Simulate knock intensity at a fixed condition or along a schedule.
    Simulate(SimulateArgs),
    /// Write autocorrelation, ECDF and histogram curves of a dataset or series.
    Analyze(AnalyzeArgs),
    /// Run the steady leave-one-out or transient validation protocol.
    Validate(ValidateArgs),
    /// Optimal kernel width and AMISE for a sample count and curvature.
    Amise(AmiseArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_delimiter = ',', default_values_t = GridSpec::default().speeds)]
    pub speeds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = GridSpec::default().pressures)]
    pub pressures: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = GridSpec::default().fits)]
    pub fits: Vec<f64>,
    /// Cycles per record.
    #[arg(long, default_value_t = 300)]
    pub cycles: usize,
    /// Records per condition.
    #[arg(long, default_value_t = 3)]
    pub records: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![32, 32])]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Final learning rate as a fraction of `--lr` (cosine decay); 1 keeps it constant.
    #[arg(long, default_value_t = 1.0)]
    pub lr_final_fraction: f64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    /// Floor on kernel sigmas in standardised output units.
    #[arg(long, default_value_t = 1e-6)]
    pub sigma_floor: f64,
}

impl NetworkArgs {
    fn training(&self, kernel_count: usize) -> TrainingConfig {
        TrainingConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            final_lr_fraction: self.lr_final_fraction,
            sigma_floor: self.sigma_floor,
            hidden_sizes: self.hidden.clone(),
            kernel_count,
            ..TrainingConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Reject negative intensities, as for measured data.
    #[arg(long)]
    pub require_nonnegative: bool,
    #[arg(long, default_value_t = 3)]
    pub kernels: usize,
    #[command(flatten)]
    pub net: NetworkArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV; defaults to the model path with a `.loss.csv` extension.
    #[arg(long)]
    pub loss: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required_unless_present = "schedule")]
    pub speed: Option<f64>,
    #[arg(long, required_unless_present = "schedule")]
    pub pressure: Option<f64>,
    #[arg(long, required_unless_present = "schedule", allow_negative_numbers = true)]
    pub fit: Option<f64>,
    /// Schedule CSV (`cycles,speed_rpm,manifold_bar,fit_deg`); overrides the fixed condition.
    #[arg(long, conflicts_with_all = ["speed", "pressure", "fit"])]
    pub schedule: Option<PathBuf>,
    /// Cycles to simulate at a fixed condition.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, required_unless_present = "series", conflicts_with = "series")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long)]
    pub require_nonnegative: bool,
    #[arg(long, default_value_t = 20)]
    pub max_lag: usize,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Probability of the white-noise band.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Also EM-fit each dataset condition with these kernel counts.
    #[arg(long, value_delimiter = ',')]
    pub kernels: Vec<usize>,
    /// Accepted for uniformity; the analysis draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Steady,
    Transient,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub require_nonnegative: bool,
    #[arg(long, value_enum, default_value_t = Protocol::Steady)]
    pub protocol: Protocol,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 5])]
    pub kernels: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub groups: usize,
    #[arg(long, default_value_t = 900)]
    pub samples_per_group: usize,
    /// `all` or a comma list of condition ids.
    #[arg(long, default_value = "all", value_parser = parse_holdout)]
    pub holdout: Holdout,
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Transient schedule CSV; defaults to the 1200 rpm / 7 bar fit step.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Series CSV compared segment by segment in the transient protocol.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 picks one per core. Does not affect the report.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AmiseArgs {
    /// Number of kernels (stands in for the sample count).
    #[arg(long)]
    pub count: usize,
    /// Integrated squared second derivative of the target density.
    #[arg(long)]
    pub curvature: f64,
    /// Also evaluate the AMISE at this width.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Accepted for uniformity; the computation is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn parse_holdout(s: &str) -> std::result::Result<Holdout, String> {
    if s.trim() == "all" {
        return Ok(Holdout::All);
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("invalid condition id `{t}`")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Holdout::Conditions)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Validate(a) => validate(a),
        Command::Amise(a) => amise_cmd(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load_dataset(path: &Path, require_nonnegative: bool) -> Result<Dataset> {
    formats::read_dataset(open(path)?, require_nonnegative).with_context(|| format!("{}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = GridSpec {
        speeds: a.speeds,
        pressures: a.pressures,
        fits: a.fits,
        cycles_per_record: a.cycles,
        records_per_condition: a.records,
        seed: a.seed,
    };
    let data = generate_dataset(&spec)?;
    formats::write_dataset(&data, create(&a.out)?)?;
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data = load_dataset(&a.data, a.require_nonnegative)?;
    let config = a.net.training(a.kernels);
    let mut rng = RandomStream::new(a.seed, 0);
    let (model, history) = train_monitored(&data, &config, &mut rng, None)?;
    formats::write_model(&model, create(&a.out)?)?;

    let loss_path = a.loss.unwrap_or_else(|| a.out.with_extension("loss.csv"));
    let mut out = create(&loss_path)?;
    writeln!(out, "epoch,train_nll")?;
    for (i, l) in history.train.iter().enumerate() {
        writeln!(out, "{},{l}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let model = formats::read_model(open(&a.model)?).with_context(|| format!("{}", a.model.display()))?;
    let mut rng = RandomStream::new(a.seed, 0);
    let series = match &a.schedule {
        Some(path) => {
            let segments = formats::read_schedule(open(path)?).with_context(|| format!("{}", path.display()))?;
            simulate_transient(&model, &expand_schedule(&segments), &mut rng)?
        }
        None => {
            let (Some(s), Some(p), Some(f)) = (a.speed, a.pressure, a.fit) else {
                bail!("--speed, --pressure and --fit are required without --schedule");
            };
            simulate_steady(&model, &OperatingPoint::new(s, p, f)?, a.n, &mut rng)?
        }
    };
    formats::write_series(&series, create(&a.out)?)?;
    Ok(())
}

/// One analysed sequence: condition id and record id (absent for a series).
struct Curve<'a> {
    key: Option<(usize, u32)>,
    ki: &'a [f64],
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let dir = &a.out_dir;

    let dataset = match &a.data {
        Some(path) => Some(load_dataset(path, a.require_nonnegative)?),
        None => None,
    };
    let series_ki = match &a.series {
        Some(path) => formats::read_series(open(path)?).with_context(|| format!("{}", path.display()))?.1,
        None => Vec::new(),
    };
    let curves: Vec<Curve> = match &dataset {
        Some(data) => {
            let mut curves = Vec::with_capacity(data.n_records());
            for c in 0..data.n_conditions() {
                for r in data.records_of(c)? {
                    curves.push(Curve { key: Some((c, r.record_id)), ki: &r.ki });
                }
            }
            curves
        }
        None => vec![Curve { key: None, ki: &series_ki }],
    };
    let keyed = a.data.is_some();

    let mut acf = create(&dir.join("autocorrelation.csv"))?;
    writeln!(acf, "{}lag,r,band_lo,band_hi", if keyed { "condition_id,record_id," } else { "" })?;
    for c in &curves {
        if c.ki.len() < 2 {
            continue;
        }
        let band = white_noise_band(c.ki.len(), a.level)?;
        let max_lag = a.max_lag.min(c.ki.len() - 1);
        for (k, r) in autocorrelations(c.ki, max_lag)?.iter().enumerate() {
            if let Some((cond, rec)) = c.key {
                write!(acf, "{cond},{rec},")?;
            }
            writeln!(acf, "{k},{r},{},{band}", -band)?;
        }
    }
    acf.flush()?;

    // ECDF and histogram are per condition for a dataset.
    let mut pooled: Vec<(Option<usize>, Vec<f64>)> = Vec::new();
    for c in &curves {
        let cond = c.key.map(|k| k.0);
        match pooled.last_mut() {
            Some((last, v)) if *last == cond => v.extend_from_slice(c.ki),
            _ => pooled.push((cond, c.ki.to_vec())),
        }
    }
    let prefix = |cond: Option<usize>| cond.map(|c| format!("{c},")).unwrap_or_default();

    let mut ecdf_out = create(&dir.join("ecdf.csv"))?;
    writeln!(ecdf_out, "{}x,y", if keyed { "condition_id," } else { "" })?;
    let mut hist_out = create(&dir.join("histogram.csv"))?;
    writeln!(hist_out, "{}bin_lo,bin_hi,rel_freq", if keyed { "condition_id," } else { "" })?;
    for (cond, samples) in &pooled {
        if samples.is_empty() {
            continue;
        }
        let e = ecdf(samples)?;
        for &x in e.sorted_points() {
            writeln!(ecdf_out, "{}{x},{}", prefix(*cond), e.eval(x))?;
        }
        let (lo, hi) = shared_range(&[samples])?;
        let h = rel_freq_histogram(samples, a.bins, lo, hi)?;
        for (j, f) in h.rel_freq.iter().enumerate() {
            writeln!(hist_out, "{}{},{},{f}", prefix(*cond), h.bin_edges[j], h.bin_edges[j + 1])?;
        }
    }
    ecdf_out.flush()?;
    hist_out.flush()?;

    if !a.kernels.is_empty() {
        let Some(data) = &dataset else {
            bail!("--kernels needs --data");
        };
        let sweep = harness::kernel_sweep_em(data, &a.kernels, &EmConfig::default(), a.bins)?;
        let mut out = create(&dir.join("kernel_sweep.csv"))?;
        writeln!(out, "condition_id,kernel_count,cdf_error,rel_freq_error,error")?;
        for c in &sweep {
            for entry in &c.entries {
                match &entry.outcome {
                    Ok(e) => writeln!(out, "{},{},{},{},", c.condition_id, entry.kernel_count, e.cdf, e.rel_freq)?,
                    Err(err) => writeln!(out, "{},{},,,{err}", c.condition_id, entry.kernel_count)?,
                }
            }
        }
        out.flush()?;
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let data = load_dataset(&a.data, a.require_nonnegative)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if a.threads > 0 {
        builder = builder.num_threads(a.threads);
    }
    let pool = builder.build().context("cannot start worker threads")?;

    match a.protocol {
        Protocol::Steady => {
            let config = SteadyConfig {
                kernels: a.kernels.clone(),
                groups: a.groups,
                samples_per_group: a.samples_per_group,
                training: a.net.training(1),
                seed: a.seed,
                holdout: a.holdout.clone(),
                level: DEFAULT_LEVEL,
            };
            let report = pool.install(|| harness::steady_validate(&data, &config))?;
            formats::write_json(&report, create(&a.out)?)?;
        }
        Protocol::Transient => {
            let schedule = match &a.schedule {
                Some(p) => formats::read_schedule(open(p)?).with_context(|| format!("{}", p.display()))?,
                None => harness::default_step_schedule(),
            };
            let reference = match &a.reference {
                Some(p) => Some(formats::read_series(open(p)?).with_context(|| format!("{}", p.display()))?.1),
                None => None,
            };
            let report = pool.install(|| -> knocksim_core::Result<_> {
                let models = harness::train_kernel_set(&data, &a.kernels, &a.net.training(1), a.seed)?;
                harness::transient_validate(&models, &schedule, reference.as_deref(), a.seed)
            })?;
            formats::write_json(&report, create(&a.out)?)?;
        }
    }
    Ok(())
}

fn amise_cmd(a: AmiseArgs) -> Result<()> {
    let inputs = AmiseInputs::new(a.count, a.curvature)?;
    let delta = amise_optimal_delta(&inputs);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "delta_opt={delta}")?;
    writeln!(out, "amise_at_opt={}", amise(delta, &inputs)?)?;
    writeln!(out, "amise_min={}", amise_minimum(&inputs))?;
    if let Some(d) = a.delta {
        writeln!(out, "amise_at_delta={}", amise(d, &inputs)?)?;
    }
    Ok(())
}
