//! On-disk formats.
//!
//! CSV files are UTF-8 with LF line endings and a fixed header. Floats are
//! written with Rust's `Display` for `f64` (shortest decimal that parses
//! back to the same bits), so write → read → write is byte-identical.
//! Model and report files are JSON; floats there use the shortest
//! round-trip representation and are parsed back exactly.

use std::io::{BufRead, Read, Write};

use knocksim_core::{Dataset, KnockRecord, MdnModel, Normalizer, OperatingPoint, SimulatedSeries};
use serde::{Deserialize, Serialize};

pub const DATASET_HEADER: &str = "condition_id,record_id,cycle,speed_rpm,manifold_bar,fit_deg,ki";
pub const SERIES_HEADER: &str = "cycle,speed_rpm,manifold_bar,fit_deg,ki";
pub const SCHEDULE_HEADER: &str = "cycles,speed_rpm,manifold_bar,fit_deg";

pub const MODEL_FORMAT: &str = "knocksim-mdn";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] knocksim_core::Error),
}

fn parse_err(line: u64, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

/// Rows of a headed CSV file, each paired with its 1-based line number.
fn csv_rows<R: Read>(reader: R, header: &str) -> Result<Vec<(u64, csv::StringRecord)>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut rows = Vec::new();
    let mut records = rdr.records();
    match records.next() {
        None => return Err(parse_err(1, format!("missing header, expected `{header}`"))),
        Some(first) => {
            let first = first?;
            let got: Vec<&str> = first.iter().collect();
            if got.join(",") != header {
                return Err(parse_err(1, format!("unexpected header `{}`, expected `{header}`", got.join(","))));
            }
        }
    }
    let width = header.split(',').count();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(parse_err(line, format!("expected {width} fields, found {}", rec.len())));
        }
        rows.push((line, rec));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T, FormatError> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("cannot parse {name} from `{raw}`")))
}

fn point(speed: f64, pressure: f64, fit: f64, line: u64) -> Result<OperatingPoint, FormatError> {
    OperatingPoint::new(speed, pressure, fit).map_err(|e| parse_err(line, e.to_string()))
}

pub fn write_dataset<W: Write>(data: &Dataset, mut out: W) -> Result<(), FormatError> {
    writeln!(out, "{DATASET_HEADER}")?;
    for id in 0..data.n_conditions() {
        for rec in data.records_of(id)? {
            let u = rec.condition;
            for (cycle, ki) in rec.ki.iter().enumerate() {
                writeln!(
                    out,
                    "{id},{},{cycle},{},{},{},{ki}",
                    rec.record_id,
                    u.speed(),
                    u.manifold_pressure(),
                    u.fit()
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset CSV.
///
/// Condition ids must be dense and numbered in order of first appearance,
/// every row of a condition must carry the same operating point, and the
/// cycles of a record must run `0, 1, 2, …` on consecutive rows. With
/// `require_nonnegative`, negative intensities are rejected as for measured
/// data.
pub fn read_dataset<R: Read>(reader: R, require_nonnegative: bool) -> Result<Dataset, FormatError> {
    let rows = csv_rows(reader, DATASET_HEADER)?;
    let mut conditions: Vec<OperatingPoint> = Vec::new();
    let mut records: Vec<(usize, KnockRecord)> = Vec::new();

    for (line, rec) in rows {
        let condition_id: usize = field(&rec, 0, "condition_id", line)?;
        let record_id: u32 = field(&rec, 1, "record_id", line)?;
        let cycle: usize = field(&rec, 2, "cycle", line)?;
        let u = point(
            field(&rec, 3, "speed_rpm", line)?,
            field(&rec, 4, "manifold_bar", line)?,
            field(&rec, 5, "fit_deg", line)?,
            line,
        )?;
        let ki: f64 = field(&rec, 6, "ki", line)?;
        if !ki.is_finite() {
            return Err(parse_err(line, format!("non-finite knock intensity `{ki}`")));
        }
        if require_nonnegative && ki < 0.0 {
            return Err(parse_err(line, format!("negative knock intensity {ki} in measured data")));
        }

        match conditions.get(condition_id) {
            Some(known) if !known.same_as(&u) => {
                return Err(parse_err(line, format!("condition {condition_id} has a different operating point on an earlier row")));
            }
            Some(_) => {}
            None if condition_id == conditions.len() => {
                if let Some(other) = conditions.iter().position(|c| c.same_as(&u)) {
                    return Err(parse_err(line, format!("operating point already listed as condition {other}")));
                }
                conditions.push(u);
            }
            None => {
                return Err(parse_err(line, format!(
                    "condition id {condition_id} out of order, expected at most {}",
                    conditions.len()
                )));
            }
        }

        let continues = matches!(records.last(), Some((c, r)) if *c == condition_id && r.record_id == record_id && cycle > 0);
        if continues {
            let (_, r) = records.last_mut().expect("checked above");
            if cycle != r.ki.len() {
                return Err(parse_err(line, format!("cycle {cycle} out of sequence, expected {}", r.ki.len())));
            }
            r.ki.push(ki);
        } else {
            if cycle != 0 {
                return Err(parse_err(line, format!("record {record_id} must start at cycle 0, found {cycle}")));
            }
            records.push((condition_id, KnockRecord { condition: u, record_id, ki: vec![ki] }));
        }
    }
    Ok(Dataset::new(records.into_iter().map(|(_, r)| r).collect()))
}

pub fn write_series<W: Write>(series: &SimulatedSeries, mut out: W) -> Result<(), FormatError> {
    writeln!(out, "{SERIES_HEADER}")?;
    for (cycle, (ki, u)) in series.ki.iter().zip(&series.conditions).enumerate() {
        writeln!(out, "{cycle},{},{},{},{ki}", u.speed(), u.manifold_pressure(), u.fit())?;
    }
    out.flush()?;
    Ok(())
}

/// Per-cycle operating points and intensities of a series CSV.
pub fn read_series<R: Read>(reader: R) -> Result<(Vec<OperatingPoint>, Vec<f64>), FormatError> {
    let rows = csv_rows(reader, SERIES_HEADER)?;
    let mut points = Vec::with_capacity(rows.len());
    let mut ki = Vec::with_capacity(rows.len());
    for (i, (line, rec)) in rows.into_iter().enumerate() {
        let cycle: usize = field(&rec, 0, "cycle", line)?;
        if cycle != i {
            return Err(parse_err(line, format!("cycle {cycle} out of sequence, expected {i}")));
        }
        points.push(point(
            field(&rec, 1, "speed_rpm", line)?,
            field(&rec, 2, "manifold_bar", line)?,
            field(&rec, 3, "fit_deg", line)?,
            line,
        )?);
        let y: f64 = field(&rec, 4, "ki", line)?;
        if !y.is_finite() {
            return Err(parse_err(line, format!("non-finite knock intensity `{y}`")));
        }
        ki.push(y);
    }
    Ok((points, ki))
}

/// A constant operating point held for a number of cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub cycles: usize,
    pub point: OperatingPoint,
}

/// Expands segments into one operating point per cycle.
pub fn expand_schedule(segments: &[Segment]) -> Vec<OperatingPoint> {
    segments
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.point, s.cycles))
        .collect()
}

pub fn write_schedule<W: Write>(segments: &[Segment], mut out: W) -> Result<(), FormatError> {
    writeln!(out, "{SCHEDULE_HEADER}")?;
    for s in segments {
        writeln!(out, "{},{},{},{}", s.cycles, s.point.speed(), s.point.manifold_pressure(), s.point.fit())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_schedule<R: Read>(reader: R) -> Result<Vec<Segment>, FormatError> {
    csv_rows(reader, SCHEDULE_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(Segment {
                cycles: field(&rec, 0, "cycles", line)?,
                point: point(
                    field(&rec, 1, "speed_rpm", line)?,
                    field(&rec, 2, "manifold_bar", line)?,
                    field(&rec, 3, "fit_deg", line)?,
                    line,
                )?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerFile {
    pub input_mean: [f64; 3],
    pub input_std: [f64; 3],
    pub output_mean: f64,
    pub output_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `[output][input]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Versioned model file. Layers are listed from the input side; the
/// concatenation of each layer's weights then biases is the canonical
/// parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub kernel_count: usize,
    pub sigma_floor: f64,
    pub normalizer: NormalizerFile,
    pub layers: Vec<LayerFile>,
}

impl ModelFile {
    pub fn from_model(model: &MdnModel) -> Self {
        let norm = model.normalizer();
        let mut widths = vec![OperatingPoint::DIM];
        widths.extend_from_slice(model.hidden_sizes());
        widths.push(3 * model.kernel_count());
        let mut rest = model.params();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let (weights, tail) = rest.split_at(inputs * outputs);
                let (biases, tail) = tail.split_at(outputs);
                rest = tail;
                LayerFile { inputs, outputs, weights: weights.to_vec(), biases: biases.to_vec() }
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            input_dim: OperatingPoint::DIM,
            hidden_sizes: model.hidden_sizes().to_vec(),
            kernel_count: model.kernel_count(),
            sigma_floor: model.sigma_floor(),
            normalizer: NormalizerFile {
                input_mean: norm.input_mean,
                input_std: norm.input_std,
                output_mean: norm.output_mean,
                output_std: norm.output_std,
            },
            layers,
        }
    }

    pub fn into_model(self) -> Result<MdnModel, FormatError> {
        let bad = |m: &str| parse_err(0, format!("model file: {m}"));
        if self.format != MODEL_FORMAT {
            return Err(bad(&format!("unknown format `{}`", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(bad(&format!("unsupported version {}", self.version)));
        }
        if self.input_dim != OperatingPoint::DIM {
            return Err(bad(&format!("input_dim must be {}", OperatingPoint::DIM)));
        }
        let mut widths = vec![self.input_dim];
        widths.extend_from_slice(&self.hidden_sizes);
        widths.push(3 * self.kernel_count);
        if self.layers.len() + 1 != widths.len() {
            return Err(bad("layer count does not match hidden_sizes"));
        }
        let mut params = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.inputs != widths[l]
                || layer.outputs != widths[l + 1]
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.biases.len() != layer.outputs
            {
                return Err(bad(&format!("layer {l} has inconsistent shape")));
            }
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.biases);
        }
        let n = &self.normalizer;
        let normalizer = Normalizer::from_parts(n.input_mean, n.input_std, n.output_mean, n.output_std)?;
        Ok(MdnModel::from_parts(&self.hidden_sizes, self.kernel_count, normalizer, self.sigma_floor, params)?)
    }
}

pub fn write_model<W: Write>(model: &MdnModel, mut out: W) -> Result<(), FormatError> {
    serde_json::to_writer_pretty(&mut out, &ModelFile::from_model(model))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_model<R: BufRead>(reader: R) -> Result<MdnModel, FormatError> {
    let file: ModelFile = serde_json::from_reader(reader)?;
    file.into_model()
}

/// Writes any serialisable report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<(), FormatError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>, R: BufRead>(reader: R) -> Result<T, FormatError> {
    Ok(serde_json::from_reader(reader)?)
}
