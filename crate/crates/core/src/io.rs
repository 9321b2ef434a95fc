//! File formats: datasets and training logs as CSV, parameters and
//! summaries as JSON. Reals are written with 17 significant digits.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::{DistanceCheck, InvariantTally, StepFlags, StepRecord, TrainLog, TrainOutcome};
use crate::network::{Dataset, Params, Shape};

/// Serde adapter writing non-finite floats as the strings `"inf"`, `"-inf"`
/// and `"nan"`, so JSON output always parses back.
pub mod lenient_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_real(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a real number: {s:?}")))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_string(path, &serde_json::to_string_pretty(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

/// Writes a matrix as CSV with header `prefix1, prefix2, ...`.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((1..=m.ncols()).map(|j| format!("{prefix}{j}")))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|&v| fmt_real(v)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    write_string(path, &String::from_utf8_lossy(&bytes))
}

/// Reads a headed numeric CSV into a matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = read_to_string(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let cols = r.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Parse(format!("{}: ragged row {}", path.display(), rows + 1)));
        }
        for field in rec.iter() {
            data.push(parse_real(field)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidDataset(format!("{}: no data rows", path.display())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 {
        return Err(Error::Parse(format!("{what}: empty matrix")));
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Parse(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.iter().flatten().copied()))
}

/// Row-major JSON form of a dataset, optionally with the network shape it
/// is meant for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetBundle {
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    #[serde(rename = "Y")]
    pub y: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
}

impl DatasetBundle {
    pub fn from_dataset(data: &Dataset, shape: Option<&Shape>) -> Self {
        Self {
            x: to_rows(data.x()),
            y: to_rows(data.y()),
            shape: shape.cloned(),
        }
    }

    pub fn into_dataset(self) -> Result<(Dataset, Option<Shape>)> {
        let data = Dataset::new(from_rows(&self.x, "X")?, from_rows(&self.y, "Y")?)?;
        if let Some(shape) = &self.shape {
            if shape.input_dim() != data.input_dim() || shape.output_dim() != data.output_dim() {
                return Err(Error::InvalidShape(format!(
                    "bundle shape expects {}-in/{}-out but data is {}-in/{}-out",
                    shape.input_dim(),
                    shape.output_dim(),
                    data.input_dim(),
                    data.output_dim()
                )));
            }
        }
        Ok((data, self.shape))
    }
}

/// Row-major JSON form of a parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsBundle {
    pub shape: Shape,
    pub weights: Vec<Vec<Vec<f64>>>,
}

impl ParamsBundle {
    pub fn from_params(params: &Params) -> Result<Self> {
        let (d, widths) = params.dims();
        Ok(Self {
            shape: Shape::new(d, widths)?,
            weights: params.weights().iter().map(to_rows).collect(),
        })
    }

    pub fn into_params(self) -> Result<Params> {
        let weights = self
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| from_rows(w, &format!("W_{}", l + 1)))
            .collect::<Result<Vec<_>>>()?;
        let params = Params::new(weights)?;
        params.check_shape(&self.shape)?;
        Ok(params)
    }
}

pub fn save_dataset_csv(x_path: &Path, y_path: &Path, data: &Dataset) -> Result<()> {
    write_matrix_csv(x_path, data.x(), "x")?;
    write_matrix_csv(y_path, data.y(), "y")
}

pub fn load_dataset_csv(x_path: &Path, y_path: &Path) -> Result<Dataset> {
    Dataset::new(read_matrix_csv(x_path)?, read_matrix_csv(y_path)?)
}

pub fn save_params(path: &Path, params: &Params) -> Result<()> {
    write_json(path, &ParamsBundle::from_params(params)?)
}

pub fn load_params(path: &Path) -> Result<Params> {
    read_json::<ParamsBundle>(path)?.into_params()
}

/// Header of the training-log CSV for a depth-`depth` network.
pub fn log_header(depth: usize) -> Vec<String> {
    let mut h: Vec<String> = ["k", "loss", "bound", "sv_F1"].iter().map(|s| s.to_string()).collect();
    h.extend((3..=depth).map(|l| format!("min_sv_W{l}")));
    h.extend((1..=depth).map(|l| format!("max_norm_W{l}")));
    h.push("grad_norm".into());
    h.push("flags".into());
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

pub fn log_to_csv(records: &[StepRecord], depth: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(log_header(depth))?;
    for rec in records {
        let mut row = vec![rec.k.to_string(), fmt_real(rec.loss), opt(rec.bound), opt(rec.sv_f1)];
        let min_sv = |i: usize| rec.min_sv_w.get(i).copied();
        let norm = |i: usize| rec.max_norm_w.get(i).copied();
        row.extend((0..depth.saturating_sub(2)).map(|i| opt(min_sv(i))));
        row.extend((0..depth).map(|i| opt(norm(i))));
        row.push(fmt_real(rec.grad_norm));
        row.push(rec.flags.encode());
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

pub fn log_from_csv(text: &str) -> Result<Vec<StepRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let cols = r.headers()?.len();
    if cols < 8 || cols % 2 == 1 {
        return Err(Error::Parse(format!("training log has {cols} columns")));
    }
    let depth = (cols - 4) / 2;
    let parse_opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_real(s).map(Some)
        }
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let k = f(0)
            .parse()
            .map_err(|_| Error::Parse(format!("bad step index {:?}", f(0))))?;
        let min_sv_w: Vec<f64> = (0..depth - 2)
            .filter_map(|i| parse_opt(f(4 + i)).transpose())
            .collect::<Result<_>>()?;
        let max_norm_w: Vec<f64> = (0..depth)
            .filter_map(|i| parse_opt(f(2 + depth + i)).transpose())
            .collect::<Result<_>>()?;
        out.push(StepRecord {
            k,
            loss: parse_real(f(1))?,
            bound: parse_opt(f(2))?,
            sv_f1: parse_opt(f(3))?,
            min_sv_w,
            max_norm_w,
            grad_norm: parse_real(f(cols - 2))?,
            flags: StepFlags::decode(f(cols - 1))?,
        });
    }
    Ok(out)
}

/// JSON companion of the training-log CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub eta: f64,
    pub outcome: TrainOutcome,
    pub steps: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub certified_step: Option<bool>,
    pub tally: InvariantTally,
    pub distance: Option<DistanceCheck>,
}

impl TrainSummary {
    pub fn from_log(log: &TrainLog, eta: f64) -> Self {
        Self {
            eta,
            outcome: log.outcome.clone(),
            steps: log.steps,
            initial_loss: log.initial_loss,
            final_loss: log.final_loss,
            certified_step: log.certified_step,
            tally: log.tally.clone(),
            distance: log.distance.clone(),
        }
    }
}
