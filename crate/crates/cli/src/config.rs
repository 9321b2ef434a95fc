use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pyrcert::initializers::{synthetic_dataset, InitConfig, Scheme};
use pyrcert::io::{load_dataset_csv, read_json, DatasetBundle};
use pyrcert::lambda_star::Nonlinearity;
use pyrcert::{ActivationParams, Dataset, Shape};
use serde::{Deserialize, Serialize};

pub const OUT_ENV: &str = "PYRCERT_OUT";
const DEFAULT_OUT: &str = "pyrcert-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Rows uniform on the sphere of radius `sqrt(d)`, Gaussian labels.
    Synthetic {
        n: usize,
        d: usize,
        #[serde(default = "one")]
        label_scale: f64,
    },
    /// A JSON dataset bundle (`X`, `Y`, optional `shape`).
    File {
        path: PathBuf,
    },
    Csv {
        x: PathBuf,
        y: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Sigma {
    Smoothed,
    Linear,
    Square,
}

impl Sigma {
    pub fn nonlinearity(self, act: &ActivationParams) -> Nonlinearity {
        match self {
            Sigma::Smoothed => Nonlinearity::smoothed(act),
            Sigma::Linear => Nonlinearity::Identity,
            Sigma::Square => Nonlinearity::Square,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mc,
    Hermite,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepCommand {
    Certify,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    /// `None` uses `0.9 min(1/alpha_0, 1/Q_0)` from the certificate.
    pub eta: Option<f64>,
    pub max_steps: u64,
    pub stop_loss: f64,
    pub log_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            eta: None,
            max_steps: 10_000,
            stop_loss: 1e-8,
            log_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LambdaSection {
    pub method: Method,
    pub sigma: Sigma,
    pub samples: usize,
    pub r_max: usize,
    pub quad_order: usize,
}

impl Default for LambdaSection {
    fn default() -> Self {
        Self {
            method: Method::Both,
            sigma: Sigma::Smoothed,
            samples: 100_000,
            r_max: 10,
            quad_order: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrSection {
    pub r: usize,
    pub seeds: u64,
}

impl Default for KrSection {
    fn default() -> Self {
        Self { r: 2, seeds: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HermiteSection {
    pub sigma: Sigma,
    pub r_max: usize,
    pub quad_order: usize,
}

impl Default for HermiteSection {
    fn default() -> Self {
        Self {
            sigma: Sigma::Smoothed,
            r_max: 10,
            quad_order: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub command: SweepCommand,
    pub seeds: Vec<u64>,
    /// Starting gains to try; each entry is crossed with every seed.
    pub c: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            command: SweepCommand::Train,
            seeds: (0..10).collect(),
            c: vec![2.0],
        }
    }
}

/// Everything a run needs; written verbatim to every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub data: DataSource,
    /// `n_1 .. n_L`; falls back to the dataset bundle's shape.
    pub widths: Option<Vec<usize>>,
    pub activation: ActivationParams,
    pub init: InitConfig,
    /// Doublings of `c` tried until both initial conditions hold (section-3.1 scheme only).
    pub tune_attempts: usize,
    /// Start from these weights instead of drawing them.
    pub params: Option<PathBuf>,
    pub train: TrainSection,
    pub lambda_star: LambdaSection,
    pub kr: KrSection,
    pub hermite: HermiteSection,
    pub sweep: SweepSection,
}

fn one() -> f64 {
    1.0
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            format: Format::Csv,
            data: DataSource::Synthetic {
                n: 16,
                d: 8,
                label_scale: 1.0,
            },
            widths: None,
            activation: ActivationParams::new(0.5, 1.0).expect("valid defaults"),
            init: InitConfig::section31(2.0, 0.0, pyrcert::initializers::DeepStyle::ScaledIdentity, 0),
            tune_attempts: 64,
            params: None,
            train: TrainSection::default(),
            lambda_star: LambdaSection::default(),
            kr: KrSection::default(),
            hermite: HermiteSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path).with_context(|| format!("reading config {}", path.display()))
    }

    /// Checks that referenced files exist and grids are non-empty.
    pub fn validate(&self) -> Result<()> {
        let mut files: Vec<&Path> = Vec::new();
        match &self.data {
            DataSource::File { path } => files.push(path),
            DataSource::Csv { x, y } => files.extend([x.as_path(), y.as_path()]),
            DataSource::Synthetic { n, d, .. } => {
                if *n == 0 || *d == 0 {
                    bail!("synthetic data needs n, d >= 1");
                }
            }
        }
        if let Some(p) = &self.params {
            files.push(p);
        }
        for f in files {
            if !f.is_file() {
                bail!("referenced file {} does not exist", f.display());
            }
        }
        if self.sweep.seeds.is_empty() || self.sweep.c.is_empty() {
            bail!("sweep grids must be non-empty");
        }
        if let Some(w) = &self.widths {
            if w.is_empty() {
                bail!("widths must list at least one layer");
            }
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn init_config(&self) -> InitConfig {
        InitConfig {
            seed: self.seed,
            ..self.init.clone()
        }
    }

    pub fn tunes(&self) -> bool {
        self.init.scheme == Scheme::Section31 && self.tune_attempts > 0
    }

    fn load_data(&self) -> Result<(Dataset, Option<Shape>, Option<Vec<usize>>)> {
        Ok(match &self.data {
            DataSource::Synthetic { n, d, label_scale } => {
                let widths = self.widths.clone().unwrap_or_else(default_widths);
                let out = *widths.last().expect("validated");
                (
                    synthetic_dataset(*n, *d, out, *label_scale, self.seed)?,
                    None,
                    Some(widths),
                )
            }
            DataSource::File { path } => {
                let (data, shape) = read_json::<DatasetBundle>(path)
                    .with_context(|| format!("reading dataset {}", path.display()))?
                    .into_dataset()?;
                (data, shape, self.widths.clone())
            }
            DataSource::Csv { x, y } => (load_dataset_csv(x, y)?, None, self.widths.clone()),
        })
    }

    /// Dataset and network shape. Synthetic labels get one column per output unit.
    pub fn dataset(&self) -> Result<(Dataset, Shape)> {
        let (data, bundle_shape, widths) = self.load_data()?;
        let widths = widths
            .or_else(|| bundle_shape.map(|s| s.widths().to_vec()))
            .unwrap_or_else(default_widths);
        let shape = Shape::new(data.input_dim(), widths)?;
        if shape.output_dim() != data.output_dim() {
            bail!(
                "network has {} outputs but labels have {} columns",
                shape.output_dim(),
                data.output_dim()
            );
        }
        Ok((data, shape))
    }

    /// Data matrix alone, for the commands that ignore labels and widths.
    pub fn inputs(&self) -> Result<nalgebra::DMatrix<f64>> {
        Ok(self.load_data()?.0.x().clone())
    }
}

fn default_widths() -> Vec<usize> {
    vec![16, 6, 4, 2]
}
