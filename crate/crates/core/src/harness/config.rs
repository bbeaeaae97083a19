//! Experiment configuration, read from a single JSON document.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::admm::AdmmConfig;
use crate::dgp::{DgpKind, LabeledDataset, Scenario, SimulationOptions, DEFAULT_RHOS};
use crate::error::{Error, Result};
use crate::imaging::ImagingConfig;
use crate::net::{Architecture, TrainConfig};

/// A univariate process or one of the multivariate scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DgpChoice {
    #[serde(rename = "1")]
    Dgp1,
    #[serde(rename = "2")]
    Dgp2,
    #[serde(rename = "3")]
    Dgp3,
    #[serde(rename = "c1")]
    C1,
    #[serde(rename = "c2")]
    C2,
}

impl FromStr for DgpChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "1" | "dgp1" => DgpChoice::Dgp1,
            "2" | "dgp2" => DgpChoice::Dgp2,
            "3" | "dgp3" => DgpChoice::Dgp3,
            "c1" => DgpChoice::C1,
            "c2" => DgpChoice::C2,
            other => return Err(Error::InvalidConfig(format!("unknown dgp {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub dgp: DgpChoice,
    #[serde(default = "default_rhos")]
    pub rhos: Vec<f64>,
    pub per_class: usize,
    pub length: usize,
    #[serde(default)]
    pub options: SimulationOptions,
}

fn default_rhos() -> Vec<f64> {
    DEFAULT_RHOS.to_vec()
}

impl SimulateSpec {
    pub fn build(&self, seed: u64) -> Result<LabeledDataset> {
        let o = &self.options;
        match self.dgp {
            DgpChoice::Dgp1 => o.dataset(DgpKind::Dgp1, &self.rhos, self.per_class, self.length, seed),
            DgpChoice::Dgp2 => o.dataset(DgpKind::Dgp2, &self.rhos, self.per_class, self.length, seed),
            DgpChoice::Dgp3 => o.dataset(DgpKind::Dgp3, &self.rhos, self.per_class, self.length, seed),
            DgpChoice::C1 => o.multivariate(Scenario::C1, &self.rhos, self.per_class, self.length, seed),
            DgpChoice::C2 => o.multivariate(Scenario::C2, &self.rhos, self.per_class, self.length, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Simulate(SimulateSpec),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub architecture: Architecture,
    /// `train.seed` is replaced by the experiment seed.
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Fraction of each class used for training.
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default)]
    pub imaging: ImagingConfig,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub admm: AdmmConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_split() -> f64 {
    0.8
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        // Relative paths are taken relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        if let DataSource::Csv(p) = &mut cfg.data {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::InvalidConfig(format!("split must lie in (0, 1), got {}", self.split)));
        }
        self.imaging.validate()?;
        self.net.train.validate()?;
        self.admm.validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.net.train.clone()
        }
    }

    pub fn load_data(&self) -> Result<LabeledDataset> {
        match &self.data {
            DataSource::Simulate(spec) => spec.build(self.seed),
            DataSource::Csv(path) => super::csv_io::read_dataset_file(path),
        }
    }
}
