//! File formats, configuration and experiment orchestration behind the CLI.

pub mod config;
pub mod csv_io;
pub mod ingest;
pub mod pgm;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::admm::{dataset_images, train, HistoryRecord};
use crate::dgp::{stream_rng, LabeledDataset};
use crate::error::{Error, Result};
use crate::imaging::ImagingConfig;
use crate::metrics::{confusion, scores, Scores};
use crate::net::{read_checkpoint, write_checkpoint, CnnModel};

pub use config::{DataSource, DgpChoice, ExperimentConfig, NetConfig, SimulateSpec};

const SPLIT_STREAM: u64 = u64::MAX - 2;

/// Per-class shuffle-then-cut split. Each class with at least two samples keeps
/// at least one on each side. Both index lists are sorted.
pub fn stratified_split(labels: &[usize], classes: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream_rng(seed, SPLIT_STREAM);
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for class in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let mut cut = (fraction * n as f64).round() as usize;
        if n >= 2 {
            cut = cut.clamp(1, n - 1);
        }
        train.extend_from_slice(&members[..cut]);
        eval.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    (train, eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub scores: Scores,
    pub n_eval: usize,
    #[serde(rename = "K")]
    pub classes: usize,
}

pub fn predictions(model: &CnnModel, data: &LabeledDataset, alpha: &[f64], imaging: &ImagingConfig) -> Result<Vec<usize>> {
    dataset_images(data, alpha, imaging)?
        .iter()
        .map(|img| model.predict(img))
        .collect()
}

pub fn evaluate(model: &CnnModel, data: &LabeledDataset, alpha: &[f64], imaging: &ImagingConfig) -> Result<EvalReport> {
    if model.classes() != data.classes {
        return Err(Error::DimMismatch {
            expected: model.classes(),
            got: data.classes,
        });
    }
    let pred = predictions(model, data, alpha, imaging)?;
    let c = confusion(&data.labels(), &pred, data.classes)?;
    Ok(EvalReport {
        scores: scores(&c)?,
        n_eval: data.len(),
        classes: data.classes,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_model(model: &CnnModel, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_checkpoint(model, &mut bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<CnnModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(bytes.as_slice())
}

/// Everything needed to rerun a CLI invocation.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: Option<u64>,
    pub config: &'a C,
}

pub fn write_manifest<C: Serialize>(path: &Path, command: &str, seed: Option<u64>, config: &C) -> Result<()> {
    write_json(
        path,
        &Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
        },
    )
}

/// Files written by [`run_experiment`], relative to the output directory.
pub mod outputs {
    pub const MANIFEST: &str = "manifest.json";
    pub const MODEL: &str = "model.ckpt";
    pub const BETA: &str = "beta.json";
    pub const HISTORY: &str = "history.json";
    pub const TRAIN_CSV: &str = "train.csv";
    pub const EVAL_CSV: &str = "eval.csv";
    pub const TRAIN_METRICS: &str = "train_metrics.json";
    pub const EVAL_METRICS: &str = "metrics.json";
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub model: CnnModel,
    pub beta: Vec<f64>,
    pub history: Vec<HistoryRecord>,
    pub train_loss: f64,
    pub train_report: EvalReport,
    pub eval_report: EvalReport,
    pub output_dir: PathBuf,
}

/// Loads data, splits it, trains, evaluates both splits and writes all outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let data = cfg.load_data()?;
    let (train_idx, eval_idx) = stratified_split(&data.labels(), data.classes, cfg.split, cfg.seed);
    if train_idx.is_empty() || eval_idx.is_empty() {
        return Err(Error::InvalidConfig("split leaves an empty side".into()));
    }
    let (train_set, eval_set) = (data.subset(&train_idx), data.subset(&eval_idx));
    let outcome = train(
        &train_set,
        &cfg.imaging,
        &cfg.net.architecture,
        &cfg.train_config(),
        &cfg.admm,
    )?;
    let train_report = evaluate(&outcome.model, &train_set, &outcome.beta, &cfg.imaging)?;
    let eval_report = evaluate(&outcome.model, &eval_set, &outcome.beta, &cfg.imaging)?;

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_manifest(&dir.join(outputs::MANIFEST), "train", Some(cfg.seed), cfg)?;
    save_model(&outcome.model, &dir.join(outputs::MODEL))?;
    write_json(&dir.join(outputs::BETA), &outcome.beta)?;
    write_json(&dir.join(outputs::HISTORY), &outcome.history)?;
    csv_io::write_dataset_file(&train_set, &dir.join(outputs::TRAIN_CSV))?;
    csv_io::write_dataset_file(&eval_set, &dir.join(outputs::EVAL_CSV))?;
    write_json(&dir.join(outputs::TRAIN_METRICS), &train_report)?;
    write_json(&dir.join(outputs::EVAL_METRICS), &eval_report)?;
    Ok(ExperimentResult {
        model: outcome.model,
        beta: outcome.beta,
        history: outcome.history,
        train_loss: outcome.train_loss,
        train_report,
        eval_report,
        output_dir: dir.clone(),
    })
}
