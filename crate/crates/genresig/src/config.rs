//! Run configuration: built-in defaults, overridden by an optional JSON
//! file, overridden by command-line flags. Every command echoes the merged
//! result to `run_config.json` in its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use genresig_core::analysis::Metric;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, json_err, Result};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    /// Dataset root (`synth` output, `prepare` input); `train` and later
    /// commands also accept the cache directory here.
    pub data: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Directory written by `train`, read by the analysis commands.
    pub run: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub signatures: Option<PathBuf>,
    pub seed: u64,
    pub folds: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub patience: usize,
    pub refit: bool,
    pub temperature: f64,
    pub attended: bool,
    pub metric: Option<Metric>,
    pub components: usize,
    pub per_track: bool,
    pub in_pca: Option<usize>,
    pub threshold: Option<f64>,
    pub max: usize,
    pub k: Option<usize>,
    pub track: Option<String>,
    pub samples: usize,
    pub tracks_per_class: usize,
    pub points: usize,
    pub jobs: usize,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            data: None,
            cache: None,
            out: None,
            run: None,
            model: None,
            signatures: None,
            seed: 42,
            folds: 6,
            epochs: 30,
            batch: 16,
            lr: 1e-3,
            patience: 5,
            refit: false,
            temperature: 10.0,
            attended: false,
            metric: None,
            components: 2,
            per_track: false,
            in_pca: None,
            threshold: None,
            max: 10,
            k: None,
            track: None,
            samples: 5,
            tracks_per_class: 100,
            points: 10,
            jobs: 0,
            deterministic: true,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(json_err(path))
    }

    /// Writes `run_config.json` into `dir`, creating it if needed.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(RUN_CONFIG_FILE);
        let text = serde_json::to_string_pretty(self).map_err(json_err(&path))?;
        fs::write(&path, text + "\n").map_err(io_err(&path))
    }
}
