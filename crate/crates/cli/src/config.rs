//! Run configuration file and option resolution.
//!
//! Values resolve as: command-line flag, then config file, then built-in
//! defaults. The output directory additionally falls back to
//! `DETKIT_OUT_DIR` before the current directory.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use detkit_core::losses::LossWeights;
use detkit_core::sweep::SweepGrid;
use detkit_core::PostprocessConfig;
use serde::Deserialize;

use crate::Failure;

pub const OUT_DIR_ENV: &str = "DETKIT_OUT_DIR";

/// Pixels per distribution bin used when no stride is configured.
pub const DEFAULT_STRIDE: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub learning_rates: Option<Vec<f64>>,
    pub batch_sizes: Option<Vec<u32>>,
    /// `[height, width]` pairs.
    pub input_sizes: Option<Vec<[u32; 2]>>,
    pub workers: Option<usize>,
    pub command: Option<String>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = read_input(path)?;
        serde_json::from_slice(&text)
            .with_context(|| format!("{}: invalid sweep config", path.display()))
            .map_err(Failure::Input)
    }

    /// The configured grid; missing axes come from the standard grid.
    pub fn grid(&self) -> Result<SweepGrid, Failure> {
        let std = SweepGrid::standard();
        let lrs = self.learning_rates.clone().unwrap_or_else(|| std.learning_rates().to_vec());
        let batches = self.batch_sizes.clone().unwrap_or_else(|| std.batch_sizes().to_vec());
        let inputs = match &self.input_sizes {
            Some(v) => v.iter().map(|&[h, w]| (h, w)).collect(),
            None => std.input_sizes().to_vec(),
        };
        Ok(SweepGrid::new(lrs, batches, inputs)?)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub annotations: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub postprocess: Option<PostprocessConfig>,
    pub iou_threshold: Option<f64>,
    pub loss_weights: Option<LossWeights>,
    pub stride: Option<f64>,
    pub max_items: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    /// Reads and checks a config file. Relative paths inside it are taken
    /// relative to the file's own directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = read_input(path)?;
        let mut cfg: RunConfig = serde_json::from_slice(&text)
            .with_context(|| format!("{}: invalid config", path.display()))
            .map_err(Failure::Input)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.annotations, &mut cfg.predictions, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        for p in [&self.annotations, &self.predictions].into_iter().flatten() {
            if !p.exists() {
                return Err(Failure::Input(anyhow!("{}: file referenced by config does not exist", p.display())));
            }
        }
        if let Some(pp) = &self.postprocess {
            pp.validate()?;
        }
        if let Some(t) = self.iou_threshold {
            check_unit_interval("iou_threshold", t)?;
        }
        if let Some(w) = &self.loss_weights {
            w.validate()?;
        }
        if let Some(s) = self.stride {
            check_stride(s)?;
        }
        if self.max_items == Some(0) {
            return Err(Failure::Input(anyhow!("max_items must be positive")));
        }
        Ok(())
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

pub fn check_unit_interval(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Failure::Input(anyhow!("{name} must lie in (0, 1], got {v}")))
    }
}

pub fn check_stride(s: f64) -> Result<(), Failure> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Failure::Input(anyhow!("stride must be positive, got {s}")))
    }
}

pub fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Input)
}

pub fn write_output(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(Failure::Internal)?;
    }
    std::fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Internal)
}
