//! CLI configuration schemas and pipeline artifact formats. Every
//! subcommand reads one JSON config (all fields optional, schema
//! versioned, unknown keys rejected) and a handful of flag overrides;
//! JSON artifacts embed the producing run's config hash.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::allocators::TeacherLabel;
use crate::error::{Error, Result};
use crate::eval::{BacktestTrack, UniverseTag};
use crate::exec::ConstraintLevel;
use crate::features::FeatureParams;
use crate::grid::GridConfig;
use crate::io;
use crate::linalg::Mat;
use crate::stress::StressSpec;
use crate::train::{StudentKind, TrainConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Directory consulted for relative config paths that do not resolve
/// against the working directory.
pub const CONFIG_DIR_ENV: &str = "DISTFOLIO_CONFIG_DIR";

/// Resolve a config path: absolute paths and paths that exist relative
/// to the working directory win; otherwise fall back to
/// `$DISTFOLIO_CONFIG_DIR/<path>` when the variable is set.
pub fn resolve_config_path(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    match std::env::var_os(CONFIG_DIR_ENV) {
        Some(dir) => {
            let candidate = PathBuf::from(dir).join(path);
            if candidate.exists() {
                candidate
            } else {
                path.to_path_buf()
            }
        }
        None => path.to_path_buf(),
    }
}

/// Load a subcommand config, or defaults when no path was given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let resolved = resolve_config_path(p);
            let text = io::read_to_string(&resolved)?;
            serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!("{}: {e}", resolved.display()))
            })
        }
        None => Ok(T::default()),
    }
}

fn check_schema(schema: u32) -> Result<()> {
    if schema != CONFIG_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "config schema {schema} unsupported (expected {CONFIG_SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Subcommand configs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSynthConfig {
    pub schema_version: u32,
    pub n_assets: usize,
    /// Weeks to simulate.
    pub horizon: usize,
    pub world_seed: u64,
    /// Weeks between labeled dates (reported count only; labeling
    /// happens in the `label` subcommand).
    pub stride: usize,
    pub out_dir: PathBuf,
}

impl Default for GenSynthConfig {
    fn default() -> Self {
        GenSynthConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            n_assets: 36,
            horizon: 1400,
            world_seed: 32,
            stride: 4,
            out_dir: PathBuf::from("synth"),
        }
    }
}

impl GenSynthConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        if self.n_assets < 2 {
            return Err(Error::Config("n_assets must be at least 2".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub schema_version: u32,
    /// Weekly return CSV (date[,RF],ASSET...).
    pub returns: PathBuf,
    /// Factor CSV aligned to the same dates.
    pub factors: PathBuf,
    pub params: FeatureParams,
    pub out: PathBuf,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            returns: PathBuf::from("synth/returns.csv"),
            factors: PathBuf::from("synth/factors.csv"),
            params: FeatureParams::default(),
            out: PathBuf::from("features.json"),
        }
    }
}

impl FeaturesConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub schema_version: u32,
    pub returns: PathBuf,
    /// First eligible decision week.
    pub min_hist: usize,
    pub stride: usize,
    /// Scenario window for the teacher.
    pub window: usize,
    pub alpha: f64,
    pub out: PathBuf,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            returns: PathBuf::from("synth/returns.csv"),
            min_hist: FeatureParams::default().min_hist(),
            stride: 4,
            window: 52,
            alpha: 0.95,
            out: PathBuf::from("labels.json"),
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if self.window < 2 {
            return Err(Error::Config("scenario window must be at least 2 weeks".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0,1)", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub schema_version: u32,
    pub returns: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub world_seed: u64,
    /// Scenario window stored with unlabeled entries.
    pub label_window: usize,
    pub out: PathBuf,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            returns: PathBuf::from("synth/returns.csv"),
            features: PathBuf::from("features.json"),
            labels: PathBuf::from("labels.json"),
            world_seed: 32,
            label_window: 52,
            out: PathBuf::from("split.json"),
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        if self.label_window < 2 {
            return Err(Error::Config("label_window must be at least 2 weeks".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCliConfig {
    pub schema_version: u32,
    pub split: PathBuf,
    pub returns: PathBuf,
    pub kind: StudentKind,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        TrainCliConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            split: PathBuf::from("split.json"),
            returns: PathBuf::from("synth/returns.csv"),
            kind: StudentKind::DnnSandwich,
            train: TrainConfig::default(),
            out: PathBuf::from("student.json"),
        }
    }
}

impl TrainCliConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub schema_version: u32,
    pub checkpoint: PathBuf,
    pub split: PathBuf,
    pub returns: PathBuf,
    pub level: ConstraintLevel,
    /// When set, the track earns stress-transformed returns while
    /// decisions still see the raw panel.
    pub stress: Option<StressSpec>,
    /// Sampled passes per Bayesian prediction (deterministic nets
    /// ignore this).
    pub mc_draws: usize,
    /// Evaluation RNG seed (Bayesian sampling).
    pub seed: u64,
    pub universe: UniverseTag,
    /// Report label; the checkpoint's student kind when absent.
    pub model_name: Option<String>,
    pub out_dir: PathBuf,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            checkpoint: PathBuf::from("student.json"),
            split: PathBuf::from("split.json"),
            returns: PathBuf::from("synth/returns.csv"),
            level: ConstraintLevel::L1,
            stress: None,
            mc_draws: 32,
            seed: 0,
            universe: UniverseTag::Grid,
            model_name: None,
            out_dir: PathBuf::from("eval"),
        }
    }
}

impl EvaluateConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        if self.stress.is_some() != (self.level == ConstraintLevel::L2) {
            return Err(Error::Config(
                "stress transforms pair exactly with constraint level L2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressCliConfig {
    pub schema_version: u32,
    pub returns: PathBuf,
    pub stress: StressSpec,
    pub out: PathBuf,
}

impl Default for StressCliConfig {
    fn default() -> Self {
        StressCliConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            returns: PathBuf::from("synth/returns.csv"),
            stress: StressSpec { kind: crate::stress::StressKind::corr_spike_default(), seed: 0 },
            out: PathBuf::from("stressed_returns.csv"),
        }
    }
}

impl StressCliConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridCliConfig {
    pub schema_version: u32,
    pub grid: GridConfig,
    /// Worker threads for training/evaluation cells; 0 = one per core.
    pub workers: usize,
    pub save_checkpoints: bool,
    pub out_dir: PathBuf,
}

impl Default for GridCliConfig {
    fn default() -> Self {
        GridCliConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            grid: GridConfig::default(),
            workers: 1,
            save_checkpoints: true,
            out_dir: PathBuf::from("grid"),
        }
    }
}

impl GridCliConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        self.grid.validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub schema_version: u32,
    /// Report CSVs to aggregate.
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            inputs: Vec::new(),
            out: PathBuf::from("summary.csv"),
        }
    }
}

impl ReportConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        if self.inputs.is_empty() {
            return Err(Error::Config("report needs at least one input CSV".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Pipeline artifacts
// ---------------------------------------------------------------------------

/// Feature rows at every eligible decision date.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureTable {
    pub config_hash: String,
    /// Flattened feature dimension per row.
    pub dim: usize,
    pub entries: Vec<FeatureEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub t: usize,
    pub date: NaiveDate,
    pub x: Vec<f64>,
}

/// Teacher labels plus the parameters that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSet {
    pub config_hash: String,
    pub window: usize,
    pub alpha: f64,
    pub labels: Vec<TeacherLabel>,
}

/// One labeled example bound to its decision date.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitEntry {
    pub t: usize,
    pub x: Vec<f64>,
    pub w_teacher: Vec<f64>,
    pub real: bool,
}

/// Unlabeled example: the scenario window is reconstructed from the
/// return panel at training time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnlabeledEntry {
    pub t: usize,
    pub x: Vec<f64>,
}

/// Chronology-preserving dataset split plus the unlabeled pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitArtifact {
    pub config_hash: String,
    pub world_seed: u64,
    pub label_window: usize,
    pub dates: Vec<NaiveDate>,
    pub train: Vec<SplitEntry>,
    pub val: Vec<SplitEntry>,
    pub test: Vec<SplitEntry>,
    pub unlabeled: Vec<UnlabeledEntry>,
    pub warning: Option<String>,
}

/// Backtest track with its run identity, written by `evaluate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackArtifact {
    pub config_hash: String,
    pub model: String,
    pub world_seed: u64,
    pub model_seed: u64,
    pub universe: UniverseTag,
    pub level: ConstraintLevel,
    pub stress: Option<String>,
    pub track: BacktestTrack,
}

/// Full grid outcome wrapper written by `grid` next to the CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridArtifact {
    pub config_hash: String,
    pub outcome: crate::grid::GridOutcome,
}

impl SplitArtifact {
    /// Rebuild the in-memory dataset: labeled pairs from the train
    /// entries and scenario windows for the unlabeled pool sliced from
    /// the return panel.
    pub fn to_dataset(&self, returns: &Mat) -> Result<crate::train::Dataset> {
        let w = self.label_window;
        let labeled = self
            .train
            .iter()
            .map(|e| crate::train::LabeledPair {
                x: e.x.clone(),
                w_teacher: e.w_teacher.clone(),
                real: e.real,
            })
            .collect();
        let mut unlabeled = Vec::with_capacity(self.unlabeled.len());
        for e in &self.unlabeled {
            if e.t + 1 < w || e.t >= returns.rows() {
                return Err(Error::Data(format!(
                    "unlabeled entry at week {} lacks a {w}-week window in a {}-week panel",
                    e.t,
                    returns.rows()
                )));
            }
            let window = Mat::from_fn(w, returns.cols(), |i, j| returns[(e.t + 1 - w + i, j)]);
            unlabeled.push(crate::train::UnlabeledPair { x: e.x.clone(), window });
        }
        Ok(crate::train::Dataset { labeled, unlabeled })
    }

    /// Test entries as chronological evaluation points.
    pub fn test_points(&self) -> Result<Vec<crate::eval::EvalPoint>> {
        let mut entries: Vec<&SplitEntry> = self.test.iter().collect();
        entries.sort_by_key(|e| e.t);
        entries
            .iter()
            .map(|e| {
                let date = *self.dates.get(e.t).ok_or_else(|| {
                    Error::Data(format!("test entry week {} outside the calendar", e.t))
                })?;
                Ok(crate::eval::EvalPoint { idx: e.t, date, x: e.x.clone() })
            })
            .collect()
    }
}
