//! Schemas of the TOML files read by each subcommand. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use mrrce::evaluation::{FeatureRecipe, RollingOriginPlan};
use mrrce::simgen::SimConfig;
use mrrce::study::{Method, SimStudyConfig, Tuning, TsStudyConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::io::read_text;
use crate::CliError;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

/// Relative paths inside a config file are resolved against the file's directory.
pub fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

pub type SimulateConfig = SimConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFileConfig {
    pub z: PathBuf,
    pub y: PathBuf,
    pub method: Method,
    /// Candidate penalties for the method's CV or LOO search; a default grid when absent.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tuning: Tuning,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictFileConfig {
    /// Output directory of a previous `fit`.
    pub model: PathBuf,
    pub z: PathBuf,
}

pub type BenchSimConfig = SimStudyConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchTsConfig {
    /// CSV with one column per response and one row per day.
    pub data: PathBuf,
    /// Calendar date of the first row, used for holiday features.
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    /// Feature recipe; the default daily calendar recipe when absent.
    #[serde(default)]
    pub recipe: Option<FeatureRecipe>,
    pub plan: RollingOriginPlan,
    #[serde(default = "default_ts_roster")]
    pub roster: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default)]
    pub tuning: Tuning,
}

impl BenchTsConfig {
    pub fn study(&self) -> TsStudyConfig {
        TsStudyConfig {
            plan: self.plan,
            roster: self.roster.clone(),
            seed: self.seed,
            standardize: self.standardize,
            tuning: self.tuning.clone(),
        }
    }
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date")
}

fn default_ts_roster() -> Vec<Method> {
    vec![Method::Mrrce, Method::Ridge, Method::RidgeSeparate]
}

fn yes() -> bool {
    true
}
