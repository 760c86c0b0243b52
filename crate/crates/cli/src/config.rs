//! Configuration file and flag layering.
//!
//! A TOML file holds top-level `seed` and `out` plus one table per command.
//! Every key of a command table mirrors its long flag; flags given on the
//! command line win over the file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub fit: Option<FitArgs>,
    pub simulate: Option<SimulateArgs>,
    pub prior_check: Option<PriorCheckArgs>,
    pub figure1: Option<Figure1Args>,
    pub abalone: Option<AbaloneArgs>,
    pub geweke: Option<GewekeArgs>,
}

pub fn load(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Failure::Validation(format!("config {}: {e}", path.display())))
}

/// Overlays the non-empty flags on the file table.
pub fn layer<T: Serialize + DeserializeOwned>(file: Option<T>, flags: T) -> Result<T, Failure> {
    let Some(file) = file else {
        return Ok(flags);
    };
    let to_value = |v: &T| serde_json::to_value(v).map_err(|e| Failure::Validation(e.to_string()));
    let (mut base, top) = (to_value(&file)?, to_value(&flags)?);
    if let (Value::Object(b), Value::Object(t)) = (&mut base, top) {
        for (k, v) in t {
            if !v.is_null() {
                b.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| Failure::Validation(e.to_string()))
}

pub fn parse<T: std::str::FromStr>(s: &str) -> Result<T, Failure>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e: T::Err| Failure::Validation(e.to_string()))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitArgs {
    /// CSV file with a header row: the response column and the predictors.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Name of the response column [default: y].
    #[arg(long)]
    pub response: Option<String>,
    /// Group sizes in predictor column order, e.g. 10,10,5.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<usize>>,
    /// dirichlet or logistic-normal [default: dirichlet].
    #[arg(long)]
    pub variant: Option<String>,
    /// empirical-bayes or sparsity [default: empirical-bayes].
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// [default: 6000]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Credible level [default: 0.95].
    #[arg(long)]
    pub level: Option<f64>,
    /// Scale predictors to unit sample variance before fitting.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    /// Also write every retained draw to draws.csv.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub draws: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// s1 to s5 [default: s5].
    #[arg(long)]
    pub scenario: Option<String>,
    /// [default: 0.7]
    #[arg(long)]
    pub snr: Option<f64>,
    /// [default: 250]
    #[arg(long)]
    pub n: Option<usize>,
    /// Multiple of 10 [default: 50].
    #[arg(long)]
    pub p: Option<usize>,
    /// [default: 20]
    #[arg(long)]
    pub replications: Option<usize>,
    /// Any of gR2D2-D, gR2D2-L, R2D2 [default: all three].
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// [default: 2000]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PriorCheckArgs {
    /// Any of r2, tails, laplace, dependence, variance [default: all].
    #[arg(long, value_delimiter = ',')]
    pub checks: Option<Vec<String>>,
    /// Group shapes a_g for the R² check [default: 0.25,0.25].
    #[arg(long, value_delimiter = ',')]
    pub a: Option<Vec<f64>>,
    /// [default: 0.5]
    #[arg(long)]
    pub b: Option<f64>,
    /// Prior draws for the R² and dependence checks [default: 100000].
    #[arg(long)]
    pub draws: Option<usize>,
    /// Draws per setting of the tail/origin check [default: 1000000].
    #[arg(long)]
    pub tail_draws: Option<usize>,
    /// [default: 0.01]
    #[arg(long)]
    pub ks_alpha: Option<f64>,
    /// Hold τ² fixed at 1 in the R² check, which must then fail.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub negative_control: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Figure1Args {
    /// [default: 100000]
    #[arg(long)]
    pub draws: Option<usize>,
    /// [default: 200]
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct AbaloneArgs {
    /// Path to abalone.data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Keep rows with this Sex value; "all" keeps every row [default: M].
    #[arg(long)]
    pub sex: Option<String>,
    /// Field delimiter [default: ,].
    #[arg(long)]
    pub delimiter: Option<char>,
    /// [default: gR2D2-D,gR2D2-L]
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Basis functions per covariate [default: 10].
    #[arg(long)]
    pub basis: Option<usize>,
    /// [default: 4000]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Holdout repeats; 0 skips prediction [default: 20].
    #[arg(long)]
    pub repeats: Option<usize>,
    /// [default: 500]
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Points per effect curve [default: 100].
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GewekeArgs {
    /// [default: dirichlet,logistic-normal]
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// [default: 100000]
    #[arg(long)]
    pub sweeps: Option<usize>,
}
