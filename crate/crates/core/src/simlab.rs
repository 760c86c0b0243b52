//! Simulation scenarios with block-correlated designs, replicated fits and
//! the MSE / coverage / interval-length summaries.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyper::{make_hyperparams, Strategy, DEFAULT_A, DEFAULT_B};
use crate::model::{Dataset, GroupStructure};
use crate::rngdist::RandomStream;
use crate::sampler::{run_chain, ChainOutput, SamplerConfig, Variant};
use crate::stats::quantile_select;

/// Coefficients per group in every scenario.
pub const GROUP_SIZE: usize = 10;
pub const WITHIN_GROUP_CORRELATION: f64 = 0.7;
pub const BETWEEN_GROUP_CORRELATION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [
        ScenarioId::S1,
        ScenarioId::S2,
        ScenarioId::S3,
        ScenarioId::S4,
        ScenarioId::S5,
    ];

    /// Nonzero coefficients as `(group, index, value)`, 1-based.
    pub fn signals(self) -> &'static [(usize, usize, f64)] {
        match self {
            ScenarioId::S1 => &[
                (1, 1, 5.0),
                (2, 1, 5.0),
                (4, 1, 5.0),
                (3, 1, -5.0),
                (5, 1, -5.0),
            ],
            ScenarioId::S2 => &[
                (1, 1, 3.0),
                (1, 2, 3.0),
                (1, 3, 3.0),
                (2, 1, -3.0),
                (2, 2, -3.0),
                (2, 3, -3.0),
                (3, 1, 2.0),
                (5, 1, -1.0),
                (5, 2, -1.0),
                (5, 3, -1.0),
                (5, 4, -1.0),
                (5, 5, -1.0),
            ],
            ScenarioId::S3 => &[
                (1, 1, 3.0),
                (1, 2, 3.0),
                (1, 3, 3.0),
                (2, 1, -3.0),
                (2, 2, -3.0),
                (2, 3, -3.0),
                (5, 1, 3.0),
                (5, 5, 4.0),
            ],
            ScenarioId::S4 => &[
                (1, 1, 3.0),
                (1, 3, 3.0),
                (1, 5, 3.0),
                (1, 7, 3.0),
                (1, 9, 3.0),
                (3, 1, -2.0),
                (3, 2, -2.0),
                (3, 3, -2.0),
                (3, 4, -2.0),
                (3, 5, -2.0),
            ],
            ScenarioId::S5 => &[
                (1, 1, 5.0),
                (1, 5, 5.0),
                (1, 9, 5.0),
                (1, 3, -5.0),
                (1, 7, -5.0),
            ],
        }
    }

    /// Smallest number of groups the scenario addresses.
    pub fn min_groups(self) -> usize {
        self.signals().iter().map(|s| s.0).max().unwrap_or(1)
    }
}

impl FromStr for ScenarioId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(ScenarioId::S1),
            "s2" | "2" => Ok(ScenarioId::S2),
            "s3" | "3" => Ok(ScenarioId::S3),
            "s4" | "4" => Ok(ScenarioId::S4),
            "s5" | "5" => Ok(ScenarioId::S5),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected s1 to s5)"
            ))),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = ScenarioId::ALL.iter().position(|s| s == self).unwrap() + 1;
        write!(f, "s{i}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub id: ScenarioId,
    pub n: usize,
    pub p: usize,
    pub groups: GroupStructure,
    pub beta_true: DVector<f64>,
    pub snr: f64,
    /// `βᵀΣ_xβ (1 - snr) / snr`.
    pub sigma2: f64,
    pub sigma_x: DMatrix<f64>,
    pub seed: u64,
}

/// Unit diagonal, 0.7 within a group, 0.2 between groups.
pub fn block_correlation(groups: &GroupStructure) -> DMatrix<f64> {
    let p = groups.p();
    let owner: Vec<usize> = (0..p).map(|k| groups.group_of(k).0).collect();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if owner[i] == owner[j] {
            WITHIN_GROUP_CORRELATION
        } else {
            BETWEEN_GROUP_CORRELATION
        }
    })
}

pub fn build_scenario(id: ScenarioId, n: usize, p: usize, snr: f64, seed: u64) -> Result<Scenario> {
    if !(snr > 0.0 && snr < 1.0) {
        return Err(Error::Config(format!("snr = {snr} must lie in (0, 1)")));
    }
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    if p == 0 || !p.is_multiple_of(GROUP_SIZE) {
        return Err(Error::Config(format!(
            "p = {p} must be a positive multiple of the group size {GROUP_SIZE}"
        )));
    }
    let groups = GroupStructure::uniform(p / GROUP_SIZE, GROUP_SIZE)?;
    if groups.n_groups() < id.min_groups() {
        return Err(Error::Config(format!(
            "scenario {id} needs at least {} groups of {GROUP_SIZE}, p = {p} gives {}",
            id.min_groups(),
            groups.n_groups()
        )));
    }
    let mut beta_true = DVector::zeros(p);
    for &(g, j, v) in id.signals() {
        beta_true[groups.flat_index(g - 1, j - 1)] = v;
    }
    let sigma_x = block_correlation(&groups);
    let signal = beta_true.dot(&(&sigma_x * &beta_true));
    Ok(Scenario {
        id,
        n,
        p,
        groups,
        beta_true,
        snr,
        sigma2: signal * (1.0 - snr) / snr,
        sigma_x,
        seed,
    })
}

/// Rows `x_i ~ Normal(0, Σ_x)`, `y_i = x_iᵀβ + ε_i`; the response is
/// centered by [`Dataset::new`].
pub fn simulate_dataset(scenario: &Scenario, rng: &mut RandomStream) -> Result<Dataset> {
    let l = nalgebra::Cholesky::new(scenario.sigma_x.clone())
        .ok_or_else(|| Error::param("Σ_x", "not positive definite"))?
        .l();
    let (n, p) = (scenario.n, scenario.p);
    let z = DMatrix::from_fn(n, p, |_, _| rng.std_normal());
    let x = z * l.transpose();
    let sd = scenario.sigma2.sqrt();
    let y = &x * &scenario.beta_true + DVector::from_fn(n, |_, _| sd * rng.std_normal());
    Dataset::new(y, x, scenario.groups.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Dirichlet allocation with empirical-Bayes group shapes.
    #[serde(rename = "gR2D2-D")]
    Gr2d2D,
    /// Logistic-normal allocation with sparsity shapes.
    #[serde(rename = "gR2D2-L")]
    Gr2d2L,
    /// Single group holding every coefficient.
    #[serde(rename = "R2D2")]
    R2d2,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gr2d2D, Method::Gr2d2L, Method::R2d2];
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gr2d2-d" | "d" => Ok(Method::Gr2d2D),
            "gr2d2-l" | "l" => Ok(Method::Gr2d2L),
            "r2d2" => Ok(Method::R2d2),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected gR2D2-D, gR2D2-L or R2D2)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gr2d2D => "gR2D2-D",
            Method::Gr2d2L => "gR2D2-L",
            Method::R2d2 => "R2D2",
        })
    }
}

/// Fits one method with `a = b = 0.5`.
pub fn fit_method(
    data: &Dataset,
    method: Method,
    iterations: usize,
    burn_in: usize,
    seed: u64,
) -> Result<ChainOutput> {
    let (data, strategy, variant) = match method {
        Method::Gr2d2D => (data.clone(), Strategy::EmpiricalBayes, Variant::Dirichlet),
        Method::Gr2d2L => (data.clone(), Strategy::Sparsity, Variant::LogisticNormal),
        Method::R2d2 => (
            data.regroup(GroupStructure::new(vec![data.p()])?)?,
            Strategy::Sparsity,
            Variant::Dirichlet,
        ),
    };
    let hyper = make_hyperparams(strategy, DEFAULT_A, DEFAULT_B, Some(&data), data.groups())?;
    run_chain(
        &data,
        &hyper,
        &SamplerConfig::new(variant, iterations, burn_in, seed),
    )
}

/// Equal-tailed interval from type-7 quantiles at `(1-level)/2` and
/// `1-(1-level)/2`.
pub fn credible_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(Error::Data("no draws for a credible interval".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "interval level {level} must lie in (0, 1)"
        )));
    }
    let mut v = draws.to_vec();
    let lo = quantile_select(&mut v, (1.0 - level) / 2.0);
    let hi = quantile_select(&mut v, 1.0 - (1.0 - level) / 2.0);
    Ok((lo, hi))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub methods: Vec<Method>,
    pub replications: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

/// Per-replication summary of one fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub beta_hat: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// `Σ (β̂ - β)²` over null coefficients.
    pub null_sse: f64,
    pub nonnull_sse: f64,
    pub mh_accept_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Replication {
    pub index: usize,
    /// One entry per method in configuration order; `None` when the chain
    /// failed.
    pub fits: Vec<Option<FitSummary>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricTable {
    pub method: Method,
    pub scenario: ScenarioId,
    pub snr: f64,
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub failed: usize,
    /// `MSE_gj` summed over null coefficients.
    pub mse_null_sum: f64,
    pub mse_nonnull_sum: f64,
    /// `MSE_gj` averaged over null coefficients.
    pub mse_null_mean: f64,
    pub mse_nonnull_mean: f64,
    /// Coverage in percent, averaged over coefficients.
    pub cp: f64,
    pub al: f64,
    /// True when some interval length was not finite; `al` is then infinite.
    pub al_overflow: bool,
    pub mh_accept_rate: f64,
    pub mse: Vec<f64>,
    pub coverage: Vec<f64>,
    pub length: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResult {
    pub scenario: Scenario,
    pub config: SimConfig,
    pub tables: Vec<MetricTable>,
    pub replications: Vec<Replication>,
    pub warnings: Vec<String>,
}

fn summarize(out: &ChainOutput, beta_true: &DVector<f64>) -> Result<FitSummary> {
    let p = beta_true.len();
    let mut beta_hat = Vec::with_capacity(p);
    let mut ci_low = Vec::with_capacity(p);
    let mut ci_high = Vec::with_capacity(p);
    let (mut null_sse, mut nonnull_sse) = (0.0, 0.0);
    for k in 0..p {
        let draws = out.coefficient(k);
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let (lo, hi) = credible_interval(&draws, 0.95)?;
        let e2 = (m - beta_true[k]).powi(2);
        if beta_true[k] == 0.0 {
            null_sse += e2;
        } else {
            nonnull_sse += e2;
        }
        beta_hat.push(m);
        ci_low.push(lo);
        ci_high.push(hi);
    }
    let rates = &out.mh_accept_rate;
    Ok(FitSummary {
        beta_hat,
        ci_low,
        ci_high,
        null_sse,
        nonnull_sse,
        mh_accept_rate: rates.iter().sum::<f64>() / rates.len() as f64,
    })
}

/// Aggregates the successful fits of one method.
pub fn metric_table(
    scenario: &Scenario,
    method: Method,
    fits: &[&FitSummary],
    failed: usize,
) -> MetricTable {
    let p = scenario.p;
    let r = fits.len() as f64;
    let beta = &scenario.beta_true;
    let per = |f: &dyn Fn(&FitSummary, usize) -> f64| -> Vec<f64> {
        (0..p)
            .map(|k| fits.iter().map(|s| f(s, k)).sum::<f64>() / r)
            .collect()
    };
    let mse = per(&|s, k| (s.beta_hat[k] - beta[k]).powi(2));
    let coverage = per(&|s, k| {
        if s.ci_low[k] <= beta[k] && beta[k] <= s.ci_high[k] {
            100.0
        } else {
            0.0
        }
    });
    let length = per(&|s, k| s.ci_high[k] - s.ci_low[k]);
    let split = |null: bool| -> (f64, f64) {
        let v: Vec<f64> = (0..p)
            .filter(|&k| (beta[k] == 0.0) == null)
            .map(|k| mse[k])
            .collect();
        let sum: f64 = v.iter().sum();
        (
            sum,
            if v.is_empty() {
                0.0
            } else {
                sum / v.len() as f64
            },
        )
    };
    let (mse_null_sum, mse_null_mean) = split(true);
    let (mse_nonnull_sum, mse_nonnull_mean) = split(false);
    let al_overflow = length.iter().any(|l| !l.is_finite());
    let al = if al_overflow {
        f64::INFINITY
    } else {
        length.iter().sum::<f64>() / p as f64
    };
    MetricTable {
        method,
        scenario: scenario.id,
        snr: scenario.snr,
        n: scenario.n,
        p,
        replications: fits.len(),
        failed,
        mse_null_sum,
        mse_nonnull_sum,
        mse_null_mean,
        mse_nonnull_mean,
        cp: coverage.iter().sum::<f64>() / p as f64,
        al,
        al_overflow,
        mh_accept_rate: fits.iter().map(|s| s.mh_accept_rate).sum::<f64>() / r,
        mse,
        coverage,
        length,
    }
}

pub fn run_replications(scenario: &Scenario, cfg: &SimConfig) -> Result<SimulationResult> {
    run_replications_with(scenario, cfg, &|_| {})
}

/// Replication `r` draws its dataset from `derive(seed, [r])` and the chain
/// for method `m` is seeded from `derive(seed, [r, m + 1])`. `progress` is
/// called with the index of each finished replication.
pub fn run_replications_with(
    scenario: &Scenario,
    cfg: &SimConfig,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<SimulationResult> {
    if cfg.replications == 0 {
        return Err(Error::Config("need at least one replication".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    SamplerConfig::new(Variant::Dirichlet, cfg.iterations, cfg.burn_in, 0).validate()?;

    let results: Vec<(Replication, Vec<String>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| -> Result<(Replication, Vec<String>)> {
            let mut rng = RandomStream::derive(cfg.seed, &[r as u64]);
            let data = simulate_dataset(scenario, &mut rng)?;
            let mut warnings = Vec::new();
            let fits = cfg
                .methods
                .iter()
                .enumerate()
                .map(|(m, &method)| {
                    let seed = RandomStream::derive(cfg.seed, &[r as u64, m as u64 + 1]).next_u64();
                    match fit_method(&data, method, cfg.iterations, cfg.burn_in, seed)
                        .and_then(|out| summarize(&out, &scenario.beta_true))
                    {
                        Ok(s) => Some(s),
                        Err(e) => {
                            warnings.push(format!("replication {} {method}: {e}", r + 1));
                            None
                        }
                    }
                })
                .collect();
            progress(r);
            Ok((Replication { index: r, fits }, warnings))
        })
        .collect::<Result<_>>()?;

    let mut replications = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (rep, w) in results {
        replications.push(rep);
        warnings.extend(w);
    }
    let mut tables = Vec::with_capacity(cfg.methods.len());
    for (m, &method) in cfg.methods.iter().enumerate() {
        let fits: Vec<&FitSummary> = replications
            .iter()
            .filter_map(|r| r.fits[m].as_ref())
            .collect();
        let failed = replications.len() - fits.len();
        if fits.is_empty() {
            return Err(Error::Numerical(format!("every {method} chain failed")));
        }
        tables.push(metric_table(scenario, method, &fits, failed));
    }
    Ok(SimulationResult {
        scenario: scenario.clone(),
        config: cfg.clone(),
        tables,
        replications,
        warnings,
    })
}

pub const METRIC_COLUMNS: [&str; 14] = [
    "method",
    "scenario",
    "snr",
    "n",
    "p",
    "replications",
    "failed",
    "mse_null_sum",
    "mse_nonnull_sum",
    "mse_null_mean",
    "mse_nonnull_mean",
    "cp",
    "al",
    "mh_accept_rate",
];

/// One row per table; `al` is written as `overflow` when not finite.
pub fn write_metric_csv<W: Write>(out: W, tables: &[MetricTable]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(METRIC_COLUMNS).map_err(io)?;
    for t in tables {
        let al = if t.al_overflow {
            "overflow".to_string()
        } else {
            format!("{}", t.al)
        };
        w.write_record([
            t.method.to_string(),
            t.scenario.to_string(),
            format!("{}", t.snr),
            t.n.to_string(),
            t.p.to_string(),
            t.replications.to_string(),
            t.failed.to_string(),
            format!("{}", t.mse_null_sum),
            format!("{}", t.mse_nonnull_sum),
            format!("{}", t.mse_null_mean),
            format!("{}", t.mse_nonnull_mean),
            format!("{}", t.cp),
            al,
            format!("{}", t.mh_accept_rate),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
