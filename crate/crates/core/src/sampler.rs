//! Gibbs / Metropolis–Hastings sampler for the group R2D2 posterior.
//!
//! One sweep updates, in order: the coefficients `β`, the error variance
//! `σ²`, the global scale `τ²`, the local scales `ψ`, and then each group's
//! allocation and variance `(φ_g, W_g)` jointly.
//!
//! The joint `(φ_g, W_g)` move draws from the exact conditional under a
//! Dirichlet prior whose shapes sum to the gamma shape of `W_g`. Writing
//! `λ_gj = φ_gj W_g`, those priors make the `λ_gj` independent
//! `Gamma(a_gj, 1/τ²)`, so `λ_gj / τ²` has a
//! `GIG(a_gj - ½, 2, β²_gj / (σ² ψ_gj τ² / 2))` conditional and `φ_g` is its
//! normalization. `W_g` is then drawn given the fresh `φ_g`. Targets with a
//! different `W_g` shape (Dirichlet with free shapes) or a logistic-normal
//! allocation use that draw as an independence proposal.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::model::{ChainState, Dataset, GroupStructure};
use crate::rngdist::{
    sample_gig, sample_gig_ln, sample_inverse_gamma, sample_inverse_gaussian,
    sample_normal_precision, softmax, GigParams, InvGaussParams, LogisticNormalParams,
    RandomStream,
};
use crate::stats::{mean, quantile_select};

/// Floor applied to `|β_gj|`, `φ_gj` and `W_g` to keep reciprocals finite.
pub const TINY: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Dirichlet allocation (gR2D2-D).
    Dirichlet,
    /// Logistic-normal allocation (gR2D2-L).
    LogisticNormal,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d" | "dirichlet" | "gr2d2-d" => Ok(Variant::Dirichlet),
            "l" | "logistic-normal" | "logistic_normal" | "gr2d2-l" => Ok(Variant::LogisticNormal),
            other => Err(Error::Config(format!(
                "unknown prior variant '{other}' (expected dirichlet or logistic-normal)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Dirichlet => "gR2D2-D",
            Variant::LogisticNormal => "gR2D2-L",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub variant: Variant,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub initial_state: Option<ChainState>,
}

impl SamplerConfig {
    pub fn new(variant: Variant, iterations: usize, burn_in: usize, seed: u64) -> Self {
        SamplerConfig {
            variant,
            iterations,
            burn_in,
            thin: 1,
            seed,
            initial_state: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) leaves no draws out of {} iterations",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }

    /// Number of retained draws, `⌊(iterations - burn_in) / thin⌋`.
    pub fn n_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainOutput {
    pub draws: Vec<ChainState>,
    /// Per-group acceptance fraction of the `(φ_g, W_g)` move.
    pub mh_accept_rate: Vec<f64>,
    pub timing_secs: f64,
}

impl ChainOutput {
    /// Draws of coefficient `k` (flat order).
    pub fn coefficient(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|s| s.beta[k]).collect()
    }

    pub fn posterior_mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.draws[0].beta.len());
        for s in &self.draws {
            m += &s.beta;
        }
        m / self.draws.len() as f64
    }
}

/// Data summaries the sampler needs: `XᵀX`, `XᵀY`, `YᵀY` and `n`.
#[derive(Debug, Clone)]
pub struct SuffStats {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl SuffStats {
    pub fn from_dataset(data: &Dataset) -> Self {
        Self::from_xy(data.x(), data.y())
    }

    pub fn from_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        SuffStats {
            xtx: x.transpose() * x,
            xty: x.transpose() * y,
            yty: y.dot(y),
            n: y.len(),
        }
    }

    /// No observations: the chain then samples the prior.
    pub fn prior_only(p: usize) -> Self {
        SuffStats {
            xtx: DMatrix::zeros(p, p),
            xty: DVector::zeros(p),
            yty: 0.0,
            n: 0,
        }
    }

    pub fn p(&self) -> usize {
        self.xty.len()
    }
}

/// Result of one group's `(φ_g, W_g)` update.
#[derive(Debug, Clone, PartialEq)]
pub struct Step5 {
    pub phi: Vec<f64>,
    pub w: f64,
    pub accepted: bool,
}

/// Raises underflowed simplex entries to [`TINY`] and renormalizes.
pub(crate) fn floor_simplex(phi: &mut [f64]) {
    if phi.iter().any(|v| *v < TINY) {
        phi.iter_mut().for_each(|v| *v = v.max(TINY));
        let s: f64 = phi.iter().sum();
        phi.iter_mut().for_each(|v| *v /= s);
    }
}

fn inv_lambda(state: &ChainState, groups: &GroupStructure) -> DVector<f64> {
    state.lambda_diag(groups).map(|l| {
        if l > 0.0 {
            (1.0 / l).min(1.0 / TINY)
        } else {
            1.0 / TINY
        }
    })
}

/// Step 1: `β ~ Normal(μ_β, σ² Σ_β)` with `Σ_β = (XᵀX + Λ⁻¹)⁻¹`,
/// `μ_β = Σ_β XᵀY`, through one Cholesky factorization.
pub fn step_beta(
    state: &ChainState,
    stats: &SuffStats,
    groups: &GroupStructure,
    rng: &mut RandomStream,
) -> Result<DVector<f64>> {
    let mut a = stats.xtx.clone();
    for (k, v) in inv_lambda(state, groups).iter().enumerate() {
        a[(k, k)] += v;
    }
    let chol = nalgebra::Cholesky::new(a)
        .ok_or_else(|| Error::Numerical("XᵀX + Λ⁻¹ is not positive definite".into()))?;
    let mean = chol.solve(&stats.xty);
    let beta = sample_normal_precision(&mean, &chol, state.sigma2.sqrt(), rng);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("non-finite coefficient draw".into()));
    }
    Ok(beta)
}

/// `(n1, d1)` of the `σ²` conditional `InvGamma(n1/2, d1/2)`.
pub fn sigma2_conditional(
    state: &ChainState,
    stats: &SuffStats,
    groups: &GroupStructure,
    hyper: &HyperParams,
) -> (f64, f64) {
    let b = &state.beta;
    let rss = (stats.yty - 2.0 * b.dot(&stats.xty) + b.dot(&(&stats.xtx * b))).max(0.0);
    let penalty: f64 = inv_lambda(state, groups)
        .iter()
        .zip(b.iter())
        .map(|(il, bk)| il * bk * bk)
        .sum();
    let n1 = hyper.n0 + stats.n as f64 + groups.p() as f64;
    let d1 = hyper.d0 + rss + penalty;
    (n1, d1)
}

/// Step 2: `σ² ~ InvGamma(n1/2, d1/2)`, `n1 = n0 + n + p`,
/// `d1 = d0 + ‖Y - Xβ‖² + βᵀΛ⁻¹β`.
pub fn step_sigma2(
    state: &ChainState,
    stats: &SuffStats,
    groups: &GroupStructure,
    hyper: &HyperParams,
    rng: &mut RandomStream,
) -> Result<f64> {
    let (n1, d1) = sigma2_conditional(state, stats, groups, hyper);
    sample_inverse_gamma(n1 / 2.0, d1 / 2.0, rng)
}

/// Step 3: `τ² ~ InvGamma(b + Σ a_g, 1 + Σ W_g)`.
pub fn step_tau2(state: &ChainState, hyper: &HyperParams, rng: &mut RandomStream) -> Result<f64> {
    let shape = hyper.b + hyper.a_g.iter().sum::<f64>();
    let scale = 1.0 + state.w.iter().sum::<f64>();
    sample_inverse_gamma(shape, scale, rng)
}

/// Mean of the inverse-Gaussian conditional of `1/ψ_gj`:
/// `sqrt(σ² φ_gj W_g / 2) / |β_gj|`.
pub fn psi_inverse_mean(sigma2: f64, phi: f64, w: f64, beta: f64) -> f64 {
    (sigma2 * phi * w / 2.0).sqrt() / beta.abs().max(TINY)
}

/// Step 4: `1/ψ_gj ~ InvGauss(μ_gj, 1)` independently.
pub fn step_psi(
    state: &ChainState,
    groups: &GroupStructure,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    let mut psi = vec![0.0; groups.p()];
    for g in 0..groups.n_groups() {
        for (j, k) in groups.range(g).enumerate() {
            let mu = psi_inverse_mean(state.sigma2, state.phi[g][j], state.w[g], state.beta[k]);
            let z = sample_inverse_gaussian(&InvGaussParams::new(mu, 1.0)?, rng);
            psi[k] = (1.0 / z).clamp(TINY, 1.0 / TINY);
        }
    }
    Ok(psi)
}

/// Exact joint draw of `(φ_g, W_g)` under a `Dirichlet(shapes)` allocation
/// and `W_g ~ Gamma(Σ shapes, 1/τ²)`.
pub fn step_phi_w_exact(
    g: usize,
    state: &ChainState,
    shapes: &[f64],
    groups: &GroupStructure,
    rng: &mut RandomStream,
) -> Result<(Vec<f64>, f64)> {
    let range = groups.range(g);
    let pg = range.len();
    let a_star: f64 = shapes.iter().sum();
    let sigma2 = state.sigma2;
    let phi = if pg == 1 {
        vec![1.0]
    } else {
        let mut ln_t = Vec::with_capacity(pg);
        for (j, k) in range.clone().enumerate() {
            let b2 = state.beta[k] * state.beta[k];
            let chi = b2 / (sigma2 * state.psi[k] * state.tau2 / 2.0);
            ln_t.push(sample_gig_ln(
                &GigParams::new(shapes[j] - 0.5, 2.0, chi)?,
                rng,
            )?);
        }
        let mut phi = softmax(&ln_t);
        floor_simplex(&mut phi);
        phi
    };
    let chi_w: f64 = range
        .enumerate()
        .map(|(j, k)| state.beta[k].powi(2) / (sigma2 * state.psi[k] * phi[j] / 2.0))
        .sum();
    let params = GigParams::new(a_star - pg as f64 / 2.0, 2.0 / state.tau2, chi_w)?;
    let w = sample_gig(&params, rng)?.clamp(TINY, 1.0 / TINY);
    Ok((phi, w))
}

/// Step 5 under the Dirichlet allocation. Exact when `a_g = Σ_j a_gj`;
/// otherwise an independence Metropolis–Hastings move accepted with
/// probability `min{1, (W_new / W_old)^{a_g - a*_g}}`.
pub fn step5_dirichlet(
    g: usize,
    state: &ChainState,
    hyper: &HyperParams,
    groups: &GroupStructure,
    rng: &mut RandomStream,
) -> Result<Step5> {
    let (phi, w) = step_phi_w_exact(g, state, &hyper.a_gj[g], groups, rng)?;
    if hyper.is_exact(g) {
        return Ok(Step5 {
            phi,
            w,
            accepted: true,
        });
    }
    let log_ratio = (hyper.a_g[g] - hyper.a_star(g)) * (w.ln() - state.w[g].ln());
    Ok(accept_or_keep(g, state, phi, w, log_ratio, rng))
}

/// `log f(φ) = -Σ_j a_gj log φ_gj - ½ LR(φ)ᵀ Σ_g⁻¹ LR(φ)`, the ratio of the
/// logistic-normal prior to the `Dirichlet(a_g/p_g, …)` proposal prior.
pub fn logistic_normal_log_weight(
    phi: &[f64],
    a_g: f64,
    params: &LogisticNormalParams,
) -> Result<f64> {
    let aj = a_g / phi.len() as f64;
    let ln_prod: f64 = phi.iter().map(|v| v.ln()).sum();
    Ok(-aj * ln_prod - 0.5 * params.lr_quadratic(phi)?)
}

/// Step 5 under the logistic-normal allocation: propose from the exact
/// Dirichlet move with `a_gj = a_g / p_g` and accept with
/// `min{1, f(φ_new) / f(φ_old)}`.
pub fn step5_logistic_normal(
    g: usize,
    state: &ChainState,
    hyper: &HyperParams,
    params: Option<&LogisticNormalParams>,
    groups: &GroupStructure,
    rng: &mut RandomStream,
) -> Result<Step5> {
    let pg = groups.size(g);
    let shapes = vec![hyper.a_g[g] / pg as f64; pg];
    let (phi, w) = step_phi_w_exact(g, state, &shapes, groups, rng)?;
    let Some(params) = params else {
        // single coefficient: φ_g = (1) under both priors
        return Ok(Step5 {
            phi,
            w,
            accepted: true,
        });
    };
    let log_ratio = logistic_normal_log_weight(&phi, hyper.a_g[g], params)?
        - logistic_normal_log_weight(&state.phi[g], hyper.a_g[g], params)?;
    Ok(accept_or_keep(g, state, phi, w, log_ratio, rng))
}

fn accept_or_keep(
    g: usize,
    state: &ChainState,
    phi: Vec<f64>,
    w: f64,
    log_ratio: f64,
    rng: &mut RandomStream,
) -> Step5 {
    if log_ratio >= 0.0 || rng.open_unit().ln() < log_ratio {
        Step5 {
            phi,
            w,
            accepted: true,
        }
    } else {
        Step5 {
            phi: state.phi[g].clone(),
            w: state.w[g],
            accepted: false,
        }
    }
}

/// Default starting point: `β = 0`, `σ²` = sample variance of the response,
/// `τ² = 1`, `ψ = 2`, uniform `φ_g`, `W_g = a_g`.
pub fn initial_state(
    groups: &GroupStructure,
    hyper: &HyperParams,
    stats: &SuffStats,
) -> ChainState {
    let sigma2 = if stats.n > 1 {
        (stats.yty / (stats.n - 1) as f64).max(1e-8)
    } else {
        1.0
    };
    ChainState {
        beta: DVector::zeros(groups.p()),
        sigma2,
        tau2: 1.0,
        psi: vec![2.0; groups.p()],
        phi: groups
            .sizes()
            .iter()
            .map(|&s| vec![1.0 / s as f64; s])
            .collect(),
        w: hyper.a_g.clone(),
    }
}

/// A configured sweep over one model; tracks Step 5 acceptance counts.
#[derive(Debug, Clone)]
pub struct Gibbs {
    pub stats: SuffStats,
    groups: GroupStructure,
    hyper: HyperParams,
    variant: Variant,
    ln_params: Vec<Option<LogisticNormalParams>>,
    accepted: Vec<u64>,
    proposed: Vec<u64>,
}

impl Gibbs {
    pub fn new(
        stats: SuffStats,
        groups: GroupStructure,
        hyper: HyperParams,
        variant: Variant,
    ) -> Result<Self> {
        hyper.validate(&groups)?;
        if stats.p() != groups.p() {
            return Err(Error::Config(format!(
                "data has {} columns, groups cover {}",
                stats.p(),
                groups.p()
            )));
        }
        let ln_params = match variant {
            Variant::Dirichlet => vec![None; groups.n_groups()],
            Variant::LogisticNormal => hyper
                .sigma_g
                .iter()
                .map(|s| {
                    if s.nrows() == 0 {
                        Ok(None)
                    } else {
                        LogisticNormalParams::new(s.clone()).map(Some)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let gn = groups.n_groups();
        Ok(Gibbs {
            stats,
            groups,
            hyper,
            variant,
            ln_params,
            accepted: vec![0; gn],
            proposed: vec![0; gn],
        })
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn initial_state(&self) -> ChainState {
        initial_state(&self.groups, &self.hyper, &self.stats)
    }

    /// Replaces the response (design unchanged).
    pub fn set_response(&mut self, x: &DMatrix<f64>, y: &DVector<f64>) {
        self.stats.xty = x.transpose() * y;
        self.stats.yty = y.dot(y);
        self.stats.n = y.len();
    }

    pub fn accept_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { 1.0 } else { a as f64 / p as f64 })
            .collect()
    }

    /// One full sweep of Steps 1–5, updating `state` in place.
    pub fn sweep(
        &mut self,
        state: &mut ChainState,
        iteration: usize,
        rng: &mut RandomStream,
    ) -> Result<()> {
        let at = |step: &'static str| {
            move |e: Error| Error::Chain {
                iteration,
                step,
                reason: e.to_string(),
            }
        };
        state.beta = step_beta(state, &self.stats, &self.groups, rng).map_err(at("beta"))?;
        state.sigma2 = step_sigma2(state, &self.stats, &self.groups, &self.hyper, rng)
            .map_err(at("sigma2"))?;
        state.tau2 = step_tau2(state, &self.hyper, rng).map_err(at("tau2"))?;
        state.psi = step_psi(state, &self.groups, rng).map_err(at("psi"))?;
        for g in 0..self.groups.n_groups() {
            let out = match self.variant {
                Variant::Dirichlet => step5_dirichlet(g, state, &self.hyper, &self.groups, rng),
                Variant::LogisticNormal => step5_logistic_normal(
                    g,
                    state,
                    &self.hyper,
                    self.ln_params[g].as_ref(),
                    &self.groups,
                    rng,
                ),
            }
            .map_err(at("phi-w"))?;
            self.proposed[g] += 1;
            if out.accepted {
                self.accepted[g] += 1;
            }
            state.phi[g] = out.phi;
            state.w[g] = out.w;
        }
        #[cfg(debug_assertions)]
        state.validate(&self.groups).map_err(at("state-check"))?;
        Ok(())
    }
}

/// Runs a full chain on a dataset.
pub fn run_chain(
    data: &Dataset,
    hyper: &HyperParams,
    config: &SamplerConfig,
) -> Result<ChainOutput> {
    run_chain_stats(SuffStats::from_dataset(data), data.groups(), hyper, config)
}

/// Runs a full chain from precomputed sufficient statistics.
pub fn run_chain_stats(
    stats: SuffStats,
    groups: &GroupStructure,
    hyper: &HyperParams,
    config: &SamplerConfig,
) -> Result<ChainOutput> {
    config.validate()?;
    let start = Instant::now();
    let mut gibbs = Gibbs::new(stats, groups.clone(), hyper.clone(), config.variant)?;
    let mut state = match &config.initial_state {
        Some(s) => {
            s.validate(groups)?;
            s.clone()
        }
        None => gibbs.initial_state(),
    };
    let mut rng = RandomStream::new(config.seed);
    let mut draws = Vec::with_capacity(config.n_draws());
    for it in 0..config.iterations {
        gibbs.sweep(&mut state, it, &mut rng)?;
        if it >= config.burn_in && (it - config.burn_in + 1).is_multiple_of(config.thin) {
            draws.push(state.clone());
        }
    }
    Ok(ChainOutput {
        draws,
        mh_accept_rate: gibbs.accept_rates(),
        timing_secs: start.elapsed().as_secs_f64(),
    })
}

/// Column names of an exported draw: coefficients in flat order, then
/// `sigma2`, `tau2`, `W_1..W_G`.
pub fn draw_columns(groups: &GroupStructure) -> Vec<String> {
    let mut cols = Vec::with_capacity(groups.p() + 2 + groups.n_groups());
    for g in 0..groups.n_groups() {
        for j in 0..groups.size(g) {
            cols.push(format!("beta_{}_{}", g + 1, j + 1));
        }
    }
    cols.push("sigma2".into());
    cols.push("tau2".into());
    for g in 0..groups.n_groups() {
        cols.push(format!("W_{}", g + 1));
    }
    cols
}

fn draw_row(s: &ChainState) -> impl Iterator<Item = f64> + '_ {
    s.beta
        .iter()
        .copied()
        .chain([s.sigma2, s.tau2])
        .chain(s.w.iter().copied())
}

/// Writes draws as comma-separated text with a header row.
pub fn write_draws_csv<W: Write>(
    out: W,
    groups: &GroupStructure,
    draws: &[ChainState],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(draw_columns(groups)).map_err(csv_err)?;
    for s in draws {
        w.write_record(draw_row(s).map(|v| format!("{v:e}")))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes draws as little-endian `f64`, one row per draw, columns as in
/// [`draw_columns`]; no header.
pub fn write_draws_binary<W: Write>(mut out: W, draws: &[ChainState]) -> Result<()> {
    for s in draws {
        for v in draw_row(s) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads the binary layout back given the column count.
pub fn read_draws_binary(bytes: &[u8], columns: usize) -> Result<Vec<Vec<f64>>> {
    let row = columns * 8;
    if columns == 0 || !bytes.len().is_multiple_of(row) {
        return Err(Error::Data(format!(
            "{} bytes is not a whole number of {columns}-column rows",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(row)
        .map(|r| {
            r.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect()
        })
        .collect())
}

/// Mean, median and equal-tailed interval of one scalar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Summary {
    pub fn from_draws(name: impl Into<String>, draws: &[f64], level: f64) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Data("no draws to summarize".into()));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Config(format!(
                "interval level {level} must lie in (0, 1)"
            )));
        }
        let mut v = draws.to_vec();
        let tail = (1.0 - level) / 2.0;
        Ok(Summary {
            name: name.into(),
            mean: mean(draws),
            median: quantile_select(&mut v, 0.5),
            lo: quantile_select(&mut v, tail),
            hi: quantile_select(&mut v, 1.0 - tail),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub level: f64,
    /// Coefficients in flat order, named `beta_g_j`.
    pub coefficients: Vec<Summary>,
    /// `R2` followed by `R2_1..R2_G`.
    pub r2: Vec<Summary>,
    pub sigma2: Summary,
    pub tau2: Summary,
    pub mh_accept_rate: Vec<f64>,
}

pub fn summarize_posterior(
    out: &ChainOutput,
    groups: &GroupStructure,
    level: f64,
) -> Result<PosteriorSummary> {
    let names = draw_columns(groups);
    let coefficients = (0..groups.p())
        .map(|k| Summary::from_draws(names[k].clone(), &out.coefficient(k), level))
        .collect::<Result<Vec<_>>>()?;
    let decomp: Vec<_> = out.draws.iter().map(|s| s.r2()).collect();
    let mut r2 = vec![Summary::from_draws(
        "R2",
        &decomp.iter().map(|d| d.r2).collect::<Vec<_>>(),
        level,
    )?];
    for g in 0..groups.n_groups() {
        let v: Vec<f64> = decomp.iter().map(|d| d.r2_g[g]).collect();
        r2.push(Summary::from_draws(format!("R2_{}", g + 1), &v, level)?);
    }
    let scalar = |f: fn(&ChainState) -> f64| out.draws.iter().map(f).collect::<Vec<_>>();
    Ok(PosteriorSummary {
        n_draws: out.draws.len(),
        level,
        coefficients,
        r2,
        sigma2: Summary::from_draws("sigma2", &scalar(|s| s.sigma2), level)?,
        tau2: Summary::from_draws("tau2", &scalar(|s| s.tau2), level)?,
        mh_accept_rate: out.mh_accept_rate.clone(),
    })
}

/// Rows of `name,mean,median,lo,hi`.
pub fn write_summary_csv<W: Write>(out: W, rows: &[Summary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "mean", "median", "lo", "hi"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            format!("{}", r.mean),
            format!("{}", r.median),
            format!("{}", r.lo),
            format!("{}", r.hi),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
