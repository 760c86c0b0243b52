//! Geweke's joint-distribution test of the sampler.
//!
//! The marginal-conditional simulator draws parameters from the prior. The
//! successive-conditional simulator alternates between drawing a response
//! given the current parameters and one sweep of the sampler given that
//! response. Both target the prior marginal of the parameters, so means of
//! any statistic must agree.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hyper::{make_hyperparams, HyperParams, Strategy};
use crate::model::{ChainState, GroupStructure};
use crate::priorlab::PriorSampler;
use crate::rngdist::RandomStream;
use crate::sampler::{Gibbs, SuffStats, Variant};
use crate::stats::{batch_means_se, iid_se, mean};

pub const Z_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, Serialize)]
pub struct GewekeConfig {
    pub n: usize,
    pub groups: GroupStructure,
    pub hyper: HyperParams,
    pub variant: Variant,
    pub sweeps: usize,
    pub seed: u64,
    pub batches: usize,
}

impl GewekeConfig {
    /// `n = 20`, two groups of three coefficients, sparsity shapes with
    /// `a = 0.5`, `b = 10` and `n0 = d0 = 20`. The larger `b`, `n0`, `d0`
    /// give every statistic enough finite moments for stable standard
    /// errors.
    pub fn standard(variant: Variant, sweeps: usize, seed: u64) -> Result<Self> {
        let groups = GroupStructure::uniform(2, 3)?;
        let hyper = make_hyperparams(Strategy::Sparsity, 0.5, 10.0, None, &groups)?
            .with_sigma_prior(20.0, 20.0)?;
        Ok(GewekeConfig {
            n: 20,
            groups,
            hyper,
            variant,
            sweeps,
            seed,
            batches: 50,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GewekeStat {
    pub statistic: String,
    pub marginal_mean: f64,
    pub marginal_se: f64,
    pub successive_mean: f64,
    pub successive_se: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GewekeReport {
    pub variant: Variant,
    pub n: usize,
    pub group_sizes: Vec<usize>,
    pub sweeps: usize,
    pub b: f64,
    pub n0: f64,
    pub d0: f64,
    /// Groups whose Dirichlet move uses the Metropolis–Hastings correction.
    pub mh_groups: Vec<usize>,
    pub mh_accept_rate: Vec<f64>,
    pub threshold: f64,
    pub stats: Vec<GewekeStat>,
    pub pass: bool,
}

fn statistic_names(groups: &GroupStructure) -> Vec<String> {
    let mut names = vec!["sigma2".to_string(), "tau2".to_string()];
    names.extend((0..groups.n_groups()).map(|g| format!("W_{}", g + 1)));
    names.push("mean_beta2".to_string());
    for g in 0..groups.n_groups() {
        names.extend((0..groups.size(g)).map(|j| format!("beta2_{}_{}", g + 1, j + 1)));
    }
    names
}

fn statistics(s: &ChainState) -> Vec<f64> {
    let mut v = vec![s.sigma2, s.tau2];
    v.extend_from_slice(&s.w);
    let b2: Vec<f64> = s.beta.iter().map(|b| b * b).collect();
    v.push(mean(&b2));
    v.extend(b2);
    v
}

fn columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..rows[0].len())
        .map(|k| rows.iter().map(|r| r[k]).collect())
        .collect()
}

pub fn run_geweke(cfg: &GewekeConfig) -> Result<GewekeReport> {
    if cfg.sweeps < cfg.batches * 10 || cfg.batches < 2 {
        return Err(Error::Config(format!(
            "{} sweeps in {} batches is too few",
            cfg.sweeps, cfg.batches
        )));
    }
    let groups = &cfg.groups;
    let prior = PriorSampler::new(&cfg.hyper, groups, cfg.variant)?.with_sigma2(None);

    // marginal-conditional: independent prior draws
    const CHUNK: usize = 10_000;
    let marginal: Vec<Vec<f64>> = (0..cfg.sweeps.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = RandomStream::derive(cfg.seed, &[1, c as u64]);
            let len = CHUNK.min(cfg.sweeps - c * CHUNK);
            (0..len)
                .map(|_| prior.draw(&mut rng).map(|s| statistics(&s)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    // successive-conditional: data | θ, then θ | data
    let mut rng = RandomStream::derive(cfg.seed, &[2]);
    let x = DMatrix::from_fn(cfg.n, groups.p(), |_, _| rng.std_normal());
    let mut state = prior.draw(&mut rng)?;
    let y0 = DVector::zeros(cfg.n);
    let mut gibbs = Gibbs::new(
        SuffStats::from_xy(&x, &y0),
        groups.clone(),
        cfg.hyper.clone(),
        cfg.variant,
    )?;
    let mut successive = Vec::with_capacity(cfg.sweeps);
    for it in 0..cfg.sweeps {
        let sd = state.sigma2.sqrt();
        let y = &x * &state.beta + DVector::from_fn(cfg.n, |_, _| sd * rng.std_normal());
        gibbs.set_response(&x, &y);
        gibbs.sweep(&mut state, it, &mut rng)?;
        successive.push(statistics(&state));
    }

    let mc = columns(&marginal);
    let sc = columns(&successive);
    let stats: Vec<GewekeStat> = statistic_names(groups)
        .into_iter()
        .enumerate()
        .map(|(k, statistic)| {
            let (m1, s1) = (mean(&mc[k]), iid_se(&mc[k]));
            let (m2, s2) = (mean(&sc[k]), batch_means_se(&sc[k], cfg.batches));
            let z = (m1 - m2) / (s1 * s1 + s2 * s2).sqrt();
            GewekeStat {
                statistic,
                marginal_mean: m1,
                marginal_se: s1,
                successive_mean: m2,
                successive_se: s2,
                z,
                pass: z.abs() < Z_THRESHOLD,
            }
        })
        .collect();
    let mh_groups = (0..groups.n_groups())
        .filter(|&g| cfg.variant == Variant::LogisticNormal || !cfg.hyper.is_exact(g))
        .map(|g| g + 1)
        .collect();
    let pass = stats.iter().all(|s| s.pass);
    Ok(GewekeReport {
        variant: cfg.variant,
        n: cfg.n,
        group_sizes: groups.sizes().to_vec(),
        sweeps: cfg.sweeps,
        b: cfg.hyper.b,
        n0: cfg.hyper.n0,
        d0: cfg.hyper.d0,
        mh_groups,
        mh_accept_rate: gibbs.accept_rates(),
        threshold: Z_THRESHOLD,
        stats,
        pass,
    })
}
