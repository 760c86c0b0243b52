//! Prior-only sampling and numerical checks of the prior's properties: the
//! Dirichlet law of the `R²` decomposition, the marginal tail and origin
//! exponents, the multivariate-Laplace form of `β_g` with `W_g` integrated
//! out, the comparison against a restricted single-group R2D2 prior, and the
//! variance identity `Var(xᵀβ) = σ² tr(ΛΣ_x)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::model::{ChainState, GroupStructure};
use crate::quad::integrate_positive;
use crate::rngdist::{
    sample_dirichlet, sample_exponential, sample_gamma, sample_gamma_ln, sample_inverse_gamma,
    sample_logistic_normal, DirichletParams, LogisticNormalParams, RandomStream,
};
use crate::sampler::{floor_simplex, Variant, TINY};
use crate::special::bessel_k;
use crate::stats::{self, iqr, ks_test, linear_fit, mean, quantile_select, KsTest};

/// Draws per parallel task; fixes the stream layout independently of the
/// thread count.
const CHUNK: usize = 10_000;

/// Tolerance on the log-log slopes of the marginal prior.
pub const SLOPE_TOLERANCE: f64 = 0.15;

/// Ancestral sampler of the full prior
/// `τ² → W_g → φ_g → ψ → β` (and `σ²` unless fixed).
#[derive(Debug, Clone)]
pub struct PriorSampler {
    groups: GroupStructure,
    hyper: HyperParams,
    variant: Variant,
    ln_params: Vec<Option<LogisticNormalParams>>,
    dirichlet: Vec<Option<DirichletParams>>,
    /// Fixed `σ²`; `None` draws it from `InvGamma(n0/2, d0/2)`.
    pub sigma2: Option<f64>,
    /// Holds `τ²` fixed instead of drawing it. Breaks the Dirichlet law of
    /// the `R²` decomposition; used as a negative control.
    pub fix_tau2: Option<f64>,
}

impl PriorSampler {
    /// Sampler with `σ² = 1`.
    pub fn new(hyper: &HyperParams, groups: &GroupStructure, variant: Variant) -> Result<Self> {
        hyper.validate(groups)?;
        let ln_params = hyper
            .sigma_g
            .iter()
            .map(|s| {
                if s.nrows() == 0 || variant == Variant::Dirichlet {
                    Ok(None)
                } else {
                    LogisticNormalParams::new(s.clone()).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let dirichlet = hyper
            .a_gj
            .iter()
            .map(|a| {
                if a.len() < 2 {
                    Ok(None)
                } else {
                    DirichletParams::new(a.clone()).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PriorSampler {
            groups: groups.clone(),
            hyper: hyper.clone(),
            variant,
            ln_params,
            dirichlet,
            sigma2: Some(1.0),
            fix_tau2: None,
        })
    }

    pub fn with_sigma2(mut self, sigma2: Option<f64>) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn with_fixed_tau2(mut self, tau2: f64) -> Self {
        self.fix_tau2 = Some(tau2);
        self
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn draw(&self, rng: &mut RandomStream) -> Result<ChainState> {
        let h = &self.hyper;
        let sigma2 = match self.sigma2 {
            Some(s) => s,
            None => sample_inverse_gamma(h.n0 / 2.0, h.d0 / 2.0, rng)?,
        };
        let tau2 = match self.fix_tau2 {
            Some(t) => t,
            None => sample_inverse_gamma(h.b, 1.0, rng)?,
        };
        let gn = self.groups.n_groups();
        let mut w = Vec::with_capacity(gn);
        let mut phi = Vec::with_capacity(gn);
        for g in 0..gn {
            let ln_w = sample_gamma_ln(h.a_g[g], 1.0, rng)? + tau2.ln();
            w.push(ln_w.exp().clamp(TINY, 1.0 / TINY));
            let mut p = match (self.variant, &self.dirichlet[g], &self.ln_params[g]) {
                (_, None, _) => vec![1.0],
                (Variant::Dirichlet, Some(d), _) => sample_dirichlet(d, rng),
                (Variant::LogisticNormal, _, Some(l)) => sample_logistic_normal(l, rng),
                (Variant::LogisticNormal, Some(_), None) => unreachable!("validated dimensions"),
            };
            floor_simplex(&mut p);
            phi.push(p);
        }
        let p = self.groups.p();
        let mut psi = Vec::with_capacity(p);
        let mut beta = DVector::zeros(p);
        for g in 0..gn {
            for (j, k) in self.groups.range(g).enumerate() {
                let ps = sample_exponential(0.5, rng)?.max(TINY);
                psi.push(ps);
                beta[k] = (sigma2 * ps * phi[g][j] * w[g] / 2.0).sqrt() * rng.std_normal();
            }
        }
        Ok(ChainState {
            beta,
            sigma2,
            tau2,
            psi,
            phi,
            w,
        })
    }
}

/// Prior draws: rows of `(R²_1, …, R²_G, 1 - R²)` and of `β`.
#[derive(Debug, Clone)]
pub struct PriorDrawBatch {
    pub r2: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub hyper: HyperParams,
    pub seed: u64,
}

impl PriorDrawBatch {
    pub fn len(&self) -> usize {
        self.r2.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.r2.nrows() == 0
    }
}

/// `n_draws` independent prior draws; chunk `c` uses the stream
/// `derive(seed, [c])`.
pub fn sample_prior(sampler: &PriorSampler, n_draws: usize, seed: u64) -> Result<PriorDrawBatch> {
    let gn = sampler.groups.n_groups();
    let p = sampler.groups.p();
    let chunks: Vec<Vec<ChainState>> = (0..n_draws.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = RandomStream::derive(seed, &[c as u64]);
            let len = CHUNK.min(n_draws - c * CHUNK);
            (0..len).map(|_| sampler.draw(&mut rng)).collect()
        })
        .collect::<Result<_>>()?;
    let mut r2 = DMatrix::zeros(n_draws, gn + 1);
    let mut beta = DMatrix::zeros(n_draws, p);
    for (i, s) in chunks.iter().flatten().enumerate() {
        let total: f64 = s.w.iter().sum();
        for g in 0..gn {
            r2[(i, g)] = s.w[g] / (1.0 + total);
        }
        r2[(i, gn)] = 1.0 / (1.0 + total);
        beta.set_row(i, &s.beta.transpose());
    }
    Ok(PriorDrawBatch {
        r2,
        beta,
        hyper: sampler.hyper.clone(),
        seed,
    })
}

// ---------------------------------------------------------------------------
// Dirichlet law of the R² decomposition

#[derive(Debug, Clone, Serialize)]
pub struct NamedKs {
    pub component: String,
    pub beta_shapes: (f64, f64),
    #[serde(flatten)]
    pub test: KsTest,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentCheck {
    pub moment: String,
    pub estimate: f64,
    pub expected: f64,
    pub se: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop1Report {
    pub n_draws: usize,
    pub seed: u64,
    /// Dirichlet shapes `(a_1, …, a_G, b)`.
    pub shapes: Vec<f64>,
    pub ks_alpha: f64,
    pub z_threshold: f64,
    pub ks: Vec<NamedKs>,
    pub moments: Vec<MomentCheck>,
    pub pass: bool,
}

/// Marginal KS tests of each `R²_g` (and `1 - R²`) against its Beta law,
/// and first and second moments against the Dirichlet formulas.
pub fn check_proposition1(batch: &PriorDrawBatch, alpha: f64) -> Result<Prop1Report> {
    const Z: f64 = 3.0;
    let n = batch.len();
    if n < 1000 {
        return Err(Error::Data(format!(
            "{n} prior draws are too few for a distributional check (need 1000)"
        )));
    }
    let mut shapes = batch.hyper.a_g.clone();
    shapes.push(batch.hyper.b);
    let total: f64 = shapes.iter().sum();
    let k = shapes.len();
    let name = |i: usize| {
        if i + 1 == k {
            "1-R2".to_string()
        } else {
            format!("R2_{}", i + 1)
        }
    };
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|i| batch.r2.column(i).iter().copied().collect())
        .collect();

    let mut ks = Vec::with_capacity(k);
    for i in 0..k {
        let (a, b) = (shapes[i], total - shapes[i]);
        let dist = Beta::new(a, b).map_err(|e| Error::param("Beta", e.to_string()))?;
        ks.push(NamedKs {
            component: name(i),
            beta_shapes: (a, b),
            test: ks_test(&cols[i], |x| dist.cdf(x), alpha),
        });
    }
    // 1/(1 + ΣW) rounds to exactly 1 when ΣW < 1e-16, which puts an atom
    // at 1; test the last component through R² = Σ R²_g instead.
    let r2: Vec<f64> = (0..n)
        .map(|r| cols[..k - 1].iter().map(|c| c[r]).sum())
        .collect();
    let dist = Beta::new(total - batch.hyper.b, batch.hyper.b)
        .map_err(|e| Error::param("Beta", e.to_string()))?;
    ks[k - 1] = NamedKs {
        component: "R2".to_string(),
        beta_shapes: (total - batch.hyper.b, batch.hyper.b),
        test: ks_test(&r2, |x| dist.cdf(x), alpha),
    };

    let mut moments = Vec::new();
    let mut check = |moment: String, xs: Vec<f64>, expected: f64| {
        let estimate = mean(&xs);
        let se = stats::iid_se(&xs);
        let z = (estimate - expected) / se;
        moments.push(MomentCheck {
            moment,
            estimate,
            expected,
            se,
            z,
            pass: z.abs() < Z,
        });
    };
    let denom2 = total * (total + 1.0);
    for i in 0..k {
        check(
            format!("E[{}]", name(i)),
            cols[i].clone(),
            shapes[i] / total,
        );
        check(
            format!("E[{}^2]", name(i)),
            cols[i].iter().map(|x| x * x).collect(),
            shapes[i] * (shapes[i] + 1.0) / denom2,
        );
        for j in i + 1..k {
            check(
                format!("E[{}*{}]", name(i), name(j)),
                cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).collect(),
                shapes[i] * shapes[j] / denom2,
            );
        }
    }
    let pass = ks.iter().all(|t| t.test.pass) && moments.iter().all(|m| m.pass);
    Ok(Prop1Report {
        n_draws: n,
        seed: batch.seed,
        shapes,
        ks_alpha: alpha,
        z_threshold: Z,
        ks,
        moments,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Tail and origin exponents of the marginal prior of β_gj

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Prop2Settings {
    pub b: f64,
    /// Common Dirichlet shape `a_gj`.
    pub a_pi: f64,
    pub p_g: usize,
    pub n_draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeEstimate {
    pub estimate: f64,
    /// Spread of the estimate over ten disjoint batches of draws.
    pub se: f64,
    pub target: f64,
    pub tolerance: f64,
    /// `(log10 lo, log10 hi)` of the |β| range used for the fit.
    pub log10_range: (f64, f64),
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop2Report {
    pub settings: Prop2Settings,
    /// `a_g = p_g · a_pi`.
    pub a_g: f64,
    /// Slope of log survival; target `-2b` (density exponent `-(2b+1)`).
    pub tail: SlopeEstimate,
    /// Slope of log density near 0; target `-(1 - 2 a_pi)`.
    pub origin: SlopeEstimate,
    /// Plain order-statistic slopes of the raw draws (pre-asymptotic).
    pub empirical_tail_slope: Option<f64>,
    pub empirical_origin_slope: Option<f64>,
    pub pass: bool,
}

const TAIL_LOG10: (f64, f64) = (1.0, 4.0);
const ORIGIN_LOG10: (f64, f64) = (-8.0, -4.0);
const SLOPE_POINTS: usize = 13;
const SLOPE_BATCHES: usize = 10;

fn log_grid((lo, hi): (f64, f64), m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| (lo + (hi - lo) * i as f64 / (m - 1) as f64) * std::f64::consts::LN_10)
        .collect()
}

/// Per-chunk sums of the conditional survival and density estimates and the
/// raw `ln|β|` draws.
struct SlopeChunk {
    survival: Vec<f64>,
    density: Vec<f64>,
    ln_abs_beta: Vec<f64>,
}

/// Marginal of `β_gj` with `σ² = 1`, `a_gj = a_pi`, `a_g = p_g a_pi`.
///
/// Each draw of `(ψ, φ, z)` contributes the exact conditional survival
/// `P(|β| > x | ψ, φ, z)` with `W ~ BetaPrime(a_g, b)` integrated out, and
/// each draw of `(ψ, W, z)` the exact conditional density of `|β|` with
/// `φ_gj ~ Beta(a_pi, (p_g - 1) a_pi)` integrated out. These averages are
/// unbiased for the survival function and density and remain accurate far
/// beyond the range the raw draws reach.
pub fn check_proposition2(settings: Prop2Settings) -> Result<Prop2Report> {
    let Prop2Settings {
        b,
        a_pi,
        p_g,
        n_draws,
        seed,
    } = settings;
    if !(b > 0.0 && a_pi > 0.0) || p_g < 2 {
        return Err(Error::Config(format!(
            "need b > 0, a_pi > 0 and at least two coefficients per group (b = {b}, a_pi = {a_pi}, p_g = {p_g})"
        )));
    }
    if n_draws < SLOPE_BATCHES * 1000 {
        return Err(Error::Config(format!("n_draws = {n_draws} is too small")));
    }
    let a_g = p_g as f64 * a_pi;
    let rest = (p_g - 1) as f64 * a_pi;
    let ln_b_phi = ln_beta(a_pi, rest);
    let ln_xt = log_grid(TAIL_LOG10, SLOPE_POINTS);
    let ln_xo = log_grid(ORIGIN_LOG10, SLOPE_POINTS);
    let n_chunks = SLOPE_BATCHES * 10;

    let chunks: Vec<SlopeChunk> = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<SlopeChunk> {
            let mut rng = RandomStream::derive(seed, &[c as u64]);
            let start = c * n_draws / n_chunks;
            let end = (c + 1) * n_draws / n_chunks;
            let mut survival = vec![0.0; SLOPE_POINTS];
            let mut density = vec![0.0; SLOPE_POINTS];
            let mut ln_abs_beta = Vec::with_capacity(end - start);
            for _ in start..end {
                let ln_w =
                    sample_gamma_ln(a_g, 1.0, &mut rng)? - sample_gamma_ln(b, 1.0, &mut rng)?;
                let g1 = sample_gamma_ln(a_pi, 1.0, &mut rng)?;
                let g2 = sample_gamma_ln(rest, 1.0, &mut rng)?;
                let ln_phi = g1 - logaddexp(g1, g2);
                let ln_psi = sample_exponential(0.5, &mut rng)?.ln();
                let ln_z2 = 2.0 * rng.std_normal().abs().ln();
                let ln_y_tail = ln_psi + ln_phi + ln_z2 - std::f64::consts::LN_2;
                let ln_y_origin = ln_psi + ln_w + ln_z2 - std::f64::consts::LN_2;
                ln_abs_beta.push(0.5 * (ln_y_tail + ln_w));
                for (s, &lx) in survival.iter_mut().zip(&ln_xt) {
                    // P(W > x²/Y) = I_{1/(1+w)}(b, a_g) for W ~ BetaPrime(a_g, b)
                    let t = 1.0 / (1.0 + (2.0 * lx - ln_y_tail).exp());
                    if t > 0.0 {
                        *s += beta_reg(b, a_g, t);
                    }
                }
                for (d, &lx) in density.iter_mut().zip(&ln_xo) {
                    // |β| = sqrt(φ Y): density f_φ(v) · 2v/x at v = x²/Y
                    let ln_v = 2.0 * lx - ln_y_origin;
                    if ln_v < 0.0 {
                        let v = ln_v.exp();
                        let ln_f = (a_pi - 1.0) * ln_v + (rest - 1.0) * (-v).ln_1p() - ln_b_phi;
                        *d += (ln_f + std::f64::consts::LN_2 + ln_v - lx).exp();
                    }
                }
            }
            Ok(SlopeChunk {
                survival,
                density,
                ln_abs_beta,
            })
        })
        .collect::<Result<_>>()?;

    let fit = |sums: &[f64], ln_x: &[f64]| -> Result<f64> {
        if sums.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Numerical(
                "insufficient mass in the slope window; increase the number of draws".into(),
            ));
        }
        let ln_s: Vec<f64> = sums.iter().map(|s| s.ln()).collect();
        Ok(linear_fit(ln_x, &ln_s).0)
    };
    let sum_over = |range: std::ops::Range<usize>, tail: bool| -> Vec<f64> {
        let mut acc = vec![0.0; SLOPE_POINTS];
        for c in &chunks[range] {
            let src = if tail { &c.survival } else { &c.density };
            acc.iter_mut().zip(src).for_each(|(a, v)| *a += v);
        }
        acc
    };
    let estimate =
        |tail: bool, ln_x: &[f64], target: f64, range: (f64, f64)| -> Result<SlopeEstimate> {
            let all = fit(&sum_over(0..n_chunks, tail), ln_x)?;
            let per = n_chunks / SLOPE_BATCHES;
            let batch: Vec<f64> = (0..SLOPE_BATCHES)
                .map(|k| fit(&sum_over(k * per..(k + 1) * per, tail), ln_x))
                .collect::<Result<_>>()?;
            let se = (stats::variance(&batch) / SLOPE_BATCHES as f64).sqrt();
            Ok(SlopeEstimate {
                estimate: all,
                se,
                target,
                tolerance: SLOPE_TOLERANCE,
                log10_range: range,
                pass: (all - target).abs() <= SLOPE_TOLERANCE,
            })
        };
    let tail = estimate(true, &ln_xt, -2.0 * b, TAIL_LOG10)?;
    let origin = estimate(false, &ln_xo, -(1.0 - 2.0 * a_pi), ORIGIN_LOG10)?;

    let mut raw: Vec<f64> = chunks.into_iter().flat_map(|c| c.ln_abs_beta).collect();
    raw.sort_by(f64::total_cmp);
    let (empirical_tail_slope, empirical_origin_slope) = empirical_slopes(&raw);
    let pass = tail.pass && origin.pass;
    Ok(Prop2Report {
        settings,
        a_g,
        tail,
        origin,
        empirical_tail_slope,
        empirical_origin_slope,
        pass,
    })
}

fn logaddexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log-log slopes of the raw draws: survival at log-spaced upper order
/// statistics and a log-binned histogram density near 0, both over the
/// fractions `1e-5 .. 1e-2`.
fn empirical_slopes(sorted_ln_abs: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = sorted_ln_abs.len();
    let (lo_k, hi_k) = (
        (1e-5 * n as f64).ceil() as usize,
        (1e-2 * n as f64) as usize,
    );
    if lo_k < 10 || hi_k <= lo_k {
        return (None, None);
    }
    let ks: Vec<usize> = (0..30)
        .map(|i| {
            let t = i as f64 / 29.0;
            ((lo_k as f64).ln() * (1.0 - t) + (hi_k as f64).ln() * t)
                .exp()
                .round() as usize
        })
        .collect();
    let mut ks = ks;
    ks.dedup();
    let x: Vec<f64> = ks.iter().map(|&k| sorted_ln_abs[n - k]).collect();
    let y: Vec<f64> = ks.iter().map(|&k| (k as f64 / n as f64).ln()).collect();
    let tail = linear_fit(&x, &y).0;

    let (e_lo, e_hi) = (sorted_ln_abs[lo_k], sorted_ln_abs[hi_k]);
    let bins = 24;
    let width = (e_hi - e_lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in &sorted_ln_abs[..=hi_k] {
        if v >= e_lo && v < e_hi {
            counts[(((v - e_lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let (mut mx, mut my) = (Vec::new(), Vec::new());
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            let l = e_lo + i as f64 * width;
            let dx = (l + width).exp() - l.exp();
            mx.push(l + width / 2.0);
            my.push((c as f64 / (n as f64 * dx)).ln());
        }
    }
    let origin = (mx.len() >= 3).then(|| linear_fit(&mx, &my).0);
    (Some(tail), origin)
}

// ---------------------------------------------------------------------------
// Multivariate-Laplace form with W_g integrated out

#[derive(Debug, Clone, Serialize)]
pub struct Prop3Settings {
    pub a_g: f64,
    pub tau2: f64,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    /// Grid spans `[-half_width, half_width]` per axis.
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl Default for Prop3Settings {
    fn default() -> Self {
        Prop3Settings {
            a_g: 0.25,
            tau2: 1.0,
            psi: vec![1.0, 1.0],
            phi: vec![0.5, 0.5],
            half_width: 2.0,
            points_per_axis: 21,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop3Report {
    pub settings: Prop3Settings,
    /// Grid points compared (the origin is excluded: the density is
    /// infinite there when `a_g < p_g/2`).
    pub points_compared: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub symmetric: bool,
    pub pass: bool,
}

/// Density of `β_g` with `W_g ~ Gamma(a_g, 1/τ²)` integrated out of
/// `Normal(0, W_g Φ)` numerically, up to a constant.
pub fn mixture_density_quadrature(q: f64, a_g: f64, tau2: f64, p_g: usize) -> Result<f64> {
    let nu = a_g - p_g as f64 / 2.0;
    let f = |w: f64| {
        if w <= 0.0 {
            0.0
        } else {
            ((nu - 1.0) * w.ln() - q / (2.0 * w) - w / tau2).exp()
        }
    };
    Ok(integrate_positive(f, 1e-12)?.value)
}

/// Multivariate-Laplace kernel `z^ν K_ν(z)`, `z = sqrt(2Q/τ²)`,
/// `ν = a_g - p_g/2`, up to a constant.
pub fn multivariate_laplace_kernel(q: f64, a_g: f64, tau2: f64, p_g: usize) -> Result<f64> {
    let nu = a_g - p_g as f64 / 2.0;
    let z = (2.0 * q / tau2).sqrt();
    Ok(z.powf(nu) * bessel_k(nu, z)?)
}

pub fn check_proposition3(settings: &Prop3Settings) -> Result<Prop3Report> {
    const TOL: f64 = 1e-3;
    let s = settings;
    if s.psi.len() != 2 || s.phi.len() != 2 {
        return Err(Error::Config(
            "the grid comparison uses two coefficients".into(),
        ));
    }
    if s.points_per_axis < 3 || !(s.half_width > 0.0) || !(s.a_g > 0.0 && s.tau2 > 0.0) {
        return Err(Error::Config("invalid grid or prior settings".into()));
    }
    let m = s.points_per_axis;
    let h = 2.0 * s.half_width / (m - 1) as f64;
    // integer (or half-integer) offsets keep mirrored points exact negatives
    let c = (m - 1) as f64 / 2.0;
    let coord = |i: usize| (i as f64 - c) * h;
    let d0 = s.psi[0] * s.phi[0];
    let d1 = s.psi[1] * s.phi[1];
    let mut pts = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let (b0, b1) = (coord(i), coord(j));
            if b0 == 0.0 && b1 == 0.0 {
                continue;
            }
            pts.push((i, j, b0 * b0 / d0 + b1 * b1 / d1));
        }
    }
    let quad: Vec<f64> = pts
        .par_iter()
        .map(|&(_, _, q)| mixture_density_quadrature(q, s.a_g, s.tau2, 2))
        .collect::<Result<_>>()?;
    let kern: Vec<f64> = pts
        .iter()
        .map(|&(_, _, q)| multivariate_laplace_kernel(q, s.a_g, s.tau2, 2))
        .collect::<Result<_>>()?;
    let zq: f64 = quad.iter().sum();
    let zk: f64 = kern.iter().sum();
    let max_rel_error = quad
        .iter()
        .zip(&kern)
        .map(|(a, b)| ((a / zq) / (b / zk) - 1.0).abs())
        .fold(0.0, f64::max);
    // density(β) against density(-β) at the mirrored grid point
    let index = |i: usize, j: usize| pts.iter().position(|p| p.0 == i && p.1 == j);
    let symmetric = pts.iter().enumerate().all(|(k, &(i, j, _))| {
        index(m - 1 - i, m - 1 - j).is_some_and(|k2| quad[k] == quad[k2] && kern[k] == kern[k2])
    });
    Ok(Prop3Report {
        settings: s.clone(),
        points_compared: pts.len(),
        max_rel_error,
        tolerance: TOL,
        symmetric,
        pass: max_rel_error < TOL && symmetric,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DependenceReport {
    pub a_g: f64,
    pub n_draws: usize,
    /// Sample correlation of `β_1²` and `β_2²` with `Φ` diagonal and fixed.
    pub correlation: f64,
    /// Exact value `1/(2a_g + 3)` for `φ = (½, ½)`, `ψ = 1`.
    pub expected: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pass: bool,
}

/// Within-group dependence induced by the shared `W_g`: a 99% batch-means
/// interval for `corr(β_1², β_2²)` must exclude 0.
pub fn check_within_group_dependence(
    a_g: f64,
    n_draws: usize,
    seed: u64,
) -> Result<DependenceReport> {
    const BATCHES: usize = 20;
    const T_19_995: f64 = 2.861;
    if n_draws < BATCHES * 100 {
        return Err(Error::Config(format!("n_draws = {n_draws} is too small")));
    }
    let per = n_draws / BATCHES;
    let corr = |xs: &[(f64, f64)]| {
        let a: Vec<f64> = xs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = xs.iter().map(|p| p.1).collect();
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    };
    let batches: Vec<Vec<(f64, f64)>> = (0..BATCHES)
        .into_par_iter()
        .map(|k| {
            let mut rng = RandomStream::derive(seed, &[k as u64]);
            (0..per)
                .map(|_| {
                    let w = sample_gamma(a_g, 1.0, &mut rng)?;
                    let s = (w / 2.0).sqrt();
                    let b1 = s * rng.std_normal();
                    let b2 = s * rng.std_normal();
                    Ok((b1 * b1, b2 * b2))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let per_batch: Vec<f64> = batches.iter().map(|b| corr(b)).collect();
    let all: Vec<(f64, f64)> = batches.into_iter().flatten().collect();
    let correlation = corr(&all);
    let se = (stats::variance(&per_batch) / BATCHES as f64).sqrt();
    let (ci_low, ci_high) = (correlation - T_19_995 * se, correlation + T_19_995 * se);
    Ok(DependenceReport {
        a_g,
        n_draws: all.len(),
        correlation,
        expected: 1.0 / (2.0 * a_g + 3.0),
        ci_low,
        ci_high,
        pass: ci_low > 0.0,
    })
}

// ---------------------------------------------------------------------------
// gR2D2 against the single-group R2D2 prior restricted to two coefficients

/// `a`, `G` and `p` of the comparison; `p_1 = p_2 = 2`.
pub const FIG1_A: f64 = 0.5;
pub const FIG1_G: usize = 2;
pub const FIG1_P: usize = 4;

#[derive(Debug, Clone)]
pub struct Figure1Clouds {
    /// `(β_11, β_12)` under gR2D2: `φ_1 ~ Dirichlet(a_1/2, a_1/2)`.
    pub gr2d2: Vec<[f64; 2]>,
    /// `(β_11, β_12)` under R2D2 keeping the first two components of
    /// `φ ~ Dirichlet(a/p, …, a/p)`.
    pub r2d2: Vec<[f64; 2]>,
    pub mean_phi_gr2d2: f64,
    pub mean_phi_r2d2: f64,
}

/// Both clouds use `ψ = 1`, `τ² = 1` and `W ~ Gamma(a_1, 1)` with
/// `a_1 = a/G`, drawing `β_1 ~ Normal(0, W diag(φ_1, φ_2))`.
pub fn figure1_comparison(seed: u64, n_draws: usize) -> Result<Figure1Clouds> {
    let a1 = FIG1_A / FIG1_G as f64;
    let gr = DirichletParams::new(vec![a1 / 2.0; 2])?;
    let r2 = DirichletParams::new(vec![FIG1_A / FIG1_P as f64; FIG1_P])?;
    let cloud = |d: &DirichletParams, stream: u64| -> Result<(Vec<[f64; 2]>, f64)> {
        let mut rng = RandomStream::derive(seed, &[stream]);
        let mut out = Vec::with_capacity(n_draws);
        let mut phi_sum = 0.0;
        for _ in 0..n_draws {
            let phi = sample_dirichlet(d, &mut rng);
            let w = sample_gamma(a1, 1.0, &mut rng)?;
            phi_sum += phi[0];
            out.push([
                (w * phi[0]).sqrt() * rng.std_normal(),
                (w * phi[1]).sqrt() * rng.std_normal(),
            ]);
        }
        Ok((out, phi_sum / n_draws as f64))
    };
    let (gr2d2, mean_phi_gr2d2) = cloud(&gr, 0)?;
    let (r2d2, mean_phi_r2d2) = cloud(&r2, 1)?;
    Ok(Figure1Clouds {
        gr2d2,
        r2d2,
        mean_phi_gr2d2,
        mean_phi_r2d2,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Report {
    pub n_draws: usize,
    pub mean_phi_gr2d2: f64,
    pub mean_phi_r2d2: f64,
    pub iqr_gr2d2: f64,
    pub iqr_r2d2: f64,
    /// Bootstrap 99% interval of `IQR_gR2D2 - IQR_R2D2`.
    pub diff_ci_low: f64,
    pub diff_ci_high: f64,
    pub bootstrap_reps: usize,
    pub pass: bool,
}

pub fn figure1_report(clouds: &Figure1Clouds, reps: usize, seed: u64) -> Result<Figure1Report> {
    if reps < 100 {
        return Err(Error::Config(
            "need at least 100 bootstrap replicates".into(),
        ));
    }
    let g: Vec<f64> = clouds.gr2d2.iter().map(|p| p[0]).collect();
    let r: Vec<f64> = clouds.r2d2.iter().map(|p| p[0]).collect();
    let iqr_gr2d2 = iqr(&mut g.clone());
    let iqr_r2d2 = iqr(&mut r.clone());
    let mut diffs: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let mut rng = RandomStream::derive(seed, &[k as u64]);
            let mut resample = |xs: &[f64]| {
                let mut v: Vec<f64> = (0..xs.len())
                    .map(|_| xs[(rng.open_unit() * xs.len() as f64).ceil() as usize - 1])
                    .collect();
                iqr(&mut v)
            };
            resample(&g) - resample(&r)
        })
        .collect();
    let diff_ci_low = quantile_select(&mut diffs, 0.005);
    let diff_ci_high = quantile_select(&mut diffs, 0.995);
    Ok(Figure1Report {
        n_draws: g.len(),
        mean_phi_gr2d2: clouds.mean_phi_gr2d2,
        mean_phi_r2d2: clouds.mean_phi_r2d2,
        iqr_gr2d2,
        iqr_r2d2,
        diff_ci_low,
        diff_ci_high,
        bootstrap_reps: reps,
        pass: iqr_gr2d2 > iqr_r2d2 && diff_ci_low > 0.0,
    })
}

/// Two clouds as `prior,beta_1,beta_2` rows.
pub fn write_figure1_csv<W: Write>(out: W, clouds: &Figure1Clouds) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["prior", "beta_1", "beta_2"]).map_err(io)?;
    for (name, cloud) in [("gR2D2", &clouds.gr2d2), ("R2D2", &clouds.r2d2)] {
        for p in cloud {
            w.write_record([
                name.to_string(),
                format!("{:e}", p[0]),
                format!("{:e}", p[1]),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Var(xᵀβ) = σ² tr(ΛΣ_x)

#[derive(Debug, Clone, Serialize)]
pub struct VarianceIdentityReport {
    pub p: usize,
    pub n_mc: usize,
    pub sigma2: f64,
    /// `σ² Σ_j λ_j` (`Σ_x` has unit diagonal).
    pub expected: f64,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub pass: bool,
}

/// Monte-Carlo `Var(xᵀβ)` with `x ~ Normal(0, Σ_x)` and
/// `β ~ Normal(0, σ² diag(λ))` drawn independently.
pub fn check_variance_identity(
    lambda: &[f64],
    sigma_x: &DMatrix<f64>,
    sigma2: f64,
    n_mc: usize,
    seed: u64,
) -> Result<VarianceIdentityReport> {
    let p = lambda.len();
    if sigma_x.nrows() != p || sigma_x.ncols() != p {
        return Err(Error::Config("Σ_x and Λ dimensions differ".into()));
    }
    if (0..p).any(|j| (sigma_x[(j, j)] - 1.0).abs() > 1e-12) {
        return Err(Error::param("Σ_x", "must have unit diagonal"));
    }
    if lambda.iter().any(|l| !(*l >= 0.0)) || !(sigma2 > 0.0) || n_mc < 100 {
        return Err(Error::Config(
            "need λ ≥ 0, σ² > 0 and at least 100 draws".into(),
        ));
    }
    let l = nalgebra::Cholesky::new(sigma_x.clone())
        .ok_or_else(|| Error::param("Σ_x", "not positive definite"))?
        .l();
    let sd: Vec<f64> = lambda.iter().map(|v| (sigma2 * v).sqrt()).collect();
    let v2: Vec<f64> = (0..n_mc.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = RandomStream::derive(seed, &[c as u64]);
            let len = CHUNK.min(n_mc - c * CHUNK);
            let l = &l;
            let sd = &sd;
            (0..len)
                .map(|_| {
                    let z = DVector::from_fn(p, |_, _| rng.std_normal());
                    let x = l * z;
                    let v: f64 = (0..p).map(|j| x[j] * sd[j] * rng.std_normal()).sum();
                    v * v
                })
                .collect::<Vec<_>>()
        })
        .collect();
    // E[xᵀβ] = 0 exactly, so the variance is the mean square
    let estimate = mean(&v2);
    let se = stats::iid_se(&v2);
    let expected = sigma2 * lambda.iter().sum::<f64>();
    let z = (estimate - expected) / se;
    Ok(VarianceIdentityReport {
        p,
        n_mc,
        sigma2,
        expected,
        estimate,
        se,
        z,
        pass: z.abs() < 3.0,
    })
}
