//! Random streams, samplers and log-densities used by the prior and the
//! Gibbs sampler.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * `Gamma(shape, rate)`: density ∝ x^{shape-1} e^{-rate·x}. The prior
//!   `W_g | τ² ~ Gamma(a_g, 1/τ²)` therefore has rate `1/τ²`.
//! * `InvGamma(shape, scale)`: density ∝ x^{-shape-1} e^{-scale/x}.
//! * `Exp(rate)`: density ∝ e^{-rate·x}; the local scales `ψ ~ Exp(1/2)`
//!   have mean 2.
//! * `GIG(λ, ρ, χ)`: density ∝ z^{λ-1} exp{-(ρz + χ/z)/2}.
//! * `InvGauss(μ, λ)`: density ∝ z^{-3/2} exp{-λ(z-μ)²/(2μ²z)}.
//!
//! Shrinkage drives many quantities toward 0 or ∞, so the Gamma, GIG and
//! Dirichlet samplers work on the log scale internally.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Smallest `χ` handed to the GIG sampler; smaller values are clamped.
pub const GIG_CHI_FLOOR: f64 = 1e-300;

/// A seeded, reproducible random stream.
///
/// Streams derived from the same seed with different paths are independent
/// ChaCha streams, so replications and groups can be scheduled in any order
/// without changing results.
#[derive(Debug, Clone)]
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent sub-stream of `seed` identified by `path`
    /// (e.g. `[replication, method]`).
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut key = 0x243f_6a88_85a3_08d3_u64;
        for &p in path {
            key = splitmix64(key ^ splitmix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(key);
        RandomStream(rng)
    }

    /// First word of `derive(seed, path)`, for seeding a sub-computation.
    pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
        RandomStream::derive(seed, path).next_u64()
    }

    /// Uniform on `(0, 1]`, safe to take the logarithm of.
    pub fn open_unit(&mut self) -> f64 {
        1.0 - self.random::<f64>()
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

// ---------------------------------------------------------------------------
// Gamma family

fn check_positive(what: &'static str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            what,
            format!("{name} = {v}, must be positive and finite"),
        ))
    }
}

/// Log of a `Gamma(shape, rate)` draw. Valid for arbitrarily small shapes,
/// where the draw itself would underflow.
pub fn sample_gamma_ln(shape: f64, rate: f64, rng: &mut RandomStream) -> Result<f64> {
    check_positive("gamma", "shape", shape)?;
    check_positive("gamma", "rate", rate)?;
    let ln_unit = if shape >= 1.0 {
        let g: f64 = rand_distr::Gamma::new(shape, 1.0)
            .map_err(|e| Error::param("gamma", e.to_string()))?
            .sample(rng);
        g.ln()
    } else {
        // G(a) = G(a + 1) · U^{1/a}
        let g: f64 = rand_distr::Gamma::new(shape + 1.0, 1.0)
            .map_err(|e| Error::param("gamma", e.to_string()))?
            .sample(rng);
        g.ln() + rng.open_unit().ln() / shape
    };
    Ok(ln_unit - rate.ln())
}

pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RandomStream) -> Result<f64> {
    Ok(sample_gamma_ln(shape, rate, rng)?.exp())
}

/// `InvGamma(shape, scale)`, the reciprocal of `Gamma(shape, rate = scale)`.
pub fn sample_inverse_gamma(shape: f64, scale: f64, rng: &mut RandomStream) -> Result<f64> {
    check_positive("inverse gamma", "shape", shape)?;
    check_positive("inverse gamma", "scale", scale)?;
    Ok((-sample_gamma_ln(shape, scale, rng)?).exp())
}

pub fn sample_exponential(rate: f64, rng: &mut RandomStream) -> Result<f64> {
    check_positive("exponential", "rate", rate)?;
    Ok(-rng.open_unit().ln() / rate)
}

// ---------------------------------------------------------------------------
// Generalized inverse Gaussian

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub lambda: f64,
    pub rho: f64,
    pub chi: f64,
}

impl GigParams {
    /// Validates normalizability. `χ` in `(0, 1e-300)` is clamped up to
    /// [`GIG_CHI_FLOOR`]; `χ = 0` is kept and requires `λ > 0`.
    pub fn new(lambda: f64, rho: f64, chi: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::param("GIG", format!("lambda = {lambda}")));
        }
        check_positive("GIG", "rho", rho)?;
        if !(chi >= 0.0) || !chi.is_finite() {
            return Err(Error::param("GIG", format!("chi = {chi}, must be >= 0")));
        }
        if chi == 0.0 && lambda <= 0.0 {
            return Err(Error::param(
                "GIG",
                format!("chi = 0 requires lambda > 0 (got {lambda})"),
            ));
        }
        let chi = if chi > 0.0 {
            chi.max(GIG_CHI_FLOOR)
        } else {
            chi
        };
        Ok(GigParams { lambda, rho, chi })
    }
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        ((lambda - 1.0) + ((lambda - 1.0).powi(2) + omega * omega).sqrt()) / omega
    } else {
        omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

/// Ratio-of-uniforms without mode shift.
fn gig_rou_noshift(lambda: f64, omega: f64, rng: &mut RandomStream) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v = rng.open_unit();
        let x = u / v;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Ratio-of-uniforms with mode shift, for `λ > 2` or `ω > 3`.
fn gig_rou_shift(lambda: f64, omega: f64, rng: &mut RandomStream) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    // Roots of the cubic bounding the shifted region.
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let fi = (-q / (2.0 * (-p * p * p / 27.0).sqrt()))
        .clamp(-1.0, 1.0)
        .acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v = rng.open_unit();
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Rejection from a three-piece hat for the non-T-concave region
/// `0 <= λ < 1`, small `ω`.
fn gig_small_omega(lambda: f64, omega: f64, rng: &mut RandomStream) -> f64 {
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * rng.random::<f64>();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let start = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * start).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        if !(x > 0.0) || !x.is_finite() {
            continue;
        }
        let u = rng.open_unit() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - 0.5 * omega * (x + 1.0 / x) {
            return x;
        }
    }
}

/// Draw from the standardized `GIG(λ, ω, ω)` with `λ >= 0`, `ω > 0`.
fn standard_gig(lambda: f64, omega: f64, rng: &mut RandomStream) -> f64 {
    if lambda > 2.0 || omega > 3.0 {
        gig_rou_shift(lambda, omega, rng)
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        gig_rou_noshift(lambda, omega, rng)
    } else {
        gig_small_omega(lambda, omega, rng)
    }
}

/// Log of a `GIG(λ, ρ, χ)` draw.
///
/// Uses `X = sqrt(χ/ρ)·Y` with `Y ~ GIG(λ, ω, ω)`, `ω = sqrt(ρχ)`, and
/// `1/GIG(λ) = GIG(-λ)` in the standardized form (Hörmann & Leydold's
/// three regimes). `χ = 0` is the `Gamma(λ, ρ/2)` limit.
pub fn sample_gig_ln(params: &GigParams, rng: &mut RandomStream) -> Result<f64> {
    let GigParams { lambda, rho, chi } = *params;
    if chi == 0.0 {
        return sample_gamma_ln(lambda, rho / 2.0, rng);
    }
    let omega = (rho * chi).sqrt();
    let ln_alpha = 0.5 * (chi.ln() - rho.ln());
    let lam = lambda.abs();
    let ln_y = if omega < 1e-8 && lam >= 1.0 {
        // The 1/y term only matters below y ~ ω, which carries mass O(ω^{2λ}).
        sample_gamma_ln(lam, omega / 2.0, rng)?
    } else {
        standard_gig(lam, omega, rng).ln()
    };
    Ok(if lambda < 0.0 {
        ln_alpha - ln_y
    } else {
        ln_alpha + ln_y
    })
}

pub fn sample_gig(params: &GigParams, rng: &mut RandomStream) -> Result<f64> {
    Ok(sample_gig_ln(params, rng)?.exp())
}

// ---------------------------------------------------------------------------
// Inverse Gaussian

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGaussParams {
    pub mu: f64,
    pub lambda: f64,
}

impl InvGaussParams {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        check_positive("inverse Gaussian", "mu", mu)?;
        check_positive("inverse Gaussian", "lambda", lambda)?;
        Ok(InvGaussParams { mu, lambda })
    }
}

/// Michael–Schucany–Haas transformation, written to stay finite for very
/// large `μ` (which occurs when a coefficient has been shrunk to ~0).
pub fn sample_inverse_gaussian(params: &InvGaussParams, rng: &mut RandomStream) -> f64 {
    let InvGaussParams { mu, lambda } = *params;
    let nu = rng.std_normal();
    let r = mu * nu * nu / (2.0 * lambda);
    // μ(1 + r - sqrt(r² + 2r)) rationalized
    let x = mu / (1.0 + r + r.sqrt() * (r + 2.0).sqrt());
    if rng.random::<f64>() <= mu / (mu + x) {
        x
    } else {
        mu * (mu / x)
    }
}

// ---------------------------------------------------------------------------
// Dirichlet

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::param("Dirichlet", "need at least two components"));
        }
        for &a in &alpha {
            check_positive("Dirichlet", "alpha", a)?;
        }
        Ok(DirichletParams { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

/// Normalizes log-weights onto the simplex.
pub fn softmax(ln_w: &[f64]) -> Vec<f64> {
    let m = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = ln_w.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

pub fn sample_dirichlet(params: &DirichletParams, rng: &mut RandomStream) -> Vec<f64> {
    let ln_g: Vec<f64> = params
        .alpha
        .iter()
        .map(|&a| sample_gamma_ln(a, 1.0, rng).expect("validated shapes"))
        .collect();
    softmax(&ln_g)
}

// ---------------------------------------------------------------------------
// Logistic normal

#[derive(Debug, Clone)]
pub struct LogisticNormalParams {
    sigma: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    ln_det_2pi_sigma: f64,
}

impl LogisticNormalParams {
    /// `sigma` is the `(m-1)×(m-1)` covariance of the log-ratios of an
    /// `m`-part composition.
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if d == 0 || sigma.ncols() != d {
            return Err(Error::param(
                "logistic normal",
                format!(
                    "covariance must be square and non-empty, got {}x{}",
                    d,
                    sigma.ncols()
                ),
            ));
        }
        for i in 0..d {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                    return Err(Error::param("logistic normal", "covariance not symmetric"));
                }
            }
        }
        let chol = nalgebra::Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::param("logistic normal", "covariance not positive definite"))?;
        let ln_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let ln_det_2pi_sigma = d as f64 * (2.0 * std::f64::consts::PI).ln() + ln_det;
        Ok(LogisticNormalParams {
            sigma,
            chol,
            ln_det_2pi_sigma,
        })
    }

    /// Number of parts `m` of the composition.
    pub fn parts(&self) -> usize {
        self.sigma.nrows() + 1
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `LR(φ)ᵀ Σ⁻¹ LR(φ)` for a strictly positive composition.
    pub fn lr_quadratic(&self, phi: &[f64]) -> Result<f64> {
        let lr = log_ratio(phi)?;
        if lr.len() != self.sigma.nrows() {
            return Err(Error::domain(
                "logistic normal",
                format!(
                    "composition has {} parts, expected {}",
                    phi.len(),
                    self.parts()
                ),
            ));
        }
        let v = DVector::from_vec(lr);
        let sol = self.chol.solve(&v);
        Ok(v.dot(&sol))
    }
}

/// Log-ratio transform `(log φ_1/φ_m, …, log φ_{m-1}/φ_m)`.
pub fn log_ratio(phi: &[f64]) -> Result<Vec<f64>> {
    if phi.len() < 2 {
        return Err(Error::domain(
            "log-ratio",
            "composition needs at least two parts",
        ));
    }
    if let Some(&bad) = phi.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::domain(
            "log-ratio",
            format!("component {bad} is not positive"),
        ));
    }
    let last = phi[phi.len() - 1].ln();
    Ok(phi[..phi.len() - 1].iter().map(|v| v.ln() - last).collect())
}

pub fn sample_logistic_normal(params: &LogisticNormalParams, rng: &mut RandomStream) -> Vec<f64> {
    let d = params.sigma.nrows();
    let z = DVector::from_fn(d, |_, _| rng.std_normal());
    let eta = params.chol.l() * z;
    let mut ln_w: Vec<f64> = eta.iter().copied().collect();
    ln_w.push(0.0);
    softmax(&ln_w)
}

/// Log-density of the logistic-normal composition with respect to Lebesgue
/// measure on its first `m-1` coordinates:
/// `-½ log|2πΣ| - Σ_k log φ_k - ½ LR(φ)ᵀ Σ⁻¹ LR(φ)`.
pub fn logdensity_logistic_normal(phi: &[f64], params: &LogisticNormalParams) -> Result<f64> {
    if phi.len() != params.parts() {
        return Err(Error::domain(
            "logistic normal",
            format!(
                "composition has {} parts, expected {}",
                phi.len(),
                params.parts()
            ),
        ));
    }
    let sum: f64 = phi.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(Error::domain(
            "logistic normal",
            format!("components sum to {sum}"),
        ));
    }
    let quad = params.lr_quadratic(phi)?;
    let ln_prod: f64 = phi.iter().map(|v| v.ln()).sum();
    Ok(-0.5 * params.ln_det_2pi_sigma - ln_prod - 0.5 * quad)
}

// ---------------------------------------------------------------------------
// Multivariate normal

/// `mean + L z`, where `factor = L` is a lower-triangular covariance factor.
pub fn sample_normal_mv(
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    rng: &mut RandomStream,
) -> Result<DVector<f64>> {
    let p = mean.len();
    if factor.nrows() != p || factor.ncols() != p {
        return Err(Error::param(
            "multivariate normal",
            format!(
                "factor is {}x{}, mean has length {p}",
                factor.nrows(),
                factor.ncols()
            ),
        ));
    }
    let z = DVector::from_fn(p, |_, _| rng.std_normal());
    Ok(mean + factor * z)
}

/// Draw from `Normal(mean, scale² · A⁻¹)` given the Cholesky factor of the
/// precision `A = L Lᵀ`: solves `Lᵀ x = z`.
pub fn sample_normal_precision(
    mean: &DVector<f64>,
    precision_chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    scale: f64,
    rng: &mut RandomStream,
) -> DVector<f64> {
    let p = mean.len();
    let z = DVector::from_fn(p, |_, _| rng.std_normal());
    let x = precision_chol
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .expect("Cholesky factor has a positive diagonal");
    mean + x * scale
}
