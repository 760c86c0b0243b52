//! Hyperparameter strategies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, GroupStructure};
use crate::special::trigamma;

pub const DEFAULT_A: f64 = 0.5;
pub const DEFAULT_B: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// `a_g = a ŵ_g` with data-driven weights from per-group least squares.
    EmpiricalBayes,
    /// `a_g = a / G`.
    Sparsity,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eb" | "empirical-bayes" | "empirical_bayes" => Ok(Strategy::EmpiricalBayes),
            "sparsity" | "sparse" => Ok(Strategy::Sparsity),
            other => Err(Error::Config(format!(
                "unknown hyperparameter strategy '{other}' (expected empirical-bayes or sparsity)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub strategy: Strategy,
    /// Global shape; `Σ_g a_g = a`.
    pub a: f64,
    pub b: f64,
    pub a_g: Vec<f64>,
    /// Dirichlet shapes of the within-group allocation.
    pub a_gj: Vec<Vec<f64>>,
    /// Log-ratio covariance of each group's logistic-normal allocation
    /// (`0×0` for single-coefficient groups).
    pub sigma_g: Vec<DMatrix<f64>>,
    /// `σ² ~ InvGamma(n0/2, d0/2)`.
    pub n0: f64,
    pub d0: f64,
}

impl HyperParams {
    /// `a*_g = Σ_j a_gj`.
    pub fn a_star(&self, g: usize) -> f64 {
        self.a_gj[g].iter().sum()
    }

    /// True when the Dirichlet step for group `g` can be sampled exactly.
    pub fn is_exact(&self, g: usize) -> bool {
        (self.a_star(g) - self.a_g[g]).abs() <= 1e-12 * self.a_g[g].max(1.0)
    }

    pub fn with_sigma_prior(mut self, n0: f64, d0: f64) -> Result<Self> {
        if !(n0 > 0.0 && d0 > 0.0) {
            return Err(Error::Config(format!(
                "n0 = {n0}, d0 = {d0}: both must be positive"
            )));
        }
        self.n0 = n0;
        self.d0 = d0;
        Ok(self)
    }

    /// Overrides the Dirichlet shapes of one group. When they no longer sum
    /// to `a_g` the Dirichlet update uses a Metropolis–Hastings correction.
    pub fn with_local_shapes(mut self, g: usize, shapes: Vec<f64>) -> Result<Self> {
        if g >= self.a_gj.len() {
            return Err(Error::Config(format!("group {} does not exist", g + 1)));
        }
        if shapes.len() != self.a_gj[g].len() {
            return Err(Error::Config(format!(
                "group {} needs {} shapes, got {}",
                g + 1,
                self.a_gj[g].len(),
                shapes.len()
            )));
        }
        if shapes.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("local shapes must be positive".into()));
        }
        self.a_gj[g] = shapes;
        Ok(self)
    }

    pub fn validate(&self, groups: &GroupStructure) -> Result<()> {
        let gn = groups.n_groups();
        if self.a_g.len() != gn || self.a_gj.len() != gn || self.sigma_g.len() != gn {
            return Err(Error::Config(format!(
                "hyperparameters describe {} groups, model has {gn}",
                self.a_g.len()
            )));
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.b) || !pos(self.n0) || !pos(self.d0) {
            return Err(Error::Config("b, n0 and d0 must be positive".into()));
        }
        for g in 0..gn {
            if !pos(self.a_g[g]) {
                return Err(Error::Config(format!(
                    "a_g for group {} is {}",
                    g + 1,
                    self.a_g[g]
                )));
            }
            if self.a_gj[g].len() != groups.size(g) || !self.a_gj[g].iter().all(|v| pos(*v)) {
                return Err(Error::Config(format!(
                    "invalid local shapes for group {}",
                    g + 1
                )));
            }
            if self.sigma_g[g].nrows() != groups.size(g) - 1 {
                return Err(Error::Config(format!(
                    "logistic-normal covariance for group {} has wrong dimension",
                    g + 1
                )));
            }
        }
        Ok(())
    }
}

/// Data-driven group weights
/// `ŵ_g = β̂_gᵀ V_g β̂_g / Σ_g' β̂_g'ᵀ V_g' β̂_g'`, where `β̂_g` is the
/// no-intercept least-squares fit of the centered response on group `g`
/// alone and `V_g` the sample covariance (divisor `n-1`) of its columns.
pub fn empirical_bayes_weights(data: &Dataset) -> Result<Vec<f64>> {
    let groups = data.groups();
    let n = data.n();
    let mut q = Vec::with_capacity(groups.n_groups());
    for g in 0..groups.n_groups() {
        let range = groups.range(g);
        let pg = range.len();
        if n <= pg {
            return Err(Error::Strategy(format!(
                "group {} has {pg} columns but only {n} observations; use the sparsity strategy",
                g + 1
            )));
        }
        let xg = data.x().columns(range.start, pg).into_owned();
        let svd = xg.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * 1e-10 * n.max(pg) as f64;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if smax == 0.0 || rank < pg {
            return Err(Error::Strategy(format!(
                "group {} design is rank deficient (rank {rank} < {pg}); use the sparsity strategy",
                g + 1
            )));
        }
        let beta = svd
            .solve(data.y(), tol)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let v = sample_covariance(&xg);
        q.push(beta.dot(&(&v * &beta)));
    }
    let total: f64 = q.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Strategy(
            "no group explains any response variance; use the sparsity strategy".into(),
        ));
    }
    Ok(q.iter().map(|v| v / total).collect())
}

fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j]);
    centered.transpose() * &centered / (n - 1.0)
}

/// `Σ_g = δ(1/p_g)(J + I)` with `δ` the trigamma function. Single-coefficient
/// groups get an empty matrix: their composition is the constant `(1)`.
pub fn logistic_normal_covariance(pg: usize) -> Result<DMatrix<f64>> {
    if pg == 0 {
        return Err(Error::Config("group size must be positive".into()));
    }
    if pg == 1 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let d = trigamma(1.0 / pg as f64)?;
    Ok(DMatrix::from_fn(pg - 1, pg - 1, |i, j| {
        if i == j {
            2.0 * d
        } else {
            d
        }
    }))
}

/// Builds hyperparameters with `a_gj = a_g / p_g` and `n0 = d0 = 1`.
pub fn make_hyperparams(
    strategy: Strategy,
    a: f64,
    b: f64,
    data: Option<&Dataset>,
    groups: &GroupStructure,
) -> Result<HyperParams> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Config(format!(
            "a = {a}, b = {b}: both must be positive"
        )));
    }
    let gn = groups.n_groups();
    let a_g: Vec<f64> = match strategy {
        Strategy::Sparsity => vec![a / gn as f64; gn],
        Strategy::EmpiricalBayes => {
            let data = data.ok_or_else(|| {
                Error::Config("the empirical-Bayes strategy needs a dataset".into())
            })?;
            if data.groups() != groups {
                return Err(Error::Config(
                    "dataset grouping differs from requested grouping".into(),
                ));
            }
            empirical_bayes_weights(data)?
                .into_iter()
                .map(|w| a * w)
                .collect()
        }
    };
    // Groups with ŵ_g = 0 would get an improper prior; floor at a tiny share.
    let a_g: Vec<f64> = a_g.into_iter().map(|v| v.max(a * 1e-12)).collect();
    let a_gj = a_g
        .iter()
        .zip(groups.sizes())
        .map(|(&ag, &pg)| vec![ag / pg as f64; pg])
        .collect();
    let sigma_g = groups
        .sizes()
        .iter()
        .map(|&pg| logistic_normal_covariance(pg))
        .collect::<Result<Vec<_>>>()?;
    Ok(HyperParams {
        strategy,
        a,
        b,
        a_g,
        a_gj,
        sigma_g,
        n0: 1.0,
        d0: 1.0,
    })
}

/// Ordinary least squares through the normal equations; used where a
/// direct fit is wanted.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let xtx = x.transpose() * x;
    let chol = nalgebra::Cholesky::new(xtx)
        .ok_or_else(|| Error::Numerical("normal equations are singular".into()))?;
    Ok(chol.solve(&(x.transpose() * y)))
}
