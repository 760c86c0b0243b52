//! Grouped designs, centered responses and the MCMC chain state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of `p` coefficients into `G` contiguous groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct GroupStructure {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl GroupStructure {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Config("at least one group is required".into()));
        }
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Config(format!("group {} has size 0", g + 1)));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Ok(GroupStructure { sizes, offsets })
    }

    /// `G` groups of equal size.
    pub fn uniform(n_groups: usize, size: usize) -> Result<Self> {
        Self::new(vec![size; n_groups])
    }

    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    /// Total number of coefficients `p`.
    pub fn p(&self) -> usize {
        self.offsets.last().unwrap() + self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, g: usize) -> usize {
        self.sizes[g]
    }

    pub fn range(&self, g: usize) -> std::ops::Range<usize> {
        self.offsets[g]..self.offsets[g] + self.sizes[g]
    }

    /// Flat index of coefficient `j` of group `g` (both zero-based).
    pub fn flat_index(&self, g: usize, j: usize) -> usize {
        debug_assert!(j < self.sizes[g]);
        self.offsets[g] + j
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn group_of(&self, flat: usize) -> (usize, usize) {
        let g = match self.offsets.binary_search(&flat) {
            Ok(g) => g,
            Err(g) => g - 1,
        };
        (g, flat - self.offsets[g])
    }
}

impl TryFrom<Vec<usize>> for GroupStructure {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        GroupStructure::new(v)
    }
}

impl From<GroupStructure> for Vec<usize> {
    fn from(g: GroupStructure) -> Self {
        g.sizes
    }
}

/// Response, design and group structure. The response is centered on
/// construction and the subtracted mean kept for prediction.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    groups: GroupStructure,
    center: f64,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, groups: GroupStructure) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Data("dataset has no observations".into()));
        }
        if x.nrows() != n {
            return Err(Error::Data(format!(
                "design has {} rows but response has {n} entries",
                x.nrows()
            )));
        }
        if x.ncols() != groups.p() {
            return Err(Error::Data(format!(
                "design has {} columns but group sizes sum to {}",
                x.ncols(),
                groups.p()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in response or design".into()));
        }
        let center = y.mean();
        let y = y.add_scalar(-center);
        Ok(Dataset {
            y,
            x,
            groups,
            center,
        })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    /// Mean subtracted from the raw response.
    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Same data under a different grouping of the columns.
    pub fn regroup(&self, groups: GroupStructure) -> Result<Self> {
        if groups.p() != self.p() {
            return Err(Error::Data(format!(
                "new grouping covers {} columns, design has {}",
                groups.p(),
                self.p()
            )));
        }
        Ok(Dataset {
            groups,
            ..self.clone()
        })
    }

    /// Rescales every design column to unit sample variance (opt-in for
    /// real data; constant columns are rejected).
    pub fn standardize_columns(mut self) -> Result<Self> {
        let n = self.n() as f64;
        for (k, mut col) in self.x.column_iter_mut().enumerate() {
            let m = col.mean();
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            if !(sd > 0.0) {
                return Err(Error::Data(format!("column {} is constant", k + 1)));
            }
            col.apply(|v| *v = (*v - m) / sd);
        }
        Ok(self)
    }
}

/// One state of the chain: `(β, σ², τ², ψ, φ, W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub tau2: f64,
    /// Local scales `ψ_gj`, flat coefficient order.
    pub psi: Vec<f64>,
    /// Per-group allocation `φ_g` on the simplex.
    pub phi: Vec<Vec<f64>>,
    /// Group variances `W_g`.
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct R2Decomposition {
    pub r2: f64,
    pub r2_g: Vec<f64>,
}

impl ChainState {
    /// Checks dimensions, positivity and simplex constraints.
    pub fn validate(&self, groups: &GroupStructure) -> Result<()> {
        let p = groups.p();
        if self.beta.len() != p || self.psi.len() != p {
            return Err(Error::Data(format!(
                "state has {} coefficients / {} local scales, model has {p}",
                self.beta.len(),
                self.psi.len()
            )));
        }
        if self.phi.len() != groups.n_groups() || self.w.len() != groups.n_groups() {
            return Err(Error::Data("state group count does not match model".into()));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Data(format!("sigma2 = {}", self.sigma2)));
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return Err(Error::Data(format!("tau2 = {}", self.tau2)));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Data("non-finite coefficient".into()));
        }
        if let Some(v) = self.psi.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Data(format!("psi entry {v}")));
        }
        for (g, phi) in self.phi.iter().enumerate() {
            if phi.len() != groups.size(g) {
                return Err(Error::Data(format!(
                    "phi for group {} has wrong length",
                    g + 1
                )));
            }
            if phi.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Data(format!(
                    "phi for group {} has a negative entry",
                    g + 1
                )));
            }
            let s: f64 = phi.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::Data(format!("phi for group {} sums to {s}", g + 1)));
            }
            if !(self.w[g] > 0.0 && self.w[g].is_finite()) {
                return Err(Error::Data(format!(
                    "W for group {} is {}",
                    g + 1,
                    self.w[g]
                )));
            }
        }
        Ok(())
    }

    pub fn r2(&self) -> R2Decomposition {
        r2_from_w(&self.w)
    }

    /// Diagonal of `Λ`: entry `(g, j)` is `ψ_gj φ_gj W_g / 2`.
    pub fn lambda_diag(&self, groups: &GroupStructure) -> DVector<f64> {
        let mut out = DVector::zeros(groups.p());
        for g in 0..groups.n_groups() {
            for (j, k) in groups.range(g).enumerate() {
                out[k] = self.psi[k] * self.phi[g][j] * self.w[g] / 2.0;
            }
        }
        out
    }
}

/// `R²_g = W_g / (W + 1)` and `R² = W / (W + 1)` with `W = Σ W_g`.
pub fn r2_from_w(w: &[f64]) -> R2Decomposition {
    let total: f64 = w.iter().sum();
    let denom = total + 1.0;
    R2Decomposition {
        r2: total / denom,
        r2_g: w.iter().map(|v| v / denom).collect(),
    }
}
