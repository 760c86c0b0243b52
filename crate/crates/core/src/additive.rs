//! Additive models with B-spline expansions of each covariate, ingestion of
//! abalone-style tables, effect curves and out-of-sample prediction.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Dataset, GroupStructure};
use crate::rngdist::RandomStream;
use crate::sampler::ChainOutput;
use crate::simlab::{credible_interval, fit_method, Method};
use crate::stats::quantile_select;

pub const DEFAULT_BASIS: usize = 10;
pub const DEFAULT_DEGREE: usize = 3;
pub const CURVE_POINTS: usize = 100;

/// Clamped B-spline basis with equally spaced interior knots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplineBasis {
    pub degree: usize,
    pub n_basis: usize,
    /// Full knot vector; both boundary knots repeat `degree + 1` times.
    pub knots: Vec<f64>,
    pub domain: (f64, f64),
}

impl SplineBasis {
    pub fn new(domain: (f64, f64), n_basis: usize, degree: usize) -> Result<Self> {
        let (lo, hi) = domain;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Data(format!(
                "spline domain [{lo}, {hi}] is degenerate"
            )));
        }
        if n_basis < degree + 1 {
            return Err(Error::Config(format!(
                "{n_basis} basis functions cannot have degree {degree}"
            )));
        }
        let interior = n_basis - degree - 1;
        let mut knots = vec![lo; degree + 1];
        let h = (hi - lo) / (interior + 1) as f64;
        knots.extend((1..=interior).map(|i| lo + i as f64 * h));
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(SplineBasis {
            degree,
            n_basis,
            knots,
            domain,
        })
    }

    /// Index `i` of the knot span `[t_i, t_{i+1})` holding `x`; the right
    /// end of the domain belongs to the last span.
    fn span(&self, x: f64) -> usize {
        let (d, l) = (self.degree, self.n_basis);
        if x >= self.knots[l] {
            return l - 1;
        }
        // first knot index > x, among t_{d+1}..t_l
        let upper = self.knots[d + 1..=l].partition_point(|&t| t <= x);
        d + upper
    }

    /// All basis values at `x`, clamped to the domain.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let x = x.clamp(self.domain.0, self.domain.1);
        let d = self.degree;
        let t = &self.knots;
        let i = self.span(x);
        let mut n = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = x - t[i + 1 - j];
            right[j] = t[i + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        let mut out = vec![0.0; self.n_basis];
        out[i - d..=i].copy_from_slice(&n);
        out
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.domain.0 && x <= self.domain.1
    }
}

/// `n × L` design of a covariate over its observed range.
pub fn bspline_design(
    z: &[f64],
    n_basis: usize,
    degree: usize,
) -> Result<(DMatrix<f64>, SplineBasis)> {
    if z.len() < n_basis {
        return Err(Error::Data(format!(
            "{} observations cannot support {n_basis} basis functions",
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite covariate value".into()));
    }
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::Data(format!("covariate is constant ({lo})")));
    }
    let basis = SplineBasis::new((lo, hi), n_basis, degree)?;
    Ok((design_rows(z, &basis), basis))
}

fn design_rows(z: &[f64], basis: &SplineBasis) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(z.len(), basis.n_basis);
    for (i, &v) in z.iter().enumerate() {
        for (l, b) in basis.evaluate(v).into_iter().enumerate() {
            m[(i, l)] = b;
        }
    }
    m
}

/// Raw covariates and response.
#[derive(Debug, Clone, Serialize)]
pub struct CovariateTable {
    pub names: Vec<String>,
    /// `n × G` raw covariates.
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl CovariateTable {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn rows(&self, idx: &[usize]) -> CovariateTable {
        CovariateTable {
            names: self.names.clone(),
            z: self.z.select_rows(idx),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
        }
    }
}

pub const ABALONE_COLUMNS: [&str; 9] = [
    "Sex",
    "Length",
    "Diameter",
    "Height",
    "WholeWeight",
    "ShuckedWeight",
    "VisceraWeight",
    "ShellWeight",
    "Rings",
];

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub delimiter: u8,
    /// Keeps rows with this `Sex` value; `None` keeps every row.
    pub sex: Option<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            delimiter: b',',
            sex: Some("M".into()),
        }
    }
}

fn normalize(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

pub fn ingest_abalone(path: &Path, opts: &IngestOptions) -> Result<CovariateTable> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot open {}: {e}", path.display()),
        ))
    })?;
    ingest_abalone_reader(file, opts)
}

/// Reads the nine abalone columns, either positionally (the UCI file has no
/// header) or by name when the first row is a header.
pub fn ingest_abalone_reader<R: Read>(reader: R, opts: &IngestOptions) -> Result<CovariateTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(opts.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut columns: Option<Vec<usize>> = None;
    let mut z = Vec::new();
    let mut y = Vec::new();
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                line,
                reason: e.to_string(),
            }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if first {
            first = false;
            let names: Vec<String> = rec.iter().map(normalize).collect();
            if names.iter().any(|n| n == "sex") {
                let idx = ABALONE_COLUMNS
                    .iter()
                    .map(|c| {
                        names
                            .iter()
                            .position(|n| *n == normalize(c))
                            .ok_or_else(|| Error::Parse {
                                line,
                                reason: format!("header lacks column {c}"),
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                columns = Some(idx);
                continue;
            }
        }
        let idx: Vec<usize> = columns.clone().unwrap_or_else(|| (0..9).collect());
        let field = |k: usize| -> Result<&str> {
            rec.get(idx[k]).ok_or_else(|| Error::Parse {
                line,
                reason: format!("missing column {}", ABALONE_COLUMNS[k]),
            })
        };
        let sex = field(0)?;
        if let Some(want) = &opts.sex {
            if !sex.eq_ignore_ascii_case(want) {
                continue;
            }
        }
        let mut row = Vec::with_capacity(8);
        for (k, name) in ABALONE_COLUMNS.iter().enumerate().skip(1) {
            let s = field(k)?;
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line,
                reason: format!("{name} value '{s}' is not numeric"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    reason: format!("{name} value '{s}' is not finite"),
                });
            }
            row.push(v);
        }
        y.push(row.pop().unwrap());
        z.extend(row);
    }
    if y.is_empty() {
        return Err(Error::Data(match &opts.sex {
            Some(s) => format!("no rows with Sex = {s}"),
            None => "no data rows".into(),
        }));
    }
    Ok(CovariateTable {
        names: ABALONE_COLUMNS[1..8]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        z: DMatrix::from_row_slice(y.len(), 7, &z),
        y: DVector::from_vec(y),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AdditiveDesign {
    pub names: Vec<String>,
    pub bases: Vec<SplineBasis>,
    /// One group of `L` columns per covariate.
    #[serde(skip)]
    pub data: Dataset,
}

pub fn additive_design(
    table: &CovariateTable,
    n_basis: usize,
    degree: usize,
) -> Result<AdditiveDesign> {
    let g = table.z.ncols();
    let n = table.n();
    let mut x = DMatrix::zeros(n, g * n_basis);
    let mut bases = Vec::with_capacity(g);
    for c in 0..g {
        let z: Vec<f64> = table.z.column(c).iter().copied().collect();
        let (m, basis) = bspline_design(&z, n_basis, degree).map_err(|e| match e {
            Error::Data(r) => Error::Data(format!("covariate {}: {r}", table.names[c])),
            other => other,
        })?;
        x.columns_mut(c * n_basis, n_basis).copy_from(&m);
        bases.push(basis);
    }
    let data = Dataset::new(table.y.clone(), x, GroupStructure::uniform(g, n_basis)?)?;
    Ok(AdditiveDesign {
        names: table.names.clone(),
        bases,
        data,
    })
}

impl AdditiveDesign {
    /// Expanded rows for new covariates, clamped to the training domains;
    /// also returns how many values were clamped.
    pub fn expand(&self, z: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
        if z.ncols() != self.bases.len() {
            return Err(Error::Data(format!(
                "{} covariates given, model has {}",
                z.ncols(),
                self.bases.len()
            )));
        }
        let l = self.data.groups().size(0);
        let mut x = DMatrix::zeros(z.nrows(), self.data.p());
        let mut clamped = 0;
        for (c, basis) in self.bases.iter().enumerate() {
            for i in 0..z.nrows() {
                let v = z[(i, c)];
                if !v.is_finite() {
                    return Err(Error::Data(format!("row {}: non-finite covariate", i + 1)));
                }
                if !basis.contains(v) {
                    clamped += 1;
                }
                for (k, b) in basis.evaluate(v).into_iter().enumerate() {
                    x[(i, c * l + k)] = b;
                }
            }
        }
        Ok((x, clamped))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdditiveFit {
    pub method: Method,
    pub design: AdditiveDesign,
    #[serde(skip)]
    pub chain: ChainOutput,
}

pub fn fit_additive(
    table: &CovariateTable,
    n_basis: usize,
    method: Method,
    iterations: usize,
    burn_in: usize,
    seed: u64,
) -> Result<AdditiveFit> {
    let design = additive_design(table, n_basis, DEFAULT_DEGREE)?;
    let chain = fit_method(&design.data, method, iterations, burn_in, seed)?;
    Ok(AdditiveFit {
        method,
        design,
        chain,
    })
}

impl AdditiveFit {
    pub fn coefficient_medians(&self) -> Vec<f64> {
        (0..self.design.data.p())
            .map(|k| quantile_select(&mut self.chain.coefficient(k), 0.5))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EffectCurve {
    pub covariate: String,
    pub z: Vec<f64>,
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Mean pointwise 95% interval length over the grid.
    pub average_length: f64,
}

/// `Σ_l β_gl Φ_gl(z)` per draw at `points` equally spaced values over each
/// covariate's observed range.
pub fn effect_curves(fit: &AdditiveFit, points: usize) -> Result<Vec<EffectCurve>> {
    if points < 2 {
        return Err(Error::Config("need at least two grid points".into()));
    }
    let groups = fit.design.data.groups();
    let draws = &fit.chain.draws;
    let mut out = Vec::with_capacity(fit.design.bases.len());
    for (g, basis) in fit.design.bases.iter().enumerate() {
        let (lo_z, hi_z) = basis.domain;
        let z: Vec<f64> = (0..points)
            .map(|i| lo_z + (hi_z - lo_z) * i as f64 / (points - 1) as f64)
            .collect();
        let range = groups.range(g);
        let mut median = Vec::with_capacity(points);
        let mut lo = Vec::with_capacity(points);
        let mut hi = Vec::with_capacity(points);
        for &v in &z {
            let phi = basis.evaluate(v);
            let mut f: Vec<f64> = draws
                .iter()
                .map(|s| range.clone().zip(&phi).map(|(k, b)| s.beta[k] * b).sum())
                .collect();
            let (l, h) = credible_interval(&f, 0.95)?;
            median.push(quantile_select(&mut f, 0.5));
            lo.push(l);
            hi.push(h);
        }
        let average_length = lo.iter().zip(&hi).map(|(l, h)| h - l).sum::<f64>() / points as f64;
        out.push(EffectCurve {
            covariate: fit.design.names[g].clone(),
            z,
            median,
            lo,
            hi,
            average_length,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionReport {
    pub n: usize,
    pub level: f64,
    pub clamped: usize,
    pub predictions: Vec<Prediction>,
    pub mse: Option<f64>,
    /// Coverage of the prediction intervals in percent.
    pub cp: Option<f64>,
}

/// Posterior predictive draws `center + xᵀβ + ε`, `ε ~ Normal(0, σ²)`, one
/// per retained draw.
pub fn predict(
    fit: &AdditiveFit,
    z: &DMatrix<f64>,
    y: Option<&DVector<f64>>,
    level: f64,
    seed: u64,
) -> Result<PredictionReport> {
    if let Some(y) = y {
        if y.len() != z.nrows() {
            return Err(Error::Data(
                "test response and covariates differ in length".into(),
            ));
        }
    }
    let (x, clamped) = fit.design.expand(z)?;
    let center = fit.design.data.center();
    let draws = &fit.chain.draws;
    let mut rng = RandomStream::new(seed);
    let mut predictions = Vec::with_capacity(z.nrows());
    for i in 0..z.nrows() {
        let row = x.row(i);
        let ys: Vec<f64> = draws
            .iter()
            .map(|s| center + (row * &s.beta)[0] + s.sigma2.sqrt() * rng.std_normal())
            .collect();
        let (lo, hi) = credible_interval(&ys, level)?;
        predictions.push(Prediction {
            mean: ys.iter().sum::<f64>() / ys.len() as f64,
            lo,
            hi,
        });
    }
    let n = predictions.len();
    let (mse, cp) = match y {
        Some(y) if n > 0 => {
            let mse = predictions
                .iter()
                .zip(y.iter())
                .map(|(p, v)| (p.mean - v).powi(2))
                .sum::<f64>()
                / n as f64;
            let hits = predictions
                .iter()
                .zip(y.iter())
                .filter(|(p, v)| p.lo <= **v && **v <= p.hi)
                .count();
            (Some(mse), Some(100.0 * hits as f64 / n as f64))
        }
        _ => (None, None),
    };
    Ok(PredictionReport {
        n,
        level,
        clamped,
        predictions,
        mse,
        cp,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HoldoutConfig {
    pub test_size: usize,
    pub repeats: usize,
    pub n_basis: usize,
    pub method: Method,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HoldoutRepeat {
    pub repeat: usize,
    pub mse: f64,
    pub cp: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HoldoutReport {
    pub method: Method,
    pub n: usize,
    pub test_size: usize,
    pub mean_mse: f64,
    pub mean_cp: f64,
    pub repeats: Vec<HoldoutRepeat>,
}

/// Repeated random train/test splits; repeat `r` shuffles with
/// `derive(seed, [r])` and seeds its chain and predictive draws from the
/// same stream.
pub fn holdout(table: &CovariateTable, cfg: &HoldoutConfig) -> Result<HoldoutReport> {
    let n = table.n();
    if cfg.repeats == 0 {
        return Err(Error::Config("need at least one holdout repeat".into()));
    }
    if cfg.test_size == 0 || cfg.test_size >= n {
        return Err(Error::Config(format!(
            "test size {} must lie between 1 and n - 1 = {}",
            cfg.test_size,
            n - 1
        )));
    }
    let repeats: Vec<HoldoutRepeat> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| -> Result<HoldoutRepeat> {
            let mut rng = RandomStream::derive(cfg.seed, &[r as u64]);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let (test, train) = idx.split_at(cfg.test_size);
            let mut train = train.to_vec();
            train.sort_unstable();
            let mut test = test.to_vec();
            test.sort_unstable();
            let fit = fit_additive(
                &table.rows(&train),
                cfg.n_basis,
                cfg.method,
                cfg.iterations,
                cfg.burn_in,
                rng.next_u64(),
            )?;
            let t = table.rows(&test);
            let rep = predict(&fit, &t.z, Some(&t.y), 0.95, rng.next_u64())?;
            Ok(HoldoutRepeat {
                repeat: r,
                mse: rep.mse.unwrap_or(f64::NAN),
                cp: rep.cp.unwrap_or(f64::NAN),
                clamped: rep.clamped,
            })
        })
        .collect::<Result<_>>()?;
    let k = repeats.len() as f64;
    Ok(HoldoutReport {
        method: cfg.method,
        n,
        test_size: cfg.test_size,
        mean_mse: repeats.iter().map(|r| r.mse).sum::<f64>() / k,
        mean_cp: repeats.iter().map(|r| r.cp).sum::<f64>() / k,
        repeats,
    })
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `covariate,basis,median` rows.
pub fn write_coefficient_csv<W: Write>(out: W, fit: &AdditiveFit) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["covariate", "basis", "median"])
        .map_err(csv_io)?;
    let l = fit.design.data.groups().size(0);
    for (k, m) in fit.coefficient_medians().iter().enumerate() {
        w.write_record([
            fit.design.names[k / l].clone(),
            (k % l + 1).to_string(),
            format!("{m:e}"),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// `covariate,z,median,lo,hi` rows.
pub fn write_effect_csv<W: Write>(out: W, curves: &[EffectCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["covariate", "z", "median", "lo", "hi"])
        .map_err(csv_io)?;
    for c in curves {
        for i in 0..c.z.len() {
            w.write_record([
                c.covariate.clone(),
                format!("{:e}", c.z[i]),
                format!("{:e}", c.median[i]),
                format!("{:e}", c.lo[i]),
                format!("{:e}", c.hi[i]),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knot_vector_layout() {
        let b = SplineBasis::new((0.0, 7.0), 10, 3).unwrap();
        assert_eq!(b.knots.len(), 14);
        assert_eq!(&b.knots[..4], &[0.0; 4]);
        assert_eq!(&b.knots[10..], &[7.0; 4]);
        assert_eq!(&b.knots[4..10], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn endpoints_hit_the_outer_functions() {
        let b = SplineBasis::new((-1.0, 1.0), 6, 3).unwrap();
        assert_eq!(b.evaluate(-1.0)[0], 1.0);
        assert_eq!(b.evaluate(1.0)[5], 1.0);
        assert_eq!(b.evaluate(5.0), b.evaluate(1.0));
    }
}
