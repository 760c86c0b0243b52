use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use gr2d2::additive::{
    effect_curves, fit_additive, holdout, ingest_abalone, write_coefficient_csv, write_effect_csv,
    HoldoutConfig, HoldoutReport, IngestOptions, CURVE_POINTS, DEFAULT_BASIS,
};
use gr2d2::geweke::{run_geweke, GewekeConfig, GewekeReport};
use gr2d2::priorlab::{
    check_proposition1, check_proposition2, check_proposition3, check_variance_identity,
    check_within_group_dependence, figure1_comparison, figure1_report, sample_prior,
    write_figure1_csv, DependenceReport, Figure1Report, PriorSampler, Prop1Report, Prop2Report,
    Prop2Settings, Prop3Report, Prop3Settings, VarianceIdentityReport,
};
use gr2d2::sampler::{summarize_posterior, write_draws_csv, write_summary_csv, Summary};
use gr2d2::simlab::{
    block_correlation, build_scenario, run_replications_with, write_metric_csv, MetricTable,
    SimConfig,
};
use gr2d2::{
    make_hyperparams, run_chain, Dataset, GroupStructure, Method, RandomStream, SamplerConfig,
    ScenarioId, Strategy, Variant, DEFAULT_A, DEFAULT_B,
};

use crate::config::{
    parse, AbaloneArgs, Figure1Args, FitArgs, GewekeArgs, PriorCheckArgs, SimulateArgs,
};
use crate::output::{Output, Provenance};
use crate::{Context, Failure};

/// What a command prints to standard output, and whether its checks held.
pub struct Done {
    pub summary: serde_json::Value,
    pub pass: bool,
}

fn done<T: Serialize>(summary: &T, pass: bool) -> Result<Done, Failure> {
    Ok(Done {
        summary: serde_json::to_value(summary).map_err(|e| Failure::Runtime(e.to_string()))?,
        pass,
    })
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| {
        Failure::Validation(format!(
            "--{flag} is required (or set `{flag}` in the config file)"
        ))
    })
}

fn csv_err(e: csv::Error) -> gr2d2::Error {
    gr2d2::Error::Io(std::io::Error::other(e))
}

// ---------------------------------------------------------------------------
// fit

#[derive(Debug, Serialize)]
pub struct FitSettings {
    pub data: PathBuf,
    pub response: String,
    pub groups: Vec<usize>,
    pub variant: Variant,
    pub strategy: Strategy,
    pub a: f64,
    pub b: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub level: f64,
    pub standardize: bool,
    pub draws: bool,
}

impl FitSettings {
    pub fn resolve(args: FitArgs) -> Result<Self, Failure> {
        Ok(FitSettings {
            data: required(args.data, "data")?,
            response: args.response.unwrap_or_else(|| "y".into()),
            groups: required(args.groups, "groups")?,
            variant: parse(args.variant.as_deref().unwrap_or("dirichlet"))?,
            strategy: parse(args.strategy.as_deref().unwrap_or("empirical-bayes"))?,
            a: args.a.unwrap_or(DEFAULT_A),
            b: args.b.unwrap_or(DEFAULT_B),
            iterations: args.iterations.unwrap_or(6000),
            burn_in: args.burn_in.unwrap_or(1000),
            thin: args.thin.unwrap_or(1),
            level: args.level.unwrap_or(0.95),
            standardize: args.standardize.unwrap_or(false),
            draws: args.draws.unwrap_or(false),
        })
    }
}

/// Response, design and predictor names.
pub type Table = (DVector<f64>, DMatrix<f64>, Vec<String>);

/// Response column by name; every other column is a predictor, in file order.
pub fn read_regression_csv(path: &Path, response: &str) -> Result<Table, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Failure::Runtime(format!("cannot read data file {}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let yi = header.iter().position(|h| h == response).ok_or_else(|| {
        Failure::Validation(format!(
            "{}: no response column '{response}' (columns: {})",
            path.display(),
            header.join(", ")
        ))
    })?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != yi)
        .map(|(_, h)| h.clone())
        .collect();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Failure::Validation(format!(
                "{} line {line}: {} fields, header has {}",
                path.display(),
                rec.len(),
                header.len()
            )));
        }
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Failure::Validation(format!(
                    "{} line {line}: column '{}' is not a number: '{field}'",
                    path.display(),
                    header[i]
                ))
            })?;
            if i == yi {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    let n = y.len();
    Ok((
        DVector::from_vec(y),
        DMatrix::from_row_slice(n, names.len(), &x),
        names,
    ))
}

#[derive(Serialize)]
struct FitReport<'a> {
    n: usize,
    p: usize,
    predictors: &'a [String],
    response_mean: f64,
    a_g: &'a [f64],
    posterior: &'a gr2d2::PosteriorSummary,
}

pub fn fit(ctx: &Context, args: FitArgs) -> Result<Done, Failure> {
    let s = FitSettings::resolve(args)?;
    let (y, x, names) = read_regression_csv(&s.data, &s.response)?;
    let groups = GroupStructure::new(s.groups.clone())?;
    if groups.p() != names.len() {
        return Err(Failure::Validation(format!(
            "group sizes {:?} sum to {} but {} has {} predictor columns",
            s.groups,
            groups.p(),
            s.data.display(),
            names.len()
        )));
    }
    let mut data = Dataset::new(y, x, groups.clone())?;
    if s.standardize {
        data = data.standardize_columns()?;
    }
    let hyper = make_hyperparams(s.strategy, s.a, s.b, Some(&data), &groups)?;
    let mut cfg = SamplerConfig::new(s.variant, s.iterations, s.burn_in, ctx.seed);
    cfg.thin = s.thin;
    let chain = run_chain(&data, &hyper, &cfg)?;
    let post = summarize_posterior(&chain, &groups, s.level)?;

    let mut out = Output::create(&ctx.out, Provenance::new("fit", ctx.seed, &s)?)?;
    out.csv("coefficients.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["name", "predictor", "group", "mean", "median", "lo", "hi"])
            .map_err(csv_err)?;
        for (k, c) in post.coefficients.iter().enumerate() {
            let (g, _) = groups.group_of(k);
            w.write_record([
                c.name.clone(),
                names[k].clone(),
                (g + 1).to_string(),
                format!("{}", c.mean),
                format!("{}", c.median),
                format!("{}", c.lo),
                format!("{}", c.hi),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.csv("r2.csv", |buf| write_summary_csv(buf, &post.r2))?;
    if s.draws {
        out.csv("draws.csv", |buf| {
            write_draws_csv(buf, &groups, &chain.draws)
        })?;
    }
    let report = FitReport {
        n: data.n(),
        p: data.p(),
        predictors: &names,
        response_mean: data.center(),
        a_g: &hyper.a_g,
        posterior: &post,
    };
    out.json("fit.json", &s, &report)?;

    #[derive(Serialize)]
    struct Brief<'a> {
        provenance: &'a Provenance,
        n: usize,
        p: usize,
        draws: usize,
        r2: &'a Summary,
        sigma2: &'a Summary,
        mh_accept_rate: &'a [f64],
        files: Vec<String>,
    }
    done(
        &Brief {
            provenance: &out.provenance,
            n: data.n(),
            p: data.p(),
            draws: post.n_draws,
            r2: &post.r2[0],
            sigma2: &post.sigma2,
            mh_accept_rate: &post.mh_accept_rate,
            files: out.files(),
        },
        true,
    )
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Serialize)]
pub struct SimulateSettings {
    pub scenario: ScenarioId,
    pub snr: f64,
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub iterations: usize,
    pub burn_in: usize,
}

fn parse_methods(v: Option<Vec<String>>, default: &[Method]) -> Result<Vec<Method>, Failure> {
    match v {
        None => Ok(default.to_vec()),
        Some(list) => {
            let methods = list
                .iter()
                .map(|m| parse(m))
                .collect::<Result<Vec<Method>, _>>()?;
            if methods.is_empty() {
                return Err(Failure::Validation("no methods selected".into()));
            }
            Ok(methods)
        }
    }
}

impl SimulateSettings {
    pub fn resolve(args: SimulateArgs) -> Result<Self, Failure> {
        Ok(SimulateSettings {
            scenario: parse(args.scenario.as_deref().unwrap_or("s5"))?,
            snr: args.snr.unwrap_or(0.7),
            n: args.n.unwrap_or(250),
            p: args.p.unwrap_or(50),
            replications: args.replications.unwrap_or(20),
            methods: parse_methods(args.methods, &Method::ALL)?,
            iterations: args.iterations.unwrap_or(2000),
            burn_in: args.burn_in.unwrap_or(1000),
        })
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    scenario: ScenarioId,
    sigma2: f64,
    beta_true: Vec<f64>,
    tables: &'a [MetricTable],
    warnings: &'a [String],
}

pub fn simulate(ctx: &Context, args: SimulateArgs) -> Result<Done, Failure> {
    let s = SimulateSettings::resolve(args)?;
    let scenario = build_scenario(s.scenario, s.n, s.p, s.snr, ctx.seed)?;
    let cfg = SimConfig {
        methods: s.methods.clone(),
        replications: s.replications,
        iterations: s.iterations,
        burn_in: s.burn_in,
        seed: ctx.seed,
    };
    let finished = AtomicUsize::new(0);
    let total = s.replications;
    let quiet = ctx.quiet;
    let progress = move |r: usize| {
        let k = finished.fetch_add(1, Ordering::Relaxed) + 1;
        if !quiet {
            eprintln!("replication {} done ({k}/{total})", r + 1);
        }
    };
    let result = run_replications_with(&scenario, &cfg, &progress)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }

    let mut out = Output::create(&ctx.out, Provenance::new("simulate", ctx.seed, &s)?)?;
    out.csv("metrics.csv", |buf| write_metric_csv(buf, &result.tables))?;
    out.csv("replications.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "replication",
            "method",
            "null_sse",
            "nonnull_sse",
            "mh_accept_rate",
        ])
        .map_err(csv_err)?;
        for rep in &result.replications {
            for (m, fit) in s.methods.iter().zip(&rep.fits) {
                let cells = match fit {
                    Some(f) => [
                        format!("{}", f.null_sse),
                        format!("{}", f.nonnull_sse),
                        format!("{}", f.mh_accept_rate),
                    ],
                    None => [
                        "failed".to_string(),
                        "failed".to_string(),
                        "failed".to_string(),
                    ],
                };
                w.write_record(
                    [(rep.index + 1).to_string(), m.to_string()]
                        .into_iter()
                        .chain(cells),
                )
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let report = SimulateReport {
        scenario: s.scenario,
        sigma2: scenario.sigma2,
        beta_true: scenario.beta_true.iter().copied().collect(),
        tables: &result.tables,
        warnings: &result.warnings,
    };
    out.json("simulate.json", &s, &report)?;

    #[derive(Serialize)]
    struct Row {
        method: Method,
        mse_null: f64,
        mse_nonnull: f64,
        cp: f64,
        al: f64,
        mh_accept_rate: f64,
        failed: usize,
    }
    #[derive(Serialize)]
    struct Brief<'a> {
        provenance: &'a Provenance,
        scenario: ScenarioId,
        replications: usize,
        methods: Vec<Row>,
        files: Vec<String>,
    }
    let rows = result
        .tables
        .iter()
        .map(|t| Row {
            method: t.method,
            mse_null: t.mse_null_sum,
            mse_nonnull: t.mse_nonnull_sum,
            cp: t.cp,
            al: t.al,
            mh_accept_rate: t.mh_accept_rate,
            failed: t.failed,
        })
        .collect();
    done(
        &Brief {
            provenance: &out.provenance,
            scenario: s.scenario,
            replications: s.replications,
            methods: rows,
            files: out.files(),
        },
        true,
    )
}

// ---------------------------------------------------------------------------
// prior-check

pub const PRIOR_CHECKS: [&str; 5] = ["r2", "tails", "laplace", "dependence", "variance"];

#[derive(Debug, Serialize)]
pub struct PriorCheckSettings {
    pub checks: Vec<String>,
    pub a: Vec<f64>,
    pub b: f64,
    pub draws: usize,
    pub tail_draws: usize,
    pub ks_alpha: f64,
    pub negative_control: bool,
}

impl PriorCheckSettings {
    pub fn resolve(args: PriorCheckArgs) -> Result<Self, Failure> {
        let checks = match args.checks {
            None => PRIOR_CHECKS.iter().map(|c| c.to_string()).collect(),
            Some(list) => {
                let mut v = Vec::new();
                for c in list {
                    let c = c.to_ascii_lowercase();
                    if !PRIOR_CHECKS.contains(&c.as_str()) {
                        return Err(Failure::Validation(format!(
                            "unknown check '{c}' (expected one of {})",
                            PRIOR_CHECKS.join(", ")
                        )));
                    }
                    if !v.contains(&c) {
                        v.push(c);
                    }
                }
                v
            }
        };
        let a = args.a.unwrap_or_else(|| vec![0.25, 0.25]);
        if a.is_empty() || a.iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(Failure::Validation(format!(
                "group shapes {a:?} must be positive"
            )));
        }
        Ok(PriorCheckSettings {
            checks,
            a,
            b: args.b.unwrap_or(0.5),
            draws: args.draws.unwrap_or(100_000),
            tail_draws: args.tail_draws.unwrap_or(1_000_000),
            ks_alpha: args.ks_alpha.unwrap_or(0.01),
            negative_control: args.negative_control.unwrap_or(false),
        })
    }

    fn enabled(&self, check: &str) -> bool {
        self.checks.iter().any(|c| c == check)
    }
}

#[derive(Serialize, Default)]
struct PriorCheckReport {
    r2: Option<Prop1Report>,
    tails: Vec<Prop2Report>,
    laplace: Option<Prop3Report>,
    dependence: Option<DependenceReport>,
    variance: Option<VarianceIdentityReport>,
}

/// R² decomposition check with one group of two coefficients per shape.
pub fn r2_check(
    a: &[f64],
    b: f64,
    draws: usize,
    alpha: f64,
    fix_tau2: bool,
    seed: u64,
) -> gr2d2::Result<Prop1Report> {
    let groups = GroupStructure::uniform(a.len(), 2)?;
    let total: f64 = a.iter().sum();
    let mut hyper = make_hyperparams(Strategy::Sparsity, total, b, None, &groups)?;
    hyper.a_g = a.to_vec();
    hyper.a_gj = a.iter().map(|&ag| vec![ag / 2.0; 2]).collect();
    let mut sampler = PriorSampler::new(&hyper, &groups, Variant::Dirichlet)?;
    if fix_tau2 {
        sampler = sampler.with_fixed_tau2(1.0);
    }
    check_proposition1(&sample_prior(&sampler, draws, seed)?, alpha)
}

/// The four `(b, a_π)` settings with `p_g = 2`.
pub fn tail_settings(draws: usize, seed: u64) -> Vec<Prop2Settings> {
    let mut v = Vec::new();
    for b in [0.5, 2.0] {
        for a_pi in [0.1, 0.25] {
            v.push(Prop2Settings {
                b,
                a_pi,
                p_g: 2,
                n_draws: draws,
                seed: RandomStream::derive_seed(seed, &[v.len() as u64]),
            });
        }
    }
    v
}

pub fn prior_check(ctx: &Context, args: PriorCheckArgs) -> Result<Done, Failure> {
    let s = PriorCheckSettings::resolve(args)?;
    let sub = |k: u64| RandomStream::derive_seed(ctx.seed, &[k]);
    let mut report = PriorCheckReport::default();
    if s.enabled("r2") {
        report.r2 = Some(r2_check(
            &s.a,
            s.b,
            s.draws,
            s.ks_alpha,
            s.negative_control,
            sub(1),
        )?);
    }
    if s.enabled("tails") {
        for t in tail_settings(s.tail_draws, sub(2)) {
            report.tails.push(check_proposition2(t)?);
        }
    }
    if s.enabled("laplace") {
        report.laplace = Some(check_proposition3(&Prop3Settings::default())?);
    }
    if s.enabled("dependence") {
        report.dependence = Some(check_within_group_dependence(s.a[0], s.draws, sub(4))?);
    }
    if s.enabled("variance") {
        let groups = GroupStructure::uniform(2, 2)?;
        let lambda = [1.0, 0.5, 2.0, 0.25];
        report.variance = Some(check_variance_identity(
            &lambda,
            &block_correlation(&groups),
            1.0,
            s.draws,
            sub(5),
        )?);
    }

    let mut results: Vec<(String, bool)> = Vec::new();
    if let Some(r) = &report.r2 {
        results.push(("r2".into(), r.pass));
    }
    for t in &report.tails {
        results.push((
            format!("tails_b{}_a{}", t.settings.b, t.settings.a_pi),
            t.pass,
        ));
    }
    if let Some(r) = &report.laplace {
        results.push(("laplace".into(), r.pass));
    }
    if let Some(r) = &report.dependence {
        results.push(("dependence".into(), r.pass));
    }
    if let Some(r) = &report.variance {
        results.push(("variance".into(), r.pass));
    }
    let pass = results.iter().all(|r| r.1);

    let mut out = Output::create(&ctx.out, Provenance::new("prior-check", ctx.seed, &s)?)?;
    out.json("prior_check.json", &s, &report)?;

    #[derive(Serialize)]
    struct Brief<'a> {
        provenance: &'a Provenance,
        checks: serde_json::Map<String, serde_json::Value>,
        pass: bool,
        files: Vec<String>,
    }
    let checks = results.into_iter().map(|(k, v)| (k, v.into())).collect();
    done(
        &Brief {
            provenance: &out.provenance,
            checks,
            pass,
            files: out.files(),
        },
        pass,
    )
}

// ---------------------------------------------------------------------------
// figure1

#[derive(Debug, Serialize)]
pub struct Figure1Settings {
    pub draws: usize,
    pub bootstrap: usize,
}

pub fn figure1(ctx: &Context, args: Figure1Args) -> Result<Done, Failure> {
    let s = Figure1Settings {
        draws: args.draws.unwrap_or(100_000),
        bootstrap: args.bootstrap.unwrap_or(200),
    };
    let clouds = figure1_comparison(ctx.seed, s.draws)?;
    let report: Figure1Report = figure1_report(
        &clouds,
        s.bootstrap,
        RandomStream::derive_seed(ctx.seed, &[1]),
    )?;
    let mut out = Output::create(&ctx.out, Provenance::new("figure1", ctx.seed, &s)?)?;
    out.csv("figure1.csv", |buf| write_figure1_csv(buf, &clouds))?;
    out.json("figure1.json", &s, &report)?;

    #[derive(Serialize)]
    struct Brief<'a> {
        provenance: &'a Provenance,
        #[serde(flatten)]
        report: &'a Figure1Report,
        files: Vec<String>,
    }
    done(
        &Brief {
            provenance: &out.provenance,
            report: &report,
            files: out.files(),
        },
        report.pass,
    )
}

// ---------------------------------------------------------------------------
// geweke

#[derive(Debug, Serialize)]
pub struct GewekeSettings {
    pub variants: Vec<Variant>,
    pub sweeps: usize,
}

pub fn geweke(ctx: &Context, args: GewekeArgs) -> Result<Done, Failure> {
    let variants = match args.variants {
        None => vec![Variant::Dirichlet, Variant::LogisticNormal],
        Some(v) => v.iter().map(|s| parse(s)).collect::<Result<_, _>>()?,
    };
    let s = GewekeSettings {
        variants,
        sweeps: args.sweeps.unwrap_or(100_000),
    };
    let mut reports: Vec<GewekeReport> = Vec::new();
    for (i, &v) in s.variants.iter().enumerate() {
        let cfg = GewekeConfig::standard(
            v,
            s.sweeps,
            RandomStream::derive_seed(ctx.seed, &[i as u64]),
        )?;
        if !ctx.quiet {
            eprintln!("geweke: {v}, {} sweeps", s.sweeps);
        }
        reports.push(run_geweke(&cfg)?);
    }
    let pass = reports.iter().all(|r| r.pass);
    let mut out = Output::create(&ctx.out, Provenance::new("geweke", ctx.seed, &s)?)?;
    out.json("geweke.json", &s, &reports)?;

    #[derive(Serialize)]
    struct Row {
        variant: Variant,
        max_abs_z: f64,
        worst: String,
        pass: bool,
    }
    #[derive(Serialize)]
    struct Brief<'a> {
        provenance: &'a Provenance,
        sweeps: usize,
        variants: Vec<Row>,
        pass: bool,
        files: Vec<String>,
    }
    let rows = reports
        .iter()
        .map(|r| {
            let worst = r
                .stats
                .iter()
                .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
                .unwrap();
            Row {
                variant: r.variant,
                max_abs_z: worst.z.abs(),
                worst: worst.statistic.clone(),
                pass: r.pass,
            }
        })
        .collect();
    done(
        &Brief {
            provenance: &out.provenance,
            sweeps: s.sweeps,
            variants: rows,
            pass,
            files: out.files(),
        },
        pass,
    )
}

// ---------------------------------------------------------------------------
// abalone

#[derive(Debug, Serialize)]
pub struct AbaloneSettings {
    pub data: PathBuf,
    pub sex: Option<String>,
    pub delimiter: char,
    pub methods: Vec<Method>,
    pub basis: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub repeats: usize,
    pub test_size: usize,
    pub points: usize,
}

impl AbaloneSettings {
    pub fn resolve(args: AbaloneArgs) -> Result<Self, Failure> {
        let sex = match args.sex.as_deref() {
            None => Some("M".to_string()),
            Some(s) if s.eq_ignore_ascii_case("all") => None,
            Some(s) => Some(s.to_string()),
        };
        let delimiter = args.delimiter.unwrap_or(',');
        if !delimiter.is_ascii() {
            return Err(Failure::Validation(format!(
                "delimiter '{delimiter}' must be a single ASCII character"
            )));
        }
        Ok(AbaloneSettings {
            data: required(args.data, "data")?,
            sex,
            delimiter,
            methods: parse_methods(args.methods, &[Method::Gr2d2D, Method::Gr2d2L])?,
            basis: args.basis.unwrap_or(DEFAULT_BASIS),
            iterations: args.iterations.unwrap_or(4000),
            burn_in: args.burn_in.unwrap_or(1000),
            repeats: args.repeats.unwrap_or(20),
            test_size: args.test_size.unwrap_or(500),
            points: args.points.unwrap_or(CURVE_POINTS),
        })
    }
}

#[derive(Serialize)]
struct MethodResult {
    method: Method,
    /// Average 95% interval length of each covariate's effect curve.
    average_length: Vec<f64>,
    holdout: Option<HoldoutReport>,
}

#[derive(Serialize)]
struct AbaloneReport {
    n: usize,
    covariates: Vec<String>,
    methods: Vec<MethodResult>,
    /// Covariates whose gR2D2-D curves are narrower than gR2D2-L's.
    d_narrower_than_l: Option<usize>,
}

fn tag(m: Method) -> String {
    m.to_string().to_ascii_lowercase()
}

pub fn abalone(ctx: &Context, args: AbaloneArgs) -> Result<Done, Failure> {
    let s = AbaloneSettings::resolve(args)?;
    let opts = IngestOptions {
        delimiter: s.delimiter as u8,
        sex: s.sex.clone(),
    };
    let table = ingest_abalone(&s.data, &opts).map_err(|e| match e {
        gr2d2::Error::Parse { line, reason } => {
            Failure::Validation(format!("{} line {line}: {reason}", s.data.display()))
        }
        other => other.into(),
    })?;
    if !ctx.quiet {
        eprintln!("abalone: n = {} after filtering", table.n());
    }
    // Every method sees the same holdout splits.
    let split_seed = RandomStream::derive_seed(ctx.seed, &[0]);
    type Fitted = (
        gr2d2::additive::AdditiveFit,
        Vec<gr2d2::additive::EffectCurve>,
        Option<HoldoutReport>,
    );
    let fits: Vec<gr2d2::Result<Fitted>> = std::thread::scope(|scope| {
        let handles: Vec<_> = s
            .methods
            .iter()
            .enumerate()
            .map(|(m, &method)| {
                let table = &table;
                let s = &s;
                scope.spawn(move || -> gr2d2::Result<Fitted> {
                    let seed = RandomStream::derive_seed(ctx.seed, &[m as u64 + 1]);
                    let fit = fit_additive(table, s.basis, method, s.iterations, s.burn_in, seed)?;
                    let curves = effect_curves(&fit, s.points)?;
                    let ho = if s.repeats > 0 {
                        Some(holdout(
                            table,
                            &HoldoutConfig {
                                test_size: s.test_size,
                                repeats: s.repeats,
                                n_basis: s.basis,
                                method,
                                iterations: s.iterations,
                                burn_in: s.burn_in,
                                seed: split_seed,
                            },
                        )?)
                    } else {
                        None
                    };
                    Ok((fit, curves, ho))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fit thread panicked"))
            .collect()
    });
    let fits = fits.into_iter().collect::<gr2d2::Result<Vec<_>>>()?;

    let mut out = Output::create(&ctx.out, Provenance::new("abalone", ctx.seed, &s)?)?;
    let mut methods = Vec::new();
    for (fit, curves, ho) in fits {
        let t = tag(fit.method);
        out.csv(&format!("coefficients_{t}.csv"), |buf| {
            write_coefficient_csv(buf, &fit)
        })?;
        out.csv(&format!("effects_{t}.csv"), |buf| {
            write_effect_csv(buf, &curves)
        })?;
        if let Some(h) = &ho {
            out.csv(&format!("holdout_{t}.csv"), |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["repeat", "mse", "cp", "clamped"])
                    .map_err(csv_err)?;
                for r in &h.repeats {
                    w.write_record([
                        (r.repeat + 1).to_string(),
                        format!("{}", r.mse),
                        format!("{}", r.cp),
                        r.clamped.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
                w.flush()?;
                Ok(())
            })?;
        }
        methods.push(MethodResult {
            method: fit.method,
            average_length: curves.iter().map(|c| c.average_length).collect(),
            holdout: ho,
        });
    }
    let find = |m: Method| methods.iter().find(|r| r.method == m);
    let d_narrower_than_l = match (find(Method::Gr2d2D), find(Method::Gr2d2L)) {
        (Some(d), Some(l)) => Some(
            d.average_length
                .iter()
                .zip(&l.average_length)
                .filter(|(a, b)| a < b)
                .count(),
        ),
        _ => None,
    };
    let report = AbaloneReport {
        n: table.n(),
        covariates: table.names.clone(),
        methods,
        d_narrower_than_l,
    };
    out.json("abalone.json", &s, &report)?;

    #[derive(Serialize)]
    struct Row {
        method: Method,
        mse: Option<f64>,
        cp: Option<f64>,
    }
    #[derive(Serialize)]
    struct Brief<'a> {
        provenance: &'a Provenance,
        n: usize,
        methods: Vec<Row>,
        d_narrower_than_l: Option<usize>,
        files: Vec<String>,
    }
    let rows = report
        .methods
        .iter()
        .map(|r| Row {
            method: r.method,
            mse: r.holdout.as_ref().map(|h| h.mean_mse),
            cp: r.holdout.as_ref().map(|h| h.mean_cp),
        })
        .collect();
    done(
        &Brief {
            provenance: &out.provenance,
            n: report.n,
            methods: rows,
            d_narrower_than_l: report.d_narrower_than_l,
            files: out.files(),
        },
        true,
    )
}
