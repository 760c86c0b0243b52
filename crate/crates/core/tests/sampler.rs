use gr2d2::geweke::{run_geweke, GewekeConfig};
use gr2d2::hyper::{least_squares, make_hyperparams, HyperParams, Strategy};
use gr2d2::model::{ChainState, Dataset, GroupStructure};
use gr2d2::priorlab::{sample_prior, PriorSampler};
use gr2d2::rngdist::{sample_gig, GigParams, RandomStream};
use gr2d2::sampler::*;
use gr2d2::stats::{ks_test, mean, variance};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF, Gamma, Normal};

fn state(groups: &GroupStructure, beta: Vec<f64>) -> ChainState {
    ChainState {
        beta: DVector::from_vec(beta),
        sigma2: 1.3,
        tau2: 0.8,
        psi: vec![1.5; groups.p()],
        phi: groups
            .sizes()
            .iter()
            .map(|&s| vec![1.0 / s as f64; s])
            .collect(),
        w: vec![0.7; groups.n_groups()],
    }
}

fn sparsity(a: f64, b: f64, groups: &GroupStructure) -> HyperParams {
    make_hyperparams(Strategy::Sparsity, a, b, None, groups).unwrap()
}

fn dataset(n: usize, groups: &GroupStructure, beta: &[f64], sd: f64, seed: u64) -> Dataset {
    let mut rng = RandomStream::new(seed);
    let mut x = DMatrix::from_fn(n, groups.p(), |_, _| rng.std_normal());
    for mut c in x.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
    }
    let y =
        &x * DVector::from_column_slice(beta) + DVector::from_fn(n, |_, _| sd * rng.std_normal());
    Dataset::new(y, x, groups.clone()).unwrap()
}

#[test]
fn coefficient_step_without_data_draws_from_the_prior() {
    let groups = GroupStructure::new(vec![2, 1]).unwrap();
    let mut s = state(&groups, vec![0.0; 3]);
    s.phi[0] = vec![0.2, 0.8];
    let stats = SuffStats::prior_only(3);
    let lambda = s.lambda_diag(&groups);
    let mut rng = RandomStream::new(1);
    let draws: Vec<DVector<f64>> = (0..100_000)
        .map(|_| step_beta(&s, &stats, &groups, &mut rng).unwrap())
        .collect();
    for k in 0..3 {
        let xs: Vec<f64> = draws.iter().map(|b| b[k]).collect();
        let v = s.sigma2 * lambda[k];
        assert!(mean(&xs).abs() < 4.0 * (v / 1e5).sqrt());
        // Var of the sample variance of a normal is 2v²/(N-1)
        assert!((variance(&xs) - v).abs() < 4.0 * v * (2.0 / 1e5f64).sqrt());
    }
}

#[test]
fn diffuse_prior_recovers_least_squares() {
    let groups = GroupStructure::new(vec![3, 2]).unwrap();
    let data = dataset(200, &groups, &[1.0, -2.0, 0.5, 3.0, 0.0], 1.0, 2);
    let mut s = state(&groups, vec![0.0; 5]);
    s.psi = vec![1e12; 5];
    s.w = vec![1e12; 2];
    s.sigma2 = 1e-14;
    let stats = SuffStats::from_dataset(&data);
    let b = step_beta(&s, &stats, &groups, &mut RandomStream::new(3)).unwrap();
    let xc = data.x().clone();
    let yc = data.y().clone();
    let ols = least_squares(&xc, &yc).unwrap();
    for k in 0..5 {
        assert!(
            (b[k] - ols[k]).abs() < 0.01 * ols[k].abs().max(0.1),
            "{k}: {} vs {}",
            b[k],
            ols[k]
        );
    }
}

#[test]
fn error_variance_conditional_mean() {
    let groups = GroupStructure::new(vec![2, 2]).unwrap();
    let data = dataset(50, &groups, &[1.0, 0.0, 0.5, -1.0], 0.7, 4);
    let hyper = sparsity(0.5, 0.5, &groups);
    let stats = SuffStats::from_dataset(&data);
    let s = state(&groups, vec![0.9, 0.1, 0.4, -1.1]);
    let (n1, d1) = sigma2_conditional(&s, &stats, &groups, &hyper);
    assert_eq!(n1, 1.0 + 50.0 + 4.0);
    let mut rng = RandomStream::new(5);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| step_sigma2(&s, &stats, &groups, &hyper, &mut rng).unwrap())
        .collect();
    let expected = d1 / (n1 - 2.0);
    assert!((mean(&xs) - expected).abs() < 0.01 * expected);
}

#[test]
fn global_scale_conditional_mean() {
    let groups = GroupStructure::new(vec![2, 2]).unwrap();
    let hyper = sparsity(0.5, 0.5, &groups);
    let mut s = state(&groups, vec![0.0; 4]);
    s.w = vec![1.5, 0.5];
    let mut rng = RandomStream::new(6);
    let inv: Vec<f64> = (0..200_000)
        .map(|_| 1.0 / step_tau2(&s, &hyper, &mut rng).unwrap())
        .collect();
    // 1/τ² ~ Gamma(b + Σa_g, rate 1 + ΣW) = Gamma(1, 3)
    assert!((mean(&inv) - 1.0 / 3.0).abs() < 4.0 * (1.0 / 3.0) / 200_000f64.sqrt());
}

#[test]
fn local_scale_draws_follow_inverse_gaussian() {
    let groups = GroupStructure::new(vec![2]).unwrap();
    let s = state(&groups, vec![0.3, -1.7]);
    let mut rng = RandomStream::new(7);
    let n = Normal::new(0.0, 1.0).unwrap();
    for k in 0..2 {
        let mu = psi_inverse_mean(s.sigma2, s.phi[0][k], s.w[0], s.beta[k]);
        let xs: Vec<f64> = (0..50_000)
            .map(|_| 1.0 / step_psi(&s, &groups, &mut rng).unwrap()[k])
            .collect();
        let cdf = |x: f64| {
            let r = (1.0 / x).sqrt();
            n.cdf(r * (x / mu - 1.0)) + (2.0 / mu).exp() * n.cdf(-r * (x / mu + 1.0))
        };
        let t = ks_test(&xs, cdf, 0.01);
        assert!(t.pass, "{k}: {t:?}");
    }
}

#[test]
fn allocation_with_zero_coefficients_has_closed_form() {
    // β = 0 gives T_j ~ Gamma(a_j - ½) and W ~ Gamma(a* - p/2, 1/τ²)
    let groups = GroupStructure::new(vec![3]).unwrap();
    let s = state(&groups, vec![0.0; 3]);
    let shapes = [0.9, 0.9, 0.9];
    let mut rng = RandomStream::new(8);
    let draws: Vec<(Vec<f64>, f64)> = (0..50_000)
        .map(|_| step_phi_w_exact(0, &s, &shapes, &groups, &mut rng).unwrap())
        .collect();
    let beta = Beta::new(0.4, 0.8).unwrap();
    for j in 0..3 {
        let xs: Vec<f64> = draws.iter().map(|d| d.0[j]).collect();
        assert!(ks_test(&xs, |x| beta.cdf(x), 0.01).pass, "component {j}");
    }
    let gamma = Gamma::new(1.2, 1.0 / s.tau2).unwrap();
    let ws: Vec<f64> = draws.iter().map(|d| d.1).collect();
    assert!(ks_test(&ws, |x| gamma.cdf(x), 0.01).pass);
}

#[test]
fn allocation_is_exchangeable_under_equal_coefficients() {
    let groups = GroupStructure::new(vec![3]).unwrap();
    let s = state(&groups, vec![0.4, 0.4, -0.4]);
    let shapes = [0.2, 0.2, 0.2];
    let mut rng = RandomStream::new(28);
    let draws: Vec<Vec<f64>> = (0..60_000)
        .map(|_| {
            step_phi_w_exact(0, &s, &shapes, &groups, &mut rng)
                .unwrap()
                .0
        })
        .collect();
    for j in 0..3 {
        let xs: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        let se = (variance(&xs) / xs.len() as f64).sqrt();
        assert!((mean(&xs) - 1.0 / 3.0).abs() < 4.0 * se, "component {j}");
    }
}

#[test]
fn single_coefficient_group_is_a_gig_draw() {
    let groups = GroupStructure::new(vec![1, 2]).unwrap();
    let s = state(&groups, vec![0.6, 0.1, 0.2]);
    let (phi, w) = step_phi_w_exact(0, &s, &[0.25], &groups, &mut RandomStream::new(9)).unwrap();
    assert_eq!(phi, vec![1.0]);
    let chi = 0.36 / (s.sigma2 * s.psi[0] / 2.0);
    let direct = sample_gig(
        &GigParams::new(0.25 - 0.5, 2.0 / s.tau2, chi).unwrap(),
        &mut RandomStream::new(9),
    )
    .unwrap();
    assert_eq!(w, direct);
}

fn assert_geweke(cfg: GewekeConfig) {
    let r = run_geweke(&cfg).unwrap();
    assert!(r.pass, "{r:#?}");
}

#[test]
fn geweke_dirichlet() {
    assert_geweke(GewekeConfig::standard(Variant::Dirichlet, 100_000, 31).unwrap());
}

#[test]
fn geweke_logistic_normal() {
    let cfg = GewekeConfig::standard(Variant::LogisticNormal, 100_000, 32).unwrap();
    let r = run_geweke(&cfg).unwrap();
    assert!(r.pass, "{r:#?}");
    assert!(r.mh_accept_rate.iter().all(|a| *a > 0.05 && *a < 1.0));
}

#[test]
fn geweke_dirichlet_with_correction() {
    let mut cfg = GewekeConfig::standard(Variant::Dirichlet, 100_000, 33).unwrap();
    cfg.hyper = cfg
        .hyper
        .with_local_shapes(1, vec![0.05, 0.15, 0.3])
        .unwrap();
    let r = run_geweke(&cfg).unwrap();
    assert_eq!(r.mh_groups, vec![2]);
    assert!(r.mh_accept_rate[0] == 1.0 && r.mh_accept_rate[1] < 1.0);
    assert!(r.pass, "{r:#?}");
}

/// Total-variation distance between two samples on 20 equal bins of [0, 1].
fn tv_unit(a: &[f64], b: &[f64]) -> f64 {
    let hist = |xs: &[f64]| {
        let mut h = [0.0; 20];
        for x in xs {
            h[((x * 20.0) as usize).min(19)] += 1.0 / xs.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[test]
fn chain_without_data_keeps_the_prior_invariant() {
    let groups = GroupStructure::new(vec![3, 2]).unwrap();
    let hyper = sparsity(0.5, 0.5, &groups)
        .with_local_shapes(0, vec![0.1, 0.2, 0.3])
        .unwrap()
        .with_sigma_prior(4.0, 4.0)
        .unwrap();
    for variant in [Variant::Dirichlet, Variant::LogisticNormal] {
        let mut cfg = SamplerConfig::new(variant, 205_000, 5_000, 10);
        cfg.thin = 5;
        let out = run_chain_stats(SuffStats::prior_only(5), &groups, &hyper, &cfg).unwrap();
        let prior = PriorSampler::new(&hyper, &groups, variant)
            .unwrap()
            .with_sigma2(None);
        let mut rng = RandomStream::new(11);
        let reference: Vec<ChainState> = (0..100_000)
            .map(|_| prior.draw(&mut rng).unwrap())
            .collect();
        let chain_r2: Vec<f64> = out.draws.iter().map(|s| s.r2().r2).collect();
        let prior_r2: Vec<f64> = reference.iter().map(|s| s.r2().r2).collect();
        let tv = tv_unit(&chain_r2, &prior_r2);
        assert!(tv < 0.02, "{variant} R2 TV {tv}");
        let chain_phi: Vec<f64> = out.draws.iter().map(|s| s.phi[0][0]).collect();
        let prior_phi: Vec<f64> = reference.iter().map(|s| s.phi[0][0]).collect();
        let tv = tv_unit(&chain_phi, &prior_phi);
        assert!(tv < 0.02, "{variant} phi TV {tv}");
    }
}

#[test]
fn single_group_chain_without_data_has_beta_r2() {
    let groups = GroupStructure::new(vec![3]).unwrap();
    let hyper = sparsity(0.6, 1.5, &groups);
    let mut cfg = SamplerConfig::new(Variant::Dirichlet, 301_000, 1_000, 12);
    cfg.thin = 60;
    let out = run_chain_stats(SuffStats::prior_only(3), &groups, &hyper, &cfg).unwrap();
    assert_eq!(out.draws.len(), 5_000);
    let r2: Vec<f64> = out.draws.iter().map(|s| s.r2().r2).collect();
    let beta = Beta::new(0.6, 1.5).unwrap();
    let t = ks_test(&r2, |x| beta.cdf(x), 0.01);
    assert!(t.pass, "{t:?}");
}

#[test]
fn prior_sampler_matches_batch_layout() {
    let groups = GroupStructure::new(vec![2, 2]).unwrap();
    let hyper = sparsity(0.5, 0.5, &groups);
    let ps = PriorSampler::new(&hyper, &groups, Variant::Dirichlet).unwrap();
    let batch = sample_prior(&ps, 100, 3).unwrap();
    for i in 0..100 {
        let s: f64 = batch.r2.row(i).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn posterior_concentrates_on_strong_signal() {
    let groups = GroupStructure::new(vec![2, 2, 2]).unwrap();
    let truth = [2.0, -1.5, 0.0, 0.0, 1.0, 0.0];
    let data = dataset(300, &groups, &truth, 0.5, 13);
    let hyper = make_hyperparams(Strategy::EmpiricalBayes, 0.5, 0.5, Some(&data), &groups).unwrap();
    for variant in [Variant::Dirichlet, Variant::LogisticNormal] {
        let out = run_chain(&data, &hyper, &SamplerConfig::new(variant, 2_000, 500, 14)).unwrap();
        let m = out.posterior_mean();
        for k in 0..6 {
            assert!(
                (m[k] - truth[k]).abs() < 0.15,
                "{variant} coefficient {k}: {}",
                m[k]
            );
        }
        let ols = least_squares(data.x(), data.y()).unwrap();
        let r = data.y() - data.x() * ols;
        let s2_ols = r.dot(&r) / (300.0 - 6.0);
        let s2 = mean(&out.draws.iter().map(|s| s.sigma2).collect::<Vec<_>>());
        assert!(
            (s2 - s2_ols).abs() < 0.05 * s2_ols,
            "{variant} sigma2 {s2} vs {s2_ols}"
        );
    }
}

#[test]
fn chains_are_bit_reproducible() {
    let groups = GroupStructure::new(vec![3, 2]).unwrap();
    let data = dataset(40, &groups, &[1.0, 0.0, 0.0, 0.5, 0.0], 1.0, 15);
    let hyper = make_hyperparams(Strategy::EmpiricalBayes, 0.5, 0.5, Some(&data), &groups).unwrap();
    for variant in [Variant::Dirichlet, Variant::LogisticNormal] {
        let cfg = SamplerConfig::new(variant, 300, 100, 16);
        let run = |cfg: &SamplerConfig| {
            let out = run_chain(&data, &hyper, cfg).unwrap();
            let mut bytes = Vec::new();
            write_draws_binary(&mut bytes, &out.draws).unwrap();
            bytes
        };
        assert_eq!(run(&cfg), run(&cfg));
        let other = SamplerConfig {
            seed: 17,
            ..cfg.clone()
        };
        assert_ne!(run(&cfg), run(&other));
    }
}

#[test]
fn draws_export_as_csv() {
    let groups = GroupStructure::new(vec![2, 1]).unwrap();
    let data = dataset(30, &groups, &[1.0, 0.0, 0.5], 1.0, 18);
    let hyper = sparsity(0.5, 0.5, &groups);
    let out = run_chain(
        &data,
        &hyper,
        &SamplerConfig::new(Variant::Dirichlet, 20, 10, 19),
    )
    .unwrap();
    let mut buf = Vec::new();
    write_draws_csv(&mut buf, &groups, &out.draws).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "beta_1_1,beta_1_2,beta_2_1,sigma2,tau2,W_1,W_2"
    );
    assert_eq!(lines.count(), 10);
}

#[test]
fn invalid_initial_state_is_rejected() {
    let groups = GroupStructure::new(vec![2]).unwrap();
    let data = dataset(10, &groups, &[1.0, 0.0], 1.0, 20);
    let hyper = sparsity(0.5, 0.5, &groups);
    let mut bad = state(&groups, vec![0.0, 0.0]);
    bad.phi[0] = vec![0.7, 0.7];
    let mut cfg = SamplerConfig::new(Variant::Dirichlet, 10, 0, 1);
    cfg.initial_state = Some(bad);
    assert!(run_chain(&data, &hyper, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sweeps_preserve_state_invariants(
        seed in 0u64..1000,
        sizes in prop::collection::vec(1usize..4, 1..4),
        n in 0usize..30,
        a in 0.05f64..2.0,
        b in 0.1f64..3.0,
        logistic in any::<bool>(),
    ) {
        let groups = GroupStructure::new(sizes).unwrap();
        let p = groups.p();
        let mut rng = RandomStream::new(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.std_normal());
        let y = DVector::from_fn(n, |_, _| 3.0 * rng.std_normal());
        let stats = if n == 0 { SuffStats::prior_only(p) } else { SuffStats::from_xy(&x, &y) };
        let hyper = sparsity(a, b, &groups);
        let variant = if logistic { Variant::LogisticNormal } else { Variant::Dirichlet };
        let mut cfg = SamplerConfig::new(variant, 40, 10, seed);
        cfg.thin = 3;
        let out = run_chain_stats(stats, &groups, &hyper, &cfg).unwrap();
        prop_assert_eq!(out.draws.len(), cfg.n_draws());
        for s in &out.draws {
            prop_assert!(s.validate(&groups).is_ok());
            let r2 = s.r2();
            prop_assert!((0.0..=1.0).contains(&r2.r2));
            prop_assert!((r2.r2_g.iter().sum::<f64>() - r2.r2).abs() < 1e-12);
        }
        prop_assert!(out.mh_accept_rate.iter().all(|r| (0.0..=1.0).contains(r)));
    }
}

#[test]
fn posterior_summary_of_known_draws() {
    let groups = GroupStructure::new(vec![1, 2]).unwrap();
    let draws: Vec<ChainState> = (1..=101)
        .map(|i| ChainState {
            beta: DVector::from_vec(vec![i as f64, -(i as f64), 0.5]),
            sigma2: 2.0,
            tau2: 1.0,
            psi: vec![1.0; 3],
            phi: vec![vec![1.0], vec![0.5, 0.5]],
            w: vec![1.0, 2.0],
        })
        .collect();
    let out = ChainOutput {
        draws,
        mh_accept_rate: vec![1.0, 1.0],
        timing_secs: 0.0,
    };
    let s = summarize_posterior(&out, &groups, 0.9).unwrap();
    let b = &s.coefficients[0];
    assert_eq!(
        (b.name.as_str(), b.mean, b.median),
        ("beta_1_1", 51.0, 51.0)
    );
    // type-7 at 0.05 and 0.95 of 1..=101
    assert!((b.lo - 6.0).abs() < 1e-12 && (b.hi - 96.0).abs() < 1e-12);
    assert!((s.coefficients[1].lo + 96.0).abs() < 1e-12);
    assert_eq!(s.coefficients[2].name, "beta_2_2");
    assert_eq!(s.r2.len(), 3);
    assert_eq!(s.r2[0].median, 0.75);
    assert_eq!(s.r2[2].median, 0.5);
    assert_eq!(s.sigma2.hi, 2.0);
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &s.coefficients).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "name,mean,median,lo,hi");
    assert!(text.lines().nth(1).unwrap().starts_with("beta_1_1,51,51,"));
    assert!(summarize_posterior(&out, &groups, 1.0).is_err());
}
