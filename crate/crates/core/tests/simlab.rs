use gr2d2::rngdist::RandomStream;
use gr2d2::simlab::*;
use proptest::prelude::*;

#[test]
fn every_scenario_has_total_signal_25() {
    for id in ScenarioId::ALL {
        for p in [50, 200] {
            let s = build_scenario(id, 150, p, 0.5, 1).unwrap();
            let l1: f64 = s.beta_true.iter().map(|b| b.abs()).sum();
            assert_eq!(l1, 25.0, "{id} p = {p}");
            assert_eq!(s.groups.n_groups(), p / 10);
        }
    }
}

#[test]
fn scenario_one_and_five_layouts() {
    let s1 = build_scenario(ScenarioId::S1, 250, 50, 0.7, 1).unwrap();
    let nz: Vec<(usize, f64)> = s1
        .beta_true
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(k, b)| (k, *b))
        .collect();
    assert_eq!(
        nz,
        vec![(0, 5.0), (10, 5.0), (20, -5.0), (30, 5.0), (40, -5.0)]
    );
    let s5 = build_scenario(ScenarioId::S5, 250, 50, 0.7, 1).unwrap();
    let idx: Vec<usize> = (0..50).filter(|&k| s5.beta_true[k] != 0.0).collect();
    assert_eq!(idx, vec![0, 2, 4, 6, 8]);
}

#[test]
fn equal_split_calibration() {
    let s = build_scenario(ScenarioId::S2, 250, 50, 0.5, 1).unwrap();
    let signal = s.beta_true.dot(&(&s.sigma_x * &s.beta_true));
    assert!((s.sigma2 - signal).abs() < 1e-9 * signal);
    assert_eq!(s.sigma_x[(0, 9)], 0.7);
    assert_eq!(s.sigma_x[(0, 10)], 0.2);
    assert_eq!(s.sigma_x[(3, 3)], 1.0);
}

#[test]
fn incompatible_geometry_is_rejected() {
    assert!(build_scenario(ScenarioId::S1, 100, 30, 0.5, 1).is_err());
    assert!(build_scenario(ScenarioId::S5, 100, 10, 0.5, 1).is_ok());
    assert!(build_scenario(ScenarioId::S5, 100, 15, 0.5, 1).is_err());
    assert!(build_scenario(ScenarioId::S5, 100, 50, 1.0, 1).is_err());
    assert!("s6".parse::<ScenarioId>().is_err());
}

#[test]
fn simulated_design_matches_block_correlation() {
    let s = build_scenario(ScenarioId::S3, 250, 50, 0.7, 1).unwrap();
    let d = simulate_dataset(&s, &mut RandomStream::new(2)).unwrap();
    let x = d.x();
    let n = x.nrows() as f64;
    let cov = |a: usize, b: usize| {
        let (ca, cb) = (x.column(a), x.column(b));
        let (ma, mb) = (ca.mean(), cb.mean());
        ca.iter()
            .zip(cb.iter())
            .map(|(u, v)| (u - ma) * (v - mb))
            .sum::<f64>()
            / (n - 1.0)
    };
    // one column's sample variance has sd sqrt(2/(n-1)) ≈ 0.09, so the 10%
    // band applies to the average and each column gets four sd
    let vars: Vec<f64> = (0..50).map(|k| cov(k, k)).collect();
    assert!((vars.iter().sum::<f64>() / 50.0 - 1.0).abs() < 0.1);
    for (k, v) in vars.iter().enumerate() {
        assert!(
            (v - 1.0).abs() < 4.0 * (2.0 / (n - 1.0)).sqrt(),
            "column {k}"
        );
    }
    let mut within = Vec::new();
    for a in 0..10 {
        for b in a + 1..10 {
            within.push(cov(a, b) / (cov(a, a) * cov(b, b)).sqrt());
        }
    }
    let m = within.iter().sum::<f64>() / within.len() as f64;
    assert!((m - 0.7).abs() < 0.1, "{m}");
    assert!(d.y().mean().abs() < 1e-12);
}

#[test]
fn simulated_r2_matches_snr() {
    let s = build_scenario(ScenarioId::S1, 250, 50, 0.7, 1).unwrap();
    let mut r2 = Vec::new();
    for r in 0..20 {
        let d = simulate_dataset(&s, &mut RandomStream::derive(3, &[r])).unwrap();
        let fit = d.x() * &s.beta_true;
        let fm = fit.mean();
        let vf: f64 = fit.iter().map(|v| (v - fm).powi(2)).sum();
        let vy: f64 = d.y().iter().map(|v| v * v).sum();
        r2.push(vf / vy);
    }
    let m = r2.iter().sum::<f64>() / r2.len() as f64;
    assert!((m - 0.7).abs() < 0.1, "{m}");
}

fn fit(beta: &[f64], lo: &[f64], hi: &[f64]) -> FitSummary {
    FitSummary {
        beta_hat: beta.to_vec(),
        ci_low: lo.to_vec(),
        ci_high: hi.to_vec(),
        null_sse: 0.0,
        nonnull_sse: 0.0,
        mh_accept_rate: 1.0,
    }
}

#[test]
fn perfect_estimates_give_zero_error() {
    let s = build_scenario(ScenarioId::S5, 100, 10, 0.5, 1).unwrap();
    let b: Vec<f64> = s.beta_true.iter().copied().collect();
    let f = fit(&b, &b, &b);
    let t = metric_table(&s, Method::Gr2d2D, &[&f, &f], 0);
    assert_eq!(t.mse_null_sum, 0.0);
    assert_eq!(t.mse_nonnull_sum, 0.0);
    assert_eq!(t.cp, 100.0);
    assert_eq!(t.al, 0.0);
}

#[test]
fn unbounded_intervals_cover_and_overflow() {
    let s = build_scenario(ScenarioId::S5, 100, 10, 0.5, 1).unwrap();
    let b = vec![0.0; 10];
    let f = fit(&b, &[f64::NEG_INFINITY; 10], &[f64::INFINITY; 10]);
    let t = metric_table(&s, Method::Gr2d2L, &[&f], 0);
    assert_eq!(t.cp, 100.0);
    assert!(t.al_overflow && t.al.is_infinite());
    let mut buf = Vec::new();
    write_metric_csv(&mut buf, &[t]).unwrap();
    assert!(String::from_utf8(buf).unwrap().contains(",overflow,"));
}

#[test]
fn mse_sum_and_mean_split_by_true_zeros() {
    let s = build_scenario(ScenarioId::S5, 100, 10, 0.5, 1).unwrap();
    let mut b: Vec<f64> = s.beta_true.iter().copied().collect();
    b[1] = 1.0; // null
    b[0] += 2.0; // signal
    let f = fit(&b, &b, &b);
    let t = metric_table(&s, Method::R2d2, &[&f], 0);
    assert_eq!(t.mse_null_sum, 1.0);
    assert_eq!(t.mse_null_mean, 0.2);
    assert_eq!(t.mse_nonnull_sum, 4.0);
    assert_eq!(t.mse_nonnull_mean, 0.8);
    // only the shifted signal leaves its (zero-width) interval
    assert_eq!(t.cp, 80.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn aggregation_ignores_replication_order(
        vals in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 10), 2..6),
        rot in 0usize..5,
    ) {
        let s = build_scenario(ScenarioId::S5, 100, 10, 0.5, 1).unwrap();
        let fits: Vec<FitSummary> = vals
            .iter()
            .map(|v| {
                let lo: Vec<f64> = v.iter().map(|x| x - 1.0).collect();
                let hi: Vec<f64> = v.iter().map(|x| x + 1.5).collect();
                fit(v, &lo, &hi)
            })
            .collect();
        let mut refs: Vec<&FitSummary> = fits.iter().collect();
        let a = metric_table(&s, Method::Gr2d2D, &refs, 0);
        let k = rot % refs.len();
        refs.rotate_left(k);
        refs.reverse();
        let b = metric_table(&s, Method::Gr2d2D, &refs, 0);
        prop_assert!((a.mse_null_sum - b.mse_null_sum).abs() < 1e-12);
        prop_assert!((a.mse_nonnull_sum - b.mse_nonnull_sum).abs() < 1e-12);
        prop_assert!((a.cp - b.cp).abs() < 1e-12);
        prop_assert!((a.al - b.al).abs() < 1e-12);
        prop_assert!((0.0..=100.0).contains(&a.cp));
        prop_assert!(a.al >= 0.0);
    }

    #[test]
    fn intervals_are_ordered_and_nest(
        xs in prop::collection::vec(-100.0f64..100.0, 2..200),
    ) {
        let (lo95, hi95) = credible_interval(&xs, 0.95).unwrap();
        let (lo50, hi50) = credible_interval(&xs, 0.5).unwrap();
        prop_assert!(lo95 <= lo50 && lo50 <= hi50 && hi50 <= hi95);
    }
}

#[test]
fn symmetric_draws_give_symmetric_interval() {
    let mut rng = RandomStream::new(4);
    let mut xs: Vec<f64> = (0..20_000).map(|_| rng.std_normal()).collect();
    let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
    xs.extend(neg);
    let (lo, hi) = credible_interval(&xs, 0.95).unwrap();
    assert!((lo + hi).abs() < 1e-12);
    assert!((hi - 1.96).abs() < 0.05);
}

#[test]
fn replications_are_reproducible_and_complete() {
    let s = build_scenario(ScenarioId::S5, 60, 20, 0.7, 1).unwrap();
    let cfg = SimConfig {
        methods: Method::ALL.to_vec(),
        replications: 3,
        iterations: 200,
        burn_in: 100,
        seed: 5,
    };
    let a = run_replications(&s, &cfg).unwrap();
    let b = run_replications(&s, &cfg).unwrap();
    let csv = |r: &SimulationResult| {
        let mut buf = Vec::new();
        write_metric_csv(&mut buf, &r.tables).unwrap();
        String::from_utf8(buf).unwrap()
    };
    assert_eq!(csv(&a), csv(&b));
    let text = csv(&a);
    assert_eq!(text.lines().next().unwrap(), METRIC_COLUMNS.join(","));
    assert_eq!(text.lines().count(), 4);
    assert!(a.warnings.is_empty());
    for t in &a.tables {
        assert_eq!((t.replications, t.failed), (3, 0));
        assert!((0.0..=100.0).contains(&t.cp));
    }
    let per_rep: f64 = a
        .replications
        .iter()
        .map(|r| r.fits[0].as_ref().unwrap().null_sse)
        .sum();
    assert!((per_rep / 3.0 - a.tables[0].mse_null_sum).abs() < 1e-9);
    let l = &a.tables[1];
    assert!(l.mh_accept_rate > 0.0 && l.mh_accept_rate < 1.0);
}

#[test]
fn zero_replications_are_rejected() {
    let s = build_scenario(ScenarioId::S5, 60, 20, 0.7, 1).unwrap();
    let cfg = SimConfig {
        methods: vec![Method::Gr2d2D],
        replications: 0,
        iterations: 200,
        burn_in: 100,
        seed: 5,
    };
    assert!(run_replications(&s, &cfg).is_err());
}
