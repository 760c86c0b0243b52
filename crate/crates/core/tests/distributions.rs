use gr2d2::error::Error;
use gr2d2::hyper::logistic_normal_covariance;
use gr2d2::quad::{integrate, integrate_positive};
use gr2d2::rngdist::*;
use gr2d2::stats::{iid_se, ks_test, mean, variance};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

const N: usize = 1_000_000;

fn draws<F: FnMut(&mut RandomStream) -> f64>(seed: u64, n: usize, mut f: F) -> Vec<f64> {
    let mut rng = RandomStream::new(seed);
    (0..n).map(|_| f(&mut rng)).collect()
}

fn raw_moment(xs: &[f64], k: i32) -> f64 {
    xs.iter().map(|x| x.powi(k)).sum::<f64>() / xs.len() as f64
}

/// `E[Z^k]` for `k = 1, 2` of an unnormalized positive density by quadrature.
fn quad_moments<F: Fn(f64) -> f64 + Copy>(density: F) -> (f64, f64) {
    let z0 = integrate_positive(density, 1e-11).unwrap().value;
    let z1 = integrate_positive(move |z| z * density(z), 1e-11)
        .unwrap()
        .value;
    let z2 = integrate_positive(move |z| z * z * density(z), 1e-11)
        .unwrap()
        .value;
    (z1 / z0, z2 / z0)
}

fn gig_density(lambda: f64, rho: f64, chi: f64) -> impl Fn(f64) -> f64 + Copy {
    move |z: f64| {
        if z <= 0.0 {
            0.0
        } else {
            ((lambda - 1.0) * z.ln() - 0.5 * (rho * z + chi / z)).exp()
        }
    }
}

fn assert_rel(what: &str, got: f64, want: f64, tol: f64) {
    let rel = (got / want - 1.0).abs();
    assert!(
        rel < tol,
        "{what}: got {got}, expected {want} (rel err {rel:.2e} ≥ {tol})"
    );
}

#[test]
fn gig_chi_zero_is_gamma() {
    let p = GigParams::new(2.0, 2.0, 0.0).unwrap();
    let xs = draws(11, N, |r| sample_gig(&p, r).unwrap());
    assert!((mean(&xs) - 2.0).abs() < 0.01);
}

#[test]
fn gig_lambda_minus_half_mean_is_inverse_gaussian_mean() {
    for &(rho, chi) in &[(1.0f64, 2.0f64), (3.0, 0.5)] {
        let want = (chi / rho).sqrt();
        let (qm, _) = quad_moments(gig_density(-0.5, rho, chi));
        assert_rel("quadrature mean", qm, want, 1e-8);
        let p = GigParams::new(-0.5, rho, chi).unwrap();
        let xs = draws(12, N, |r| sample_gig(&p, r).unwrap());
        assert_rel("GIG(-1/2) mean", mean(&xs), want, 0.005);
    }
}

// Grid points where 1% is at least four Monte-Carlo standard errors of the
// second moment at 10^6 draws.
#[test]
fn gig_moments_match_quadrature_on_grid() {
    let grid = [
        (0.3, 2.0, 1.5),
        (-0.5, 1.0, 2.0),
        (5.0, 1.0, 3.0),
        (1.7, 4.0, 40.0),
        (-4.0, 0.2, 25.0),
        (2.5, 1.0, 1e-3),
        (-0.2, 3.0, 0.5),
        (0.5, 1.0, 1.0),
    ];
    for (i, &(l, r, c)) in grid.iter().enumerate() {
        let (m1, m2) = quad_moments(gig_density(l, r, c));
        let p = GigParams::new(l, r, c).unwrap();
        let xs = draws(100 + i as u64, N, |rng| sample_gig(&p, rng).unwrap());
        let tag = format!("GIG({l}, {r}, {c})");
        assert_rel(&format!("{tag} E[Z]"), raw_moment(&xs, 1), m1, 0.01);
        assert_rel(&format!("{tag} E[Z²]"), raw_moment(&xs, 2), m2, 0.01);
    }
}

// Skewed points (small χ, negative λ) where the second moment is too noisy
// for a fixed relative tolerance: compare in standard-error units instead.
#[test]
fn gig_skewed_moments_within_four_standard_errors() {
    let grid = [
        (-2.3, 2.0, 0.5),
        (0.6, 0.5, 1e-3),
        (-0.45, 2.0, 1e-4),
        (-1.5, 1.0, 1.0),
    ];
    for (i, &(l, r, c)) in grid.iter().enumerate() {
        let (m1, m2) = quad_moments(gig_density(l, r, c));
        let p = GigParams::new(l, r, c).unwrap();
        let xs = draws(200 + i as u64, N, |rng| sample_gig(&p, rng).unwrap());
        for (k, want) in [(1, m1), (2, m2)] {
            let zk: Vec<f64> = xs.iter().map(|x| x.powi(k)).collect();
            let z = (mean(&zk) - want) / iid_se(&zk);
            assert!(z.abs() < 4.0, "GIG({l}, {r}, {c}) moment {k}: z = {z:.2}");
        }
    }
}

#[test]
fn gig_spec_example_moments_within_half_percent() {
    let (m1, m2) = quad_moments(gig_density(0.3, 2.0, 1.5));
    // bounded range (0, 200) gives the same moments: the tail beyond is e^{-200}
    let d = gig_density(0.3, 2.0, 1.5);
    let z0 = integrate(d, 0.0, 200.0, 1e-12).unwrap().value;
    let z1 = integrate(|z| z * d(z), 0.0, 200.0, 1e-12).unwrap().value;
    assert_rel("range", z1 / z0, m1, 1e-8);
    let p = GigParams::new(0.3, 2.0, 1.5).unwrap();
    let xs = draws(13, N, |r| sample_gig(&p, r).unwrap());
    assert_rel("E[Z]", raw_moment(&xs, 1), m1, 0.005);
    assert_rel("E[Z²]", raw_moment(&xs, 2), m2, 0.005);
}

#[test]
fn gig_extreme_parameters_stay_finite() {
    let mut rng = RandomStream::new(14);
    for &(l, r, c) in &[
        (-0.49, 2.0, 1e-320),
        (-30.0, 1e-6, 1e-290),
        (0.01, 1e6, 1e-300),
        (-0.5, 1e-10, 1e10),
        (200.0, 3.0, 1e-12),
    ] {
        let p = GigParams::new(l, r, c).unwrap();
        for _ in 0..1000 {
            let ln = sample_gig_ln(&p, &mut rng).unwrap();
            assert!(ln.is_finite(), "GIG({l}, {r}, {c}) gave ln z = {ln}");
        }
    }
}

#[test]
fn gig_rejects_non_normalizable() {
    for &(l, r, c) in &[
        (-1.0, 1.0, 0.0),
        (0.0, 1.0, 0.0),
        (1.0, 0.0, 1.0),
        (1.0, 1.0, -1.0),
    ] {
        assert!(matches!(GigParams::new(l, r, c), Err(Error::Param { .. })));
    }
    assert_eq!(
        GigParams::new(-0.5, 1.0, 1e-320).unwrap().chi,
        GIG_CHI_FLOOR
    );
}

#[test]
fn inverse_gaussian_moments() {
    let p = InvGaussParams::new(1.0, 1.0).unwrap();
    let xs = draws(21, N, |r| sample_inverse_gaussian(&p, r));
    assert!((mean(&xs) - 1.0).abs() < 0.005);

    let p = InvGaussParams::new(2.0, 1.0).unwrap();
    let xs = draws(22, N, |r| sample_inverse_gaussian(&p, r));
    let ig = |z: f64| {
        if z <= 0.0 {
            0.0
        } else {
            z.powf(-1.5) * (-(z - 2.0).powi(2) / (8.0 * z)).exp()
        }
    };
    let (m1, m2) = quad_moments(ig);
    assert_rel("quadrature variance", m2 - m1 * m1, 8.0, 1e-6);
    assert_rel("IG variance", variance(&xs), 8.0, 0.03);
}

#[test]
fn inverse_gaussian_rejects_bad_parameters() {
    assert!(matches!(
        InvGaussParams::new(0.0, 1.0),
        Err(Error::Param { .. })
    ));
    assert!(matches!(
        InvGaussParams::new(1.0, -1.0),
        Err(Error::Param { .. })
    ));
}

#[test]
fn inverse_gaussian_huge_mean_is_finite() {
    let p = InvGaussParams::new(1e200, 1.0).unwrap();
    let mut rng = RandomStream::new(23);
    for _ in 0..10_000 {
        let z = sample_inverse_gaussian(&p, &mut rng);
        assert!(z.is_finite() && z > 0.0);
    }
}

#[test]
fn dirichlet_symmetric_means() {
    let p = DirichletParams::new(vec![1.0, 1.0]).unwrap();
    let mut rng = RandomStream::new(31);
    let mut acc = [0.0; 2];
    for _ in 0..N {
        let d = sample_dirichlet(&p, &mut rng);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        acc[0] += d[0];
        acc[1] += d[1];
    }
    for a in acc {
        assert!((a / N as f64 - 0.5).abs() < 0.002);
    }

    let p = DirichletParams::new(vec![0.5; 3]).unwrap();
    let mut acc = [0.0; 3];
    for _ in 0..N {
        let d = sample_dirichlet(&p, &mut rng);
        assert!(d.iter().all(|&v| v >= 0.0));
        for k in 0..3 {
            acc[k] += d[k];
        }
    }
    for a in acc {
        assert!((a / N as f64 - 1.0 / 3.0).abs() < 0.002);
    }
}

#[test]
fn dirichlet_marginal_is_beta() {
    let p = DirichletParams::new(vec![2.0, 3.0, 5.0]).unwrap();
    let mut rng = RandomStream::new(32);
    let first: Vec<f64> = (0..100_000)
        .map(|_| sample_dirichlet(&p, &mut rng)[0])
        .collect();
    let beta = Beta::new(2.0, 8.0).unwrap();
    let t = ks_test(&first, |x| beta.cdf(x), 0.01);
    assert!(t.pass, "{t:?}");
}

#[test]
fn dirichlet_matches_normalized_gammas() {
    // marginals of the sampler against an independent construction
    let alpha = [0.3, 1.7, 4.0];
    let p = DirichletParams::new(alpha.to_vec()).unwrap();
    let mut rng = RandomStream::new(33);
    let n = 50_000;
    let direct: Vec<Vec<f64>> = (0..n).map(|_| sample_dirichlet(&p, &mut rng)).collect();
    let total: f64 = alpha.iter().sum();
    for k in 0..3 {
        let xs: Vec<f64> = direct.iter().map(|d| d[k]).collect();
        let beta = Beta::new(alpha[k], total - alpha[k]).unwrap();
        let t = ks_test(&xs, |x| beta.cdf(x), 0.01);
        assert!(t.pass, "component {k}: {t:?}");
    }
}

#[test]
fn dirichlet_tiny_shapes_stay_on_simplex() {
    let p = DirichletParams::new(vec![1e-3, 1e-3, 1e-3]).unwrap();
    let mut rng = RandomStream::new(34);
    for _ in 0..10_000 {
        let d = sample_dirichlet(&p, &mut rng);
        assert!(d.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn dirichlet_rejects_bad_shapes() {
    assert!(DirichletParams::new(vec![1.0]).is_err());
    assert!(matches!(
        DirichletParams::new(vec![1.0, 0.0]),
        Err(Error::Param { .. })
    ));
}

#[test]
fn logistic_normal_zero_noise_collapses_to_center() {
    let p = LogisticNormalParams::new(DMatrix::identity(2, 2) * 1e-12).unwrap();
    let mut rng = RandomStream::new(41);
    let d = sample_logistic_normal(&p, &mut rng);
    for v in d {
        assert!((v - 1.0 / 3.0).abs() < 1e-5);
    }
}

#[test]
fn logistic_normal_log_ratio_is_normal() {
    let p = LogisticNormalParams::new(DMatrix::identity(1, 1)).unwrap();
    let mut rng = RandomStream::new(42);
    let lr: Vec<f64> = (0..100_000)
        .map(|_| {
            let d = sample_logistic_normal(&p, &mut rng);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            (d[0] / d[1]).ln()
        })
        .collect();
    let z = Normal::standard();
    let t = ks_test(&lr, |x| z.cdf(x), 0.01);
    assert!(t.pass, "{t:?}");
}

#[test]
fn logistic_normal_rejects_bad_covariance() {
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
    assert!(LogisticNormalParams::new(asym).is_err());
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(
        LogisticNormalParams::new(indefinite),
        Err(Error::Param { .. })
    ));
}

#[test]
fn logistic_normal_density_two_parts() {
    let p = LogisticNormalParams::new(DMatrix::identity(1, 1)).unwrap();
    let at_center = logdensity_logistic_normal(&[0.5, 0.5], &p).unwrap();
    let want = -0.5 * (2.0 * std::f64::consts::PI).ln() - 2.0 * 0.5f64.ln();
    assert!((at_center - want).abs() < 1e-14);
    let total = integrate(
        |t| {
            if t <= 0.0 || t >= 1.0 {
                0.0
            } else {
                logdensity_logistic_normal(&[t, 1.0 - t], &p).unwrap().exp()
            }
        },
        0.0,
        1.0,
        1e-10,
    )
    .unwrap()
    .value;
    assert!((total - 1.0).abs() < 1e-6, "integral {total}");
}

#[test]
fn logistic_normal_density_three_parts_integrates_to_one() {
    for sigma in [
        DMatrix::identity(2, 2),
        logistic_normal_covariance(3).unwrap(),
    ] {
        let p = LogisticNormalParams::new(sigma).unwrap();
        let inner = |t: f64| {
            let top = 1.0 - t;
            integrate(
                |s| {
                    let u = 1.0 - t - s;
                    if s <= 0.0 || u <= 0.0 {
                        0.0
                    } else {
                        logdensity_logistic_normal(&[t, s, u], &p).unwrap().exp()
                    }
                },
                0.0,
                top,
                1e-9,
            )
            .unwrap()
            .value
        };
        let total = integrate(
            |t| if t <= 0.0 || t >= 1.0 { 0.0 } else { inner(t) },
            0.0,
            1.0,
            1e-8,
        )
        .unwrap()
        .value;
        assert!((total - 1.0).abs() < 1e-4, "integral {total}");
    }
}

#[test]
fn logistic_normal_density_domain_and_symmetry() {
    let p = LogisticNormalParams::new(logistic_normal_covariance(2).unwrap()).unwrap();
    assert!(matches!(
        logdensity_logistic_normal(&[0.0, 1.0], &p),
        Err(Error::Domain { .. })
    ));
    let a = logdensity_logistic_normal(&[0.2, 0.8], &p).unwrap();
    let b = logdensity_logistic_normal(&[0.8, 0.2], &p).unwrap();
    assert!((a - b).abs() < 1e-12);

    let p3 = LogisticNormalParams::new(logistic_normal_covariance(3).unwrap()).unwrap();
    let phi = [0.1, 0.3, 0.6];
    let base = logdensity_logistic_normal(&phi, &p3).unwrap();
    for perm in [[1, 0, 2], [2, 1, 0], [0, 2, 1], [1, 2, 0]] {
        let q: Vec<f64> = perm.iter().map(|&i| phi[i]).collect();
        assert!((logdensity_logistic_normal(&q, &p3).unwrap() - base).abs() < 1e-12);
    }
}

#[test]
fn gamma_family_conventions() {
    let xs = draws(51, N, |r| sample_inverse_gamma(2.0, 1.0, r).unwrap());
    let (qm, _) = quad_moments(|x| {
        if x <= 0.0 {
            0.0
        } else {
            x.powi(-3) * (-1.0 / x).exp()
        }
    });
    assert_rel("quadrature InvGamma mean", qm, 1.0, 1e-8);
    assert!((mean(&xs) - 1.0).abs() < 0.01);

    let xs = draws(52, N, |r| sample_exponential(0.5, r).unwrap());
    assert!((mean(&xs) - 2.0).abs() < 0.01);

    let xs = draws(53, N, |r| sample_gamma(3.0, 2.0, r).unwrap());
    assert_rel("Gamma mean", mean(&xs), 1.5, 0.01);
    assert_rel("Gamma variance", variance(&xs), 0.75, 0.01);

    let xs = draws(54, N, |r| sample_gamma(0.05, 1.0, r).unwrap());
    assert_rel("small-shape Gamma mean", mean(&xs), 0.05, 0.03);

    for bad in [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)] {
        let mut rng = RandomStream::new(1);
        assert!(sample_gamma(bad.0, bad.1, &mut rng).is_err());
        assert!(sample_inverse_gamma(bad.0, bad.1, &mut rng).is_err());
    }
    assert!(sample_exponential(0.0, &mut RandomStream::new(1)).is_err());
}

#[test]
fn multivariate_normal_identity_marginals() {
    let mean0 = DVector::zeros(3);
    let factor = DMatrix::identity(3, 3);
    let mut rng = RandomStream::new(61);
    let xs: Vec<DVector<f64>> = (0..50_000)
        .map(|_| sample_normal_mv(&mean0, &factor, &mut rng).unwrap())
        .collect();
    let z = Normal::standard();
    for k in 0..3 {
        let col: Vec<f64> = xs.iter().map(|v| v[k]).collect();
        assert!(ks_test(&col, |x| z.cdf(x), 0.01).pass);
    }
    assert!(sample_normal_mv(&mean0, &DMatrix::identity(2, 2), &mut rng).is_err());
}

#[test]
fn precision_sampler_has_inverse_covariance() {
    // A = [[2, 1], [1, 2]] → covariance A⁻¹ = [[2, -1], [-1, 2]] / 3
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    let chol = nalgebra::Cholesky::new(a).unwrap();
    let m = DVector::from_vec(vec![1.0, -1.0]);
    let mut rng = RandomStream::new(62);
    let n = 400_000;
    let (mut s00, mut s01, mut m0) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let x = sample_normal_precision(&m, &chol, 2.0, &mut rng);
        m0 += x[0];
        s00 += (x[0] - 1.0).powi(2);
        s01 += (x[0] - 1.0) * (x[1] + 1.0);
    }
    let n = n as f64;
    assert!((m0 / n - 1.0).abs() < 0.01);
    assert_rel("var", s00 / n, 4.0 * 2.0 / 3.0, 0.01);
    assert_rel("cov", s01 / n, -4.0 / 3.0, 0.015);
}

#[test]
fn streams_are_deterministic_and_derived_streams_differ() {
    let p = GigParams::new(-0.3, 1.0, 0.7).unwrap();
    let a = draws(77, 100, |r| sample_gig(&p, r).unwrap());
    let b = draws(77, 100, |r| sample_gig(&p, r).unwrap());
    assert_eq!(a, b);
    let mut r1 = RandomStream::derive(77, &[0, 1]);
    let mut r2 = RandomStream::derive(77, &[1, 0]);
    let mut r1b = RandomStream::derive(77, &[0, 1]);
    let x1: Vec<f64> = (0..10).map(|_| r1.std_normal()).collect();
    let x2: Vec<f64> = (0..10).map(|_| r2.std_normal()).collect();
    let x1b: Vec<f64> = (0..10).map(|_| r1b.std_normal()).collect();
    assert_ne!(x1, x2);
    assert_eq!(x1, x1b);
}
