//! Special functions: trigamma and the modified Bessel function of the
//! second kind for real order.

use crate::error::{Error, Result};

/// Trigamma function, the second derivative of `ln Γ(x)`, for `x > 0`.
///
/// Shifts the argument above 10 with `ψ₁(x) = ψ₁(x + 1) + 1/x²` and then uses
/// the asymptotic Bernoulli expansion; relative error is below 1e-14.
pub fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("trigamma", format!("x = {x}, need x > 0")));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let z = 1.0 / x;
    let z2 = z * z;
    // 1/x + 1/(2x²) + Σ B_{2k} / x^{2k+1}
    let series = z2
        * (1.0 / 6.0
            + z2 * (-1.0 / 30.0
                + z2 * (1.0 / 42.0
                    + z2 * (-1.0 / 30.0
                        + z2 * (5.0 / 66.0 + z2 * (-691.0 / 2730.0 + z2 * (7.0 / 6.0)))))));
    Ok(acc + z + 0.5 * z2 + z * series)
}

// Coefficients of 1/Γ(1 + x) = Σ c_k x^k (Abramowitz & Stegun 6.1.34, shifted by one).
const RECIP_GAMMA_1P: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// Temme's auxiliary gammas for |mu| <= 1/2:
/// (gam1, gam2, 1/Γ(1+mu), 1/Γ(1-mu)).
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    let (mut even, mut odd) = (0.0, 0.0);
    let mut pw = 1.0;
    for pair in RECIP_GAMMA_1P.chunks(2) {
        even += pair[0] * pw;
        if let Some(c) = pair.get(1) {
            odd += c * pw;
        }
        pw *= mu2;
    }
    // gam1 = (1/Γ(1-mu) - 1/Γ(1+mu)) / (2 mu) = -odd, gam2 = even
    (-odd, even, even + mu * odd, even - mu * odd)
}

/// Modified Bessel function of the second kind `K_ν(x)` for real `ν` and `x > 0`.
///
/// Temme's series for `x < 2`, Steed's continued fraction otherwise, then
/// forward recurrence in the order.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("bessel_k", format!("x = {x}, need x > 0")));
    }
    if !nu.is_finite() {
        return Err(Error::domain("bessel_k", format!("order {nu} not finite")));
    }
    const EPS: f64 = 1e-16;
    const MAXIT: usize = 100_000;
    let nu = nu.abs();
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64;
    let mu2 = mu * mu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;
    let (mut kmu, mut k1);
    if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = std::f64::consts::PI * mu;
        let fact = if pimu.abs() < EPS {
            1.0
        } else {
            pimu / pimu.sin()
        };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let e = e.exp();
        let mut p = 0.5 * e / gampl;
        let mut q = 0.5 / (e * gammi);
        let mut c = 1.0;
        let d = x2 * x2;
        let mut sum1 = p;
        let mut converged = false;
        for i in 1..=MAXIT {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= d / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(
                "bessel_k: Temme series did not converge".into(),
            ));
        }
        kmu = sum;
        k1 = sum1 * xi2;
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        let mut converged = false;
        for i in 2..=MAXIT {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh *= b * d - 1.0;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(
                "bessel_k: continued fraction did not converge".into(),
            ));
        }
        h *= a1;
        kmu = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        k1 = kmu * (mu + x + 0.5 - h) * xi;
    }
    for i in 1..=nl {
        let next = (mu + i as f64) * xi2 * k1 + kmu;
        kmu = k1;
        k1 = next;
    }
    Ok(kmu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn trigamma_known_constants() {
        assert!((trigamma(1.0).unwrap() - PI * PI / 6.0).abs() < 1e-13);
        assert!((trigamma(0.5).unwrap() - PI * PI / 2.0).abs() < 1e-13);
    }

    #[test]
    fn trigamma_matches_recurrence_oracle_at_ten() {
        // ψ₁(1) = ψ₁(10) + Σ_{k=1}^{9} 1/k²
        let tail: f64 = (1..10).map(|k| 1.0 / (k * k) as f64).sum();
        let oracle = PI * PI / 6.0 - tail;
        let got = trigamma(10.0).unwrap();
        assert!((got - oracle).abs() / oracle < 1e-10, "{got} vs {oracle}");
    }

    #[test]
    fn trigamma_rejects_nonpositive() {
        assert!(trigamma(0.0).is_err());
        assert!(trigamma(-1.5).is_err());
    }

    #[test]
    fn temme_gammas_match_gamma_function() {
        for &mu in &[-0.5, -0.3, -0.01, 0.0, 0.2, 0.4999] {
            let (_, _, gp, gm) = temme_gammas(mu);
            let want_p = 1.0 / statrs::function::gamma::gamma(1.0 + mu);
            let want_m = 1.0 / statrs::function::gamma::gamma(1.0 - mu);
            assert!((gp - want_p).abs() < 1e-13, "mu={mu}: {gp} vs {want_p}");
            assert!((gm - want_m).abs() < 1e-13, "mu={mu}: {gm} vs {want_m}");
        }
    }

    // Integral representation K_ν(x) = ∫_0^∞ exp(-x cosh t) cosh(νt) dt,
    // evaluated with a fine trapezoid rule.
    fn bessel_k_integral(nu: f64, x: f64) -> f64 {
        let h: f64 = 1e-3;
        let mut s = 0.5 * (-x).exp();
        let mut t = h;
        loop {
            let v = (-x * t.cosh()).exp() * (nu * t).cosh();
            s += v;
            if v < 1e-300 || t > 60.0 {
                break;
            }
            t += h;
        }
        s * h
    }

    #[test]
    fn bessel_k_half_order_closed_form() {
        for &x in &[0.1, 0.7, 1.9, 2.0, 5.5, 30.0] {
            let want = (PI / (2.0 * x)).sqrt() * (-x).exp();
            let got = bessel_k(0.5, x).unwrap();
            assert!((got - want).abs() / want < 1e-12, "x={x}: {got} vs {want}");
            let got3 = bessel_k(1.5, x).unwrap();
            let want3 = want * (1.0 + 1.0 / x);
            assert!((got3 - want3).abs() / want3 < 1e-12);
        }
    }

    #[test]
    fn bessel_k_tabulated_values() {
        assert!((bessel_k(0.0, 1.0).unwrap() - 0.421_024_438_240_708_3).abs() < 1e-13);
        assert!((bessel_k(1.0, 1.0).unwrap() - 0.601_907_230_197_234_6).abs() < 1e-13);
        assert!((bessel_k(0.0, 2.0).unwrap() - 0.113_893_872_749_533_4).abs() < 1e-13);
    }

    #[test]
    fn bessel_k_matches_integral_representation() {
        for &nu in &[-0.75, -0.25, 0.1, 0.33, 1.25, 3.7] {
            for &x in &[0.05, 0.5, 1.5, 2.5, 8.0] {
                let want = bessel_k_integral(nu, x);
                let got = bessel_k(nu, x).unwrap();
                assert!(
                    (got - want).abs() / want < 1e-9,
                    "nu={nu} x={x}: {got} vs {want}"
                );
            }
        }
    }
}
