//! Log-gamma, the regularized incomplete gamma function and the chi-square
//! distribution built on top of them.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// `ln(n!)`, exact summation for small `n`.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 32 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

const EPS: f64 = 1e-15;
const MAX_ITER: usize = 10_000;

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "gamma_p requires a > 0");
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "gamma_q requires a > 0");
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

pub fn chi2_cdf(x: f64, df: usize) -> f64 {
    gamma_p(df as f64 / 2.0, x / 2.0)
}

/// Upper-tail probability of the chi-square distribution.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    gamma_q(df as f64 / 2.0, x / 2.0)
}

/// Inverse of [`chi2_cdf`]: the `prob` quantile of the chi-square
/// distribution with `df` degrees of freedom.
///
/// Bracketed bisection; the bracket is grown geometrically until it contains
/// the root, then halved to an absolute width below `1e-12`.
pub fn chi2_quantile(df: usize, prob: f64) -> f64 {
    assert!(df >= 1, "chi2_quantile requires df >= 1");
    assert!(prob > 0.0 && prob < 1.0, "chi2_quantile requires prob in (0, 1)");
    let mut lo = 0.0;
    let mut hi = (df as f64).max(1.0);
    while chi2_cdf(hi, df) < prob {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, df) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_factorials() {
        for n in 1..20u64 {
            let exact: f64 = (1..n).map(|k| (k as f64).ln()).sum();
            assert!((ln_gamma(n as f64) - exact).abs() < 1e-12, "n = {n}");
        }
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn chi2_two_df_is_exponential() {
        for &x in &[0.1, 1.0, 3.0, 10.0, 40.0] {
            let exact = 1.0 - (-x / 2.0f64).exp();
            assert!((chi2_cdf(x, 2) - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn known_quantiles() {
        assert!((chi2_quantile(3, 0.975) - 9.348_403_604).abs() < 1e-8);
        assert!((chi2_quantile(2, 0.95) - 5.991_464_547).abs() < 1e-8);
        assert!((chi2_quantile(1, 0.95) - 3.841_458_821).abs() < 1e-8);
        let median = chi2_quantile(1, 0.5);
        assert!((chi2_cdf(median, 1) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for df in 1..=10 {
            for &p in &[0.5, 0.9, 0.95, 0.975, 0.99] {
                let x = chi2_quantile(df, p);
                assert!((chi2_cdf(x, df) - p).abs() < 1e-8, "df={df} p={p}");
            }
        }
    }

    #[test]
    fn zero_df_survival() {
        assert_eq!(chi2_sf(0.0, 0), 1.0);
    }
}
