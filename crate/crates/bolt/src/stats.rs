//! Two-sample pooled-variance Student's t-test and the special functions
//! behind its p-value (log-gamma, regularized incomplete beta via continued
//! fraction). Welch's variant is available for sensitivity studies.

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Lanczos approximation to ln Gamma(x), x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Continued-fraction evaluation for the incomplete beta function
/// (Numerical Recipes `betacf`). Relative error well below 1e-10 over the
/// parameter range exercised here.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta_inc requires a, b > 0");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t distribution with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_inc(df / 2.0, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value for a t statistic.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_inc(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Pooled-variance two-sample Student's t-test with df = n_a + n_b - 2.
///
/// Degenerate zero-pooled-variance inputs: equal means give t=0, p=1;
/// unequal means give a signed infinite t with p=0.
pub fn students_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Precondition(format!(
            "t-test needs at least 2 samples per group (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * sample_var(a, ma) + (nb - 1.0) * sample_var(b, mb)) / df;
    if pooled <= 0.0 {
        return Ok(if (ma - mb).abs() == 0.0 {
            TTestResult { t: 0.0, df, p: 1.0 }
        } else {
            TTestResult {
                t: (ma - mb).signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let t = (ma - mb) / se;
    Ok(TTestResult {
        t,
        df,
        p: two_sided_p(t, df),
    })
}

/// Welch's unequal-variance t-test (Welch-Satterthwaite df).
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Precondition(format!(
            "t-test needs at least 2 samples per group (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_var(a, ma), sample_var(b, mb));
    let sa = va / na;
    let sb = vb / nb;
    if sa + sb <= 0.0 {
        let df = na + nb - 2.0;
        return Ok(if (ma - mb).abs() == 0.0 {
            TTestResult { t: 0.0, df, p: 1.0 }
        } else {
            TTestResult {
                t: (ma - mb).signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTestResult {
        t,
        df,
        p: two_sided_p(t, df),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_t0_p1() {
        let a = [1.0, 2.0, 3.0];
        let r = students_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn known_example_matches_hand_value() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 4.0, 6.0, 8.0, 10.0];
        let r = students_t_test(&a, &b).unwrap();
        assert_eq!(r.df, 8.0);
        assert!((r.t - (-1.8973665961010275)).abs() < 1e-9, "t = {}", r.t);
        assert!((r.p - 0.094373).abs() < 1e-4, "p = {}", r.p);
    }

    #[test]
    fn swap_negates_t_keeps_p() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 3.0, 5.0, 9.0];
        let r1 = students_t_test(&a, &b).unwrap();
        let r2 = students_t_test(&b, &a).unwrap();
        assert!((r1.t + r2.t).abs() < 1e-14);
        assert!((r1.p - r2.p).abs() < 1e-14);
    }

    #[test]
    fn zero_variance_unequal_means() {
        let a = [10.0, 10.0, 10.0, 10.0];
        let b = [0.0, 0.0, 0.0, 0.0];
        let r = students_t_test(&a, &b).unwrap();
        assert!(r.t.is_infinite() && r.t > 0.0);
        assert_eq!(r.p, 0.0);
    }

    #[test]
    fn scaling_invariance() {
        let a = [1.0, 3.0, 2.0, 5.0];
        let b = [4.0, 2.0, 7.0, 1.0, 3.0];
        let r1 = students_t_test(&a, &b).unwrap();
        let a2: Vec<f64> = a.iter().map(|x| x * 3.5).collect();
        let b2: Vec<f64> = b.iter().map(|x| x * 3.5).collect();
        let r2 = students_t_test(&a2, &b2).unwrap();
        assert!((r1.t - r2.t).abs() < 1e-12);
        assert!((r1.p - r2.p).abs() < 1e-12);
    }

    #[test]
    fn t_cdf_symmetry_and_median() {
        for df in [1.0, 2.0, 5.0, 10.0, 30.0, 100.0] {
            assert_eq!(t_cdf(0.0, df), 0.5);
            for t in [0.3, 1.0, 2.5, 7.0] {
                let lhs = t_cdf(t, df) + (1.0 - t_cdf(-t, df));
                // P(T <= t) + P(T >= t) = 1
                assert!(
                    (t_cdf(t, df) + (1.0 - t_cdf(t, df)) - 1.0).abs() < 1e-12,
                    "tautology check"
                );
                assert!((lhs - 2.0 * t_cdf(t, df)).abs() < 1e-12);
                assert!((t_cdf(t, df) - (1.0 - t_cdf(-t, df))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_sample_precondition() {
        assert!(students_t_test(&[1.0], &[1.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0, 2.0], &[3.0]).is_err());
    }

    #[test]
    fn beta_inc_boundaries() {
        assert_eq!(beta_inc(2.0, 3.0, 0.0), 0.0);
        assert_eq!(beta_inc(2.0, 3.0, 1.0), 1.0);
        // I_x(1, 1) = x
        for x in [0.1, 0.25, 0.5, 0.9] {
            assert!((beta_inc(1.0, 1.0, x) - x).abs() < 1e-12);
        }
    }
}
