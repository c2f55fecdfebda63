//! Standard-normal CDF and quantile, self-contained.
//!
//! The quantile is a short rational seed polished by safeguarded Newton steps
//! against [`normal_cdf`]; accuracy is limited by the CDF itself (series /
//! continued-fraction `erf`, relative error below 1e-13 on |x| <= 10), well
//! inside the 1e-9 needed by the confidence-interval and GDP-conversion paths.

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.3989422804014327;

/// Density of N(0,1).
pub fn standard_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Error function via Maclaurin series (small x) or the Gauss continued
/// fraction for the complement (large x).
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x <= 3.0 {
        erf_series(x)
    } else {
        1.0 - erfc_cf(x)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x <= 3.0 {
        1.0 - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

fn erf_series(x: f64) -> f64 {
    // erf(x) = (2/sqrt(pi)) * sum_n (-1)^n x^(2n+1) / (n! (2n+1))
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    let mut n = 1u32;
    loop {
        // term_n = term_{n-1} * (-x^2/n) adjusted for the (2n+1) denominator
        term *= -x2 / n as f64;
        let contrib = term / (2 * n + 1) as f64;
        sum += contrib;
        if contrib.abs() < 1e-18 * sum.abs() + 1e-300 {
            break;
        }
        n += 1;
        if n > 200 {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

fn erfc_cf(x: f64) -> f64 {
    // int_x^inf e^{-t^2} dt = e^{-x^2} / (2C) with
    // C = x + 1/(2x + 2/(x + 3/(2x + 4/(x + ...))))
    const N: usize = 80;
    let mut t = if N % 2 == 1 { 2.0 * x } else { x };
    for k in (1..N).rev() {
        let d = if k % 2 == 1 { 2.0 * x } else { x };
        t = d + (k + 1) as f64 / t;
    }
    let c = x + 1.0 / t;
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * c)
}

/// Standard-normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard-normal quantile `Phi^{-1}(p)` for `p` in (0, 1).
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile requires p in (0,1), got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let tail = p.min(1.0 - p);
    // Abramowitz-Stegun 26.2.22 seed, |error| < 3e-4.
    let t = (-2.0 * tail.ln()).sqrt();
    let mut z = t - (2.30753 + 0.27061 * t) / (1.0 + 0.99229 * t + 0.04481 * t * t);
    if p < 0.5 {
        z = -z;
    }
    for _ in 0..6 {
        let pdf = standard_normal_pdf(z);
        if pdf < 1e-300 {
            break;
        }
        let step = (normal_cdf(z) - p) / pdf;
        z -= step;
        if step.abs() < 1e-14 * (1.0 + z.abs()) {
            break;
        }
    }
    Ok(z)
}
