//! Closed-form power divergences between the noise distributions used by the
//! additive mechanisms.
//!
//! These are the calibration oracle: a mechanism parameter is correct exactly
//! when the divergence it induces between adjacent output distributions
//! equals the target budget. The Gaussian family admits a closed form for
//! every order; the Laplace family has both an exact product form and a
//! simpler exponential upper bound.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Tolerance below which `lambda * (lambda + 1)` is treated as zero and the
/// KL / reverse-KL limiting branch is used. Keeps `(e^x - 1)/x` away from
/// catastrophic cancellation.
pub const LAMBDA_BRANCH_TOL: f64 = 1e-12;

/// Power-divergence index. `lambda = -1/2` gives twice the squared Hellinger
/// distance; the limits `lambda -> 0` and `lambda -> -1` give the two KL
/// orientations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceOrder {
    pub lambda: f64,
}

impl DivergenceOrder {
    pub fn new(lambda: f64) -> Self {
        Self { lambda }
    }

    /// `lambda * (lambda + 1)`, the factor that selects the branch.
    pub fn weight(&self) -> f64 {
        self.lambda * (self.lambda + 1.0)
    }

    /// True when the KL / reverse-KL limiting branch applies.
    pub fn is_kl_branch(&self) -> bool {
        self.weight().abs() < LAMBDA_BRANCH_TOL
    }

    /// True when `2 lambda + 1 = 0`, the Hellinger order.
    pub fn is_hellinger(&self) -> bool {
        (2.0 * self.lambda + 1.0).abs() < LAMBDA_BRANCH_TOL
    }
}

fn check_positive(value: f64, name: &str) -> Result<()> {
    if !(value > 0.0) {
        return Err(Error::domain(format!("{name} must be > 0, got {value}")));
    }
    Ok(())
}

/// Power divergence between N(w1, sigma^2 I) and N(w2, sigma^2 I) with
/// `v_norm2 = ||w1 - w2||_2`.
///
/// Generic branch: `[exp(l(l+1) ||v||^2 / (2 sigma^2)) - 1] / (l(l+1))`;
/// at `l(l+1) = 0` the limit `||v||^2 / (2 sigma^2)` (KL of the shifted
/// isotropic Gaussians).
pub fn gaussian_power_divergence(v_norm2: f64, sigma: f64, order: DivergenceOrder) -> Result<f64> {
    check_positive(sigma, "sigma")?;
    if v_norm2 < 0.0 {
        return Err(Error::domain(format!(
            "v_norm2 must be >= 0, got {v_norm2}"
        )));
    }
    let x = v_norm2 * v_norm2 / (2.0 * sigma * sigma);
    let w = order.weight();
    if order.is_kl_branch() {
        Ok(x)
    } else {
        Ok((w * x).exp_m1() / w)
    }
}

/// Squared Hellinger distance between N(w1, sigma^2 I) and N(w2, sigma^2 I):
/// `2 (1 - exp(-||v||^2 / (8 sigma^2)))`, which is half the order -1/2 power
/// divergence. Values lie in [0, 2).
pub fn hellinger_sq_gaussians(v_norm2: f64, sigma: f64) -> Result<f64> {
    check_positive(sigma, "sigma")?;
    if v_norm2 < 0.0 {
        return Err(Error::domain(format!(
            "v_norm2 must be >= 0, got {v_norm2}"
        )));
    }
    let x = v_norm2 * v_norm2 / (8.0 * sigma * sigma);
    Ok(-2.0 * (-x).exp_m1())
}

/// Exact power divergence between two product-Laplace distributions with
/// common scale `b` and mean difference `v` (componentwise).
///
/// Three branches: the generic product form, the dedicated `lambda = -1/2`
/// form (the generic branch divides by `2 lambda + 1` and must not run
/// there), and the KL form at `lambda in {0, -1}`.
pub fn laplace_power_divergence_exact(v: &[f64], b: f64, order: DivergenceOrder) -> Result<f64> {
    check_positive(b, "b")?;
    let l = order.lambda;
    if order.is_kl_branch() {
        let sum: f64 = v
            .iter()
            .map(|vi| {
                let a = vi.abs();
                2.0 * a - 2.0 * b + 2.0 * b * (-a / b).exp()
            })
            .sum();
        return Ok(sum / (2.0 * b));
    }
    if order.is_hellinger() {
        let prod: f64 = v
            .iter()
            .map(|vi| {
                let t = vi.abs() / (2.0 * b);
                (1.0 + t) * (-t).exp()
            })
            .product();
        return Ok(-4.0 * (prod - 1.0));
    }
    let two_l_plus_1 = 2.0 * l + 1.0;
    let prod: f64 = v
        .iter()
        .map(|vi| {
            let a = vi.abs();
            0.5 * ((l * a / b).exp() * (1.0 + 1.0 / two_l_plus_1)
                + (-(l + 1.0) * a / b).exp() * (1.0 - 1.0 / two_l_plus_1))
        })
        .product();
    Ok((prod - 1.0) / order.weight())
}

/// Upper bound on the Laplace power divergence in terms of `||v||_1`:
/// `[exp(sign(l)(l+1) ||v||_1 / b) - 1] / (l(l+1))`, or `||v||_1 / b` in the
/// KL branch. Dominates [`laplace_power_divergence_exact`].
pub fn laplace_power_divergence_bound(v_norm1: f64, b: f64, order: DivergenceOrder) -> Result<f64> {
    check_positive(b, "b")?;
    if v_norm1 < 0.0 {
        return Err(Error::domain(format!(
            "v_norm1 must be >= 0, got {v_norm1}"
        )));
    }
    let l = order.lambda;
    if order.is_kl_branch() {
        return Ok(v_norm1 / b);
    }
    let exponent = l.signum() * (l + 1.0) * v_norm1 / b;
    Ok(exponent.exp_m1() / order.weight())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_zero_shift_is_zero() {
        for &l in &[-3.0, -1.0, -0.5, 0.0, 1.0, 2.5] {
            let d = gaussian_power_divergence(0.0, 1.0, DivergenceOrder::new(l)).unwrap();
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn gaussian_unit_shift_order_one() {
        // (1/2)(e - 1)
        let d = gaussian_power_divergence(1.0, 1.0, DivergenceOrder::new(1.0)).unwrap();
        assert_relative_eq!(d, 0.5 * (1f64.exp() - 1.0), epsilon = 1e-12);
    }

    #[test]
    fn gaussian_kl_branch() {
        let d = gaussian_power_divergence(1.0, 1.0, DivergenceOrder::new(0.0)).unwrap();
        assert_relative_eq!(d, 0.5, epsilon = 1e-15);
        let d = gaussian_power_divergence(1.0, 1.0, DivergenceOrder::new(-1.0)).unwrap();
        assert_relative_eq!(d, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_rejects_bad_sigma() {
        assert!(gaussian_power_divergence(1.0, 0.0, DivergenceOrder::new(1.0)).is_err());
        assert!(gaussian_power_divergence(1.0, -2.0, DivergenceOrder::new(1.0)).is_err());
    }

    #[test]
    fn hellinger_examples() {
        assert_eq!(hellinger_sq_gaussians(0.0, 1.0).unwrap(), 0.0);
        let d = hellinger_sq_gaussians(2.0, 1.0).unwrap();
        assert_relative_eq!(d, 2.0 * (1.0 - (-0.5f64).exp()), epsilon = 1e-12);
        // disjoint-support limit
        let d = hellinger_sq_gaussians(1e6, 1.0).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert!(hellinger_sq_gaussians(1.0, 0.0).is_err());
    }

    #[test]
    fn hellinger_is_half_the_order_minus_half_divergence() {
        for &v in &[0.1, 0.7, 1.3, 3.0] {
            for &s in &[0.5, 1.0, 2.5] {
                let pd =
                    gaussian_power_divergence(v, s, DivergenceOrder::new(-0.5)).unwrap();
                let hd = hellinger_sq_gaussians(v, s).unwrap();
                assert_relative_eq!(pd, 2.0 * hd, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_branch_continuity_near_zero_lambda() {
        // small mean shift keeps the quadratic term tiny, where the limit is tight
        for &l in &[1e-4, -1e-4, -1.0 + 1e-4, -1.0 - 1e-4] {
            let generic =
                gaussian_power_divergence(0.1, 1.0, DivergenceOrder::new(l)).unwrap();
            let kl = gaussian_power_divergence(0.1, 1.0, DivergenceOrder::new(0.0)).unwrap();
            assert!((generic - kl).abs() < 1e-8, "lambda = {l}");
        }
    }

    #[test]
    fn laplace_exact_zero_shift() {
        for &l in &[-2.0, -0.5, 0.0, 1.0] {
            let d =
                laplace_power_divergence_exact(&[0.0, 0.0, 0.0], 1.0, DivergenceOrder::new(l))
                    .unwrap();
            assert!(d.abs() < 1e-15);
        }
    }

    #[test]
    fn laplace_exact_hellinger_point() {
        // -4 [ (1 + 1/2) e^{-1/2} - 1 ]
        let d = laplace_power_divergence_exact(&[1.0], 1.0, DivergenceOrder::new(-0.5)).unwrap();
        let expected = -4.0 * (1.5 * (-0.5f64).exp() - 1.0);
        assert_relative_eq!(d, expected, epsilon = 1e-12);
    }

    #[test]
    fn laplace_exact_kl_point() {
        let d = laplace_power_divergence_exact(&[1.0], 1.0, DivergenceOrder::new(0.0)).unwrap();
        assert_relative_eq!(d, (-1f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn laplace_bound_examples() {
        let b = laplace_power_divergence_bound(0.0, 1.0, DivergenceOrder::new(1.0)).unwrap();
        assert_eq!(b, 0.0);
        let b = laplace_power_divergence_bound(1.0, 1.0, DivergenceOrder::new(-0.5)).unwrap();
        assert_relative_eq!(b, -4.0 * ((-0.5f64).exp() - 1.0), epsilon = 1e-12);
        let b = laplace_power_divergence_bound(1.0, 1.0, DivergenceOrder::new(0.0)).unwrap();
        assert_relative_eq!(b, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn laplace_bound_dominates_exact_on_grid() {
        let orders = [-2.5, -1.5, -0.7, -0.5, -0.3, 0.0, 0.6, 1.0, 2.0];
        let vs: [&[f64]; 4] = [&[0.4], &[1.0, 0.3], &[2.0, 0.1, 0.7], &[0.05]];
        for &l in &orders {
            for v in vs {
                for &b in &[0.3, 1.0, 2.7] {
                    let order = DivergenceOrder::new(l);
                    let exact = laplace_power_divergence_exact(v, b, order).unwrap();
                    let norm1: f64 = v.iter().map(|x| x.abs()).sum();
                    let bound = laplace_power_divergence_bound(norm1, b, order).unwrap();
                    assert!(
                        bound >= exact - 1e-12,
                        "lambda={l} v={v:?} b={b}: bound {bound} < exact {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn laplace_rejects_bad_scale() {
        assert!(laplace_power_divergence_exact(&[1.0], 0.0, DivergenceOrder::new(1.0)).is_err());
        assert!(laplace_power_divergence_bound(1.0, -1.0, DivergenceOrder::new(1.0)).is_err());
    }
}
