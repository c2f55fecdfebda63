//! Sandwich covariance, private covariance release, and plain/corrected
//! confidence intervals for the private estimates.
//!
//! The covariance of `sqrt(n)(theta_hat - theta_g)` is estimated by
//! `H^{-1} M H^{-1}` where `H` is the loss Hessian and `M` the
//! ratio-weighted mean of score outer products (the empirical information).
//! The corrected intervals widen the plain ones by the variance contributed
//! by the last iteration's privacy noise.

use crate::error::{Error, Result};
use crate::hdloss::McLossContext;
use crate::linalg::{mat_mul, sym_inv_floored, sym_psd_clip, symmetrize};
use crate::models::{ModelPoint, ParametricModel};
use crate::optimize::{
    noise_scale_c, symmetric_noise_matrix, IterateTrace, OptimizerMode, SensitivityRule,
    HESSIAN_FLOOR,
};
use crate::special::inverse_normal_cdf;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// How the gradient-descent CI correction enters under the square root.
///
/// The additive term `2 eta Delta_n c` has standard-deviation units while it
/// is added to a variance; `Squared` uses `2 (eta Delta_n c)^2` instead,
/// which is the variance of the last step's injected noise (times two).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CorrectionStyle {
    /// `V_jj/n + 2 eta Delta_n c` as displayed.
    Verbatim,
    /// `V_jj/n + 2 (eta Delta_n c)^2`.
    #[default]
    Squared,
}

/// Confidence-interval report for one estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiReport {
    pub estimate: ModelPoint,
    /// Sandwich covariance of `sqrt(n)(theta_hat - theta_g)`, row-major.
    pub cov: Vec<f64>,
    pub ci_plain: Vec<(f64, f64)>,
    pub ci_corrected: Vec<(f64, f64)>,
    pub level: f64,
    /// Budget consumed by the estimate itself; releasing the covariance
    /// alongside costs 2 more epsilons (3 total).
    pub epsilon_total: f64,
}

impl CiReport {
    pub fn covers(&self, truth: &[f64], corrected: bool) -> Vec<bool> {
        let cis = if corrected {
            &self.ci_corrected
        } else {
            &self.ci_plain
        };
        cis.iter()
            .zip(truth)
            .map(|(&(lo, hi), &t)| lo <= t && t <= hi)
            .collect()
    }
}

/// Sandwich covariance `H^{-1} M H^{-1}` at `theta`, symmetric PSD.
pub fn sandwich_cov<M: ParametricModel>(
    ctx: &McLossContext<'_, M>,
    theta: &[f64],
) -> Result<Vec<f64>> {
    let m = ctx.model().dim();
    let hess = ctx.hessian(theta)?;
    let middle = ctx.score_outer_mean(theta)?;
    assemble_sandwich(&hess, &middle, m)
}

fn assemble_sandwich(hess: &[f64], middle: &[f64], m: usize) -> Result<Vec<f64>> {
    if hess.iter().chain(middle).any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite sandwich inputs".to_string()));
    }
    let hinv = sym_inv_floored(hess, m, HESSIAN_FLOOR);
    let mut v = mat_mul(&mat_mul(&hinv, middle, m), &hinv, m);
    symmetrize(&mut v, m);
    Ok(sym_psd_clip(&v, m))
}

/// Private sandwich: both factors released through the symmetric-matrix
/// mechanism at level `eps` each, then reassembled and PSD-clipped.
/// At `eps = 2` the noise vanishes and the result equals [`sandwich_cov`].
pub fn private_cov<M: ParametricModel, R: Rng + ?Sized>(
    ctx: &McLossContext<'_, M>,
    theta: &[f64],
    eps: f64,
    rule: SensitivityRule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(Error::domain(format!(
            "covariance release level must lie in (0, 2], got {eps}"
        )));
    }
    let m = ctx.model().dim();
    let n = ctx.kde().n();
    let c = if eps >= 2.0 { 0.0 } else { noise_scale_c(eps)? };
    let (d_grad, d_hess) = match rule {
        SensitivityRule::Sharp { p } => {
            let mut clamped = theta.to_vec();
            ctx.model().project(&mut clamped);
            ctx.model().sensitivities(&clamped, n, p)?
        }
        SensitivityRule::Weak { c } => {
            let d = crate::models::weak_sensitivity_rate(c, n)?;
            (d, d)
        }
    };

    let mut hess = ctx.hessian(theta)?;
    let w1 = symmetric_noise_matrix(m, d_hess * c, rng);
    for i in 0..m * m {
        hess[i] += w1[i];
    }
    symmetrize(&mut hess, m);

    let mut middle = ctx.score_outer_mean(theta)?;
    let w2 = symmetric_noise_matrix(m, d_grad * d_grad * c, rng);
    for i in 0..m * m {
        middle[i] += w2[i];
    }
    symmetrize(&mut middle, m);

    assemble_sandwich(&hess, &middle, m)
}

/// Confidence intervals around the final iterate of `trace`.
///
/// Plain: `theta_j +/- z sqrt(V_jj / n)`.
/// Corrected (GD): the last-iteration noise term per [`CorrectionStyle`].
/// Corrected (NR): `theta_j +/- z sqrt(V_jj/n + C_jj)` with
/// `C = eta^2 (H+W)^{-1} S (H+W)^{-1}`, `S` the per-coordinate noise
/// variance (or its verbatim unsquared scale).
pub fn corrected_ci<M: ParametricModel>(
    ctx: &McLossContext<'_, M>,
    trace: &IterateTrace,
    mode: OptimizerMode,
    learning_rate: f64,
    level: f64,
    style: CorrectionStyle,
) -> Result<CiReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let m = ctx.model().dim();
    let n = ctx.kde().n() as f64;
    let theta = trace.final_theta();
    let cov = sandwich_cov(ctx, theta)?;
    let z = inverse_normal_cdf(0.5 * (1.0 + level))?;
    let eta = learning_rate;

    let eps_prime = trace.eps_per_step;
    let zero_noise = eps_prime >= 2.0;

    let correction: Vec<f64> = match mode {
        OptimizerMode::Gd => {
            let c = if zero_noise {
                0.0
            } else {
                noise_scale_c(eps_prime)?
            };
            let base = trace.last_grad_sensitivity * c;
            let term = match style {
                CorrectionStyle::Verbatim => 2.0 * eta * base,
                CorrectionStyle::Squared => 2.0 * (eta * base) * (eta * base),
            };
            vec![term; m]
        }
        OptimizerMode::Nr => {
            let c = if zero_noise {
                0.0
            } else {
                noise_scale_c(0.5 * eps_prime)?
            };
            let base = trace.last_grad_sensitivity * c;
            let scale = match style {
                CorrectionStyle::Verbatim => base,
                CorrectionStyle::Squared => base * base,
            };
            let mut hess = ctx.hessian(theta)?;
            if let Some(w) = trace.last_hess_noise() {
                for i in 0..m * m {
                    hess[i] += w[i];
                }
            }
            symmetrize(&mut hess, m);
            let hinv = sym_inv_floored(&hess, m, HESSIAN_FLOOR);
            let prod = mat_mul(&hinv, &hinv, m);
            (0..m).map(|j| eta * eta * scale * prod[j * m + j]).collect()
        }
    };

    let mut plain = Vec::with_capacity(m);
    let mut corr = Vec::with_capacity(m);
    for j in 0..m {
        let var = cov[j * m + j] / n;
        let hw_plain = z * var.sqrt();
        let hw_corr = z * (var + correction[j].max(0.0)).sqrt();
        plain.push((theta[j] - hw_plain, theta[j] + hw_plain));
        corr.push((theta[j] - hw_corr, theta[j] + hw_corr));
    }

    Ok(CiReport {
        estimate: ModelPoint::new(theta.to_vec()),
        cov,
        ci_plain: plain,
        ci_corrected: corr,
        level,
        epsilon_total: trace.epsilon_spent,
    })
}
