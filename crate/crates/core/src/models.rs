//! Parametric family abstraction and the Normal(mu, sigma) reference model.
//!
//! The trait surface is exactly what the loss, optimizer, and covariance code
//! consume: log-density, score, score Jacobian, density Hessian, sensitivity
//! constants, sampling, and projection back into the admissible region.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A parameter vector of a model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub theta: Vec<f64>,
}

impl ModelPoint {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

impl From<Vec<f64>> for ModelPoint {
    fn from(theta: Vec<f64>) -> Self {
        Self { theta }
    }
}

/// Everything evaluated at one `(theta, x)` pair.
#[derive(Debug, Clone)]
pub struct ModelDerivatives {
    pub logdensity: f64,
    /// Score `u(x) = d/dtheta log f(x)`, length m.
    pub score: Vec<f64>,
    /// `d/dtheta u(x)`, row-major m x m, symmetric.
    pub score_jacobian: Vec<f64>,
    /// Hessian of the density itself, `H_f(x)`, row-major m x m.
    pub density_hessian: Vec<f64>,
}

pub trait ParametricModel: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, theta: &[f64], x: f64) -> f64;

    fn density(&self, theta: &[f64], x: f64) -> f64 {
        self.log_density(theta, x).exp()
    }

    fn score(&self, theta: &[f64], x: f64) -> Vec<f64>;

    fn score_jacobian(&self, theta: &[f64], x: f64) -> Vec<f64>;

    fn density_hessian(&self, theta: &[f64], x: f64) -> Vec<f64>;

    fn derivatives(&self, theta: &[f64], x: f64) -> ModelDerivatives {
        ModelDerivatives {
            logdensity: self.log_density(theta, x),
            score: self.score(theta, x),
            score_jacobian: self.score_jacobian(theta, x),
            density_hessian: self.density_hessian(theta, x),
        }
    }

    /// Plug-in sensitivity constants for the loss gradient and Hessian at
    /// sample size `n` with rate exponent `p`.
    fn sensitivities(&self, theta: &[f64], n: usize, p: f64) -> Result<(f64, f64)>;

    fn sample<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> f64;

    /// Clamp `theta` into the admissible region. Returns true when a clamp
    /// was applied.
    fn project(&self, theta: &mut [f64]) -> bool;

    fn is_admissible(&self, theta: &[f64]) -> bool;
}

/// Normal location-scale family parameterized as `theta = (mu, sigma)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalModel {
    /// Lower bound kept on sigma; noisy iterates can otherwise drive the
    /// plug-in sensitivity to infinity.
    pub sigma_min: f64,
}

impl Default for NormalModel {
    fn default() -> Self {
        Self { sigma_min: 0.05 }
    }
}

impl NormalModel {
    pub fn new(sigma_min: f64) -> Self {
        Self { sigma_min }
    }

    fn check_sigma(sigma: f64) -> Result<()> {
        if !(sigma > 0.0) {
            return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(())
    }
}

/// Score of the Normal model: `[(x-mu)/s^2, ((x-mu)^2 - s^2)/s^3]`.
pub fn normal_score(theta: &ModelPoint, x: f64) -> Result<Vec<f64>> {
    let (mu, sigma) = (theta.theta[0], theta.theta[1]);
    NormalModel::check_sigma(sigma)?;
    Ok(NormalModel::default().score(&[mu, sigma], x))
}

/// Density Hessian of the Normal model (2 x 2, row-major).
pub fn normal_density_hessian(theta: &ModelPoint, x: f64) -> Result<Vec<f64>> {
    let (mu, sigma) = (theta.theta[0], theta.theta[1]);
    NormalModel::check_sigma(sigma)?;
    Ok(NormalModel::default().density_hessian(&[mu, sigma], x))
}

/// Plug-in gradient/Hessian sensitivities of the Hellinger loss for the
/// Normal model:
/// `Delta_n = (2 sqrt(6)/sigma) n^{-1/p}` and
/// `Delta_n^H = (sqrt(118)/sigma^2) n^{-1/p}`.
pub fn normal_sensitivities(theta: &ModelPoint, n: usize, p: f64) -> Result<(f64, f64)> {
    NormalModel::default().sensitivities(&theta.theta, n, p)
}

/// The weaker `O(n^{-1/2})` sensitivity regime, exposed so the harness can
/// compare it against the sharp `n^{-1/p}` rate.
pub fn weak_sensitivity_rate(c: f64, n: usize) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::domain(format!("constant must be > 0, got {c}")));
    }
    if n == 0 {
        return Err(Error::domain("n must be >= 1".to_string()));
    }
    Ok(c / (n as f64).sqrt())
}

impl ParametricModel for NormalModel {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, theta: &[f64], x: f64) -> f64 {
        let (mu, sigma) = (theta[0], theta[1]);
        let z = (x - mu) / sigma;
        -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    fn score(&self, theta: &[f64], x: f64) -> Vec<f64> {
        let (mu, sigma) = (theta[0], theta[1]);
        let d = x - mu;
        let s2 = sigma * sigma;
        vec![d / s2, (d * d - s2) / (s2 * sigma)]
    }

    fn score_jacobian(&self, theta: &[f64], x: f64) -> Vec<f64> {
        let (mu, sigma) = (theta[0], theta[1]);
        let d = x - mu;
        let s2 = sigma * sigma;
        let s3 = s2 * sigma;
        let s4 = s2 * s2;
        vec![
            -1.0 / s2,
            -2.0 * d / s3,
            -2.0 * d / s3,
            -3.0 * d * d / s4 + 1.0 / s2,
        ]
    }

    fn density_hessian(&self, theta: &[f64], x: f64) -> Vec<f64> {
        let (mu, sigma) = (theta[0], theta[1]);
        let f = self.density(theta, x);
        let d = x - mu;
        let d2 = d * d;
        let s2 = sigma * sigma;
        let s4 = s2 * s2;
        let s5 = s4 * sigma;
        let s6 = s4 * s2;
        vec![
            f * (d2 - s2) / s4,
            f * d * (d2 - 3.0 * s2) / s5,
            f * d * (d2 - 3.0 * s2) / s5,
            f * (d2 * d2 - 5.0 * s2 * d2 + 2.0 * s4) / s6,
        ]
    }

    fn sensitivities(&self, theta: &[f64], n: usize, p: f64) -> Result<(f64, f64)> {
        let sigma = theta[1];
        Self::check_sigma(sigma)?;
        if !(p > 1.0 && p <= 2.0) {
            return Err(Error::domain(format!(
                "sensitivity exponent p must lie in (1, 2], got {p}"
            )));
        }
        if n == 0 {
            return Err(Error::domain("n must be >= 1".to_string()));
        }
        let rate = (n as f64).powf(-1.0 / p);
        let grad = 2.0 * 6f64.sqrt() / sigma * rate;
        let hess = 118f64.sqrt() / (sigma * sigma) * rate;
        Ok((grad, hess))
    }

    fn sample<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        theta[0] + theta[1] * z
    }

    fn project(&self, theta: &mut [f64]) -> bool {
        if theta[1] < self.sigma_min {
            theta[1] = self.sigma_min;
            true
        } else {
            false
        }
    }

    fn is_admissible(&self, theta: &[f64]) -> bool {
        theta.len() == 2 && theta.iter().all(|t| t.is_finite()) && theta[1] >= self.sigma_min
    }
}
