//! Monte-Carlo approximation of the Hellinger loss `L_n = 2 HD^2(f_theta, g_n)`
//! and its derivatives.
//!
//! The context freezes one set of Monte-Carlo points drawn from the kernel
//! density and caches their density values, so every loss, gradient, Hessian
//! and finite-difference probe within a replication shares common random
//! numbers. The estimator is
//!
//! `L(theta) ~= 2 [2 - (2/r) sum_i sqrt(f_theta(X_i) / g_n(X_i))]`,
//!
//! whose gradient and Hessian follow by differentiating the square-root
//! ratio term by term.

use crate::density::KdeEstimate;
use crate::error::{Error, Result};
use crate::linalg::outer_scaled;
use crate::models::ParametricModel;
use rand::Rng;
use std::cell::Cell;

/// Cap on the density ratio sqrt(f/g); a model iterate that puts mass where
/// the kernel density is tiny would otherwise overflow the sums.
pub const RATIO_CAP: f64 = 1e8;

/// Frozen Monte-Carlo evaluation context for one replication.
pub struct McLossContext<'a, M: ParametricModel> {
    kde: &'a KdeEstimate,
    model: &'a M,
    points: Vec<f64>,
    g_values: Vec<f64>,
    cap_events: Cell<usize>,
}

impl<'a, M: ParametricModel> McLossContext<'a, M> {
    /// Draw `count` Monte-Carlo points from the kernel density and freeze them.
    pub fn sample<R: Rng + ?Sized>(
        kde: &'a KdeEstimate,
        model: &'a M,
        count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::domain("Monte-Carlo sample count must be >= 1"));
        }
        let points = kde.sample(count, rng);
        Self::from_points(kde, model, points)
    }

    /// Use an externally supplied point set (it must lie inside the support
    /// of the kernel density so the ratio denominators are positive).
    pub fn from_points(kde: &'a KdeEstimate, model: &'a M, points: Vec<f64>) -> Result<Self> {
        let g_values: Vec<f64> = points.iter().map(|&x| kde.eval(x)).collect();
        if let Some(&bad) = points
            .iter()
            .zip(&g_values)
            .find(|(_, &g)| !(g > 0.0))
            .map(|(x, _)| x)
        {
            return Err(Error::numeric(format!(
                "kernel density vanishes at Monte-Carlo point {bad}"
            )));
        }
        Ok(Self {
            kde,
            model,
            points,
            g_values,
            cap_events: Cell::new(0),
        })
    }

    pub fn kde(&self) -> &KdeEstimate {
        self.kde
    }

    pub fn model(&self) -> &M {
        self.model
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn g_values(&self) -> &[f64] {
        &self.g_values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// How many ratio evaluations hit [`RATIO_CAP`] so far.
    pub fn cap_events(&self) -> usize {
        self.cap_events.get()
    }

    /// sqrt(f_theta(x)/g(x)), capped and counted.
    fn ratio(&self, theta: &[f64], x: f64, g: f64) -> Result<f64> {
        let w = (self.model.density(theta, x) / g).sqrt();
        if !w.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite density ratio at x = {x}"
            )));
        }
        if w > RATIO_CAP {
            self.cap_events.set(self.cap_events.get() + 1);
            return Ok(RATIO_CAP);
        }
        Ok(w)
    }

    /// Raw Monte-Carlo loss. The exact loss lies in [0, 4]; the Monte-Carlo
    /// form can dip below 0 when the sampled mean of sqrt(f/g) exceeds 1.
    pub fn loss(&self, theta: &[f64]) -> Result<f64> {
        let r = self.len() as f64;
        let mut sum = 0.0;
        for (&x, &g) in self.points.iter().zip(&self.g_values) {
            sum += self.ratio(theta, x, g)?;
        }
        Ok(2.0 * (2.0 - 2.0 * sum / r))
    }

    /// Loss clamped into [0, 4] for reporting.
    pub fn loss_clamped(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.loss(theta)?.clamp(0.0, 4.0))
    }

    /// Gradient `-(2/r) sum sqrt(f/g) u_theta(x)`.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let m = self.model.dim();
        let r = self.len() as f64;
        let mut grad = vec![0.0; m];
        for (&x, &g) in self.points.iter().zip(&self.g_values) {
            let w = self.ratio(theta, x, g)?;
            let u = self.model.score(theta, x);
            for j in 0..m {
                grad[j] -= 2.0 * w * u[j] / r;
            }
        }
        Ok(grad)
    }

    /// Hessian `(1/r) sum sqrt(f/g) u u^T - (2/r) sum sqrt(f/g) H_f / f`.
    pub fn hessian(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let m = self.model.dim();
        let r = self.len() as f64;
        let mut hess = vec![0.0; m * m];
        for (&x, &g) in self.points.iter().zip(&self.g_values) {
            let w = self.ratio(theta, x, g)?;
            let u = self.model.score(theta, x);
            outer_scaled(&u, w / r, m, &mut hess);
            let f = self.model.density(theta, x);
            if f > 0.0 {
                let hf = self.model.density_hessian(theta, x);
                for k in 0..m * m {
                    hess[k] -= 2.0 * w * hf[k] / (f * r);
                }
            }
        }
        Ok(hess)
    }

    /// Mean of the per-point score outer products weighted by the density
    /// ratio: `(1/r) sum (f/g) u u^T`. This estimates the information matrix
    /// `E_f[u u^T]` and is the middle factor of the sandwich covariance.
    pub fn score_outer_mean(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let m = self.model.dim();
        let r = self.len() as f64;
        let mut acc = vec![0.0; m * m];
        for (&x, &g) in self.points.iter().zip(&self.g_values) {
            let w = self.ratio(theta, x, g)?;
            let u = self.model.score(theta, x);
            outer_scaled(&u, w * w / r, m, &mut acc);
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::KdeEstimate;
    use crate::models::NormalModel;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Normal};

    fn make_kde(seed: u64, n: usize) -> KdeEstimate {
        let mut rng = stream(seed, &[10]);
        let normal = Normal::new(5.0, 2.0).unwrap();
        let data: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        KdeEstimate::with_silverman(&data).unwrap()
    }

    #[test]
    fn loss_is_zero_when_densities_agree_on_sample() {
        // single point, f == g there: ratio 1 -> loss 0
        let kde = KdeEstimate::new(&[0.0], 1.0).unwrap();
        let model = NormalModel::default();
        // N(0, sigma) density at 0 equals kde.eval(0) = 0.75 when
        // sigma = 1/(0.75 sqrt(2 pi))
        let sigma = 1.0 / (0.75 * (2.0 * std::f64::consts::PI).sqrt());
        let ctx = McLossContext::from_points(&kde, &model, vec![0.0]).unwrap();
        let loss = ctx.loss(&[0.0, sigma]).unwrap();
        assert!(loss.abs() < 1e-12, "loss = {loss}");
    }

    #[test]
    fn loss_is_four_when_model_mass_is_disjoint() {
        let kde = KdeEstimate::new(&[0.0], 1.0).unwrap();
        let model = NormalModel::default();
        let ctx = McLossContext::from_points(&kde, &model, vec![0.0]).unwrap();
        // model centered 100 sigma away: f(0) ~ 0
        let loss = ctx.loss(&[100.0, 1.0]).unwrap();
        assert_relative_eq!(loss, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn loss_can_go_negative_but_clamp_reports_zero() {
        // ratio 4 at every point -> 2[2 - 2*2] = -4
        let kde = KdeEstimate::new(&[0.0], 1.0).unwrap();
        let model = NormalModel::default();
        let ctx = McLossContext::from_points(&kde, &model, vec![0.0]).unwrap();
        // need f(0) = 16 * g(0) = 12; a sharp spike at 0
        let sigma = 1.0 / (12.0 * (2.0 * std::f64::consts::PI).sqrt());
        let loss = ctx.loss(&[0.0, sigma]).unwrap();
        assert_relative_eq!(loss, -4.0, epsilon = 1e-9);
        assert_eq!(ctx.loss_clamped(&[0.0, sigma]).unwrap(), 0.0);
    }

    #[test]
    fn single_sample_gradient_hand_value() {
        // one MC point with ratio 1: grad = -2 u(x)
        let kde = KdeEstimate::new(&[1.0], 1.0).unwrap();
        let model = NormalModel::default();
        let g1 = kde.eval(1.0);
        // choose theta so f(1) = g(1): mu = 1 makes u = (0, -1/sigma);
        // instead use mu = 0, sigma s.t. f(1) = g1
        // f(1) = phi((1-0)/s)/s; solve numerically for s near 0.9
        let mut s = 0.9;
        for _ in 0..60 {
            let f = model.density(&[0.0, s], 1.0);
            let df = (model.density(&[0.0, s + 1e-7], 1.0) - f) / 1e-7;
            s -= (f - g1) / df;
        }
        let ctx = McLossContext::from_points(&kde, &model, vec![1.0]).unwrap();
        let grad = ctx.gradient(&[0.0, s]).unwrap();
        let u = model.score(&[0.0, s], 1.0);
        assert_relative_eq!(grad[0], -2.0 * u[0], epsilon = 1e-8);
        assert_relative_eq!(grad[1], -2.0 * u[1], epsilon = 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let kde = make_kde(21, 300);
        let model = NormalModel::default();
        let mut rng = stream(21, &[11]);
        let ctx = McLossContext::sample(&kde, &model, 500, &mut rng).unwrap();
        for _ in 0..20 {
            let theta = [
                rand::Rng::random_range(&mut rng, 2.0..8.0),
                rand::Rng::random_range(&mut rng, 0.8..3.5),
            ];
            let grad = ctx.gradient(&theta).unwrap();
            for i in 0..2 {
                let h = 1e-6 * (1.0 + theta[i].abs());
                let mut tp = theta;
                let mut tm = theta;
                tp[i] += h;
                tm[i] -= h;
                let fd = (ctx.loss(&tp).unwrap() - ctx.loss(&tm).unwrap()) / (2.0 * h);
                let denom = grad[i].abs().max(1e-6);
                assert!(
                    ((grad[i] - fd) / denom).abs() < 1e-4,
                    "theta {theta:?} coord {i}: {} vs {}",
                    grad[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let kde = make_kde(22, 300);
        let model = NormalModel::default();
        let mut rng = stream(22, &[12]);
        let ctx = McLossContext::sample(&kde, &model, 500, &mut rng).unwrap();
        for _ in 0..10 {
            let theta = [
                rand::Rng::random_range(&mut rng, 3.0..7.0),
                rand::Rng::random_range(&mut rng, 1.0..3.0),
            ];
            let hess = ctx.hessian(&theta).unwrap();
            assert_relative_eq!(hess[1], hess[2], epsilon = 1e-10);
            for i in 0..2 {
                let h = 1e-5 * (1.0 + theta[i].abs());
                let mut tp = theta;
                let mut tm = theta;
                tp[i] += h;
                tm[i] -= h;
                let gp = ctx.gradient(&tp).unwrap();
                let gm = ctx.gradient(&tm).unwrap();
                for j in 0..2 {
                    let fd = (gp[j] - gm[j]) / (2.0 * h);
                    let denom = hess[i * 2 + j].abs().max(1e-4);
                    assert!(
                        ((hess[i * 2 + j] - fd) / denom).abs() < 1e-4,
                        "entry ({i},{j}): {} vs {fd}",
                        hess[i * 2 + j]
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_near_optimum_approximates_information_matrix() {
        let kde = make_kde(23, 2000);
        let model = NormalModel::default();
        let mut rng = stream(23, &[13]);
        let ctx = McLossContext::sample(&kde, &model, 20_000, &mut rng).unwrap();
        let hess = ctx.hessian(&[5.0, 2.0]).unwrap();
        // I(theta) = diag(1/sigma^2, 2/sigma^2) = diag(0.25, 0.5)
        assert!((hess[0] - 0.25).abs() / 0.25 < 0.10, "H11 = {}", hess[0]);
        assert!((hess[3] - 0.5).abs() / 0.5 < 0.10, "H22 = {}", hess[3]);
    }

    #[test]
    fn descent_decreases_loss_on_clean_data() {
        let kde = make_kde(24, 1000);
        let model = NormalModel::default();
        let mut rng = stream(24, &[14]);
        let ctx = McLossContext::sample(&kde, &model, 1000, &mut rng).unwrap();
        let mut theta = vec![1.0, 1.0];
        let mut prev = ctx.loss(&theta).unwrap();
        for _ in 0..10 {
            let grad = ctx.gradient(&theta).unwrap();
            for i in 0..2 {
                theta[i] -= 0.5 * grad[i];
            }
            let cur = ctx.loss(&theta).unwrap();
            assert!(cur <= prev + 1e-12, "loss rose: {prev} -> {cur}");
            prev = cur;
        }
    }

    #[test]
    fn score_outer_mean_estimates_information() {
        let kde = make_kde(25, 2000);
        let model = NormalModel::default();
        let mut rng = stream(25, &[15]);
        let ctx = McLossContext::sample(&kde, &model, 20_000, &mut rng).unwrap();
        let v = ctx.score_outer_mean(&[5.0, 2.0]).unwrap();
        assert!((v[0] - 0.25).abs() / 0.25 < 0.10, "V11 = {}", v[0]);
        assert!((v[3] - 0.5).abs() / 0.5 < 0.15, "V22 = {}", v[3]);
    }

    #[test]
    fn empty_sample_rejected() {
        let kde = KdeEstimate::new(&[0.0], 1.0).unwrap();
        let model = NormalModel::default();
        let mut rng = stream(1, &[1]);
        assert!(McLossContext::sample(&kde, &model, 0, &mut rng).is_err());
    }

    #[test]
    fn point_outside_support_rejected() {
        let kde = KdeEstimate::new(&[0.0], 1.0).unwrap();
        let model = NormalModel::default();
        assert!(McLossContext::from_points(&kde, &model, vec![5.0]).is_err());
    }
}
