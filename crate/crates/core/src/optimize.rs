//! Non-private GD/NR and their private counterparts PGD and PNR.
//!
//! Each private iteration releases a perturbed gradient (and, for
//! Newton-Raphson, a perturbed Hessian through the symmetric-matrix
//! mechanism), with the per-iteration level chosen so the K-fold adaptive
//! composition lands exactly on the requested total budget. A total budget
//! of 2 is the vacuous Hellinger level and runs the exact non-private
//! iteration.

use crate::divergence::DivergenceOrder;
use crate::error::{Error, Result};
use crate::hdloss::McLossContext;
use crate::linalg::{mat_vec, sym_inv_floored, symmetrize};
use crate::models::ParametricModel;
use crate::privacy::{
    calibrate_gaussian_pdp, compose_hdp_k, compose_pdp_k, solve_pdp_per_step, solve_pdp_split,
    solve_per_step_epsilon, PrivacyBudget,
};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Eigenvalue magnitude floor used when inverting the (possibly perturbed)
/// Hessian. Sign-preserving: saddle directions keep their orientation, only
/// near-singular magnitudes are lifted.
pub const HESSIAN_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerMode {
    Gd,
    Nr,
}

/// How the per-iteration sensitivity plug-in is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SensitivityRule {
    /// Sharp rate `n^{-1/p}` with model constants, re-evaluated at the
    /// current (projected) iterate.
    Sharp { p: f64 },
    /// Weak rate `C n^{-1/2}`, constant across iterates.
    Weak { c: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub iterations: u32,
    pub learning_rate: f64,
    /// Total HDP budget in (0, 2]; 2 disables the noise entirely.
    pub total_epsilon: f64,
    pub mode: OptimizerMode,
    pub sensitivity: SensitivityRule,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::domain("iteration count must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::domain(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.total_epsilon > 0.0 && self.total_epsilon <= 2.0) {
            return Err(Error::domain(format!(
                "total epsilon must lie in (0, 2], got {}",
                self.total_epsilon
            )));
        }
        if let SensitivityRule::Sharp { p } = self.sensitivity {
            if !(p > 1.0 && p <= 2.0) {
                return Err(Error::domain(format!("p must lie in (1, 2], got {p}")));
            }
        }
        Ok(())
    }

    /// Default iteration budget `ceil(c log n)` for gradient descent.
    pub fn auto_k_gd(n: usize, c: f64) -> u32 {
        ((c * (n as f64).ln()).ceil() as u32).max(1)
    }

    /// Default iteration budget `ceil(c log log n)` for Newton-Raphson.
    pub fn auto_k_nr(n: usize, c: f64) -> u32 {
        ((c * (n as f64).ln().ln().max(0.0)).ceil() as u32).max(1)
    }
}

/// Gaussian noise multiplier `c = (-8 log(1 - eps/2))^{-1/2}`; the per-step
/// standard deviation is `Delta * c`.
pub fn noise_scale_c(eps_prime: f64) -> Result<f64> {
    if !(eps_prime > 0.0 && eps_prime < 2.0) {
        return Err(Error::domain(format!(
            "per-step epsilon must lie in (0, 2), got {eps_prime}"
        )));
    }
    Ok(1.0 / (-8.0 * (1.0 - 0.5 * eps_prime).ln()).sqrt())
}

/// Symmetric m x m matrix with the upper triangle (diagonal included) drawn
/// i.i.d. N(0, scale^2) and mirrored below.
pub fn symmetric_noise_matrix<R: Rng + ?Sized>(m: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let z: f64 = rng.sample(StandardNormal);
            a[i * m + j] = scale * z;
            a[j * m + i] = a[i * m + j];
        }
    }
    a
}

/// Full record of one optimizer run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateTrace {
    /// K+1 parameter vectors, starting point first.
    pub thetas: Vec<Vec<f64>>,
    /// Loss at each iterate (same length as `thetas`).
    pub losses: Vec<f64>,
    /// Gradient noise actually added at each step (zero vectors at eps = 2).
    pub grad_noise: Vec<Vec<f64>>,
    /// Hessian noise matrices (NR only).
    pub hess_noise: Vec<Vec<f64>>,
    /// Budget consumed after each step, by the composition recursion.
    pub eps_after_step: Vec<f64>,
    /// Per-iteration privacy level.
    pub eps_per_step: f64,
    /// Total budget consumed.
    pub epsilon_spent: f64,
    /// Gradient sensitivity used in the last iteration.
    pub last_grad_sensitivity: f64,
    /// Hessian sensitivity used in the last iteration (NR only).
    pub last_hess_sensitivity: f64,
    /// Number of iterations where sigma had to be projected back to the
    /// admissible region.
    pub projections: usize,
}

impl IterateTrace {
    pub fn final_theta(&self) -> &[f64] {
        self.thetas.last().expect("trace holds at least theta0")
    }

    /// Last Hessian perturbation, for the Newton-Raphson CI correction.
    pub fn last_hess_noise(&self) -> Option<&[f64]> {
        self.hess_noise.last().map(|w| w.as_slice())
    }

    /// Write `(rep, iter, mu, sigma, loss, eps_spent)` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W, rep: usize) -> Result<()> {
        for (k, theta) in self.thetas.iter().enumerate() {
            let eps = if k == 0 {
                0.0
            } else {
                self.eps_after_step[k - 1]
            };
            writeln!(
                out,
                "{rep},{k},{},{},{},{eps}",
                theta[0], theta[1], self.losses[k]
            )?;
        }
        Ok(())
    }
}

/// Header for [`IterateTrace::write_csv`] rows.
pub const TRACE_CSV_HEADER: &str = "rep,iter,mu,sigma,loss,eps_spent";

fn sensitivities_at<M: ParametricModel>(
    model: &M,
    rule: SensitivityRule,
    theta: &[f64],
    n: usize,
) -> Result<(f64, f64)> {
    match rule {
        SensitivityRule::Sharp { p } => {
            let mut clamped = theta.to_vec();
            model.project(&mut clamped);
            model.sensitivities(&clamped, n, p)
        }
        SensitivityRule::Weak { c } => {
            let d = crate::models::weak_sensitivity_rate(c, n)?;
            Ok((d, d))
        }
    }
}

/// Private gradient descent:
/// `theta_{k+1} = theta_k - eta (grad L(theta_k) + Delta_n c_{eps'} Z_k)`.
pub fn pgd_run<M: ParametricModel, R: Rng + ?Sized>(
    ctx: &McLossContext<'_, M>,
    cfg: &OptimizerConfig,
    theta0: &[f64],
    rng: &mut R,
) -> Result<IterateTrace> {
    run(ctx, cfg, theta0, rng, OptimizerMode::Gd)
}

/// Private Newton-Raphson:
/// `theta_{k+1} = theta_k - eta (H + W_k)^{-1} (grad + N_k)` with the
/// per-iteration budget split evenly between the gradient and the Hessian.
pub fn pnr_run<M: ParametricModel, R: Rng + ?Sized>(
    ctx: &McLossContext<'_, M>,
    cfg: &OptimizerConfig,
    theta0: &[f64],
    rng: &mut R,
) -> Result<IterateTrace> {
    run(ctx, cfg, theta0, rng, OptimizerMode::Nr)
}

/// Non-private gradient descent with the same bookkeeping (no rng consumed).
pub fn gd_run<M: ParametricModel>(
    ctx: &McLossContext<'_, M>,
    iterations: u32,
    learning_rate: f64,
    theta0: &[f64],
) -> Result<IterateTrace> {
    let cfg = OptimizerConfig {
        iterations,
        learning_rate,
        total_epsilon: 2.0,
        mode: OptimizerMode::Gd,
        sensitivity: SensitivityRule::Sharp { p: 1.7 },
        seed: 0,
    };
    let mut rng = crate::rng::stream(0, &[]);
    run(ctx, &cfg, theta0, &mut rng, OptimizerMode::Gd)
}

/// Non-private Newton-Raphson with the same bookkeeping.
pub fn nr_run<M: ParametricModel>(
    ctx: &McLossContext<'_, M>,
    iterations: u32,
    learning_rate: f64,
    theta0: &[f64],
) -> Result<IterateTrace> {
    let cfg = OptimizerConfig {
        iterations,
        learning_rate,
        total_epsilon: 2.0,
        mode: OptimizerMode::Nr,
        sensitivity: SensitivityRule::Sharp { p: 1.7 },
        seed: 0,
    };
    let mut rng = crate::rng::stream(0, &[]);
    run(ctx, &cfg, theta0, &mut rng, OptimizerMode::Nr)
}

fn run<M: ParametricModel, R: Rng + ?Sized>(
    ctx: &McLossContext<'_, M>,
    cfg: &OptimizerConfig,
    theta0: &[f64],
    rng: &mut R,
    mode: OptimizerMode,
) -> Result<IterateTrace> {
    cfg.validate()?;
    let model = ctx.model();
    let m = model.dim();
    if theta0.len() != m {
        return Err(Error::domain(format!(
            "starting point has dimension {}, model needs {m}",
            theta0.len()
        )));
    }
    if !model.is_admissible(theta0) {
        return Err(Error::domain(format!(
            "starting point {theta0:?} is outside the admissible region"
        )));
    }
    let k_total = cfg.iterations;
    let n = ctx.kde().n();
    let eta = cfg.learning_rate;

    // eps = 2 is the vacuous level: exact non-private path, zero noise.
    let zero_noise = cfg.total_epsilon >= 2.0;
    let eps_per_step = solve_per_step_epsilon(cfg.total_epsilon, k_total)?;
    let c_step = if zero_noise {
        0.0
    } else {
        match mode {
            OptimizerMode::Gd => noise_scale_c(eps_per_step)?,
            // gradient and Hessian each get half the per-iteration budget
            OptimizerMode::Nr => noise_scale_c(0.5 * eps_per_step)?,
        }
    };

    let mut theta = theta0.to_vec();
    let mut trace = IterateTrace {
        thetas: vec![theta.clone()],
        losses: vec![ctx.loss(&theta)?],
        grad_noise: Vec::with_capacity(k_total as usize),
        hess_noise: Vec::new(),
        eps_after_step: Vec::with_capacity(k_total as usize),
        eps_per_step,
        epsilon_spent: 0.0,
        last_grad_sensitivity: 0.0,
        last_hess_sensitivity: 0.0,
        projections: 0,
    };

    for k in 1..=k_total {
        let (d_grad, d_hess) = sensitivities_at(model, cfg.sensitivity, &theta, n)?;
        let grad = ctx.gradient(&theta)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite gradient at iteration {k}, theta = {theta:?}"
            )));
        }

        let noise: Vec<f64> = (0..m)
            .map(|_| d_grad * c_step * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let noised_grad: Vec<f64> = grad.iter().zip(&noise).map(|(g, z)| g + z).collect();

        match mode {
            OptimizerMode::Gd => {
                for i in 0..m {
                    theta[i] -= eta * noised_grad[i];
                }
            }
            OptimizerMode::Nr => {
                let mut hess = ctx.hessian(&theta)?;
                if hess.iter().any(|h| !h.is_finite()) {
                    return Err(Error::numeric(format!(
                        "non-finite Hessian at iteration {k}, theta = {theta:?}"
                    )));
                }
                let w = symmetric_noise_matrix(m, d_hess * c_step, rng);
                for i in 0..m * m {
                    hess[i] += w[i];
                }
                symmetrize(&mut hess, m);
                let inv = sym_inv_floored(&hess, m, HESSIAN_FLOOR);
                let step = mat_vec(&inv, &noised_grad, m);
                for i in 0..m {
                    theta[i] -= eta * step[i];
                }
                trace.hess_noise.push(w);
            }
        }

        if !theta.iter().all(|t| t.is_finite()) {
            return Err(Error::numeric(format!(
                "iterate diverged at iteration {k}"
            )));
        }
        if model.project(&mut theta) {
            trace.projections += 1;
        }

        trace.thetas.push(theta.clone());
        trace.losses.push(ctx.loss(&theta)?);
        trace.grad_noise.push(noise);
        let spent = compose_hdp_k(eps_per_step, k)?;
        trace.eps_after_step.push(spent);
        trace.last_grad_sensitivity = d_grad;
        trace.last_hess_sensitivity = d_hess;
    }

    trace.epsilon_spent = *trace
        .eps_after_step
        .last()
        .expect("at least one iteration");
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::KdeEstimate;
    use crate::models::NormalModel;
    use crate::rng::stream;
    use rand_distr::{Distribution, Normal};

    fn fixture(seed: u64, n: usize) -> (KdeEstimate, NormalModel) {
        let mut rng = stream(seed, &[100]);
        let normal = Normal::new(5.0, 2.0).unwrap();
        let data: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        (KdeEstimate::with_silverman(&data).unwrap(), NormalModel::default())
    }

    fn config(mode: OptimizerMode, eps: f64, k: u32) -> OptimizerConfig {
        OptimizerConfig {
            iterations: k,
            learning_rate: 0.5,
            total_epsilon: eps,
            mode,
            sensitivity: SensitivityRule::Sharp { p: 1.7 },
            seed: 0,
        }
    }

    #[test]
    fn noise_scale_reference_value() {
        let c = noise_scale_c(1.0).unwrap();
        assert!((c - 1.0 / (8.0 * 2f64.ln()).sqrt()).abs() < 1e-12);
        assert!(noise_scale_c(2.0).is_err());
        assert!(noise_scale_c(0.0).is_err());
        // approaching the vacuous level the multiplier vanishes
        assert!(noise_scale_c(2.0 - 1e-9).unwrap() < 3e-5);
    }

    #[test]
    fn symmetric_noise_matrix_properties() {
        let mut rng = stream(3, &[7]);
        let w = symmetric_noise_matrix(3, 0.0, &mut rng);
        assert!(w.iter().all(|&x| x == 0.0));
        let w = symmetric_noise_matrix(3, 1.5, &mut rng);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(w[i * 3 + j], w[j * 3 + i]);
            }
        }
        // entry variance over many draws
        let n = 100_000;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let w = symmetric_noise_matrix(1, 2.0, &mut rng);
            sum2 += w[0] * w[0];
        }
        let var = sum2 / n as f64;
        assert!((var - 4.0).abs() / 4.0 < 0.02, "var = {var}");
    }

    #[test]
    fn pgd_zero_noise_equals_plain_gd() {
        let (kde, model) = fixture(31, 500);
        let mut rng = stream(31, &[101]);
        let ctx = McLossContext::sample(&kde, &model, 500, &mut rng).unwrap();
        let cfg = config(OptimizerMode::Gd, 2.0, 25);
        let mut noise_rng = stream(99, &[1]);
        let private = pgd_run(&ctx, &cfg, &[1.0, 1.0], &mut noise_rng).unwrap();
        let plain = gd_run(&ctx, 25, 0.5, &[1.0, 1.0]).unwrap();
        for (a, b) in private.thetas.iter().zip(&plain.thetas) {
            for i in 0..2 {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }
        assert_eq!(private.epsilon_spent, 2.0);
    }

    #[test]
    fn pnr_zero_noise_equals_plain_nr() {
        let (kde, model) = fixture(32, 500);
        let mut rng = stream(32, &[102]);
        let ctx = McLossContext::sample(&kde, &model, 500, &mut rng).unwrap();
        let cfg = config(OptimizerMode::Nr, 2.0, 5);
        let mut noise_rng = stream(98, &[2]);
        let private = pnr_run(&ctx, &cfg, &[1.0, 1.0], &mut noise_rng).unwrap();
        let plain = nr_run(&ctx, 5, 0.5, &[1.0, 1.0]).unwrap();
        for (a, b) in private.thetas.iter().zip(&plain.thetas) {
            for i in 0..2 {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gd_recovers_truth_on_clean_data() {
        let (kde, model) = fixture(33, 1000);
        let mut rng = stream(33, &[103]);
        let ctx = McLossContext::sample(&kde, &model, 2000, &mut rng).unwrap();
        let trace = gd_run(&ctx, 50, 0.5, &[1.0, 1.0]).unwrap();
        let theta = trace.final_theta();
        assert!((theta[0] - 5.0).abs() < 0.3, "mu = {}", theta[0]);
        assert!((theta[1] - 2.0).abs() < 0.3, "sigma = {}", theta[1]);
    }

    #[test]
    fn nr_recovers_truth_on_clean_data() {
        let (kde, model) = fixture(34, 1000);
        let mut rng = stream(34, &[104]);
        let ctx = McLossContext::sample(&kde, &model, 2000, &mut rng).unwrap();
        let trace = nr_run(&ctx, 5, 0.5, &[1.0, 1.0]).unwrap();
        let theta = trace.final_theta();
        assert!((theta[0] - 5.0).abs() < 0.3, "mu = {}", theta[0]);
        assert!((theta[1] - 2.0).abs() < 0.3, "sigma = {}", theta[1]);
    }

    #[test]
    fn privacy_ledger_reaches_total() {
        let (kde, model) = fixture(35, 300);
        let mut rng = stream(35, &[105]);
        let ctx = McLossContext::sample(&kde, &model, 300, &mut rng).unwrap();
        for &eps in &[0.2, 0.6, 1.0] {
            let cfg = config(OptimizerMode::Gd, eps, 20);
            let mut noise_rng = stream(35, &[106]);
            let trace = pgd_run(&ctx, &cfg, &[1.0, 1.0], &mut noise_rng).unwrap();
            assert!((trace.epsilon_spent - eps).abs() < 1e-10);
            // spent is nondecreasing and capped by the total
            let mut prev = 0.0;
            for &e in &trace.eps_after_step {
                assert!(e >= prev - 1e-15 && e <= eps + 1e-10);
                prev = e;
            }
        }
    }

    #[test]
    fn reproducible_given_seed() {
        let (kde, model) = fixture(36, 300);
        let mut rng = stream(36, &[107]);
        let ctx = McLossContext::sample(&kde, &model, 300, &mut rng).unwrap();
        let cfg = config(OptimizerMode::Gd, 0.6, 15);
        let t1 = pgd_run(&ctx, &cfg, &[1.0, 1.0], &mut stream(5, &[9])).unwrap();
        let t2 = pgd_run(&ctx, &cfg, &[1.0, 1.0], &mut stream(5, &[9])).unwrap();
        assert_eq!(t1.thetas, t2.thetas);
    }

    #[test]
    fn utility_improves_with_budget() {
        let (kde, model) = fixture(37, 1000);
        let mut rng = stream(37, &[108]);
        let ctx = McLossContext::sample(&kde, &model, 1000, &mut rng).unwrap();
        let baseline = gd_run(&ctx, 50, 0.5, &[1.0, 1.0]).unwrap();
        let reference = baseline.final_theta().to_vec();
        let mut mean_dist = Vec::new();
        for &eps in &[0.2, 0.6, 2.0] {
            let cfg = config(OptimizerMode::Gd, eps, 50);
            let mut acc = 0.0;
            let reps = 200;
            for rep in 0..reps {
                let mut noise_rng = stream(1234, &[rep as u64, eps.to_bits()]);
                let trace = pgd_run(&ctx, &cfg, &[1.0, 1.0], &mut noise_rng).unwrap();
                let t = trace.final_theta();
                acc += ((t[0] - reference[0]).powi(2) + (t[1] - reference[1]).powi(2)).sqrt();
            }
            mean_dist.push(acc / reps as f64);
        }
        assert!(
            mean_dist[0] > mean_dist[1] && mean_dist[1] > mean_dist[2],
            "distances not monotone: {mean_dist:?}"
        );
        assert!(mean_dist[2] < 1e-12);
    }

    #[test]
    fn auto_k_defaults() {
        assert_eq!(OptimizerConfig::auto_k_gd(1000, 8.0), 56);
        assert!(OptimizerConfig::auto_k_nr(1000, 3.0) >= 5);
        assert!(OptimizerConfig::auto_k_nr(1000, 3.0) < OptimizerConfig::auto_k_gd(1000, 8.0));
    }

    #[test]
    fn rejects_bad_configs() {
        let (kde, model) = fixture(38, 100);
        let mut rng = stream(38, &[109]);
        let ctx = McLossContext::sample(&kde, &model, 100, &mut rng).unwrap();
        let mut cfg = config(OptimizerMode::Gd, 0.5, 10);
        cfg.learning_rate = 0.0;
        assert!(pgd_run(&ctx, &cfg, &[1.0, 1.0], &mut stream(0, &[])).is_err());
        let cfg2 = config(OptimizerMode::Gd, 2.5, 10);
        assert!(pgd_run(&ctx, &cfg2, &[1.0, 1.0], &mut stream(0, &[])).is_err());
        let cfg3 = config(OptimizerMode::Gd, 0.5, 10);
        assert!(pgd_run(&ctx, &cfg3, &[1.0, 0.0], &mut stream(0, &[])).is_err());
    }

    #[test]
    fn trace_csv_shape() {
        let (kde, model) = fixture(39, 100);
        let mut rng = stream(39, &[110]);
        let ctx = McLossContext::sample(&kde, &model, 100, &mut rng).unwrap();
        let cfg = config(OptimizerMode::Gd, 0.6, 3);
        let trace = pgd_run(&ctx, &cfg, &[1.0, 1.0], &mut stream(1, &[1])).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, 7).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("7,0,"));
        assert!(lines[3].starts_with("7,3,"));
    }
}
