//! Mechanism calibration, budget composition, and conversions into other
//! privacy frameworks.
//!
//! Internally everything is a `(lambda, epsilon)` power-divergence budget.
//! The Hellinger level is the `lambda = -1/2` slice with the power-divergence
//! epsilon equal to twice the HDP epsilon; the factor of two is applied
//! exactly once, at the [`PrivacyBudget::hdp`] / [`PrivacyBudget::hdp_epsilon`]
//! boundary.

use crate::divergence::DivergenceOrder;
use crate::error::{Error, Result};
use crate::special::inverse_normal_cdf;
use serde::{Deserialize, Serialize};

/// Absolute tolerance for the bisection solvers (exact Laplace scale,
/// per-step epsilon inversion).
const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

/// A `(lambda, epsilon)` power-divergence privacy level.
///
/// For `lambda (lambda + 1) < 0` the divergence is bounded above by
/// `-1/(lambda (lambda+1))`, so epsilon must stay inside that window; the
/// boundary value itself is admitted as the vacuous (non-private) level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    lambda: f64,
    epsilon: f64,
}

impl PrivacyBudget {
    pub fn new(lambda: f64, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::domain(format!(
                "epsilon must be finite and > 0, got {epsilon}"
            )));
        }
        if !lambda.is_finite() {
            return Err(Error::domain("lambda must be finite".to_string()));
        }
        let w = lambda * (lambda + 1.0);
        if w < 0.0 {
            let cap = -1.0 / w;
            if epsilon > cap {
                return Err(Error::domain(format!(
                    "epsilon = {epsilon} exceeds the admissible window (0, {cap}] for lambda = {lambda}"
                )));
            }
        }
        Ok(Self { lambda, epsilon })
    }

    /// An epsilon-HDP budget, stored as `(-1/2, 2 eps)`.
    pub fn hdp(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 2.0) {
            return Err(Error::domain(format!(
                "HDP epsilon must lie in (0, 2], got {eps}"
            )));
        }
        Self::new(-0.5, 2.0 * eps)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The power-divergence epsilon.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The HDP epsilon, if this budget sits on the Hellinger slice.
    pub fn hdp_epsilon(&self) -> Option<f64> {
        DivergenceOrder::new(self.lambda)
            .is_hellinger()
            .then_some(0.5 * self.epsilon)
    }

    pub fn order(&self) -> DivergenceOrder {
        DivergenceOrder::new(self.lambda)
    }

    /// Vacuous budget: the divergence bound is saturated, no noise required.
    pub fn is_vacuous(&self) -> bool {
        let w = self.lambda * (self.lambda + 1.0);
        w < 0.0 && (self.epsilon + 1.0 / w).abs() < 1e-12
    }
}

/// Which additive mechanism a noise scale belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MechanismKind {
    Gaussian,
    Laplace,
}

/// Calibrated mechanism parameters together with the sensitivity they were
/// derived from. `scale` is the Gaussian sigma or the Laplace b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: MechanismKind,
    pub scale: f64,
    pub sensitivity: f64,
    pub dim: usize,
}

impl NoiseSpec {
    pub fn variance(&self) -> f64 {
        match self.kind {
            MechanismKind::Gaussian => self.scale * self.scale,
            MechanismKind::Laplace => 2.0 * self.scale * self.scale,
        }
    }
}

fn check_sensitivity(delta: f64) -> Result<()> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::domain(format!(
            "sensitivity must be finite and >= 0, got {delta}"
        )));
    }
    Ok(())
}

/// Gaussian noise variance for a `(lambda, epsilon)` budget:
/// `sigma^2 = Delta^2 l(l+1) / (2 log(1 + l(l+1) eps))`, with the
/// `Delta^2 / (2 eps)` limit when `l(l+1) = 0`.
pub fn calibrate_gaussian_pdp(delta_l2: f64, budget: PrivacyBudget) -> Result<NoiseSpec> {
    calibrate_gaussian_pdp_dim(delta_l2, budget, 1)
}

pub fn calibrate_gaussian_pdp_dim(
    delta_l2: f64,
    budget: PrivacyBudget,
    dim: usize,
) -> Result<NoiseSpec> {
    check_sensitivity(delta_l2)?;
    let order = budget.order();
    let w = order.weight();
    let variance = if order.is_kl_branch() {
        delta_l2 * delta_l2 / (2.0 * budget.epsilon())
    } else {
        let log_arg = 1.0 + w * budget.epsilon();
        if log_arg < 0.0 {
            return Err(Error::domain(format!(
                "inadmissible budget: 1 + l(l+1) eps = {log_arg} < 0"
            )));
        }
        // log_arg = 0 at the vacuous boundary: ln -> -inf, variance -> 0
        delta_l2 * delta_l2 * w / (2.0 * log_arg.ln())
    };
    Ok(NoiseSpec {
        kind: MechanismKind::Gaussian,
        scale: variance.max(0.0).sqrt(),
        sensitivity: delta_l2,
        dim,
    })
}

/// Gaussian noise for an epsilon-HDP target:
/// `sigma^2 = Delta^2 / (8 log(1 / (1 - eps/2)))`. `eps = 2` is the vacuous
/// level and yields zero noise.
pub fn calibrate_gaussian_hdp(delta_l2: f64, epsilon_hdp: f64) -> Result<NoiseSpec> {
    check_sensitivity(delta_l2)?;
    let budget = PrivacyBudget::hdp(epsilon_hdp)?;
    calibrate_gaussian_pdp(delta_l2, budget)
}

/// Laplace scale for a `(lambda, epsilon)` budget (Lemma-level bound):
/// `b = max{sign(l)(l+1) Delta, sign(l+1) l Delta} / log(l(l+1) eps + 1)`,
/// with `Delta / eps` when `l(l+1) = 0`. `sign(0) = 0` by convention; the
/// zero-weight orders never reach the max expression.
pub fn calibrate_laplace_pdp(delta_l1: f64, budget: PrivacyBudget) -> Result<NoiseSpec> {
    calibrate_laplace_pdp_dim(delta_l1, budget, 1)
}

pub fn calibrate_laplace_pdp_dim(
    delta_l1: f64,
    budget: PrivacyBudget,
    dim: usize,
) -> Result<NoiseSpec> {
    check_sensitivity(delta_l1)?;
    let order = budget.order();
    let l = order.lambda;
    let b = if order.is_kl_branch() {
        delta_l1 / budget.epsilon()
    } else {
        let log_arg = order.weight() * budget.epsilon() + 1.0;
        if log_arg < 0.0 {
            return Err(Error::domain(format!(
                "inadmissible budget: l(l+1) eps + 1 = {log_arg} < 0"
            )));
        }
        let sign = |x: f64| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        };
        let numerator = (sign(l) * (l + 1.0) * delta_l1).max(sign(l + 1.0) * l * delta_l1);
        if delta_l1 == 0.0 {
            0.0
        } else {
            numerator / log_arg.ln()
        }
    };
    Ok(NoiseSpec {
        kind: MechanismKind::Laplace,
        scale: b.max(0.0),
        sensitivity: delta_l1,
        dim,
    })
}

/// Sharper one-dimensional Laplace scale for an epsilon-HDP target, obtained
/// by solving `-2[(1 + t) e^{-t} - 1] = eps` with `t = Delta / (2b)`.
/// Strictly below the product-bound scale for every `eps` in (0, 2).
pub fn calibrate_laplace_hdp_exact_1d(delta_l1: f64, epsilon_hdp: f64) -> Result<NoiseSpec> {
    if !(delta_l1 > 0.0) {
        return Err(Error::domain(format!(
            "exact 1-d calibration needs sensitivity > 0, got {delta_l1}"
        )));
    }
    if !(epsilon_hdp > 0.0 && epsilon_hdp < 2.0) {
        return Err(Error::domain(format!(
            "exact 1-d calibration needs eps in (0, 2), got {epsilon_hdp}"
        )));
    }
    // f(t) = 2[1 - (1+t)e^{-t}] increases from 0 to 2 on t in (0, inf)
    let f = |t: f64| 2.0 * (1.0 - (1.0 + t) * (-t).exp());
    let mut hi = 1.0;
    while f(hi) < epsilon_hdp {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::numeric(
                "no bracket for the exact Laplace scale".to_string(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..ROOT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if f(mid) < epsilon_hdp {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < ROOT_TOL * (1.0 + hi) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(NoiseSpec {
        kind: MechanismKind::Laplace,
        scale: delta_l1 / (2.0 * t),
        sensitivity: delta_l1,
        dim: 1,
    })
}

/// Two-fold (adaptive or sequential) PDP composition:
/// `e1 + e2 + l(l+1) e1 e2`.
pub fn compose_pdp(e1: f64, e2: f64, lambda: f64) -> f64 {
    e1 + e2 + lambda * (lambda + 1.0) * e1 * e2
}

/// Parallel composition is the max of the two levels.
pub fn compose_parallel(e1: f64, e2: f64) -> f64 {
    e1.max(e2)
}

/// Two-fold HDP composition: `e1 + e2 - e1 e2 / 2`, equivalently
/// `2 - (2 - e1)(2 - e2)/2`. Stays in [0, 2] for inputs in [0, 2].
pub fn compose_hdp(e1: f64, e2: f64) -> Result<f64> {
    for &e in &[e1, e2] {
        if !(0.0..=2.0).contains(&e) {
            return Err(Error::domain(format!(
                "HDP epsilon must lie in [0, 2], got {e}"
            )));
        }
    }
    Ok(e1 + e2 - 0.5 * e1 * e2)
}

/// K-fold HDP self-composition `h_K` via the recursion
/// `h_j(x) = x + h_{j-1}(x) - x h_{j-1}(x)/2`, `h_1(x) = x`.
/// (The closed form `2(1 - (1 - x/2)^K)` agrees; the recursion is the
/// definition and is what runs here.)
pub fn compose_hdp_k(eps_per_step: f64, k: u32) -> Result<f64> {
    if !(0.0..=2.0).contains(&eps_per_step) {
        return Err(Error::domain(format!(
            "HDP epsilon must lie in [0, 2], got {eps_per_step}"
        )));
    }
    let mut h = 0.0;
    for _ in 0..k {
        h = eps_per_step + h - 0.5 * eps_per_step * h;
    }
    Ok(h)
}

/// Per-step budget `eps'` with `h_K(eps') = eps_total`, by bisection on the
/// recursion. Returns `eps_total` itself for `K = 1` and the vacuous fixed
/// point 2 when `eps_total = 2`.
pub fn solve_per_step_epsilon(eps_total: f64, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("step count must be >= 1".to_string()));
    }
    if !(eps_total > 0.0 && eps_total <= 2.0) {
        return Err(Error::domain(format!(
            "total HDP epsilon must lie in (0, 2], got {eps_total}"
        )));
    }
    if k == 1 || eps_total == 2.0 {
        return Ok(eps_total);
    }
    // h_K is increasing with h_K(eps/K) <= eps <= h_K(eps)
    let mut lo = eps_total / k as f64;
    let mut hi = eps_total;
    for _ in 0..ROOT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let h = compose_hdp_k(mid, k)?;
        if (h - eps_total).abs() <= ROOT_TOL {
            return Ok(mid);
        }
        if h < eps_total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// K-fold same-order PDP self-composition via the two-fold rule.
pub fn compose_pdp_k(eps_per_step: f64, k: u32, lambda: f64) -> f64 {
    let mut e = 0.0;
    for _ in 0..k {
        e = compose_pdp(e, eps_per_step, lambda);
    }
    e
}

/// Per-step PDP budget whose K-fold composition lands on `eps_total`,
/// by bisection (the composition is increasing in the per-step level).
pub fn solve_pdp_per_step(eps_total: f64, k: u32, lambda: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("step count must be >= 1".to_string()));
    }
    // validates admissibility of the total
    let _ = PrivacyBudget::new(lambda, eps_total)?;
    if k == 1 {
        return Ok(eps_total);
    }
    let mut lo = 0.0;
    let mut hi = eps_total;
    for _ in 0..ROOT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let e = compose_pdp_k(mid, k, lambda);
        if (e - eps_total).abs() <= ROOT_TOL {
            return Ok(mid);
        }
        if e < eps_total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Equal two-way split of a PDP level: the `e` with
/// `compose_pdp(e, e, lambda) = eps`. Closed form
/// `(sqrt(1 + w eps) - 1)/w` for `w = lambda(lambda+1) != 0`, else `eps/2`.
pub fn solve_pdp_split(eps: f64, lambda: f64) -> f64 {
    let w = lambda * (lambda + 1.0);
    if w.abs() < crate::divergence::LAMBDA_BRANCH_TOL {
        0.5 * eps
    } else {
        ((1.0 + w * eps).sqrt() - 1.0) / w
    }
}

/// Group privacy for k-neighbor datasets: `min(k^2 eps, 2)`.
pub fn group_privacy_hdp(eps: f64, k: u32) -> Result<f64> {
    if !(0.0..=2.0).contains(&eps) {
        return Err(Error::domain(format!(
            "HDP epsilon must lie in [0, 2], got {eps}"
        )));
    }
    Ok(((k as f64) * (k as f64) * eps).min(2.0))
}

/// HDP to approximate DP: an eps-HDP mechanism is `(0, sqrt(eps))`-DP.
pub fn hdp_to_approx_dp(eps: f64) -> Result<(f64, f64)> {
    if !(0.0..=2.0).contains(&eps) {
        return Err(Error::domain(format!(
            "HDP epsilon must lie in [0, 2], got {eps}"
        )));
    }
    Ok((0.0, eps.sqrt()))
}

/// HDP to Gaussian DP: `mu = 2 Phi^{-1}((sqrt(eps) + 1)/2)`. For `eps >= 1`
/// the quantile argument reaches 1 and no finite GDP parameter exists; that
/// is reported as [`Error::NoFiniteGdpBound`], not a number.
pub fn hdp_to_gdp(eps: f64) -> Result<f64> {
    if !(0.0..2.0).contains(&eps) {
        return Err(Error::domain(format!(
            "HDP epsilon must lie in [0, 2), got {eps}"
        )));
    }
    if eps == 0.0 {
        return Ok(0.0);
    }
    let arg = 0.5 * (eps.sqrt() + 1.0);
    if arg >= 1.0 {
        return Err(Error::NoFiniteGdpBound(eps));
    }
    Ok(2.0 * inverse_normal_cdf(arg)?)
}

/// Renyi-DP statement implied by a `(lambda, epsilon)` budget with
/// `lambda > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpConversion {
    /// Renyi order `alpha = lambda + 1`.
    pub alpha: f64,
    /// Exact epsilon: `(1/lambda) log(eps l(l+1) + 1)`.
    pub eps_rdp: f64,
    /// The looser `alpha * eps` statement from the same equivalence.
    pub eps_rdp_loose: f64,
}

/// PDP to RDP. Defined for `lambda > 0` only.
pub fn pdp_to_rdp(budget: PrivacyBudget) -> Result<RdpConversion> {
    let l = budget.lambda();
    if l <= 0.0 {
        return Err(Error::UnsupportedConversion(format!(
            "RDP equivalence requires lambda > 0, got {l}"
        )));
    }
    let alpha = l + 1.0;
    let eps_rdp = (budget.epsilon() * l * (l + 1.0)).ln_1p() / l;
    Ok(RdpConversion {
        alpha,
        eps_rdp,
        eps_rdp_loose: alpha * budget.epsilon(),
    })
}

/// PDP to `(eps, delta)`-DP:
/// `(1/lambda) log((l(l+1) eps + 1)/delta)` for `lambda > 0`, and
/// `(-1/(lambda+1)) log((l(l+1) eps + 1)/delta)` for `lambda < -1`.
pub fn pdp_to_approx_dp(budget: PrivacyBudget, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let l = budget.lambda();
    let w = budget.order().weight();
    let log_term = ((w * budget.epsilon() + 1.0) / delta).ln();
    if l > 0.0 {
        Ok(log_term / l)
    } else if l < -1.0 {
        Ok(-log_term / (l + 1.0))
    } else {
        Err(Error::UnsupportedConversion(format!(
            "approximate-DP conversion is undefined for lambda in [-1, 0], got {l}"
        )))
    }
}

/// An additive Gaussian PDP mechanism with `lambda > 0` also satisfies
/// eps-zCDP at the same epsilon; there is no calculus behind this statement,
/// it is a pass-through of the budget's epsilon.
pub fn pdp_to_zcdp_note(budget: PrivacyBudget) -> Result<f64> {
    if budget.lambda() <= 0.0 {
        return Err(Error::UnsupportedConversion(format!(
            "zCDP link stated for lambda > 0, got {}",
            budget.lambda()
        )));
    }
    Ok(budget.epsilon())
}

/// Running composition state for a sequence of same-order releases.
///
/// A value type: own it per thread or clone it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetAccumulator {
    lambda: f64,
    spent: f64,
    steps: u32,
}

impl BudgetAccumulator {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            spent: 0.0,
            steps: 0,
        }
    }

    pub fn hdp() -> Self {
        Self::new(-0.5)
    }

    /// Record one release at level `eps` (same-order PDP composition).
    pub fn spend(&mut self, eps: f64) {
        self.spent = compose_pdp(self.spent, eps, self.lambda);
        self.steps += 1;
    }

    /// Record one HDP release; `self` must be on the Hellinger slice.
    pub fn spend_hdp(&mut self, eps_hdp: f64) -> Result<()> {
        if !DivergenceOrder::new(self.lambda).is_hellinger() {
            return Err(Error::domain(
                "spend_hdp on a non-Hellinger accumulator".to_string(),
            ));
        }
        self.spent = 2.0 * compose_hdp(0.5 * self.spent, eps_hdp)?;
        self.steps += 1;
        Ok(())
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn spent_hdp(&self) -> Option<f64> {
        DivergenceOrder::new(self.lambda)
            .is_hellinger()
            .then_some(0.5 * self.spent)
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }
}
