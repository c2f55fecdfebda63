//! Epanechnikov kernel density estimation with optional support truncation,
//! Silverman bandwidth selection, and sampling from the fitted density.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Epanechnikov kernel `K(u) = 3/4 (1 - u^2)` on `|u| <= 1`.
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// CDF of the Epanechnikov kernel.
pub fn epanechnikov_cdf(u: f64) -> f64 {
    if u <= -1.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        0.5 + 0.75 * (u - u * u * u / 3.0)
    }
}

/// One draw from the Epanechnikov density: the median of three independent
/// U(-1, 1) variates has exactly this distribution.
pub fn sample_epanechnikov<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let mut u = [
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ];
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    u[1]
}

/// Silverman's rule-of-thumb bandwidth:
/// `0.9 min(sd, IQR/1.34) n^{-1/5}`.
pub fn silverman_bandwidth(data: &[f64]) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::domain(format!(
            "bandwidth selection needs n >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = data.iter().sum::<f64>() / nf;
    let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = sd.min(iqr / 1.34);
    if !(spread > 0.0) {
        return Err(Error::domain(
            "degenerate data: zero spread, no usable bandwidth".to_string(),
        ));
    }
    Ok(0.9 * spread * nf.powf(-0.2))
}

/// Linear-interpolation quantile of already-sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n as f64 - 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = h - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Kernel density estimate over a fixed dataset.
///
/// Observations are kept sorted so evaluation only touches the points inside
/// the kernel window. With a truncation bound `b`, observations outside
/// `(-b, b)` are dropped from the sum but the normalization stays `1/(n c)`,
/// so the estimate integrates to (kept points)/n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KdeEstimate {
    sorted_data: Vec<f64>,
    bandwidth: f64,
    truncation: Option<f64>,
    /// Number of observations in the original dataset (before truncation).
    n: usize,
    /// Half-open index range into `sorted_data` of points inside the window.
    kept: (usize, usize),
}

impl KdeEstimate {
    pub fn new(data: &[f64], bandwidth: f64) -> Result<Self> {
        Self::with_truncation(data, bandwidth, None)
    }

    pub fn with_truncation(data: &[f64], bandwidth: f64, truncation: Option<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::domain(
                "KDE needs at least one observation".to_string(),
            ));
        }
        if !(bandwidth > 0.0) {
            return Err(Error::domain(format!(
                "bandwidth must be > 0, got {bandwidth}"
            )));
        }
        if let Some(b) = truncation {
            if !(b > 0.0) {
                return Err(Error::domain(format!(
                    "truncation bound must be > 0, got {b}"
                )));
            }
        }
        let mut sorted_data = data.to_vec();
        sorted_data.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted_data.len();
        let kept = match truncation {
            None => (0, n),
            Some(b) => {
                let lo = sorted_data.partition_point(|&x| x <= -b);
                let hi = sorted_data.partition_point(|&x| x < b);
                if lo == hi {
                    return Err(Error::domain(
                        "truncation window excludes every observation".to_string(),
                    ));
                }
                (lo, hi)
            }
        };
        Ok(Self {
            sorted_data,
            bandwidth,
            truncation,
            n,
            kept,
        })
    }

    /// Fit with Silverman's bandwidth.
    pub fn with_silverman(data: &[f64]) -> Result<Self> {
        let c = silverman_bandwidth(data)?;
        Self::new(data, c)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    /// Observations contributing to the estimate, in sorted order.
    pub fn kept_points(&self) -> &[f64] {
        &self.sorted_data[self.kept.0..self.kept.1]
    }

    /// Density value `(1/(n c)) sum K((x - X_i)/c)` over kept points.
    pub fn eval(&self, x: f64) -> f64 {
        let c = self.bandwidth;
        let pts = self.kept_points();
        let lo = pts.partition_point(|&p| p < x - c);
        let hi = pts.partition_point(|&p| p <= x + c);
        let mut sum = 0.0;
        for &p in &pts[lo..hi] {
            sum += epanechnikov((x - p) / c);
        }
        sum / (self.n as f64 * c)
    }

    /// CDF of the estimate (integral of [`Self::eval`] up to `x`).
    pub fn cdf(&self, x: f64) -> f64 {
        let mut sum = 0.0;
        for &p in self.kept_points() {
            sum += epanechnikov_cdf((x - p) / self.bandwidth);
        }
        sum / self.n as f64
    }

    /// Draw `count` points `Y = X_I + c xi` with `I` uniform over the kept
    /// observations and `xi` Epanechnikov.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        let pts = self.kept_points();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let idx = rng.random_range(0..pts.len());
            out.push(pts[idx] + self.bandwidth * sample_epanechnikov(rng));
        }
        out
    }

    /// Bounds outside which the density is exactly zero.
    pub fn support(&self) -> (f64, f64) {
        let pts = self.kept_points();
        (pts[0] - self.bandwidth, pts[pts.len() - 1] + self.bandwidth)
    }
}
