//! Hellinger-distance differential privacy (HDP) and its power-divergence
//! generalization (PDP), together with private minimum Hellinger distance
//! estimation (PMHDE).
//!
//! The crate has three layers:
//!
//! * **Privacy calculus** — closed-form divergences between noise
//!   distributions ([`divergence`]), mechanism calibration, composition and
//!   cross-framework conversion ([`privacy`]).
//! * **Estimation pipeline** — Epanechnikov kernel density estimation
//!   ([`density`]), the Normal parametric model ([`models`]), the Monte-Carlo
//!   Hellinger loss and its derivatives ([`hdloss`]), private gradient
//!   descent and private Newton-Raphson ([`optimize`]), and sandwich-based
//!   private confidence intervals ([`inference`]).
//! * **Simulation harness** — replication engine, contamination, thresholding
//!   and CSV reporting ([`experiments`]).
//!
//! # Example
//!
//! ```
//! use hdp::privacy::{calibrate_gaussian_hdp, compose_hdp_k, solve_per_step_epsilon};
//!
//! // Noise variance for a query of L2 sensitivity 1 at the 1-HDP level.
//! let spec = calibrate_gaussian_hdp(1.0, 1.0).unwrap();
//! assert!((spec.scale.powi(2) - 1.0 / (8.0 * 2f64.ln())).abs() < 1e-12);
//!
//! // Per-iteration budget for 50 adaptive releases totalling 0.6-HDP.
//! let per_step = solve_per_step_epsilon(0.6, 50).unwrap();
//! assert!((compose_hdp_k(per_step, 50).unwrap() - 0.6).abs() < 1e-10);
//! ```

pub mod density;
pub mod divergence;
pub mod error;
pub mod experiments;
pub mod hdloss;
pub mod inference;
pub mod linalg;
pub mod models;
pub mod optimize;
pub mod privacy;
pub mod quad;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
