//! Moment-constrained fair optimization.
//!
//! This crate trains linear decision rules (classification, regression,
//! quantile regression) subject to a hierarchy of moment-tensor constraints
//! that enforce approximate statistical independence between the rule output
//! and protected attributes, and evaluates the resulting accuracy/fairness
//! tradeoffs.
//!
//! The main pieces:
//!
//! * [`data`] — CSV ingestion, standardization, and the polynomial feature map;
//! * [`moments`] — empirical moment tensors and constraint coefficients;
//! * [`schedule`] / [`constraints`] — threshold schedules Δ_{m,q} and
//!   constraint-set assembly;
//! * [`solver`] — the convex path (𝔥 = 1) and the constrained convex-concave
//!   procedure (𝔥 = 2);
//! * [`metrics`] — Kolmogorov-Smirnov fairness measures, AUC, out-of-sample
//!   R², moment-based independence diagnostics, and the exact discrete
//!   independence oracle;
//! * [`harness`] — cross-validation sweeps, Pareto frontiers, the fair
//!   hypothesis test, and result emission.

pub mod constraints;
pub mod data;
pub mod error;
pub mod featmap;
pub mod harness;
pub mod metrics;
pub mod moments;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
