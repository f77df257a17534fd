//! Quantile GARCH(1,1) modeling toolkit.
//!
//! The conditional tau-quantile of a return series is modeled as
//!
//! ```text
//! Q_tau(y_t | F_{t-1}) = omega(tau) + alpha1(tau) * sum_{j>=1} beta1(tau)^(j-1) |y_{t-j}|
//! ```
//!
//! and the crate covers the full workflow around that model:
//!
//! - [`model`] — core primitives: check loss, the truncated quantile recursion
//!   and its derivatives, Tukey-lambda quantiles, self-weights, and a
//!   Monte-Carlo strict-stationarity check.
//! - [`simulate`] — exact simulation of the random-coefficient process.
//! - [`solver`] — exact weighted linear quantile-regression subproblem solvers.
//! - [`qr`] — self-weighted quantile regression at a single level, with
//!   asymptotic covariance and standard errors.
//! - [`inference`] — Cramér–von Mises / Kolmogorov–Smirnov tests of coefficient
//!   constancy across quantile levels, with subsampling critical values.
//! - [`cqr`] — composite quantile regression for a GARCH(1,1) scale process
//!   with Tukey-lambda innovations, plus HAC covariance machinery.
//! - [`backtest`] — rolling VaR forecasts and coverage backtests (empirical
//!   coverage, prediction error, conditional-coverage and dynamic-quantile
//!   tests, filtered historical simulation baseline).

pub mod backtest;
pub mod cqr;
mod error;
pub mod inference;
mod linalg;
pub mod model;
pub mod qr;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
