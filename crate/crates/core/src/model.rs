//! Model primitives for the quantile GARCH(1,1) process.
//!
//! The conditional tau-quantile of the observed series takes the ARCH-type
//! form
//!
//! ```text
//! Q_tau(y_t | F_{t-1}) = omega(tau) + alpha1(tau) * sum_{j>=1} beta1(tau)^(j-1) |y_{t-j}|
//! ```
//!
//! with the identifiability constraint omega(0.5) = alpha1(0.5) = 0. With the
//! pre-sample convention y_s = 0 for s <= 0, the truncated quantile used by
//! every estimator is
//!
//! ```text
//! q_t(theta) = omega + alpha1 * sum_{j=1}^{t-1} beta1^(j-1) |y_{t-j}|
//! ```
//!
//! This module provides that recursion and its analytic derivatives, the check
//! loss, the Tukey-lambda quantile family, the self-weights that stabilize
//! estimation under heavy tails, and a Monte-Carlo check of the strict
//! stationarity condition for the random-coefficient representation
//! `y_t = omega(U_t) + alpha1(U_t) * sum_j beta1(U_t)^(j-1) |y_{t-j}|`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Box half-width kept between `beta1` and 1 so geometric sums stay summable.
pub const EPS_BOX: f64 = 1e-6;

/// An observed return series, optionally labeled with date strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    values: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl ReturnSeries {
    /// Builds a series, rejecting empty input and non-finite values.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("series must be non-empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "series value at index {i} is not finite"
            )));
        }
        Ok(ReturnSeries {
            values,
            labels: None,
        })
    }

    pub fn with_labels(values: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "labels length {} does not match values length {}",
                labels.len(),
                values.len()
            )));
        }
        let mut s = Self::new(values)?;
        s.labels = Some(labels);
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Absolute values |y_1|..|y_n|, the history the quantile recursion runs on.
    pub fn abs_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.abs()).collect()
    }

    /// A sub-series of the observations at `range` (0-based, half-open).
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.values.len() {
            return Err(Error::InvalidInput(format!(
                "invalid slice {start}..{end} for series of length {}",
                self.values.len()
            )));
        }
        Ok(ReturnSeries {
            values: self.values[start..end].to_vec(),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
        })
    }
}

/// Coefficients (omega, alpha1, beta1) of the conditional quantile at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QGarchParams {
    pub omega: f64,
    pub alpha1: f64,
    pub beta1: f64,
}

impl QGarchParams {
    pub fn new(omega: f64, alpha1: f64, beta1: f64) -> Result<Self> {
        if !(omega.is_finite() && alpha1.is_finite() && beta1.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        if !(0.0..=1.0 - EPS_BOX).contains(&beta1) {
            return Err(Error::InvalidInput(format!(
                "beta1 = {beta1} outside [0, 1 - {EPS_BOX}]"
            )));
        }
        Ok(QGarchParams {
            omega,
            alpha1,
            beta1,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.omega, self.alpha1, self.beta1]
    }
}

/// Parameters (a0, a1, b1, lambda) of a linear GARCH(1,1) scale process with
/// Tukey-lambda innovation quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TukeyGarchParams {
    pub a0: f64,
    pub a1: f64,
    pub b1: f64,
    pub lambda: f64,
}

impl TukeyGarchParams {
    pub fn new(a0: f64, a1: f64, b1: f64, lambda: f64) -> Result<Self> {
        if !(a0.is_finite() && a1.is_finite() && b1.is_finite() && lambda.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        if a0 <= 0.0 {
            return Err(Error::InvalidInput(format!("a0 = {a0} must be > 0")));
        }
        if a1 < 0.0 {
            return Err(Error::InvalidInput(format!("a1 = {a1} must be >= 0")));
        }
        if !(0.0..=1.0 - EPS_BOX).contains(&b1) {
            return Err(Error::InvalidInput(format!(
                "b1 = {b1} outside [0, 1 - {EPS_BOX}]"
            )));
        }
        if lambda.abs() < 1e-8 {
            return Err(Error::InvalidInput(
                "lambda must be bounded away from 0 (|lambda| >= 1e-8)".into(),
            ));
        }
        Ok(TukeyGarchParams { a0, a1, b1, lambda })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a0, self.a1, self.b1, self.lambda]
    }
}

/// Configuration of the self-weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfWeightConfig {
    /// Sample-quantile level of |y| used as the threshold c.
    pub c_quantile: f64,
    /// Terms of the infinite pre-sample tail are accumulated until they fall
    /// below this tolerance.
    pub truncation_tol: f64,
}

impl Default for SelfWeightConfig {
    fn default() -> Self {
        SelfWeightConfig {
            c_quantile: 0.95,
            truncation_tol: 1e-12,
        }
    }
}

impl SelfWeightConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c_quantile > 0.0 && self.c_quantile < 1.0) {
            return Err(Error::InvalidInput(format!(
                "c_quantile = {} outside (0,1)",
                self.c_quantile
            )));
        }
        if !(self.truncation_tol > 0.0) {
            return Err(Error::InvalidInput("truncation_tol must be > 0".into()));
        }
        Ok(())
    }
}

type CoefFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coefficient functions u -> (omega(u), alpha1(u), beta1(u)) defining the
/// random-coefficient process. Validated on a 10^4-point grid at construction:
/// beta1 must stay in [0,1) and the median constraint
/// omega(0.5) = alpha1(0.5) = 0 must hold.
#[derive(Clone)]
pub struct CoefficientFunctions {
    name: String,
    omega_fn: CoefFn,
    alpha1_fn: CoefFn,
    beta1_fn: CoefFn,
    beta_max: f64,
}

impl fmt::Debug for CoefficientFunctions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientFunctions")
            .field("name", &self.name)
            .field("beta_max", &self.beta_max)
            .finish()
    }
}

const COEF_GRID: usize = 10_000;

impl CoefficientFunctions {
    pub fn new<O, A, B>(name: impl Into<String>, omega_fn: O, alpha1_fn: A, beta1_fn: B) -> Result<Self>
    where
        O: Fn(f64) -> f64 + Send + Sync + 'static,
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut beta_max: f64 = 0.0;
        for i in 1..COEF_GRID {
            let u = i as f64 / COEF_GRID as f64;
            let (w, a, b) = (omega_fn(u), alpha1_fn(u), beta1_fn(u));
            if !(w.is_finite() && a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "coefficient functions non-finite at u = {u}"
                )));
            }
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidInput(format!(
                    "beta1({u}) = {b} outside [0, 1)"
                )));
            }
            beta_max = beta_max.max(b);
        }
        if omega_fn(0.5).abs() > 1e-12 || alpha1_fn(0.5).abs() > 1e-12 {
            return Err(Error::InvalidInput(
                "median constraint violated: omega(0.5) and alpha1(0.5) must be 0".into(),
            ));
        }
        Ok(CoefficientFunctions {
            name: name.into(),
            omega_fn: Arc::new(omega_fn),
            alpha1_fn: Arc::new(alpha1_fn),
            beta1_fn: Arc::new(beta1_fn),
            beta_max,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn omega(&self, u: f64) -> f64 {
        (self.omega_fn)(u)
    }

    pub fn alpha1(&self, u: f64) -> f64 {
        (self.alpha1_fn)(u)
    }

    pub fn beta1(&self, u: f64) -> f64 {
        (self.beta1_fn)(u)
    }

    /// Supremum of beta1 over the validation grid; governs how many lags the
    /// simulator keeps before the geometric tail drops below tolerance.
    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }
}

/// Check loss rho_tau(x) = x * (tau - I(x < 0)). Nonnegative, zero only at x = 0.
pub fn check_loss(tau: f64, x: f64) -> Result<f64> {
    validate_tau(tau)?;
    Ok(check_loss_raw(tau, x))
}

#[inline]
pub(crate) fn check_loss_raw(tau: f64, x: f64) -> f64 {
    if x < 0.0 {
        x * (tau - 1.0)
    } else {
        x * tau
    }
}

/// psi_tau(x) = tau - I(x < 0), the a.e. derivative of the check loss.
/// The indicator is strict, so psi(tau, 0) = tau.
pub fn psi(tau: f64, x: f64) -> Result<f64> {
    validate_tau(tau)?;
    Ok(psi_raw(tau, x))
}

#[inline]
pub(crate) fn psi_raw(tau: f64, x: f64) -> f64 {
    if x < 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

pub(crate) fn validate_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!("tau = {tau} outside (0,1)")));
    }
    Ok(())
}

/// Truncated conditional quantile q_t(theta) given the absolute history
/// |y_1|..|y_{t-1}| (1-based time, empty history for t = 1). Computed by the
/// recursion s_{k+1} = |y_k| + beta1 * s_k with s_1 = 0.
pub fn cond_quantile(theta: &QGarchParams, abs_history: &[f64], t: usize) -> Result<f64> {
    let s = history_sum(theta.beta1, abs_history, t)?;
    Ok(theta.omega + theta.alpha1 * s)
}

fn history_sum(beta1: f64, abs_history: &[f64], t: usize) -> Result<f64> {
    if t < 1 {
        return Err(Error::InvalidInput("time index t must be >= 1".into()));
    }
    if abs_history.len() < t - 1 {
        return Err(Error::InvalidInput(format!(
            "history of length {} too short for t = {t}",
            abs_history.len()
        )));
    }
    let mut s = 0.0;
    for &a in &abs_history[..t - 1] {
        s = a + beta1 * s;
    }
    Ok(s)
}

/// Gradient of `cond_quantile` in (omega, alpha1, beta1):
/// (1, sum_j beta1^(j-1) |y_{t-j}|, alpha1 * sum_j (j-1) beta1^(j-2) |y_{t-j}|).
pub fn cond_quantile_grad(theta: &QGarchParams, abs_history: &[f64], t: usize) -> Result<[f64; 3]> {
    if t < 1 {
        return Err(Error::InvalidInput("time index t must be >= 1".into()));
    }
    if abs_history.len() < t - 1 {
        return Err(Error::InvalidInput(format!(
            "history of length {} too short for t = {t}",
            abs_history.len()
        )));
    }
    let mut x = 0.0;
    let mut d = 0.0;
    for &a in &abs_history[..t - 1] {
        d = x + theta.beta1 * d;
        x = a + theta.beta1 * x;
    }
    Ok([1.0, x, theta.alpha1 * d])
}

/// Full-sample regressor path x_t = sum_{j=1}^{t-1} beta^(j-1) |y_{t-j}| for
/// t = 1..n, by the O(n) recursion.
pub(crate) fn regressor_path(abs_y: &[f64], beta: f64) -> Vec<f64> {
    let n = abs_y.len();
    let mut x = vec![0.0; n];
    let mut s = 0.0;
    for t in 1..n {
        s = abs_y[t - 1] + beta * s;
        x[t] = s;
    }
    x
}

/// Paths (x_t, d_t, e_t) of the geometric sum and its first two derivatives in
/// beta: d_t = sum_{j>=2} (j-1) beta^(j-2) |y_{t-j}|,
/// e_t = sum_{j>=3} (j-1)(j-2) beta^(j-3) |y_{t-j}|.
pub(crate) fn curvature_paths(abs_y: &[f64], beta: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = abs_y.len();
    let (mut x, mut d, mut e) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut xs, mut ds, mut es) = (0.0, 0.0, 0.0);
    for t in 1..n {
        es = 2.0 * ds + beta * es;
        ds = xs + beta * ds;
        xs = abs_y[t - 1] + beta * xs;
        x[t] = xs;
        d[t] = ds;
        e[t] = es;
    }
    (x, d, e)
}

/// Tukey-lambda quantile Q_tau(lambda) = (tau^lambda - (1-tau)^lambda) / lambda.
/// The family excludes lambda = 0.
pub fn tukey_quantile(tau: f64, lambda: f64) -> Result<f64> {
    validate_tau(tau)?;
    validate_lambda(lambda)?;
    Ok((tau.powf(lambda) - (1.0 - tau).powf(lambda)) / lambda)
}

/// Q_tau(lambda) together with its first and second derivatives in lambda:
///
/// ```text
/// dQ  = lambda^-2 { tau^l (l ln tau - 1) - (1-tau)^l (l ln(1-tau) - 1) }
/// ddQ = lambda^-3 { tau^l [(l ln tau - 1)^2 + 1] - (1-tau)^l [(l ln(1-tau) - 1)^2 + 1] }
/// ```
pub fn tukey_quantile_derivs(tau: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    validate_tau(tau)?;
    validate_lambda(lambda)?;
    let (p, q) = (tau, 1.0 - tau);
    let (pl, ql) = (p.powf(lambda), q.powf(lambda));
    let (lp, lq) = (lambda * p.ln() - 1.0, lambda * q.ln() - 1.0);
    let value = (pl - ql) / lambda;
    let d1 = (pl * lp - ql * lq) / (lambda * lambda);
    let d2 = (pl * (lp * lp + 1.0) - ql * (lq * lq + 1.0)) / (lambda * lambda * lambda);
    Ok((value, d1, d2))
}

fn validate_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda.abs() < 1e-8 {
        return Err(Error::InvalidInput(format!(
            "lambda = {lambda} must be finite and bounded away from 0"
        )));
    }
    Ok(())
}

/// Type-7 sample quantile (linear interpolation between order statistics),
/// the single convention used everywhere a sample quantile is needed.
pub fn quantile_type7(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("quantile level {p} outside [0,1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(quantile_type7_sorted(&sorted, p))
}

pub(crate) fn quantile_type7_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Self-weights
///
/// ```text
/// w_t = ( sum_{i>=0} exp(-ln^2(i+1)) * { I(|y_{t-i-1}| <= c) + c^-1 |y_{t-i-1}| I(|y_{t-i-1}| > c) } )^-3
/// ```
///
/// with c the `c_quantile` sample quantile of |y| and y_s = 0 for s <= 0, so
/// pre-sample indices contribute the indicator branch. The pre-sample tail is
/// accumulated until its terms fall below `truncation_tol`; in-sample terms
/// are summed exactly, which makes w_t depend only on y_1..y_{t-1}.
pub fn compute_self_weights(series: &ReturnSeries, cfg: &SelfWeightConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let abs: Vec<f64> = series.abs_values();
    let n = abs.len();
    let c = quantile_type7(&abs, cfg.c_quantile)?;
    if c <= 0.0 {
        return Err(Error::InvalidInput(
            "self-weight threshold c is zero (all observations vanish)".into(),
        ));
    }

    // envelope[i] = exp(-ln^2(i+1)); decays faster than any polynomial.
    let mut envelope = Vec::new();
    let mut i = 0usize;
    loop {
        let e = (-((i + 1) as f64).ln().powi(2)).exp();
        if e < cfg.truncation_tol && i >= n {
            break;
        }
        envelope.push(e);
        if envelope.len() > n + 100_000 {
            break;
        }
        i += 1;
    }
    // tail_sum[m] = sum of envelope terms from index m to the truncation point.
    let mut tail_sum = vec![0.0; envelope.len() + 1];
    for m in (0..envelope.len()).rev() {
        let term = if envelope[m] < cfg.truncation_tol {
            0.0
        } else {
            envelope[m]
        };
        tail_sum[m] = tail_sum[m + 1] + term;
    }

    let mut weights = Vec::with_capacity(n);
    for t in 1..=n {
        // In-sample lags: i = 0..t-2 reaches y_{t-1}..y_1.
        let mut s = 0.0;
        for i in 0..t - 1 {
            let a = abs[t - 2 - i];
            let branch = if a <= c { 1.0 } else { a / c };
            s += envelope[i] * branch;
        }
        // Pre-sample lags (y = 0 hits the indicator branch).
        let m = (t - 1).min(tail_sum.len() - 1);
        s += tail_sum[m];
        let w = s.powi(-3);
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::Numerical(format!(
                "self-weight at t = {t} is not positive-finite"
            )));
        }
        weights.push(w);
    }
    Ok(weights)
}

/// Outcome of the Monte-Carlo strict-stationarity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub satisfied: bool,
    pub sum_estimate: f64,
    pub std_error: f64,
}

/// Monte-Carlo check of the strict-stationarity condition for the
/// random-coefficient process with phi_j(u) = |alpha1(u)| beta1(u)^(j-1):
/// for s <= 1 the series sum_j E[phi_j(U)^s] must stay below 1, and for s > 1
/// the criterion is sum_j (E[phi_j(U)^s])^(1/s) < 1. The verdict applies a
/// two-standard-error safety margin so sampling noise cannot certify a
/// boundary case.
pub fn stationarity_check(
    coef: &CoefficientFunctions,
    s: f64,
    mc_draws: usize,
    j_max: usize,
    seed: u64,
) -> Result<StationarityReport> {
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!("s = {s} must be > 0")));
    }
    if mc_draws < 10_000 {
        return Err(Error::InvalidInput(
            "mc_draws must be at least 10^4 for a stable verdict".into(),
        ));
    }
    if j_max < 1 {
        return Err(Error::InvalidInput("j_max must be >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut alphas = Vec::with_capacity(mc_draws);
    let mut betas = Vec::with_capacity(mc_draws);
    for _ in 0..mc_draws {
        let u = standard_uniform_open(&mut rng);
        let (w, a, b) = (coef.omega(u), coef.alpha1(u), coef.beta1(u));
        if !(w.is_finite() && a.is_finite() && b.is_finite()) {
            return Err(Error::Numerical(format!(
                "coefficient draw at u = {u} is not finite"
            )));
        }
        if b >= 1.0 {
            return Err(Error::Numerical(format!("beta1 draw {b} >= 1 at u = {u}")));
        }
        alphas.push(a.abs());
        betas.push(b);
    }

    let (estimate, std_error) = if s <= 1.0 {
        // Per draw the j-sum is a finite geometric series in beta^s.
        let mut vals = Vec::with_capacity(mc_draws);
        for (&a, &b) in alphas.iter().zip(&betas) {
            vals.push(geometric_phi_sum(a, b, s, j_max));
        }
        mean_and_se(&vals)
    } else {
        // E[phi_j^s] per lag, then the 1/s-power sum; batch means give the
        // standard error of the nonlinear statistic.
        let n_batches = 25;
        let batch = mc_draws / n_batches;
        let mut batch_stats = Vec::with_capacity(n_batches);
        for bi in 0..n_batches {
            let lo = bi * batch;
            let hi = if bi + 1 == n_batches { mc_draws } else { lo + batch };
            batch_stats.push(power_sum_statistic(
                &alphas[lo..hi],
                &betas[lo..hi],
                s,
                j_max,
            ));
        }
        let full = power_sum_statistic(&alphas, &betas, s, j_max);
        let (_, se_batch) = mean_and_se(&batch_stats);
        (full, se_batch)
    };

    Ok(StationarityReport {
        satisfied: estimate + 2.0 * std_error < 1.0,
        sum_estimate: estimate,
        std_error,
    })
}

fn geometric_phi_sum(a: f64, b: f64, s: f64, j_max: usize) -> f64 {
    let a_s = a.powf(s);
    let b_s = b.powf(s);
    if 1.0 - b_s < 1e-300 {
        return a_s * j_max as f64;
    }
    a_s * (1.0 - b_s.powi(j_max as i32)) / (1.0 - b_s)
}

fn power_sum_statistic(alphas: &[f64], betas: &[f64], s: f64, j_max: usize) -> f64 {
    let n = alphas.len() as f64;
    let mut e_j = vec![0.0; j_max];
    for (&a, &b) in alphas.iter().zip(betas) {
        let a_s = a.powf(s);
        let b_s = b.powf(s);
        let mut pow = 1.0;
        for e in e_j.iter_mut() {
            *e += a_s * pow;
            pow *= b_s;
        }
    }
    e_j.iter().map(|e| (e / n).powf(1.0 / s)).sum()
}

fn mean_and_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Uniform(0,1) draw excluding exact zero, so quantile transforms stay finite.
pub(crate) fn standard_uniform_open<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal quantile. The library value is polished with one Newton
/// step on the exact CDF, giving near machine-precision results.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("p = {p} outside (0,1)")));
    }
    let dist = std_normal();
    let mut x = dist.inverse_cdf(p);
    let f = normal_pdf(x);
    if f > 0.0 {
        x -= (dist.cdf(x) - p) / f;
    }
    Ok(x)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn check_loss_matches_hand_values() {
        assert_relative_eq!(check_loss(0.5, 2.0).unwrap(), 1.0);
        assert_eq!(check_loss(0.3, 0.0).unwrap(), 0.0);
        // -1 * (0.05 - 1) = 0.95
        assert_relative_eq!(check_loss(0.05, -1.0).unwrap(), 0.95);
        assert!(check_loss(0.0, 1.0).is_err());
        assert!(check_loss(1.0, 1.0).is_err());
    }

    #[test]
    fn psi_uses_strict_indicator_at_zero() {
        assert_relative_eq!(psi(0.5, 1.0).unwrap(), 0.5);
        assert_relative_eq!(psi(0.05, -0.1).unwrap(), -0.95);
        assert_relative_eq!(psi(0.9, 0.0).unwrap(), 0.9);
    }

    #[test]
    fn check_loss_equals_x_times_psi() {
        for &tau in &[0.05, 0.3, 0.77] {
            for &x in &[-2.5, -0.1, 0.0, 0.4, 3.0] {
                let lhs = check_loss(tau, x).unwrap();
                let rhs = x * psi(tau, x).unwrap();
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn cond_quantile_two_term_example() {
        let theta = QGarchParams::new(0.1, 0.2, 0.5).unwrap();
        let q = cond_quantile(&theta, &[1.0, 2.0], 3).unwrap();
        assert_relative_eq!(q, 0.1 + 0.2 * (2.0 + 0.5 * 1.0));
    }

    #[test]
    fn cond_quantile_alpha_zero_is_constant() {
        let theta = QGarchParams::new(-0.4, 0.0, 0.9).unwrap();
        let q = cond_quantile(&theta, &[3.0, 1.0, 4.0, 1.0], 5).unwrap();
        assert_relative_eq!(q, -0.4);
    }

    #[test]
    fn cond_quantile_fitted_coefficients_example() {
        let theta = QGarchParams::new(-0.380, -0.341, 0.790).unwrap();
        let q = cond_quantile(&theta, &[1.0, 2.0], 3).unwrap();
        assert_relative_eq!(q, -1.33139, max_relative = 1e-10);
    }

    #[test]
    fn cond_quantile_recursion_matches_direct_sum() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..20 {
            let theta = QGarchParams::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() * 0.98,
            )
            .unwrap();
            let t = 1 + rng.random_range(0..1000usize);
            let abs: Vec<f64> = (0..t - 1).map(|_| rng.random::<f64>() * 3.0).collect();
            let q = cond_quantile(&theta, &abs, t).unwrap();
            // direct truncated summation
            let mut s = 0.0;
            for j in 1..t {
                s += theta.beta1.powi(j as i32 - 1) * abs[t - 1 - j];
            }
            let direct = theta.omega + theta.alpha1 * s;
            assert_relative_eq!(q, direct, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn cond_quantile_rejects_bad_index() {
        let theta = QGarchParams::new(0.0, 0.1, 0.5).unwrap();
        assert!(cond_quantile(&theta, &[], 0).is_err());
        assert!(cond_quantile(&theta, &[1.0], 3).is_err());
    }

    #[test]
    fn gradient_matches_hand_example() {
        let theta = QGarchParams::new(0.1, 0.2, 0.5).unwrap();
        let g = cond_quantile_grad(&theta, &[1.0, 2.0], 3).unwrap();
        assert_relative_eq!(g[0], 1.0);
        assert_relative_eq!(g[1], 2.5);
        assert_relative_eq!(g[2], 0.2);
        let g1 = cond_quantile_grad(&theta, &[], 1).unwrap();
        assert_eq!(g1, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            let theta = QGarchParams::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                0.05 + rng.random::<f64>() * 0.9,
            )
            .unwrap();
            let abs: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 2.0).collect();
            let t = 51;
            let g = cond_quantile_grad(&theta, &abs, t).unwrap();
            let h = 1e-6;
            let fd = |bump: [f64; 3]| {
                let tp = QGarchParams {
                    omega: theta.omega + bump[0],
                    alpha1: theta.alpha1 + bump[1],
                    beta1: theta.beta1 + bump[2],
                };
                let tm = QGarchParams {
                    omega: theta.omega - bump[0],
                    alpha1: theta.alpha1 - bump[1],
                    beta1: theta.beta1 - bump[2],
                };
                (cond_quantile(&tp, &abs, t).unwrap() - cond_quantile(&tm, &abs, t).unwrap())
                    / (2.0 * bump.iter().sum::<f64>())
            };
            assert_relative_eq!(g[0], fd([h, 0.0, 0.0]), max_relative = 1e-6, epsilon = 1e-9);
            assert_relative_eq!(g[1], fd([0.0, h, 0.0]), max_relative = 1e-6, epsilon = 1e-9);
            assert_relative_eq!(g[2], fd([0.0, 0.0, h]), max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn curvature_paths_match_direct_sums() {
        let abs = [1.0, 0.5, 2.0, 0.3, 1.2, 0.8];
        let beta = 0.6_f64;
        let (x, d, e) = curvature_paths(&abs, beta);
        for t in 1..=abs.len() {
            let (mut xs, mut ds, mut es) = (0.0, 0.0, 0.0);
            for j in 1..t {
                let a = abs[t - 1 - j];
                xs += beta.powi(j as i32 - 1) * a;
                if j >= 2 {
                    ds += (j - 1) as f64 * beta.powi(j as i32 - 2) * a;
                }
                if j >= 3 {
                    es += ((j - 1) * (j - 2)) as f64 * beta.powi(j as i32 - 3) * a;
                }
            }
            assert_relative_eq!(x[t - 1], xs, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(d[t - 1], ds, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(e[t - 1], es, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn tukey_quantile_reference_values() {
        // lambda = 1 is the linear case 2*tau - 1
        assert_relative_eq!(tukey_quantile(0.3, 1.0).unwrap(), -0.4, max_relative = 1e-12);
        for &l in &[-0.5, -0.2, 0.14, 0.5] {
            assert_abs_diff_eq!(tukey_quantile(0.5, l).unwrap(), 0.0, epsilon = 1e-14);
        }
        // (0.005^-0.2 - 0.995^-0.2) / -0.2 = (2.8854096 - 1.0010030) / -0.2
        assert_relative_eq!(
            tukey_quantile(0.005, -0.2).unwrap(),
            -9.421984,
            max_relative = 1e-6
        );
        assert!(tukey_quantile(0.3, 0.0).is_err());
    }

    #[test]
    fn tukey_quantile_antisymmetric_and_monotone() {
        for &l in &[-0.5, -0.2, 0.14, 0.5] {
            let mut prev = f64::NEG_INFINITY;
            for k in 1..100 {
                let tau = k as f64 / 100.0;
                let q = tukey_quantile(tau, l).unwrap();
                let q_mirror = tukey_quantile(1.0 - tau, l).unwrap();
                assert_abs_diff_eq!(q, -q_mirror, epsilon = 1e-12);
                assert!(q > prev, "not increasing at tau={tau}, lambda={l}");
                prev = q;
            }
        }
    }

    #[test]
    fn tukey_derivatives_match_finite_differences() {
        for &tau in &[0.005, 0.05, 0.3, 0.77, 0.995] {
            for &l in &[-0.7, -0.2, 0.3, 0.9] {
                let (_, d1, d2) = tukey_quantile_derivs(tau, l).unwrap();
                let h = 1e-5;
                let qp = tukey_quantile(tau, l + h).unwrap();
                let qm = tukey_quantile(tau, l - h).unwrap();
                let q0 = tukey_quantile(tau, l).unwrap();
                assert_relative_eq!(d1, (qp - qm) / (2.0 * h), max_relative = 1e-6, epsilon = 1e-8);
                assert_relative_eq!(
                    d2,
                    (qp - 2.0 * q0 + qm) / (h * h),
                    max_relative = 1e-4,
                    epsilon = 1e-6
                );
            }
        }
    }

    #[test]
    fn type7_quantile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_relative_eq!(quantile_type7(&v, 0.0).unwrap(), 1.0);
        assert_relative_eq!(quantile_type7(&v, 1.0).unwrap(), 4.0);
        assert_relative_eq!(quantile_type7(&v, 0.5).unwrap(), 2.5);
        // h = 3 * 0.95 = 2.85 -> 3 + 0.85 * (4 - 3)
        assert_relative_eq!(quantile_type7(&v, 0.95).unwrap(), 3.85);
    }

    #[test]
    fn self_weights_all_below_threshold() {
        // All |y| equal: c equals the common value, every in-sample term is the
        // indicator branch, so w_t = S^-3 with S the full envelope series.
        let series = ReturnSeries::new(vec![1.0; 40]).unwrap();
        let w = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
        let mut s_inf = 0.0;
        let mut i = 0usize;
        loop {
            let e = (-((i + 1) as f64).ln().powi(2)).exp();
            if e < 1e-12 {
                break;
            }
            s_inf += e;
            i += 1;
        }
        assert_relative_eq!(s_inf, 2.240, max_relative = 2e-3);
        let expected = s_inf.powi(-3);
        assert_relative_eq!(expected, 0.0890, max_relative = 2e-2);
        for &wt in &w {
            assert_relative_eq!(wt, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn self_weights_exceedance_branch() {
        // one past value at 2c contributes envelope * 2 instead of envelope * 1
        let mut values = vec![1.0; 30];
        values[9] = 2.0; // |y_10| = 2, c below 2 since 95% quantile of mostly-ones
        let series = ReturnSeries::new(values).unwrap();
        let cfg = SelfWeightConfig::default();
        let abs = series.abs_values();
        let c = quantile_type7(&abs, cfg.c_quantile).unwrap();
        assert!(c < 2.0 && c >= 1.0);
        let w = compute_self_weights(&series, &cfg).unwrap();
        // weight at t = 11: lag i = 0 hits y_10 with branch 2/c
        let baseline = compute_self_weights(&ReturnSeries::new(vec![1.0; 30]).unwrap(), &cfg).unwrap();
        let s_plain = baseline[10].powf(-1.0 / 3.0);
        let s_bumped = w[10].powf(-1.0 / 3.0);
        assert_relative_eq!(s_bumped - s_plain, 2.0 / c - 1.0, max_relative = 1e-9);
    }

    #[test]
    fn self_weights_are_past_measurable() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..60).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let full = ReturnSeries::new(values.clone()).unwrap();
        let cfg = SelfWeightConfig::default();
        let w_full = compute_self_weights(&full, &cfg).unwrap();
        // Appending future observations must not change w_1..w_40 when the
        // threshold c is held fixed; emulate by extending with values that
        // leave the 95% quantile of |y| unchanged.
        let prefix = ReturnSeries::new(values[..40].to_vec()).unwrap();
        let w_prefix = compute_self_weights(&prefix, &cfg).unwrap();
        let c_full = quantile_type7(&full.abs_values(), cfg.c_quantile).unwrap();
        let c_prefix = quantile_type7(&prefix.abs_values(), cfg.c_quantile).unwrap();
        if (c_full - c_prefix).abs() < 1e-15 {
            for t in 0..40 {
                assert_eq!(w_full[t], w_prefix[t], "w at t={t} changed");
            }
        }
        // With a fixed threshold the invariance is exact by construction:
        // recompute both ways through the internal sum with c pinned.
        let w_a = weights_with_fixed_c(&values[..40], c_full, &cfg);
        let w_b = weights_with_fixed_c(&values, c_full, &cfg);
        for t in 0..40 {
            assert_eq!(w_a[t], w_b[t]);
        }
        assert!(w_full.iter().all(|&w| w > 0.0 && w.is_finite()));
        let _ = w_prefix;
    }

    // Direct reimplementation used only to pin down F_{t-1}-measurability.
    fn weights_with_fixed_c(values: &[f64], c: f64, cfg: &SelfWeightConfig) -> Vec<f64> {
        let n = values.len();
        let mut env = Vec::new();
        let mut i = 0usize;
        loop {
            let e = (-((i + 1) as f64).ln().powi(2)).exp();
            if e < cfg.truncation_tol && i >= n {
                break;
            }
            env.push(e);
            i += 1;
        }
        let mut tail = vec![0.0; env.len() + 1];
        for m in (0..env.len()).rev() {
            tail[m] = tail[m + 1] + if env[m] < cfg.truncation_tol { 0.0 } else { env[m] };
        }
        (1..=n)
            .map(|t| {
                let mut s = 0.0;
                for i in 0..t - 1 {
                    let a = values[t - 2 - i].abs();
                    s += env[i] * if a <= c { 1.0 } else { a / c };
                }
                s += tail[(t - 1).min(tail.len() - 1)];
                s.powi(-3)
            })
            .collect()
    }

    #[test]
    fn self_weights_reject_all_zero_series() {
        let series = ReturnSeries::new(vec![0.0; 20]).unwrap();
        assert!(compute_self_weights(&series, &SelfWeightConfig::default()).is_err());
    }

    #[test]
    fn stationarity_trivial_case() {
        let coef = CoefficientFunctions::new(
            "test-constant",
            |u| u - 0.5,
            |_| 0.0,
            |_| 0.5,
        )
        .unwrap();
        let r = stationarity_check(&coef, 1.0, 10_000, 50, 1).unwrap();
        assert!(r.satisfied);
        assert_abs_diff_eq!(r.sum_estimate, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn stationarity_linear_garch_case() {
        // alpha1(u) = 0.1 * F_N^-1(u), beta1 = 0.8: the lag sum collapses to
        // |alpha1| / (1 - beta1) per draw, so the estimate converges to
        // 0.1 * E|Z| / 0.2 = 0.5 * sqrt(2/pi) = 0.3989; equivalently the
        // classical a1 E|Z| + b1 = 0.8798 < 1 criterion holds.
        let coef = CoefficientFunctions::new(
            "linear-garch",
            |u| 0.5 * normal_quantile(u).unwrap(),
            |u| 0.1 * normal_quantile(u).unwrap(),
            |_| 0.8,
        )
        .unwrap();
        let r = stationarity_check(&coef, 1.0, 100_000, 150, 2).unwrap();
        assert!(r.satisfied);
        let expected = 0.1 * (2.0 / std::f64::consts::PI).sqrt() / 0.2;
        assert_relative_eq!(r.sum_estimate, expected, max_relative = 0.02);
        assert!(r.std_error > 0.0 && r.std_error < 0.01);
    }

    #[test]
    fn stationarity_monotone_in_beta() {
        // raising beta pointwise can only increase the sum, never flipping
        // an unsatisfied verdict back to satisfied
        let mut prev_sum = 0.0;
        for &b in &[0.3, 0.6, 0.9, 0.97] {
            let coef = CoefficientFunctions::new(
                "nested-beta",
                |u| u - 0.5,
                |u| 0.8 * (u - 0.5),
                move |_| b,
            )
            .unwrap();
            let r = stationarity_check(&coef, 1.0, 20_000, 1200, 3).unwrap();
            assert!(r.sum_estimate >= prev_sum);
            prev_sum = r.sum_estimate;
        }
    }

    #[test]
    fn stationarity_power_branch_runs() {
        let coef = CoefficientFunctions::new(
            "s-greater-one",
            |u| u - 0.5,
            |u| 0.3 * (u - 0.5),
            |_| 0.5,
        )
        .unwrap();
        let r = stationarity_check(&coef, 2.0, 20_000, 80, 4).unwrap();
        assert!(r.satisfied);
        assert!(r.sum_estimate > 0.0);
    }

    #[test]
    fn normal_quantile_reference_values() {
        assert_abs_diff_eq!(normal_quantile(0.5).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            normal_quantile(0.005).unwrap(),
            -2.5758293035489004,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            normal_quantile(0.975).unwrap(),
            1.959963984540054,
            max_relative = 1e-9
        );
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn normal_pdf_at_zero() {
        assert_relative_eq!(normal_pdf(0.0), 0.3989422804014327, max_relative = 1e-12);
    }

    #[test]
    fn coefficient_functions_validate_median_constraint() {
        assert!(CoefficientFunctions::new("bad", |_| 0.1, |_| 0.0, |_| 0.5).is_err());
        assert!(CoefficientFunctions::new("bad-beta", |u| u - 0.5, |_| 0.0, |_| 1.2).is_err());
        let ok = CoefficientFunctions::new("ok", |u| u - 0.5, |u| 2.0 * (u - 0.5), |u| 0.3 + 0.5 * u)
            .unwrap();
        assert!(ok.beta_max() < 0.8 + 1e-9);
        assert!(ok.beta_max() > 0.79);
    }

    #[test]
    fn return_series_validation() {
        assert!(ReturnSeries::new(vec![]).is_err());
        assert!(ReturnSeries::new(vec![1.0, f64::NAN]).is_err());
        assert!(ReturnSeries::with_labels(vec![1.0], vec!["a".into(), "b".into()]).is_err());
        let s = ReturnSeries::with_labels(vec![1.0, -2.0], vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.abs_values(), vec![1.0, 2.0]);
    }
}
