//! Self-weighted composite quantile regression under a Tukey-lambda linear
//! GARCH approximation.
//!
//! The estimator pools K nearby levels tau_k around a target tau0 and solves
//!
//! ```text
//! min_phi sum_t sum_k w_t * rho_{tau_k}(y_t - Q_{tau_k}(lambda) * h_t(phi)),
//! h_t = a0/(1-b1) + a1 * x_t(b1)
//! ```
//!
//! over phi = (a0, a1, b1, lambda). For fixed (b1, lambda) the problem is
//! linear in (a0' = a0/(1-b1), a1) under nonnegativity bounds and is solved
//! exactly as one stacked K-level problem; the outer nonconvex pair is
//! scanned on a 2-D grid and then locally refined on successively halved
//! grids. The transform to per-level quantile GARCH coefficients, the HAC
//! covariance of the pooled scores with a quadratic-spectral kernel and
//! automatic bandwidth, and the validation-loss selection of the level
//! spacing h complete the module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{
    check_loss_raw, curvature_paths, psi_raw, regressor_path, tukey_quantile,
    tukey_quantile_derivs, validate_tau, QGarchParams, ReturnSeries, TukeyGarchParams, EPS_BOX,
};
use crate::qr::{
    bandwidth_hall_sheather, resolve_weights, weights_id, CONDITION_WARNING, F_CAP,
};
use crate::solver::{solve_linear2_scan, solve_linear2_warm, Linear2Problem};

/// Lower bound keeping the transformed intercept a0' = a0/(1-b1) positive.
const A0_FLOOR: f64 = 1e-8;

/// Grid cells with |lambda| below this are skipped: the quantile family
/// excludes lambda = 0.
const LAMBDA_MIN: f64 = 1e-8;

/// The default outer grid for b1: 0.02, 0.04, ..., 0.98.
pub fn default_b1_grid() -> Vec<f64> {
    (1..=49).map(|i| i as f64 * 0.02).collect()
}

/// The default outer grid for lambda: -0.9, -0.85, ..., 0.9 with 0 excluded.
pub fn default_lambda_grid() -> Vec<f64> {
    (-18..=18)
        .filter(|&i| i != 0)
        .map(|i| i as f64 * 0.05)
        .collect()
}

/// Configuration of one composite fit.
#[derive(Debug, Clone)]
pub struct CqrConfig {
    /// Target quantile level the composite grid is anchored at.
    pub tau0: f64,
    /// Spacing bandwidth: the K levels cover [tau0, tau0 + h] on the side of
    /// the median away from tau0 (increasing for tau0 < 0.5, decreasing
    /// otherwise).
    pub h: f64,
    /// Number of composite levels (>= 3).
    pub k_levels: usize,
    /// Precomputed observation weights; `None` computes self-weights with
    /// the default configuration.
    pub weights: Option<Vec<f64>>,
    pub b1_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    /// Rounds of local 5x5 refinement on halved grid steps.
    pub refine_rounds: usize,
    /// Pins a1 when set (collapsed bound), for degenerate-data diagnostics.
    pub fixed_a1: Option<f64>,
}

impl CqrConfig {
    pub fn new(tau0: f64, h: f64) -> Self {
        CqrConfig {
            tau0,
            h,
            k_levels: 19,
            weights: None,
            b1_grid: default_b1_grid(),
            lambda_grid: default_lambda_grid(),
            refine_rounds: 3,
            fixed_a1: None,
        }
    }

    /// The composite levels tau_k = tau0 ± h(k-1)/(K-1), ordered away from
    /// the median so all levels stay on tau0's side of 0.5.
    pub fn tau_levels(&self) -> Result<Vec<f64>> {
        validate_tau(self.tau0)?;
        if self.k_levels < 3 {
            return Err(Error::InvalidInput(format!(
                "k_levels = {} below the minimum of 3",
                self.k_levels
            )));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidInput(format!("h = {} must be > 0", self.h)));
        }
        let sign = if self.tau0 < 0.5 { 1.0 } else { -1.0 };
        let step = self.h / (self.k_levels - 1) as f64;
        let levels: Vec<f64> = (0..self.k_levels)
            .map(|k| self.tau0 + sign * step * k as f64)
            .collect();
        for &t in &levels {
            validate_tau(t)?;
            if (t - 0.5) * (self.tau0 - 0.5) < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "composite level {t} crosses the median from tau0 = {}",
                    self.tau0
                )));
            }
        }
        Ok(levels)
    }
}

/// A fitted composite quantile regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqrFit {
    pub phi_hat: TukeyGarchParams,
    pub objective_value: f64,
    /// Asymptotic covariance of sqrt(n)(phi_hat - phi), when computed.
    pub cov: Option<[[f64; 4]; 4]>,
    /// HAC kernel bandwidth used for `cov`, when computed.
    pub hac_bandwidth: Option<f64>,
    pub tau_levels: Vec<f64>,
    /// Hash of the weight sequence the fit used, for compatibility checks.
    pub weights_id: u64,
}

/// Exact composite objective at phi for the given levels.
pub fn cqr_objective(
    series: &ReturnSeries,
    weights: &[f64],
    levels: &[f64],
    phi: &TukeyGarchParams,
) -> Result<f64> {
    let n = series.len();
    if weights.len() != n {
        return Err(Error::InvalidInput(
            "weights length does not match series".into(),
        ));
    }
    let abs = series.abs_values();
    let y = series.values();
    let x = regressor_path(&abs, phi.b1);
    let a0p = phi.a0 / (1.0 - phi.b1);
    let mut total = 0.0;
    for &tau in levels {
        let q = tukey_quantile(tau, phi.lambda)?;
        for t in 0..n {
            let fitted = q * (a0p + phi.a1 * x[t]);
            total += weights[t] * check_loss_raw(tau, y[t] - fitted);
        }
    }
    Ok(total)
}

/// Fits the composite estimator by an exact inner solve on an outer
/// (b1, lambda) grid scan with local refinement.
///
/// For fixed (b1, lambda) the fitted quantile is linear in (a0', a1) with
/// per-row level multipliers Q_{tau_k}(lambda), so the inner problem is one
/// stacked nonnegatively-constrained two-regressor quantile program solved
/// exactly. The outer scan iterates lambda ascending then b1 ascending and
/// keeps strict improvements, so ties resolve toward the smaller lambda and
/// then the smaller b1. Refinement rounds re-center a 5x5 grid on the
/// incumbent with the steps halved each round, clamped to the valid ranges
/// and skipping near-zero lambda.
pub fn cqr_fit(series: &ReturnSeries, cfg: &CqrConfig) -> Result<CqrFit> {
    let levels = cfg.tau_levels()?;
    let n = series.len();
    if n < 100 {
        return Err(Error::InvalidInput(format!(
            "series length {n} below the minimum of 100"
        )));
    }
    let w = resolve_weights(series, &cfg.weights)?;
    let abs = series.abs_values();
    if abs.iter().all(|&a| a == 0.0) {
        return Err(Error::InvalidInput(
            "degenerate series: all observations are zero".into(),
        ));
    }
    for &b in &cfg.b1_grid {
        if !b.is_finite() || b < 0.0 || b > 1.0 - EPS_BOX {
            return Err(Error::InvalidInput(format!(
                "b1 grid value {b} outside [0, {}]",
                1.0 - EPS_BOX
            )));
        }
    }
    for &l in &cfg.lambda_grid {
        if !l.is_finite() || l.abs() < LAMBDA_MIN || l.abs() > 1.0 {
            return Err(Error::InvalidInput(format!(
                "lambda grid value {l} outside [-1, -{LAMBDA_MIN}] u [{LAMBDA_MIN}, 1]"
            )));
        }
    }
    if cfg.b1_grid.is_empty() || cfg.lambda_grid.is_empty() {
        return Err(Error::InvalidInput("empty outer grid".into()));
    }
    if let Some(a1) = cfg.fixed_a1 {
        if !a1.is_finite() || a1 < 0.0 {
            return Err(Error::InvalidInput(format!(
                "fixed a1 = {a1} must be finite and >= 0"
            )));
        }
    }

    let y = series.values();
    let kk = levels.len();
    // Stacked rows are level-major: row index k*n + t.
    let mut u = vec![0.0; kk * n];
    let mut row_w = vec![0.0; kk * n];
    let mut row_tau = vec![0.0; kk * n];
    for k in 0..kk {
        for t in 0..n {
            u[k * n + t] = y[t];
            row_w[k * n + t] = w[t];
            row_tau[k * n + t] = levels[k];
        }
    }

    struct Best {
        obj: f64,
        b1: f64,
        lambda: f64,
        a0p: f64,
        a1: f64,
    }
    let mut best: Option<Best> = None;
    let a1_bounds = match cfg.fixed_a1 {
        Some(a1) => (a1, a1),
        None => (0.0, f64::INFINITY),
    };

    // v1 row = Q_{tau_k}, v2 row = Q_{tau_k} * x_t(b1). Scratch buffers are
    // refilled per cell; the x path is shared across the lambda column.
    // Scan cells use the fast localized solve — its sub-1e-5 relative
    // objective slack cannot flip a meaningful cell comparison — and the
    // winning cell is re-solved with the full optimality certificate at the
    // end.
    let mut v1 = vec![0.0; kk * n];
    let mut v2 = vec![0.0; kk * n];
    let mut cell = |b1: f64,
                    lambda: f64,
                    x: &[f64],
                    warm: Option<(f64, f64)>,
                    certify: bool,
                    best: &mut Option<Best>|
     -> Result<(f64, f64)> {
        let mut qs = Vec::with_capacity(kk);
        for &tau in &levels {
            qs.push(tukey_quantile(tau, lambda)?);
        }
        for k in 0..kk {
            let q = qs[k];
            for t in 0..n {
                v1[k * n + t] = q;
                v2[k * n + t] = q * x[t];
            }
        }
        let p = Linear2Problem {
            u: &u,
            v1: &v1,
            v2: &v2,
            w: &row_w,
            taus: &row_tau,
            bounds1: (A0_FLOOR, f64::INFINITY),
            bounds2: a1_bounds,
        };
        let solved = if certify {
            solve_linear2_warm(&p, warm)
        } else {
            solve_linear2_scan(&p, warm)
        };
        let (a0p, a1, obj) =
            solved.map_err(|e| Error::at("composite inner solve at lambda", lambda, e))?;
        let better = match best {
            None => true,
            Some(b) => obj < b.obj,
        };
        if better {
            *best = Some(Best {
                obj,
                b1,
                lambda,
                a0p,
                a1,
            });
        }
        Ok((a0p, a1))
    };

    for &lambda in &cfg.lambda_grid {
        let mut warm: Option<(f64, f64)> = None;
        for &b1 in &cfg.b1_grid {
            let x = regressor_path(&abs, b1);
            warm = Some(cell(b1, lambda, &x, warm, false, &mut best)?);
        }
    }

    let mut incumbent = best.take().expect("outer grid evaluated at least once");
    let mut step_b = if cfg.b1_grid.len() > 1 {
        cfg.b1_grid[1] - cfg.b1_grid[0]
    } else {
        0.02
    };
    let mut step_l = if cfg.lambda_grid.len() > 1 {
        cfg.lambda_grid[1] - cfg.lambda_grid[0]
    } else {
        0.05
    };
    for _ in 0..cfg.refine_rounds {
        step_b *= 0.5;
        step_l *= 0.5;
        let center = (incumbent.b1, incumbent.lambda);
        let mut best = Some(incumbent);
        for dl in -2i32..=2 {
            let lambda = center.1 + dl as f64 * step_l;
            if lambda.abs() < LAMBDA_MIN || lambda.abs() > 1.0 {
                continue;
            }
            let mut warm = None;
            for db in -2i32..=2 {
                let b1 = (center.0 + db as f64 * step_b).clamp(0.0, 1.0 - EPS_BOX);
                let x = regressor_path(&abs, b1);
                warm = Some(cell(b1, lambda, &x, warm, false, &mut best)?);
            }
        }
        incumbent = best.expect("refinement keeps the incumbent");
    }

    // Certified exact re-solve at the winning cell.
    let final_cell = (incumbent.b1, incumbent.lambda);
    let warm = Some((incumbent.a0p, incumbent.a1));
    let mut best = Some(incumbent);
    let x = regressor_path(&abs, final_cell.0);
    cell(final_cell.0, final_cell.1, &x, warm, true, &mut best)?;
    let incumbent = best.expect("final solve keeps the incumbent");

    let phi_hat = TukeyGarchParams::new(
        incumbent.a0p * (1.0 - incumbent.b1),
        incumbent.a1,
        incumbent.b1,
        incumbent.lambda,
    )?;
    Ok(CqrFit {
        phi_hat,
        objective_value: incumbent.obj,
        cov: None,
        hac_bandwidth: None,
        tau_levels: levels,
        weights_id: weights_id(&w),
    })
}

/// Convenience wrapper: fit, then attach the asymptotic covariance and the
/// HAC bandwidth it used.
pub fn cqr_fit_with_covariance(
    series: &ReturnSeries,
    cfg: &CqrConfig,
    bandwidth_multiplier: f64,
    simplified: bool,
) -> Result<(CqrFit, CqrCovariance)> {
    let mut fit = cqr_fit(series, cfg)?;
    let weights = resolve_weights(series, &cfg.weights)?;
    let cov = cqr_asymptotic_cov(series, &fit, &weights, bandwidth_multiplier, simplified)?;
    fit.cov = Some(cov.sigma);
    fit.hac_bandwidth = if cov.hac_bandwidth.is_finite() {
        Some(cov.hac_bandwidth)
    } else {
        None
    };
    Ok((fit, cov))
}

/// Per-level quantile GARCH coefficients implied by a composite fit:
/// (a0 Q_tau(lambda)/(1-b1), a1 Q_tau(lambda), b1).
pub fn g_transform(phi: &TukeyGarchParams, tau: f64) -> Result<QGarchParams> {
    let q = tukey_quantile(tau, phi.lambda)?;
    Ok(QGarchParams {
        omega: phi.a0 * q / (1.0 - phi.b1),
        alpha1: phi.a1 * q,
        beta1: phi.b1,
    })
}

/// Quadratic-spectral kernel; the removable singularity at zero is handled
/// by the quartic Taylor expansion.
pub fn qs_kernel(x: f64) -> f64 {
    let z = 6.0 * std::f64::consts::PI * x / 5.0;
    if z.abs() <= 0.01 {
        return 1.0 - z * z / 10.0 + z.powi(4) / 280.0;
    }
    3.0 / (z * z) * (z.sin() / z - z.cos())
}

/// Kernel-weighted long-run covariance of score rows with the small-sample
/// factor n/(n-d):
///
/// ```text
/// n/(n-d) * sum_{l=-n+1}^{n-1} K(l/B_n) Gamma(l),
/// Gamma(l) = n^-1 sum_t X_t X_{t-l}'
/// ```
///
/// symmetrized after accumulation.
pub fn hac_cov(x_rows: &[[f64; 4]], b_n: f64, d: usize) -> Result<[[f64; 4]; 4]> {
    let n = x_rows.len();
    if n <= d {
        return Err(Error::InvalidInput(format!(
            "need more than d = {d} rows, got {n}"
        )));
    }
    if !(b_n > 0.0) || !b_n.is_finite() {
        return Err(Error::InvalidInput(format!("B_n = {b_n} must be > 0")));
    }
    let mut acc = Mat::zeros(4);
    for lag in 0..n {
        let k = qs_kernel(lag as f64 / b_n);
        if k == 0.0 {
            continue;
        }
        // Gamma(lag) and, for lag > 0, its transpose Gamma(-lag) together.
        let mut gamma = Mat::zeros(4);
        for t in lag..n {
            let (a, b) = (&x_rows[t], &x_rows[t - lag]);
            for i in 0..4 {
                for j in 0..4 {
                    gamma.add_at(i, j, a[i] * b[j]);
                }
            }
        }
        gamma.scale(1.0 / n as f64);
        acc.add(&gamma, k);
        if lag > 0 {
            for i in 0..4 {
                for j in 0..4 {
                    acc.add_at(i, j, k * gamma.get(j, i));
                }
            }
        }
    }
    acc.scale(n as f64 / (n - d) as f64);
    acc.symmetrize();
    Ok(acc.to_array4())
}

/// Automatic QS-kernel bandwidth from column-wise AR(1) prewhitening:
///
/// ```text
/// alpha(2) = sum_i iota_i 4 rho_i^2 sigma_i^4 / (1-rho_i)^8
///          / sum_i iota_i sigma_i^4 / (1-rho_i)^4,
/// B_n = 1.3221 (n alpha(2))^(1/5)
/// ```
///
/// floored at 1. The AR coefficients come from no-intercept least squares of
/// X_t on X_{t-1} per column, clamped to |rho| <= 0.99.
pub fn auto_bandwidth(x_rows: &[[f64; 4]], iota: Option<&[f64; 4]>) -> Result<f64> {
    let n = x_rows.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 rows for the AR(1) bandwidth, got {n}"
        )));
    }
    let iota = iota.copied().unwrap_or([1.0; 4]);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..4 {
        let col: Vec<f64> = x_rows.iter().map(|r| r[i]).collect();
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for t in 1..n {
            sxx += col[t - 1] * col[t - 1];
            sxy += col[t - 1] * col[t];
        }
        if sxx == 0.0 {
            return Err(Error::InvalidInput(format!(
                "column {i} has zero variance; cannot fit AR(1)"
            )));
        }
        let rho = (sxy / sxx).clamp(-0.99, 0.99);
        let mut sig2 = 0.0;
        for t in 1..n {
            let resid = col[t] - rho * col[t - 1];
            sig2 += resid * resid;
        }
        sig2 /= (n - 1) as f64;
        let one_minus = 1.0 - rho;
        num += iota[i] * 4.0 * rho * rho * sig2 * sig2 / one_minus.powi(8);
        den += iota[i] * sig2 * sig2 / one_minus.powi(4);
    }
    if den == 0.0 {
        return Err(Error::InvalidInput(
            "all columns have zero residual variance".into(),
        ));
    }
    let alpha2 = num / den;
    Ok((1.3221 * (n as f64 * alpha2).powf(0.2)).max(1.0))
}

/// Pooled score rows of the composite objective at the fitted parameters:
/// X_t = sum_k w_t qdot_{t,tau_k} psi_{tau_k}(y_t - q_{t,tau_k}).
pub fn cqr_scores(
    series: &ReturnSeries,
    fit: &CqrFit,
    weights: &[f64],
) -> Result<Vec<[f64; 4]>> {
    let n = series.len();
    if weights.len() != n {
        return Err(Error::InvalidInput(
            "weights length does not match series".into(),
        ));
    }
    if fit.weights_id != weights_id(weights) {
        return Err(Error::InvalidInput(
            "fit does not share the supplied weight sequence".into(),
        ));
    }
    let phi = fit.phi_hat;
    let abs = series.abs_values();
    let y = series.values();
    let (x, dd, _) = curvature_paths(&abs, phi.b1);
    let one_minus = 1.0 - phi.b1;
    let a0p = phi.a0 / one_minus;

    let mut rows = vec![[0.0; 4]; n];
    for &tau in &fit.tau_levels {
        let (q, dq, _) = tukey_quantile_derivs(tau, phi.lambda)?;
        for t in 0..n {
            let h = a0p + phi.a1 * x[t];
            let hdot = [
                1.0 / one_minus,
                x[t],
                phi.a0 / (one_minus * one_minus) + phi.a1 * dd[t],
            ];
            let fitted = q * h;
            let scale = weights[t] * psi_raw(tau, y[t] - fitted);
            let row = &mut rows[t];
            row[0] += scale * q * hdot[0];
            row[1] += scale * q * hdot[1];
            row[2] += scale * q * hdot[2];
            row[3] += scale * dq * h;
        }
    }
    Ok(rows)
}

/// Covariance output with conditioning and crossing diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqrCovariance {
    pub sigma: [[f64; 4]; 4],
    pub hac_bandwidth: f64,
    /// (observation, level) cells whose quantile spread stayed nonpositive
    /// after rearrangement and were dropped from the Omega12 average.
    pub crossings_dropped: usize,
    pub omega1_condition: f64,
    pub condition_warning: bool,
}

/// Asymptotic covariance of the composite estimator,
/// `Omega1*^-1 Omega0* Omega1*^-1`, where Omega0* is the HAC long-run
/// covariance of the pooled scores and Omega1* = Omega12* - Omega11*
/// combines the density-weighted outer-product and psi-weighted curvature
/// averages, symmetrized before inversion.
///
/// `bandwidth_multiplier` scales the automatic HAC bandwidth (sensitivity
/// checks); `simplified` drops Omega11* and replaces the HAC estimate with
/// the analytic psi-covariance min(tau_k,tau_j) - tau_k tau_j double sum,
/// valid when the model is declared correctly specified (the scores are then
/// a martingale difference and the curvature term vanishes at the truth).
pub fn cqr_asymptotic_cov(
    series: &ReturnSeries,
    fit: &CqrFit,
    weights: &[f64],
    bandwidth_multiplier: f64,
    simplified: bool,
) -> Result<CqrCovariance> {
    let n = series.len();
    if weights.len() != n {
        return Err(Error::InvalidInput(
            "weights length does not match series".into(),
        ));
    }
    if fit.weights_id != weights_id(weights) {
        return Err(Error::InvalidInput(
            "fit does not share the supplied weight sequence".into(),
        ));
    }
    if !(bandwidth_multiplier > 0.0) || !bandwidth_multiplier.is_finite() {
        return Err(Error::InvalidInput(format!(
            "bandwidth multiplier {bandwidth_multiplier} must be > 0"
        )));
    }
    let phi = fit.phi_hat;
    let levels = &fit.tau_levels;
    let kk = levels.len();
    let abs = series.abs_values();
    let y = series.values();
    let (x, dd, ee) = curvature_paths(&abs, phi.b1);
    let one_minus = 1.0 - phi.b1;
    let a0p = phi.a0 / one_minus;

    // Per-level Tukey quantities and density bandwidths.
    let mut q = vec![0.0; kk];
    let mut dq = vec![0.0; kk];
    let mut d2q = vec![0.0; kk];
    let mut ell = vec![0.0; kk];
    let mut q_lo = vec![0.0; kk];
    let mut q_hi = vec![0.0; kk];
    for k in 0..kk {
        let (v, d1, d2) = tukey_quantile_derivs(levels[k], phi.lambda)?;
        q[k] = v;
        dq[k] = d1;
        d2q[k] = d2;
        let l = bandwidth_hall_sheather(levels[k], n, 0.05)?;
        let (lo, hi) = (levels[k] - l, levels[k] + l);
        if lo <= 0.0 || hi >= 1.0 {
            return Err(Error::at(
                "density bandwidth pushes side levels outside (0,1) at tau",
                levels[k],
                Error::InvalidInput(format!("l = {l}")),
            ));
        }
        ell[k] = l;
        q_lo[k] = tukey_quantile(lo, phi.lambda)?;
        q_hi[k] = tukey_quantile(hi, phi.lambda)?;
    }

    let mut omega11 = Mat::zeros(4);
    let mut omega12 = Mat::zeros(4);
    let mut dropped = 0usize;
    for t in 0..n {
        let h = a0p + phi.a1 * x[t];
        let hdot = [
            1.0 / one_minus,
            x[t],
            phi.a0 / (one_minus * one_minus) + phi.a1 * dd[t],
        ];
        // hddot is zero except the (1,3)/(3,1) and (2,3)/(3,2) pairs and the
        // (3,3) entry (indices into (a0, a1, b1)).
        let h13 = 1.0 / (one_minus * one_minus);
        let h23 = dd[t];
        let h33 = 2.0 * phi.a0 / (one_minus * one_minus * one_minus) + phi.a1 * ee[t];
        let w = weights[t];
        for k in 0..kk {
            let fitted = q[k] * h;
            let grad = [
                q[k] * hdot[0],
                q[k] * hdot[1],
                q[k] * hdot[2],
                dq[k] * h,
            ];
            // Density difference quotient from the fitted family itself:
            // the spread between the tau_k ± l_k curves at this observation.
            let spread = (q_hi[k] - q_lo[k]) * h;
            let lohi = if spread > 0.0 {
                Some((2.0 * ell[k] / spread).min(F_CAP))
            } else {
                None
            };
            match lohi {
                Some(f) => omega12.add_outer(&grad, f * w),
                None => dropped += 1,
            }
            if !simplified {
                let psi = psi_raw(levels[k], y[t] - fitted);
                let s = w * psi;
                // qddot: upper-left 3x3 = q[k]*hddot, rim = dq[k]*hdot,
                // corner = d2q[k]*h.
                omega11.add_at(0, 2, s * q[k] * h13);
                omega11.add_at(2, 0, s * q[k] * h13);
                omega11.add_at(1, 2, s * q[k] * h23);
                omega11.add_at(2, 1, s * q[k] * h23);
                omega11.add_at(2, 2, s * q[k] * h33);
                for i in 0..3 {
                    omega11.add_at(i, 3, s * dq[k] * hdot[i]);
                    omega11.add_at(3, i, s * dq[k] * hdot[i]);
                }
                omega11.add_at(3, 3, s * d2q[k] * h);
            }
        }
    }
    let scale = 1.0 / n as f64;
    omega11.scale(scale);
    omega12.scale(scale);

    let mut omega1 = omega12.clone();
    if !simplified {
        omega1.add(&omega11, -1.0);
    }
    omega1.symmetrize();
    let cond = omega1.condition_estimate();
    if cond > CONDITION_WARNING {
        return Err(Error::Singular {
            context: "Omega1* inversion in cqr_asymptotic_cov".into(),
            cond,
        });
    }
    let inv = omega1.inverse().map_err(|e| match e {
        Error::Singular { context: _, cond } => Error::Singular {
            context: "Omega1* inversion in cqr_asymptotic_cov".into(),
            cond,
        },
        other => other,
    })?;

    let (omega0, b_n) = if simplified {
        // Analytic psi-covariance double sum over level pairs:
        // sum_{k,j} [min(tau_k,tau_j) - tau_k tau_j] w^2 qdot_k qdot_j'.
        let mut m = Mat::zeros(4);
        for t in 0..n {
            let h = a0p + phi.a1 * x[t];
            let hdot = [
                1.0 / one_minus,
                x[t],
                phi.a0 / (one_minus * one_minus) + phi.a1 * dd[t],
            ];
            let w2 = weights[t] * weights[t];
            let grads: Vec<[f64; 4]> = (0..kk)
                .map(|k| {
                    [
                        q[k] * hdot[0],
                        q[k] * hdot[1],
                        q[k] * hdot[2],
                        dq[k] * h,
                    ]
                })
                .collect();
            for k in 0..kk {
                for j in 0..kk {
                    let psi_cov = levels[k].min(levels[j]) - levels[k] * levels[j];
                    let s = w2 * psi_cov;
                    for i in 0..4 {
                        for l in 0..4 {
                            m.add_at(i, l, s * grads[k][i] * grads[j][l]);
                        }
                    }
                }
            }
        }
        m.scale(scale);
        m.symmetrize();
        (m.to_array4(), f64::NAN)
    } else {
        let rows = cqr_scores(series, fit, weights)?;
        let b_n = auto_bandwidth(&rows, None)? * bandwidth_multiplier;
        (hac_cov(&rows, b_n, 4)?, b_n)
    };
    let mut omega0_m = Mat::zeros(4);
    for i in 0..4 {
        for j in 0..4 {
            omega0_m.set(i, j, omega0[i][j]);
        }
    }
    let mut sigma = inv.mul_mat(&omega0_m).mul_mat(&inv);
    sigma.symmetrize();
    Ok(CqrCovariance {
        sigma: sigma.to_array4(),
        hac_bandwidth: b_n,
        crossings_dropped: dropped,
        omega1_condition: cond,
        condition_warning: cond > CONDITION_WARNING,
    })
}

/// Covariance of the per-level coefficients g_tau(phi_hat) by the delta
/// method: gdot_tau Sigma gdot_tau' with the 3x4 Jacobian of the transform.
pub fn theta_cov_at(
    phi: &TukeyGarchParams,
    sigma: &[[f64; 4]; 4],
    tau: f64,
) -> Result<[[f64; 3]; 3]> {
    let (q, dq, _) = tukey_quantile_derivs(tau, phi.lambda)?;
    let one_minus = 1.0 - phi.b1;
    // Rows: d(omega)/d(a0,a1,b1,lambda), d(alpha1)/..., d(beta1)/...
    let jac = [
        [
            q / one_minus,
            0.0,
            phi.a0 * q / (one_minus * one_minus),
            dq * phi.a0 / one_minus,
        ],
        [0.0, q, 0.0, dq * phi.a1],
        [0.0, 0.0, 1.0, 0.0],
    ];
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    s += jac[i][a] * sigma[a][b] * jac[j][b];
                }
            }
            out[i][j] = s;
        }
    }
    Ok(out)
}

/// Fits on `train` per candidate h and scores each fit by the tau0 check
/// loss over the validation set, with the conditioning history growing
/// through the validation prefix; returns the loss-minimizing h, ties
/// toward the smaller value.
pub fn select_bandwidth_h(
    train: &ReturnSeries,
    validate: &ReturnSeries,
    tau0: f64,
    h_grid: &[f64],
    cfg: &CqrConfig,
) -> Result<f64> {
    if h_grid.is_empty() {
        return Err(Error::InvalidInput("empty h grid".into()));
    }
    if validate.len() < 50 {
        return Err(Error::InvalidInput(format!(
            "validation length {} below the minimum of 50",
            validate.len()
        )));
    }
    let mut joined = train.values().to_vec();
    joined.extend_from_slice(validate.values());
    let joined_abs: Vec<f64> = joined.iter().map(|v| v.abs()).collect();
    let n_train = train.len();

    let mut best: Option<(f64, f64)> = None;
    for &h in h_grid {
        let mut fit_cfg = cfg.clone();
        fit_cfg.tau0 = tau0;
        fit_cfg.h = h;
        let fit = cqr_fit(train, &fit_cfg).map_err(|e| Error::at("h", h, e))?;
        let phi = fit.phi_hat;
        let q0 = tukey_quantile(tau0, phi.lambda)?;
        let x = regressor_path(&joined_abs, phi.b1);
        let a0p = phi.a0 / (1.0 - phi.b1);
        let mut loss = 0.0;
        for (i, &yv) in validate.values().iter().enumerate() {
            let fitted = q0 * (a0p + phi.a1 * x[n_train + i]);
            loss += check_loss_raw(tau0, yv - fitted);
        }
        let better = match best {
            None => true,
            Some((best_loss, best_h)) => {
                loss < best_loss || (loss == best_loss && h < best_h)
            }
        };
        if better {
            best = Some((loss, h));
        }
    }
    Ok(best.expect("grid is non-empty").1)
}
