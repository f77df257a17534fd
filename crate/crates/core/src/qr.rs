//! Self-weighted quantile regression for the quantile GARCH(1,1) model.
//!
//! The estimator at level tau solves
//!
//! ```text
//! min_theta sum_t w_t * rho_tau(y_t - q_t(theta)),   q_t = omega + alpha1 * x_t(beta1)
//! ```
//!
//! with x_t(beta1) = sum_{j<t} beta1^(j-1) |y_{t-j}|. For fixed beta1 the
//! problem is linear in (omega, alpha1) and is solved exactly; the outer
//! one-dimensional profile over beta1 is scanned on a grid and refined by
//! golden section around the best bracket, keeping the best of every
//! evaluation. Asymptotic covariance uses the difference-quotient density
//! estimate f_t = 2l / (Q_{tau+l} - Q_{tau-l}) inside the sandwich
//! tau(1-tau) * Omega1^-1 Omega0 Omega1^-1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{
    check_loss_raw, compute_self_weights, curvature_paths, normal_pdf, normal_quantile,
    regressor_path, validate_tau, QGarchParams, ReturnSeries, SelfWeightConfig, EPS_BOX,
};
use crate::solver::{solve_linear2_warm, Linear2Problem};

/// Density estimates are clamped to [0, F_CAP]: the difference quotient can
/// blow up when neighboring quantile fits nearly touch.
pub const F_CAP: f64 = 1e3;

/// Condition-number threshold above which covariance output is flagged.
pub const CONDITION_WARNING: f64 = 1e12;

/// Supported plug-in bandwidth rules for the density difference quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandwidthKind {
    Bofinger,
    HallSheather,
}

/// A bandwidth choice together with its evaluated value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub kind: BandwidthKind,
    pub value: f64,
}

/// Box constraints for (omega, alpha1, beta1). Bounds are inclusive; a
/// collapsed pair pins the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub omega: (f64, f64),
    pub alpha1: (f64, f64),
    pub beta1: (f64, f64),
}

impl Default for ParamBox {
    fn default() -> Self {
        ParamBox {
            omega: (f64::NEG_INFINITY, f64::INFINITY),
            alpha1: (f64::NEG_INFINITY, f64::INFINITY),
            beta1: (0.0, 1.0 - EPS_BOX),
        }
    }
}

impl ParamBox {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("omega", self.omega),
            ("alpha1", self.alpha1),
            ("beta1", self.beta1),
        ] {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidInput(format!(
                    "invalid {name} bounds ({lo}, {hi})"
                )));
            }
        }
        if self.beta1.0 < 0.0 || self.beta1.1 > 1.0 - EPS_BOX {
            return Err(Error::InvalidInput(format!(
                "beta1 bounds ({}, {}) outside [0, {}]",
                self.beta1.0,
                self.beta1.1,
                1.0 - EPS_BOX
            )));
        }
        Ok(())
    }
}

/// The default profile grid for beta1: 0.02, 0.04, ..., 0.98.
pub fn default_beta_grid() -> Vec<f64> {
    (1..=49).map(|i| i as f64 * 0.02).collect()
}

/// Configuration of one quantile-regression fit.
#[derive(Debug, Clone)]
pub struct QrFitConfig {
    pub tau: f64,
    /// Precomputed observation weights; `None` computes self-weights with the
    /// default configuration. All-ones yields the unweighted estimator.
    pub weights: Option<Vec<f64>>,
    pub beta_grid: Vec<f64>,
    /// Golden-section evaluations spent refining the best grid bracket.
    pub refine_iters: usize,
    pub bounds: ParamBox,
}

impl QrFitConfig {
    pub fn new(tau: f64) -> Self {
        QrFitConfig {
            tau,
            weights: None,
            beta_grid: default_beta_grid(),
            refine_iters: 40,
            bounds: ParamBox::default(),
        }
    }
}

/// A fitted quantile regression at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    pub theta_hat: QGarchParams,
    pub objective_value: f64,
    /// Asymptotic covariance of sqrt(n)(theta_hat - theta), when computed.
    pub cov: Option<[[f64; 3]; 3]>,
    pub bandwidth_used: Option<Bandwidth>,
    /// Hash of the weight sequence the fit used, for compatibility checks.
    pub weights_id: u64,
}

impl QuantileFit {
    /// Asymptotic standard deviations sqrt(diag(cov) / n).
    pub fn asd(&self, n: usize) -> Option<[f64; 3]> {
        self.cov.map(|c| asd_from_cov(&c, n))
    }
}

/// sqrt(diag(cov) / n) — the reporting convention for standard errors.
pub fn asd_from_cov(cov: &[[f64; 3]; 3], n: usize) -> [f64; 3] {
    let n = n as f64;
    [
        (cov[0][0] / n).max(0.0).sqrt(),
        (cov[1][1] / n).max(0.0).sqrt(),
        (cov[2][2] / n).max(0.0).sqrt(),
    ]
}

/// Order-insensitive-free hash of a weight sequence (bit-exact).
pub fn weights_id(weights: &[f64]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for &w in weights {
        w.to_bits().hash(&mut h);
    }
    h.finish()
}

pub(crate) fn resolve_weights(series: &ReturnSeries, weights: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    let w = match weights {
        Some(w) => w.clone(),
        None => compute_self_weights(series, &SelfWeightConfig::default())?,
    };
    if w.len() != series.len() {
        return Err(Error::InvalidInput(format!(
            "weights length {} does not match series length {}",
            w.len(),
            series.len()
        )));
    }
    if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidInput("weights are all zero".into()));
    }
    Ok(w)
}

/// Fits the quantile GARCH(1,1) coefficients at `cfg.tau` by exact profiling.
pub fn qr_fit(series: &ReturnSeries, cfg: &QrFitConfig) -> Result<QuantileFit> {
    validate_tau(cfg.tau)?;
    cfg.bounds.validate()?;
    let n = series.len();
    if n < 30 {
        return Err(Error::InvalidInput(format!(
            "series length {n} below the minimum of 30"
        )));
    }
    let w = resolve_weights(series, &cfg.weights)?;
    let abs = series.abs_values();
    if abs.iter().all(|&a| a == 0.0) {
        return Err(Error::InvalidInput(
            "degenerate series: all observations are zero".into(),
        ));
    }
    for &b in &cfg.beta_grid {
        if !b.is_finite() || b < 0.0 || b > 1.0 - EPS_BOX {
            return Err(Error::InvalidInput(format!(
                "beta grid value {b} outside [0, {}]",
                1.0 - EPS_BOX
            )));
        }
    }

    let (blo, bhi) = cfg.bounds.beta1;
    let grid: Vec<f64> = if blo == bhi {
        vec![blo]
    } else {
        let g: Vec<f64> = cfg
            .beta_grid
            .iter()
            .copied()
            .filter(|&b| b >= blo && b <= bhi)
            .collect();
        if g.is_empty() {
            return Err(Error::InvalidInput(
                "no beta grid points inside the beta1 bounds".into(),
            ));
        }
        g
    };

    let y = series.values();
    let ones = vec![1.0; n];
    let taus = vec![cfg.tau; n];

    struct Best {
        obj: f64,
        beta: f64,
        omega: f64,
        alpha1: f64,
    }
    let mut best: Option<Best> = None;
    let mut warm: Option<(f64, f64)> = None;
    let mut profile = |beta: f64| -> Result<f64> {
        let x = regressor_path(&abs, beta);
        let p = Linear2Problem {
            u: y,
            v1: &ones,
            v2: &x,
            w: &w,
            taus: &taus,
            bounds1: cfg.bounds.omega,
            bounds2: cfg.bounds.alpha1,
        };
        // Nearby beta1 values have nearby inner solutions, so the previous
        // optimum warm-starts the exact solver without affecting its result.
        let (omega, alpha1, obj) = solve_linear2_warm(&p, warm)
            .map_err(|e| Error::at("profile evaluation at beta1", beta, e))?;
        warm = Some((omega, alpha1));
        let better = match &best {
            None => true,
            Some(b) => obj < b.obj || (obj == b.obj && beta < b.beta),
        };
        if better {
            best = Some(Best {
                obj,
                beta,
                omega,
                alpha1,
            });
        }
        Ok(obj)
    };

    let mut vals = Vec::with_capacity(grid.len());
    for &b in &grid {
        vals.push(profile(b)?);
    }
    if grid.len() > 1 && cfg.refine_iters > 0 {
        let i_best = (0..grid.len())
            .min_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap())
            .unwrap();
        let lo = grid[i_best.saturating_sub(1)];
        let hi = grid[(i_best + 1).min(grid.len() - 1)];
        if hi > lo {
            golden_refine(lo, hi, cfg.refine_iters, &mut profile)?;
        }
    }

    let best = best.expect("profile evaluated at least once");
    let theta_hat = QGarchParams::new(best.omega, best.alpha1, best.beta)?;
    Ok(QuantileFit {
        tau: cfg.tau,
        theta_hat,
        objective_value: best.obj,
        cov: None,
        bandwidth_used: None,
        weights_id: weights_id(&w),
    })
}

/// Golden-section refinement spending `iters` objective evaluations on
/// [lo, hi]; the caller's closure tracks the best point seen.
fn golden_refine(
    lo: f64,
    hi: f64,
    iters: usize,
    profile: &mut impl FnMut(f64) -> Result<f64>,
) -> Result<()> {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    if iters == 1 {
        profile(0.5 * (a + b))?;
        return Ok(());
    }
    let mut f1 = profile(x1)?;
    let mut f2 = profile(x2)?;
    for _ in 2..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = profile(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = profile(x2)?;
        }
    }
    Ok(())
}

/// Bofinger bandwidth
/// `n^(-1/5) * { 4.5 phi^4(z_tau) / (2 z_tau^2 + 1)^2 }^(1/5)` with
/// z_tau the standard normal tau-quantile.
pub fn bandwidth_bofinger(tau: f64, n: usize) -> Result<f64> {
    validate_tau(tau)?;
    if n < 2 {
        return Err(Error::InvalidInput("n must be >= 2".into()));
    }
    let z = normal_quantile(tau)?;
    let f = normal_pdf(z);
    let num = 4.5 * f.powi(4);
    let den = (2.0 * z * z + 1.0).powi(2);
    Ok((n as f64).powf(-0.2) * (num / den).powf(0.2))
}

/// Hall–Sheather bandwidth
/// `n^(-1/3) * z_alpha^(2/3) * { 1.5 phi^2(z_tau) / (2 z_tau^2 + 1) }^(1/3)`
/// with z_alpha the standard normal (1 - alpha/2)-quantile.
pub fn bandwidth_hall_sheather(tau: f64, n: usize, alpha: f64) -> Result<f64> {
    validate_tau(tau)?;
    if n < 2 {
        return Err(Error::InvalidInput("n must be >= 2".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha = {alpha} outside (0,1)")));
    }
    let z = normal_quantile(tau)?;
    let za = normal_quantile(1.0 - alpha / 2.0)?;
    let f = normal_pdf(z);
    let num = 1.5 * f * f;
    let den = 2.0 * z * z + 1.0;
    Ok((n as f64).powf(-1.0 / 3.0) * za.powf(2.0 / 3.0) * (num / den).powf(1.0 / 3.0))
}

/// Bandwidth value for `kind` at (tau, n); Hall–Sheather uses alpha = 0.05.
pub fn bandwidth(kind: BandwidthKind, tau: f64, n: usize) -> Result<f64> {
    match kind {
        BandwidthKind::Bofinger => bandwidth_bofinger(tau, n),
        BandwidthKind::HallSheather => bandwidth_hall_sheather(tau, n, 0.05),
    }
}

/// Covariance output with crossing and conditioning diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrCovariance {
    pub sigma: [[f64; 3]; 3],
    /// Observations whose quantile spread stayed nonpositive after
    /// rearrangement and were dropped from the Omega1 average.
    pub crossings_dropped: usize,
    pub omega1_condition: f64,
    pub condition_warning: bool,
}

/// Sandwich covariance tau(1-tau) * Omega1^-1 Omega0 Omega1^-1 from three
/// fits at tau-l, tau, tau+l sharing one weight sequence.
///
/// Per observation the density is the difference quotient
/// 2l / (Q_{tau+l} - Q_{tau-l}), clamped to [0, F_CAP]. A crossing triple is
/// rearranged (sorted) first; if the spread is still nonpositive the
/// observation is dropped from the Omega1 average and counted.
pub fn qr_asymptotic_cov(
    series: &ReturnSeries,
    fit_lo: &QuantileFit,
    fit_mid: &QuantileFit,
    fit_hi: &QuantileFit,
    weights: &[f64],
) -> Result<QrCovariance> {
    let n = series.len();
    if weights.len() != n {
        return Err(Error::InvalidInput(
            "weights length does not match series".into(),
        ));
    }
    let wid = weights_id(weights);
    if fit_lo.weights_id != wid || fit_mid.weights_id != wid || fit_hi.weights_id != wid {
        return Err(Error::InvalidInput(
            "the three fits must share the supplied weight sequence".into(),
        ));
    }
    let tau = fit_mid.tau;
    let l = tau - fit_lo.tau;
    if !(l > 0.0) || (fit_hi.tau - tau - l).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "fit levels ({}, {}, {}) are not symmetric around the center",
            fit_lo.tau, tau, fit_hi.tau
        )));
    }

    let abs = series.abs_values();
    let theta = fit_mid.theta_hat;
    let (x_mid, d_mid, _) = curvature_paths(&abs, theta.beta1);
    let x_lo = regressor_path(&abs, fit_lo.theta_hat.beta1);
    let x_hi = regressor_path(&abs, fit_hi.theta_hat.beta1);

    let mut omega0 = Mat::zeros(3);
    let mut omega1 = Mat::zeros(3);
    let mut dropped = 0usize;
    for t in 0..n {
        let g = [1.0, x_mid[t], theta.alpha1 * d_mid[t]];
        let w = weights[t];
        omega0.add_outer(&g, w * w);
        let q_lo = fit_lo.theta_hat.omega + fit_lo.theta_hat.alpha1 * x_lo[t];
        let q_mid = theta.omega + theta.alpha1 * x_mid[t];
        let q_hi = fit_hi.theta_hat.omega + fit_hi.theta_hat.alpha1 * x_hi[t];
        let mut triple = [q_lo, q_mid, q_hi];
        triple.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let spread = triple[2] - triple[0];
        if spread > 0.0 {
            let f = (2.0 * l / spread).min(F_CAP);
            omega1.add_outer(&g, f * w);
        } else {
            dropped += 1;
        }
    }
    let scale = 1.0 / n as f64;
    omega0.scale(scale);
    omega1.scale(scale);

    let cond = omega1.condition_estimate();
    let inv = omega1.inverse().map_err(|e| match e {
        Error::Singular { context: _, cond } => Error::Singular {
            context: "Omega1 inversion in qr_asymptotic_cov".into(),
            cond,
        },
        other => other,
    })?;
    let mut sigma = inv.mul_mat(&omega0).mul_mat(&inv);
    sigma.scale(tau * (1.0 - tau));
    sigma.symmetrize();
    Ok(QrCovariance {
        sigma: sigma.to_array3(),
        crossings_dropped: dropped,
        omega1_condition: cond,
        condition_warning: cond > CONDITION_WARNING,
    })
}

/// Fits at tau and tau ± l (l from `kind`), attaches the sandwich covariance
/// to the central fit, and returns it with diagnostics.
pub fn fit_with_covariance(
    series: &ReturnSeries,
    cfg: &QrFitConfig,
    kind: BandwidthKind,
) -> Result<(QuantileFit, QrCovariance)> {
    let n = series.len();
    let l = bandwidth(kind, cfg.tau, n)?;
    if cfg.tau - l <= 0.0 || cfg.tau + l >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "bandwidth {l} pushes the side levels outside (0,1) at tau = {}",
            cfg.tau
        )));
    }
    let weights = resolve_weights(series, &cfg.weights)?;
    let mut shared = cfg.clone();
    shared.weights = Some(weights.clone());
    let mut mid = qr_fit(series, &shared)?;
    let mut side = shared.clone();
    side.tau = cfg.tau - l;
    let lo = qr_fit(series, &side)?;
    side.tau = cfg.tau + l;
    let hi = qr_fit(series, &side)?;
    let cov = qr_asymptotic_cov(series, &lo, &mid, &hi, &weights)?;
    mid.cov = Some(cov.sigma);
    mid.bandwidth_used = Some(Bandwidth { kind, value: l });
    Ok((mid, cov))
}

/// Independent fits at strictly increasing levels, sharing one weight
/// sequence (self-weights computed once when `cfg.weights` is `None`).
pub fn multi_tau_fit(
    series: &ReturnSeries,
    taus: &[f64],
    cfg: &QrFitConfig,
) -> Result<Vec<QuantileFit>> {
    if taus.is_empty() {
        return Err(Error::InvalidInput("taus must be non-empty".into()));
    }
    for pair in taus.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::InvalidInput(
                "taus must be strictly increasing".into(),
            ));
        }
    }
    for &t in taus {
        validate_tau(t)?;
    }
    let weights = resolve_weights(series, &cfg.weights)?;
    let mut shared = cfg.clone();
    shared.weights = Some(weights);
    let mut fits = Vec::with_capacity(taus.len());
    for &t in taus {
        shared.tau = t;
        let fit = qr_fit(series, &shared).map_err(|e| Error::at("quantile level tau", t, e))?;
        fits.push(fit);
    }
    Ok(fits)
}

/// Monotone rearrangement: sorts the values ascending. Idempotent, preserves
/// the multiset, and never increases total check loss against any sample when
/// the associated levels are increasing.
pub fn rearrange(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

/// Total weighted check loss of `theta` on the series — the objective
/// `qr_fit` minimizes, exposed for comparisons.
pub fn qr_objective(
    series: &ReturnSeries,
    theta: &QGarchParams,
    tau: f64,
    weights: &[f64],
) -> Result<f64> {
    validate_tau(tau)?;
    let n = series.len();
    if weights.len() != n {
        return Err(Error::InvalidInput(
            "weights length does not match series".into(),
        ));
    }
    let abs = series.abs_values();
    let x = regressor_path(&abs, theta.beta1);
    let y = series.values();
    let mut total = 0.0;
    for t in 0..n {
        let r = y[t] - theta.omega - theta.alpha1 * x[t];
        total += weights[t] * check_loss_raw(tau, r);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::quantile_type7_sorted;
    use crate::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};
    use crate::solver::{kkt_violation, weighted_quantile};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sim52(n: usize, seed: u64) -> ReturnSeries {
        let coef = preset_setting("5.2", Dist::Normal, None).unwrap();
        simulate_qgarch(&SimulationSpec::new(coef, n, seed)).unwrap()
    }

    #[test]
    fn bandwidth_reference_values() {
        assert_relative_eq!(
            bandwidth_hall_sheather(0.5, 1000, 0.05).unwrap(),
            0.097151,
            max_relative = 1e-4
        );
        // 1000^(-1/5) * (4.5 / (4 pi^2))^(1/5) = 0.25118864 * 0.64769 = 0.162694
        assert_relative_eq!(
            bandwidth_bofinger(0.5, 1000).unwrap(),
            0.162694,
            max_relative = 1e-5
        );
        assert!(bandwidth_bofinger(0.0, 1000).is_err());
        assert!(bandwidth_hall_sheather(0.5, 1, 0.05).is_err());
    }

    #[test]
    fn bofinger_shrinks_at_fifth_root_rate() {
        let r = bandwidth_bofinger(0.5, 100_000).unwrap() / bandwidth_bofinger(0.5, 1000).unwrap();
        assert_relative_eq!(r, 100.0_f64.powf(-0.2), max_relative = 1e-12);
        assert_relative_eq!(r, 0.398107, max_relative = 1e-5);
    }

    #[test]
    fn pinned_alpha_reduces_to_weighted_quantile() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let values: Vec<f64> = (0..200)
            .map(|_| normal_quantile(crate::model::standard_uniform_open(&mut rng)).unwrap())
            .collect();
        let series = ReturnSeries::new(values.clone()).unwrap();
        for tau in [0.05, 0.5, 0.9] {
            let mut cfg = QrFitConfig::new(tau);
            cfg.bounds.alpha1 = (0.0, 0.0);
            let fit = qr_fit(&series, &cfg).unwrap();
            let w = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
            let expected = weighted_quantile(&values, &w, tau).unwrap();
            assert_abs_diff_eq!(fit.theta_hat.omega, expected, epsilon = 1e-8);
            assert_eq!(fit.theta_hat.alpha1, 0.0);

            let mut cfg1 = cfg.clone();
            cfg1.weights = Some(vec![1.0; 200]);
            let fit1 = qr_fit(&series, &cfg1).unwrap();
            let e1 = weighted_quantile(&values, &vec![1.0; 200], tau).unwrap();
            assert_abs_diff_eq!(fit1.theta_hat.omega, e1, epsilon = 1e-8);
        }
    }

    #[test]
    fn scaling_equivariance_with_unit_weights() {
        // Scaling the series by k scales the regressor x_t by k as well, so
        // the intercept omega scales by k while alpha1 and beta1 — both
        // dimensionless in this model — are scale-invariant, and the check
        // loss scales by k.
        let series = sim52(300, 77);
        let scaled =
            ReturnSeries::new(series.values().iter().map(|&y| 2.0 * y).collect()).unwrap();
        let mut cfg = QrFitConfig::new(0.1);
        cfg.weights = Some(vec![1.0; 300]);
        let f = qr_fit(&series, &cfg).unwrap();
        let g = qr_fit(&scaled, &cfg).unwrap();
        assert_relative_eq!(g.theta_hat.omega, 2.0 * f.theta_hat.omega, max_relative = 1e-9);
        assert_relative_eq!(g.theta_hat.alpha1, f.theta_hat.alpha1, max_relative = 1e-9);
        assert_relative_eq!(g.theta_hat.beta1, f.theta_hat.beta1, max_relative = 1e-9);
        assert_relative_eq!(g.objective_value, 2.0 * f.objective_value, max_relative = 1e-9);
    }

    #[test]
    fn fitted_objective_beats_random_parameters() {
        let series = sim52(300, 5);
        let cfg = QrFitConfig::new(0.05);
        let fit = qr_fit(&series, &cfg).unwrap();
        let w = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
        assert_relative_eq!(
            qr_objective(&series, &fit.theta_hat, 0.05, &w).unwrap(),
            fit.objective_value,
            max_relative = 1e-12
        );
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..100 {
            let theta = QGarchParams::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 0.98,
            )
            .unwrap();
            let obj = qr_objective(&series, &theta, 0.05, &w).unwrap();
            assert!(
                obj >= fit.objective_value - 1e-9 * (1.0 + obj.abs()),
                "random theta beat the fit: {obj} < {}",
                fit.objective_value
            );
        }
    }

    #[test]
    fn solution_carries_subgradient_certificate() {
        let series = sim52(400, 13);
        let cfg = QrFitConfig::new(0.05);
        let fit = qr_fit(&series, &cfg).unwrap();
        let w = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
        let abs = series.abs_values();
        let x = regressor_path(&abs, fit.theta_hat.beta1);
        let ones = vec![1.0; 400];
        let taus = vec![0.05; 400];
        let p = Linear2Problem {
            u: series.values(),
            v1: &ones,
            v2: &x,
            w: &w,
            taus: &taus,
            bounds1: (f64::NEG_INFINITY, f64::INFINITY),
            bounds2: (f64::NEG_INFINITY, f64::INFINITY),
        };
        let gap = kkt_violation(&p, fit.theta_hat.omega, fit.theta_hat.alpha1, 1e-9);
        assert!(gap <= 1e-7, "KKT violation {gap}");
    }

    #[test]
    fn multi_tau_validates_and_matches_single_fit() {
        let series = sim52(200, 3);
        let cfg = QrFitConfig::new(0.5);
        assert!(multi_tau_fit(&series, &[0.3, 0.2], &cfg).is_err());
        assert!(multi_tau_fit(&series, &[], &cfg).is_err());
        let multi = multi_tau_fit(&series, &[0.25], &cfg).unwrap();
        let mut single_cfg = cfg.clone();
        single_cfg.tau = 0.25;
        let single = qr_fit(&series, &single_cfg).unwrap();
        assert_eq!(multi.len(), 1);
        assert_eq!(multi[0].theta_hat, single.theta_hat);
    }

    #[test]
    fn rearrange_sorts_and_is_idempotent() {
        assert_eq!(rearrange(&[1.0, 0.8, 1.2]), vec![0.8, 1.0, 1.2]);
        assert_eq!(rearrange(&[-1.0, 0.0, 2.0]), vec![-1.0, 0.0, 2.0]);
        let once = rearrange(&[3.0, -1.0, 2.0, 2.0]);
        assert_eq!(rearrange(&once), once);
    }

    #[test]
    fn rearrangement_never_increases_check_loss() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..100 {
            let k = 2 + rng.random_range(0..8usize);
            let mut taus: Vec<f64> = (0..k).map(|_| 0.02 + 0.96 * rng.random::<f64>()).collect();
            taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
            taus.dedup();
            let q: Vec<f64> = (0..taus.len())
                .map(|_| rng.random::<f64>() * 4.0 - 2.0)
                .collect();
            let sorted = rearrange(&q);
            for _ in 0..20 {
                let y = rng.random::<f64>() * 6.0 - 3.0;
                let loss = |vals: &[f64]| -> f64 {
                    vals.iter()
                        .zip(&taus)
                        .map(|(&v, &t)| check_loss_raw(t, y - v))
                        .sum()
                };
                assert!(loss(&sorted) <= loss(&q) + 1e-12);
            }
        }
    }

    #[test]
    fn covariance_is_symmetric_positive_and_weight_scale_invariant() {
        let series = sim52(600, 17);
        let cfg = QrFitConfig::new(0.1);
        let (fit, cov) = fit_with_covariance(&series, &cfg, BandwidthKind::HallSheather).unwrap();
        let s = cov.sigma;
        for i in 0..3 {
            assert!(s[i][i] >= 0.0, "negative variance at {i}");
            for j in 0..3 {
                assert_abs_diff_eq!(s[i][j], s[j][i], epsilon = 1e-10);
            }
        }
        assert!(fit.bandwidth_used.unwrap().value > 0.0);
        assert!(!cov.condition_warning);

        // Doubling every weight must leave the sandwich unchanged.
        let w = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
        let w2: Vec<f64> = w.iter().map(|&x| 2.0 * x).collect();
        let l = fit.bandwidth_used.unwrap().value;
        let mut c2 = cfg.clone();
        c2.weights = Some(w2.clone());
        let mid = qr_fit(&series, &c2).unwrap();
        c2.tau = 0.1 - l;
        let lo = qr_fit(&series, &c2).unwrap();
        c2.tau = 0.1 + l;
        let hi = qr_fit(&series, &c2).unwrap();
        let cov2 = qr_asymptotic_cov(&series, &lo, &mid, &hi, &w2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(cov2.sigma[i][j], s[i][j], max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn covariance_rejects_mismatched_weights_and_levels() {
        let series = sim52(200, 2);
        let w = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
        let mut cfg = QrFitConfig::new(0.2);
        cfg.weights = Some(w.clone());
        let mid = qr_fit(&series, &cfg).unwrap();
        cfg.tau = 0.15;
        let lo = qr_fit(&series, &cfg).unwrap();
        cfg.tau = 0.30;
        let hi_bad = qr_fit(&series, &cfg).unwrap();
        assert!(qr_asymptotic_cov(&series, &lo, &mid, &hi_bad, &w).is_err());
        cfg.tau = 0.25;
        cfg.weights = Some(vec![1.0; 200]);
        let hi_other_w = qr_fit(&series, &cfg).unwrap();
        assert!(qr_asymptotic_cov(&series, &lo, &mid, &hi_other_w, &w).is_err());
    }

    #[test]
    fn asd_scales_with_sample_size() {
        let cov = [[4.0, 0.0, 0.0], [0.0, 9.0, 0.0], [0.0, 0.0, 16.0]];
        assert_eq!(asd_from_cov(&cov, 4), [1.0, 1.5, 2.0]);
        assert_eq!(asd_from_cov(&cov, 16), [0.5, 0.75, 1.0]);
    }

    #[test]
    fn weights_id_is_bit_sensitive() {
        let a = weights_id(&[1.0, 2.0]);
        let b = weights_id(&[1.0, 2.0]);
        let c = weights_id(&[1.0, 2.0 + 1e-16]);
        let d = weights_id(&[2.0, 1.0]);
        assert_eq!(a, b);
        assert_eq!(c, a); // 2.0 + 1e-16 rounds to 2.0 in f64
        assert_ne!(a, d);
    }

    #[test]
    fn default_grid_spans_unit_interval() {
        let g = default_beta_grid();
        assert_eq!(g.len(), 49);
        assert_relative_eq!(g[0], 0.02);
        assert_relative_eq!(g[48], 0.98);
        let sorted_check = quantile_type7_sorted(&g, 0.5);
        assert_relative_eq!(sorted_check, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn short_series_and_zero_series_rejected() {
        let short = ReturnSeries::new(vec![1.0; 10]).unwrap();
        assert!(qr_fit(&short, &QrFitConfig::new(0.5)).is_err());
        let zeros = ReturnSeries::new(vec![0.0; 50]).unwrap();
        let mut cfg = QrFitConfig::new(0.5);
        cfg.weights = Some(vec![1.0; 50]);
        assert!(qr_fit(&zeros, &cfg).is_err());
    }
}
