//! Constancy test for the fitted coefficient path across quantile levels.
//!
//! A grid of per-level fits yields a contrast path `tau -> R theta_hat(tau)`.
//! If the contrasted coefficients are constant in tau, the centered path is
//! noise; the Cramér–von Mises functional (or its Kolmogorov–Smirnov
//! variant) aggregates it into one statistic, and overlapping-block
//! subsampling of the estimated score process supplies the critical value
//! and a p-value.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{
    curvature_paths, psi_raw, quantile_type7, validate_tau, ReturnSeries,
};
use crate::qr::{
    bandwidth, resolve_weights, weights_id, BandwidthKind, QrFitConfig, QuantileFit,
    CONDITION_WARNING, F_CAP,
};

/// Tolerance for the constant-cell-size check on the tau grid.
const CELL_TOL: f64 = 1e-12;

/// Blocks-count threshold below which the empirical critical value rests on
/// too few subsample statistics to be trustworthy.
const MIN_BLOCKS: usize = 50;

/// Functional used to aggregate the centered contrast path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CvmStatistic {
    /// Integrated squared deviation, `n * delta * sum_k v_k^2`.
    Cvm,
    /// Scaled supremum deviation, `sqrt(n) * max_k |v_k|`.
    Ks,
}

/// Configuration of the constancy test.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CvmConfig {
    /// Strictly increasing levels in (0,1) with a constant cell size.
    pub tau_grid: Vec<f64>,
    /// Contrast row applied to (omega, alpha1, beta1); the default (0,0,1)
    /// tests constancy of beta1.
    pub r: [f64; 3],
    /// Block-size factor c in `b_n = floor(c * sqrt(n))`.
    pub block_factor: f64,
    /// Significance level for the reported critical value.
    pub alpha: f64,
    pub statistic: CvmStatistic,
}

impl CvmConfig {
    pub fn new(tau_grid: Vec<f64>) -> Self {
        CvmConfig {
            tau_grid,
            r: [0.0, 0.0, 1.0],
            block_factor: 1.0,
            alpha: 0.05,
            statistic: CvmStatistic::Cvm,
        }
    }

    /// Validates the configuration and returns the grid cell size.
    pub fn validate(&self) -> Result<f64> {
        let k = self.tau_grid.len();
        if k < 2 {
            return Err(Error::InvalidInput(
                "tau grid needs at least two levels".into(),
            ));
        }
        for &t in &self.tau_grid {
            validate_tau(t)?;
        }
        let delta = self.tau_grid[1] - self.tau_grid[0];
        if !(delta > 0.0) {
            return Err(Error::InvalidInput(
                "tau grid must be strictly increasing".into(),
            ));
        }
        for pair in self.tau_grid.windows(2) {
            if ((pair[1] - pair[0]) - delta).abs() > CELL_TOL {
                return Err(Error::InvalidInput(format!(
                    "tau grid cell between {} and {} deviates from the cell size {delta}",
                    pair[0], pair[1]
                )));
            }
        }
        if !self.r.iter().all(|x| x.is_finite()) || self.r.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidInput(
                "contrast vector must be finite and nonzero".into(),
            ));
        }
        if !(self.block_factor > 0.0) || !self.block_factor.is_finite() {
            return Err(Error::InvalidInput(format!(
                "block factor {} must be positive",
                self.block_factor
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha {} outside (0,1)",
                self.alpha
            )));
        }
        Ok(delta)
    }

    /// Block size `b_n = floor(block_factor * sqrt(n))`.
    pub fn block_size(&self, n: usize) -> usize {
        (self.block_factor * (n as f64).sqrt()).floor() as usize
    }
}

/// Evenly spaced tau grid from `lo` to `hi` inclusive with cell size `delta`.
pub fn tau_grid(lo: f64, hi: f64, delta: f64) -> Result<Vec<f64>> {
    validate_tau(lo)?;
    validate_tau(hi)?;
    if !(delta > 0.0) || !(hi > lo) {
        return Err(Error::InvalidInput(format!(
            "need lo < hi and delta > 0, got ({lo}, {hi}, {delta})"
        )));
    }
    let cells = ((hi - lo) / delta).round();
    if cells < 1.0 || ((hi - lo) - cells * delta).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "cell size {delta} does not tile [{lo}, {hi}]"
        )));
    }
    Ok((0..=cells as usize).map(|i| lo + i as f64 * delta).collect())
}

/// Test outcome: the observed statistic against its subsample distribution.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CvmResult {
    pub statistic_value: f64,
    /// (1 - alpha) empirical quantile of the subsample statistics.
    pub critical_value: f64,
    /// Fraction of subsample statistics at or above the observed statistic.
    pub p_value: f64,
    pub block_size: usize,
    /// One statistic per overlapping block, n - block_size + 1 of them.
    pub subsample_statistics: Vec<f64>,
    /// Set when fewer than 50 blocks back the critical value.
    pub low_replication_warning: bool,
}

/// Observed statistic from per-level fits over the whole grid: the contrast
/// path is centered at its grid mean and aggregated per `cfg.statistic`.
pub fn cvm_statistic(fits: &[QuantileFit], n: usize, cfg: &CvmConfig) -> Result<f64> {
    let delta = cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let contrasts = grid_contrasts(fits, cfg)?;
    // An exactly constant path is exactly zero: bypass the rounding noise a
    // computed mean would reintroduce.
    if contrasts.iter().all(|&c| c == contrasts[0]) {
        return Ok(0.0);
    }
    let mean = contrasts.iter().sum::<f64>() / contrasts.len() as f64;
    Ok(match cfg.statistic {
        CvmStatistic::Cvm => {
            let ss: f64 = contrasts.iter().map(|c| (c - mean) * (c - mean)).sum();
            n as f64 * delta * ss
        }
        CvmStatistic::Ks => {
            let sup = contrasts
                .iter()
                .map(|c| (c - mean).abs())
                .fold(0.0, f64::max);
            (n as f64).sqrt() * sup
        }
    })
}

/// Checks that `fits` covers `cfg.tau_grid` in order and applies the
/// contrast row to each fitted parameter vector.
fn grid_contrasts(fits: &[QuantileFit], cfg: &CvmConfig) -> Result<Vec<f64>> {
    if fits.len() != cfg.tau_grid.len() {
        return Err(Error::InvalidInput(format!(
            "{} fits do not cover the {}-point tau grid",
            fits.len(),
            cfg.tau_grid.len()
        )));
    }
    let mut out = Vec::with_capacity(fits.len());
    for (fit, &tau) in fits.iter().zip(&cfg.tau_grid) {
        if (fit.tau - tau).abs() > CELL_TOL {
            return Err(Error::InvalidInput(format!(
                "fit at tau = {} does not match grid level {tau}",
                fit.tau
            )));
        }
        let th = fit.theta_hat.as_array();
        out.push(cfg.r[0] * th[0] + cfg.r[1] * th[1] + cfg.r[2] * th[2]);
    }
    Ok(out)
}

/// Estimated score process, one row per observation and one column per grid
/// level, already contrasted and centered across the grid.
///
/// Per level the observation's influence is the weighted, sign-scored
/// gradient premultiplied by the inverse density-weighted information
/// matrix. Densities come from difference quotients between grid-neighbor
/// fits: the plug-in bandwidth is snapped to a whole number of grid cells
/// (at least one), windows go one-sided at the grid edges, and per
/// observation the fitted quantile path is rearranged (sorted) across the
/// grid first; a still-nonpositive spread contributes density zero.
pub fn estimated_scores(
    series: &ReturnSeries,
    fits: &[QuantileFit],
    weights: &[f64],
    cfg: &CvmConfig,
) -> Result<Vec<Vec<f64>>> {
    let delta = cfg.validate()?;
    let n = series.len();
    let k_grid = cfg.tau_grid.len();
    if weights.len() != n {
        return Err(Error::InvalidInput(
            "weights length does not match series".into(),
        ));
    }
    if fits.len() != k_grid {
        return Err(Error::InvalidInput(format!(
            "{} fits do not cover the {}-point tau grid",
            fits.len(),
            k_grid
        )));
    }
    let wid = weights_id(weights);
    for fit in fits {
        if fit.weights_id != wid {
            return Err(Error::InvalidInput(
                "fits must share the supplied weight sequence".into(),
            ));
        }
    }
    let abs = series.abs_values();
    let y = series.values();

    // Per level: fitted quantile and gradient paths.
    let mut qtilde = vec![0.0; n * k_grid];
    let mut grads: Vec<Vec<[f64; 3]>> = Vec::with_capacity(k_grid);
    for (k, fit) in fits.iter().enumerate() {
        if (fit.tau - cfg.tau_grid[k]).abs() > CELL_TOL {
            return Err(Error::InvalidInput(format!(
                "fit at tau = {} does not match grid level {}",
                fit.tau, cfg.tau_grid[k]
            )));
        }
        let th = fit.theta_hat;
        let (x, d, _) = curvature_paths(&abs, th.beta1);
        let mut g = Vec::with_capacity(n);
        for t in 0..n {
            qtilde[t * k_grid + k] = th.omega + th.alpha1 * x[t];
            g.push([1.0, x[t], th.alpha1 * d[t]]);
        }
        grads.push(g);
    }

    // Rearranged copy for the density difference quotients.
    let mut qsorted = qtilde.clone();
    for t in 0..n {
        let row = &mut qsorted[t * k_grid..(t + 1) * k_grid];
        row.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }

    // Per level: invert the density-weighted information matrix and collect
    // each observation's influence vector.
    let mut influence = vec![[0.0; 3]; n * k_grid];
    for k in 0..k_grid {
        let tau = cfg.tau_grid[k];
        let l = bandwidth(BandwidthKind::HallSheather, tau, n)?;
        let cells = ((l / delta).round() as usize).max(1);
        let lo = k.saturating_sub(cells);
        let hi = (k + cells).min(k_grid - 1);
        let tau_span = cfg.tau_grid[hi] - cfg.tau_grid[lo];

        let mut omega1 = Mat::zeros(3);
        for t in 0..n {
            let spread = qsorted[t * k_grid + hi] - qsorted[t * k_grid + lo];
            let f = if spread > 0.0 {
                (tau_span / spread).min(F_CAP)
            } else {
                0.0
            };
            omega1.add_outer(&grads[k][t], f * weights[t]);
        }
        omega1.scale(1.0 / n as f64);
        let cond = omega1.condition_estimate();
        if cond > CONDITION_WARNING {
            return Err(Error::Singular {
                context: format!("density-weighted information at tau = {tau}"),
                cond,
            });
        }
        let inv = omega1.inverse().map_err(|e| match e {
            Error::Singular { context: _, cond } => Error::Singular {
                context: format!("density-weighted information at tau = {tau}"),
                cond,
            },
            other => other,
        })?;
        for t in 0..n {
            let scale = weights[t] * psi_raw(tau, y[t] - qtilde[t * k_grid + k]);
            let m = inv.mul_vec(&grads[k][t]);
            influence[t * k_grid + k] = [m[0] * scale, m[1] * scale, m[2] * scale];
        }
    }

    // Contrast and center across the grid.
    let mut scores = vec![vec![0.0; k_grid]; n];
    for t in 0..n {
        let mut mean = [0.0; 3];
        for k in 0..k_grid {
            let m = influence[t * k_grid + k];
            mean[0] += m[0];
            mean[1] += m[1];
            mean[2] += m[2];
        }
        for m in &mut mean {
            *m /= k_grid as f64;
        }
        for k in 0..k_grid {
            let m = influence[t * k_grid + k];
            scores[t][k] = cfg.r[0] * (m[0] - mean[0])
                + cfg.r[1] * (m[1] - mean[1])
                + cfg.r[2] * (m[2] - mean[2]);
        }
    }
    Ok(scores)
}

/// Subsampling distribution of the statistic from overlapping blocks of the
/// score rows, with the critical value and p-value per the configuration.
pub fn subsample_test(
    scores: &[Vec<f64>],
    statistic_value: f64,
    cfg: &CvmConfig,
) -> Result<CvmResult> {
    let delta = cfg.validate()?;
    let n = scores.len();
    let k_grid = cfg.tau_grid.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty score matrix".into()));
    }
    if scores.iter().any(|row| row.len() != k_grid) {
        return Err(Error::InvalidInput(
            "score rows do not match the tau grid".into(),
        ));
    }
    if !statistic_value.is_finite() {
        return Err(Error::InvalidInput(format!(
            "statistic value {statistic_value} is not finite"
        )));
    }
    let b = cfg.block_size(n);
    if b < 2 {
        return Err(Error::InvalidInput(format!(
            "block size {b} below the minimum of 2"
        )));
    }
    if b > n {
        return Err(Error::InvalidInput(format!(
            "block size {b} exceeds the sample size {n}"
        )));
    }

    // Column prefix sums make each block's mean an O(1) difference.
    let mut prefix = vec![0.0; (n + 1) * k_grid];
    for t in 0..n {
        for k in 0..k_grid {
            prefix[(t + 1) * k_grid + k] = prefix[t * k_grid + k] + scores[t][k];
        }
    }
    let blocks = n - b + 1;
    let bf = b as f64;
    let mut stats = Vec::with_capacity(blocks);
    for start in 0..blocks {
        let mut acc: f64 = 0.0;
        for k in 0..k_grid {
            let v = (prefix[(start + b) * k_grid + k] - prefix[start * k_grid + k]) / bf;
            match cfg.statistic {
                CvmStatistic::Cvm => acc += v * v,
                CvmStatistic::Ks => acc = acc.max(v.abs()),
            }
        }
        stats.push(match cfg.statistic {
            CvmStatistic::Cvm => bf * delta * acc,
            CvmStatistic::Ks => bf.sqrt() * acc,
        });
    }

    let critical_value = quantile_type7(&stats, 1.0 - cfg.alpha)?;
    let exceed = stats.iter().filter(|&&s| s >= statistic_value).count();
    Ok(CvmResult {
        statistic_value,
        critical_value,
        p_value: exceed as f64 / blocks as f64,
        block_size: b,
        subsample_statistics: stats,
        low_replication_warning: blocks < MIN_BLOCKS,
    })
}

/// Full pipeline: independent per-level fits over the grid sharing one
/// weight sequence, the observed statistic, the estimated score process,
/// and the subsampling comparison. Returns the test outcome and the grid
/// fits.
pub fn run_cvm_test(
    series: &ReturnSeries,
    cfg: &CvmConfig,
    fit_cfg: &QrFitConfig,
) -> Result<(CvmResult, Vec<QuantileFit>)> {
    cfg.validate()?;
    let weights = resolve_weights(series, &fit_cfg.weights)?;
    let mut shared = fit_cfg.clone();
    shared.weights = Some(weights.clone());
    let fits = crate::qr::multi_tau_fit(series, &cfg.tau_grid, &shared)?;
    let statistic = cvm_statistic(&fits, series.len(), cfg)?;
    let scores = estimated_scores(series, &fits, &weights, cfg)?;
    let result = subsample_test(&scores, statistic, cfg)?;
    Ok((result, fits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QGarchParams;
    use crate::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn fit_at(tau: f64, beta1: f64) -> QuantileFit {
        QuantileFit {
            tau,
            theta_hat: QGarchParams::new(0.1, 0.2, beta1).unwrap(),
            objective_value: 0.0,
            cov: None,
            bandwidth_used: None,
            weights_id: 0,
        }
    }

    #[test]
    fn statistic_zero_for_constant_contrast() {
        let cfg = CvmConfig::new(vec![0.7, 0.705, 0.71]);
        let fits: Vec<_> = cfg.tau_grid.iter().map(|&t| fit_at(t, 0.4)).collect();
        assert_eq!(cvm_statistic(&fits, 500, &cfg).unwrap(), 0.0);
        let mut ks = cfg.clone();
        ks.statistic = CvmStatistic::Ks;
        assert_eq!(cvm_statistic(&fits, 500, &ks).unwrap(), 0.0);
    }

    #[test]
    fn statistic_matches_hand_computation_on_two_point_grid() {
        // Contrast values (0.3, 0.5): mean 0.4, squared deviations 0.01 each,
        // so 100 * 0.005 * 0.02 = 0.01; the sup variant gives 10 * 0.1 = 1.
        let cfg = CvmConfig::new(vec![0.7, 0.705]);
        let fits = vec![fit_at(0.7, 0.3), fit_at(0.705, 0.5)];
        let s = cvm_statistic(&fits, 100, &cfg).unwrap();
        assert_relative_eq!(s, 0.01, max_relative = 1e-12);
        let mut ks = cfg.clone();
        ks.statistic = CvmStatistic::Ks;
        let s_ks = cvm_statistic(&fits, 100, &ks).unwrap();
        assert_relative_eq!(s_ks, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn statistic_shift_invariant_and_quadratic_in_scale() {
        let mut cfg = CvmConfig::new(vec![0.7, 0.705, 0.71]);
        cfg.r = [1.0, 0.0, 0.0];
        let make = |omegas: [f64; 3]| -> Vec<QuantileFit> {
            cfg.tau_grid
                .iter()
                .zip(omegas)
                .map(|(&t, o)| {
                    let mut f = fit_at(t, 0.4);
                    f.theta_hat = QGarchParams::new(o, 0.2, 0.4).unwrap();
                    f
                })
                .collect()
        };
        let base = cvm_statistic(&make([0.3, 0.5, 0.4]), 200, &cfg).unwrap();
        let shifted = cvm_statistic(&make([0.5, 0.7, 0.6]), 200, &cfg).unwrap();
        assert_relative_eq!(base, shifted, max_relative = 1e-10);
        let scaled = cvm_statistic(&make([0.9, 1.5, 1.2]), 200, &cfg).unwrap();
        assert_relative_eq!(scaled, 9.0 * base, max_relative = 1e-10);

        cfg.statistic = CvmStatistic::Ks;
        let base = cvm_statistic(&make([0.3, 0.5, 0.4]), 200, &cfg).unwrap();
        let scaled = cvm_statistic(&make([0.9, 1.5, 1.2]), 200, &cfg).unwrap();
        assert_relative_eq!(scaled, 3.0 * base, max_relative = 1e-10);
    }

    #[test]
    fn config_validation_rejects_bad_grids() {
        assert!(CvmConfig::new(vec![0.7]).validate().is_err());
        assert!(CvmConfig::new(vec![0.7, 0.705, 0.715]).validate().is_err());
        assert!(CvmConfig::new(vec![0.705, 0.7]).validate().is_err());
        let mut cfg = CvmConfig::new(vec![0.7, 0.705]);
        cfg.r = [0.0, 0.0, 0.0];
        assert!(cfg.validate().is_err());
        cfg = CvmConfig::new(vec![0.7, 0.705]);
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn statistic_rejects_fits_not_covering_the_grid() {
        let cfg = CvmConfig::new(vec![0.7, 0.705, 0.71]);
        let fits = vec![fit_at(0.7, 0.3), fit_at(0.705, 0.5)];
        assert!(cvm_statistic(&fits, 100, &cfg).is_err());
        let fits = vec![fit_at(0.7, 0.3), fit_at(0.705, 0.5), fit_at(0.72, 0.4)];
        assert!(cvm_statistic(&fits, 100, &cfg).is_err());
    }

    #[test]
    fn tau_grid_helper_tiles_the_interval() {
        let g = tau_grid(0.7, 0.995, 0.005).unwrap();
        assert_eq!(g.len(), 60);
        assert_relative_eq!(g[0], 0.7);
        assert_relative_eq!(*g.last().unwrap(), 0.995, max_relative = 1e-12);
        assert!(CvmConfig::new(g).validate().is_ok());
        assert!(tau_grid(0.7, 0.9951, 0.005).is_err());
        assert!(tau_grid(0.9, 0.7, 0.005).is_err());
    }

    #[test]
    fn block_size_follows_floor_of_scaled_sqrt_n() {
        let cfg = CvmConfig::new(vec![0.7, 0.705]);
        assert_eq!(cfg.block_size(1637), 40);
        assert_eq!(cfg.block_size(1000), 31);
        assert_eq!(cfg.block_size(100), 10);
    }

    #[test]
    fn zero_scores_make_every_block_statistic_zero() {
        let cfg = CvmConfig::new(vec![0.7, 0.705]);
        let scores = vec![vec![0.0; 2]; 400];
        let r = subsample_test(&scores, 0.01, &cfg).unwrap();
        assert_eq!(r.block_size, 20);
        assert_eq!(r.subsample_statistics.len(), 381);
        assert!(r.subsample_statistics.iter().all(|&s| s == 0.0));
        assert_eq!(r.critical_value, 0.0);
        assert_eq!(r.p_value, 0.0);
        assert!(!r.low_replication_warning);

        let r = subsample_test(&scores, 0.0, &cfg).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn block_statistics_match_naive_per_block_sums() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let k_grid = 5;
        let grid: Vec<f64> = (0..k_grid).map(|i| 0.7 + 0.005 * i as f64).collect();
        let n = 300;
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k_grid).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        for statistic in [CvmStatistic::Cvm, CvmStatistic::Ks] {
            let mut cfg = CvmConfig::new(grid.clone());
            cfg.statistic = statistic;
            let r = subsample_test(&scores, 1.0, &cfg).unwrap();
            let b = r.block_size;
            for (start, &got) in r.subsample_statistics.iter().enumerate() {
                let mut acc: f64 = 0.0;
                for k in 0..k_grid {
                    let v: f64 =
                        scores[start..start + b].iter().map(|row| row[k]).sum::<f64>() / b as f64;
                    match statistic {
                        CvmStatistic::Cvm => acc += v * v,
                        CvmStatistic::Ks => acc = acc.max(v.abs()),
                    }
                }
                let naive = match statistic {
                    CvmStatistic::Cvm => b as f64 * 0.005 * acc,
                    CvmStatistic::Ks => (b as f64).sqrt() * acc,
                };
                assert_relative_eq!(got, naive, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn p_value_never_increases_with_the_statistic() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let grid = vec![0.7, 0.705, 0.71];
        let scores: Vec<Vec<f64>> = (0..250)
            .map(|_| (0..3).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        let cfg = CvmConfig::new(grid);
        let mut last_p = 1.0;
        for s in [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0] {
            let r = subsample_test(&scores, s, &cfg).unwrap();
            assert!(r.p_value <= last_p + 1e-15);
            assert!((0.0..=1.0).contains(&r.p_value));
            last_p = r.p_value;
        }
    }

    #[test]
    fn oversized_blocks_and_tiny_samples_are_rejected() {
        let cfg = CvmConfig::new(vec![0.7, 0.705]);
        let scores = vec![vec![0.0; 2]; 40];
        let mut big = cfg.clone();
        big.block_factor = 8.0;
        assert!(subsample_test(&scores, 0.0, &big).is_err());
        let tiny = vec![vec![0.0; 2]; 2];
        assert!(subsample_test(&tiny, 0.0, &cfg).is_err());
        let r = subsample_test(&scores, 0.0, &cfg).unwrap();
        assert!(r.low_replication_warning);
    }

    fn constant_coefficient_sample(n: usize, seed: u64) -> ReturnSeries {
        let coef = preset_setting("5.4", Dist::Normal, Some(0.0)).unwrap();
        let mut spec = SimulationSpec::new(coef, n, seed);
        spec.burn_in = 300;
        simulate_qgarch(&spec).unwrap()
    }

    #[test]
    fn scores_are_centered_across_the_grid_per_observation() {
        let series = constant_coefficient_sample(400, 11);
        let cfg = CvmConfig::new(tau_grid(0.7, 0.8, 0.02).unwrap());
        let mut fit_cfg = QrFitConfig::new(0.7);
        fit_cfg.refine_iters = 8;
        let weights = resolve_weights(&series, &None).unwrap();
        let mut shared = fit_cfg.clone();
        shared.weights = Some(weights.clone());
        let fits = crate::qr::multi_tau_fit(&series, &cfg.tau_grid, &shared).unwrap();
        let scores = estimated_scores(&series, &fits, &weights, &cfg).unwrap();
        for row in &scores {
            let s: f64 = row.iter().sum();
            let scale: f64 = row.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            assert!(s.abs() <= 1e-10 * scale, "row sum {s} not centered");
        }
    }

    #[test]
    fn score_columns_average_near_zero_under_constant_coefficients() {
        let series = constant_coefficient_sample(800, 23);
        let cfg = CvmConfig::new(tau_grid(0.7, 0.9, 0.02).unwrap());
        let mut fit_cfg = QrFitConfig::new(0.7);
        fit_cfg.refine_iters = 8;
        let weights = resolve_weights(&series, &None).unwrap();
        let mut shared = fit_cfg.clone();
        shared.weights = Some(weights.clone());
        let fits = crate::qr::multi_tau_fit(&series, &cfg.tau_grid, &shared).unwrap();
        let scores = estimated_scores(&series, &fits, &weights, &cfg).unwrap();
        let n = scores.len() as f64;
        for k in 0..cfg.tau_grid.len() {
            let mean = scores.iter().map(|row| row[k]).sum::<f64>() / n;
            let var = scores
                .iter()
                .map(|row| (row[k] - mean) * (row[k] - mean))
                .sum::<f64>()
                / n;
            let se = (var / n).sqrt();
            assert!(
                mean.abs() < 3.0 * se.max(1e-12),
                "column {k}: mean {mean} vs SE {se}"
            );
        }
    }

    #[test]
    fn full_test_runs_end_to_end_on_simulated_data() {
        let series = constant_coefficient_sample(500, 31);
        let cfg = CvmConfig::new(tau_grid(0.7, 0.8, 0.02).unwrap());
        let mut fit_cfg = QrFitConfig::new(0.7);
        fit_cfg.refine_iters = 8;
        let (result, fits) = run_cvm_test(&series, &cfg, &fit_cfg).unwrap();
        assert_eq!(fits.len(), cfg.tau_grid.len());
        assert_eq!(result.block_size, 22);
        assert_eq!(result.subsample_statistics.len(), 500 - 22 + 1);
        assert!(result.statistic_value >= 0.0);
        assert!(result.critical_value >= 0.0);
        assert!((0.0..=1.0).contains(&result.p_value));
        let again = cvm_statistic(&fits, series.len(), &cfg).unwrap();
        assert_relative_eq!(result.statistic_value, again, max_relative = 1e-12);
    }
}
