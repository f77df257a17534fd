//! Dev harness: compare the neighbor-difference density estimates feeding the
//! score covariance against the analytic conditional density of the
//! simulated process.

use qgarch::inference::{run_cvm_test, tau_grid, CvmConfig};
use qgarch::model::{compute_self_weights, normal_quantile, SelfWeightConfig};
use qgarch::qr::{bandwidth, BandwidthKind, QrFitConfig};
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};

fn main() {
    let n = 1000;
    let grid = tau_grid(0.7, 0.995, 0.005).unwrap();
    let kk = grid.len();
    let delta = 0.005;
    let cfg = CvmConfig::new(grid.clone());
    let mut fit_cfg = QrFitConfig::new(0.7);
    fit_cfg.refine_iters = 12;

    for seed in [7003u64, 7010, 7021] {
        let coef = preset_setting("5.4", Dist::Normal, Some(0.0)).unwrap();
        let spec = SimulationSpec::new(coef, n, seed);
        let series = simulate_qgarch(&spec).unwrap();
        let y = series.values();
        let weights = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
        let (_, fits) = run_cvm_test(&series, &cfg, &fit_cfg).unwrap();

        // Fitted quantile paths, rearranged per observation.
        let mut qtilde = vec![vec![0.0; kk]; n];
        for (k, fit) in fits.iter().enumerate() {
            let th = fit.theta_hat;
            let mut x = 0.0;
            for t in 0..n {
                qtilde[t][k] = th.omega + th.alpha1 * x;
                x = y[t].abs() + th.beta1 * x;
            }
        }
        let mut qsorted = qtilde.clone();
        for row in &mut qsorted {
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }

        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = y[t - 1].abs() + 0.3 * x[t - 1];
        }
        println!("seed {seed}: weighted mean estimated vs analytic density");
        for k in [0usize, 19, 39, 55, 59] {
            let l = bandwidth(BandwidthKind::HallSheather, grid[k], n).unwrap();
            let cells = ((l / delta).round() as usize).max(1);
            let lo = k.saturating_sub(cells);
            let hi = (k + cells).min(kk - 1);
            let tau_span = grid[hi] - grid[lo];
            let z = normal_quantile(grid[k]).unwrap();
            let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let mut est = 0.0;
            let mut tru = 0.0;
            let mut wsum = 0.0;
            for t in 0..n {
                let spread = qsorted[t][hi] - qsorted[t][lo];
                let f = if spread > 0.0 {
                    (tau_span / spread).min(1e3)
                } else {
                    0.0
                };
                est += weights[t] * f;
                tru += weights[t] * phi / (0.1 * (1.0 + x[t]));
                wsum += weights[t];
            }
            println!(
                "  tau {:.3} cells {cells}: est {:.3}  true {:.3}  ratio {:.3}",
                grid[k],
                est / wsum,
                tru / wsum,
                est / tru
            );
        }
    }
}
