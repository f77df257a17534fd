//! Dev harness: measure the full-sample column means of the constancy-test
//! scores and the block-statistic inflation they imply.

use qgarch::inference::{estimated_scores, run_cvm_test, tau_grid, CvmConfig};
use qgarch::model::{compute_self_weights, SelfWeightConfig};
use qgarch::qr::QrFitConfig;
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};

fn main() {
    let n = 1000;
    let grid = tau_grid(0.7, 0.995, 0.005).unwrap();
    let kk = grid.len();
    let cfg = CvmConfig::new(grid.clone());
    let mut fit_cfg = QrFitConfig::new(0.7);
    fit_cfg.refine_iters = 12;
    let b = cfg.block_size(n);

    for seed in [7000u64, 7003, 7010, 7021] {
        let coef = preset_setting("5.4", Dist::Normal, Some(0.0)).unwrap();
        let spec = SimulationSpec::new(coef, n, seed);
        let series = simulate_qgarch(&spec).unwrap();
        let weights = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
        let (result, fits) = run_cvm_test(&series, &cfg, &fit_cfg).unwrap();
        let scores = estimated_scores(&series, &fits, &weights, &cfg).unwrap();

        let mut sum_sq = 0.0;
        let mut worst: f64 = 0.0;
        for k in 0..kk {
            let m: f64 = scores.iter().map(|r| r[k]).sum::<f64>() / n as f64;
            sum_sq += m * m;
            worst = worst.max(m.abs());
        }
        println!(
            "seed {seed}: crit {:8.3}  S_n {:6.3}  b*delta*sum(mean^2) {:8.3}  max|mean| {:.3}",
            result.critical_value,
            result.statistic_value,
            b as f64 * 0.005 * sum_sq,
            worst
        );
    }
}
