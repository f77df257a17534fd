//! Dev harness: print the fitted persistence path the constancy test uses.

use qgarch::inference::{run_cvm_test, tau_grid, CvmConfig};
use qgarch::qr::QrFitConfig;
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};

fn main() {
    for seed in [7000u64, 7003, 7011] {
        let n = 1000;
        let coef = preset_setting("5.4", Dist::Normal, Some(0.0)).unwrap();
        let spec = SimulationSpec::new(coef, n, seed);
        let series = simulate_qgarch(&spec).unwrap();
        let grid = tau_grid(0.7, 0.995, 0.005).unwrap();
        let cfg = CvmConfig::new(grid.clone());
        let mut fit_cfg = QrFitConfig::new(0.7);
        fit_cfg.refine_iters = 12;
        let (result, fits) = run_cvm_test(&series, &cfg, &fit_cfg).unwrap();
        let path: Vec<String> = fits
            .iter()
            .step_by(6)
            .map(|f| format!("{:.3}", f.theta_hat.beta1))
            .collect();
        println!(
            "seed {seed}: S_n {:.2} crit {:.2} beta path {}",
            result.statistic_value,
            result.critical_value,
            path.join(" ")
        );
        let alphas: Vec<String> = fits
            .iter()
            .step_by(6)
            .map(|f| format!("{:+.3}", f.theta_hat.alpha1))
            .collect();
        println!("            alpha path {}", alphas.join(" "));
    }
}
