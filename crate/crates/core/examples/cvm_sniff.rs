//! Dev harness: rough CvM size/power check on a handful of replications.

use qgarch::inference::{run_cvm_test, tau_grid, CvmConfig};
use qgarch::qr::QrFitConfig;
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};
use std::time::Instant;

fn rejection_rate(d: f64, n: usize, reps: u64, refine: usize) -> (f64, f64) {
    let cfg = CvmConfig::new(tau_grid(0.7, 0.995, 0.005).unwrap());
    let mut fit_cfg = QrFitConfig::new(0.7);
    fit_cfg.refine_iters = refine;
    let mut rejections = 0usize;
    let start = Instant::now();
    for r in 0..reps {
        let coef = preset_setting("5.4", Dist::Normal, Some(d)).unwrap();
        let spec = SimulationSpec::new(coef, n, 1000 + r);
        let series = simulate_qgarch(&spec).unwrap();
        let (result, _) = run_cvm_test(&series, &cfg, &fit_cfg).unwrap();
        if result.statistic_value > result.critical_value {
            rejections += 1;
        }
    }
    (
        rejections as f64 / reps as f64,
        start.elapsed().as_secs_f64() / reps as f64,
    )
}

fn main() {
    let (size, secs) = rejection_rate(0.0, 1000, 20, 12);
    println!("d=0.0 n=1000: rejection {size:.3}  ({secs:.2}s/rep)");
    let (power1, secs1) = rejection_rate(1.0, 2000, 10, 12);
    println!("d=1.0 n=2000: rejection {power1:.3}  ({secs1:.2}s/rep)");
    let (power16, secs16) = rejection_rate(1.6, 2000, 10, 12);
    println!("d=1.6 n=2000: rejection {power16:.3}  ({secs16:.2}s/rep)");
}
