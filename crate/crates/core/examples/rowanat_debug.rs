//! Dev harness: dissect the largest score rows feeding the subsample
//! critical value, and the block-size sensitivity of that critical value.

use qgarch::inference::{estimated_scores, run_cvm_test, subsample_test, tau_grid, CvmConfig};
use qgarch::model::{compute_self_weights, SelfWeightConfig};
use qgarch::qr::QrFitConfig;
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};

fn main() {
    let n = 1000;
    let grid = tau_grid(0.7, 0.995, 0.005).unwrap();
    let kk = grid.len();
    let mut fit_cfg = QrFitConfig::new(0.7);
    fit_cfg.refine_iters = 12;

    for seed in [7003u64, 7021] {
        let coef = preset_setting("5.4", Dist::Normal, Some(0.0)).unwrap();
        let spec = SimulationSpec::new(coef, n, seed);
        let series = simulate_qgarch(&spec).unwrap();
        let y = series.values();
        let weights = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
        let cfg = CvmConfig::new(grid.clone());
        let (result, fits) = run_cvm_test(&series, &cfg, &fit_cfg).unwrap();
        let scores = estimated_scores(&series, &fits, &weights, &cfg).unwrap();
        println!(
            "seed {seed}: S_n {:.3} crit {:.3} (b=31)",
            result.statistic_value, result.critical_value
        );
        for b in [15usize, 31, 62, 124] {
            let mut c = cfg.clone();
            c.block_factor = b as f64 / (n as f64).sqrt() + 1e-9;
            let r = subsample_test(&scores, result.statistic_value, &c).unwrap();
            println!("  b {b:4}: crit {:10.3} p {:.3}", r.critical_value, r.p_value);
        }

        // Row energy = sum over levels of z^2; top rows dominate blocks.
        let mut energy: Vec<(f64, usize)> = scores
            .iter()
            .enumerate()
            .map(|(t, row)| (row.iter().map(|z| z * z).sum::<f64>(), t))
            .collect();
        energy.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let total: f64 = energy.iter().map(|e| e.0).sum();
        println!(
            "  top-5 row share of score energy: {:.3}",
            energy[..5].iter().map(|e| e.0).sum::<f64>() / total
        );
        for &(e, t) in &energy[..5] {
            let z59 = scores[t][kk - 1];
            let z30 = scores[t][30];
            println!(
                "   t {t:4}: energy {:9.1} w {:.4} |y_t| {:7.3} |y_t-1| {:7.3} z[mid] {:8.2} z[.995] {:8.2}",
                e,
                weights[t],
                y[t].abs(),
                if t > 0 { y[t - 1].abs() } else { 0.0 },
                z30,
                z59
            );
        }
    }
}
