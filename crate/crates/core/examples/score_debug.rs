//! Dev harness: dissect the estimated score process behind the constancy
//! test's subsampling distribution — density-window health per level and
//! the heaviest score rows.

use qgarch::inference::{estimated_scores, tau_grid, CvmConfig};
use qgarch::model::{compute_self_weights, SelfWeightConfig};
use qgarch::qr::{multi_tau_fit, QrFitConfig};
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};

fn main() {
    let n = 1000;
    let coef = preset_setting("5.4", Dist::Normal, Some(0.0)).unwrap();
    let spec = SimulationSpec::new(coef, n, 7003);
    let series = simulate_qgarch(&spec).unwrap();
    let weights = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
    let grid = tau_grid(0.7, 0.995, 0.005).unwrap();
    let cfg = CvmConfig::new(grid.clone());
    let mut fit_cfg = QrFitConfig::new(0.7);
    fit_cfg.refine_iters = 12;
    fit_cfg.weights = Some(weights.clone());

    let fits = multi_tau_fit(&series, &grid, &fit_cfg).unwrap();
    let scores = estimated_scores(&series, &fits, &weights, &cfg).unwrap();

    let kk = grid.len();
    // Row energy: per observation, the squared score summed over levels.
    let mut energy: Vec<(f64, usize)> = scores
        .iter()
        .enumerate()
        .map(|(t, row)| (row.iter().map(|z| z * z).sum::<f64>(), t))
        .collect();
    energy.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let total: f64 = energy.iter().map(|e| e.0).sum();
    println!("total score energy {total:.1}");
    println!("top rows by share of total energy:");
    let y = series.values();
    for &(e, t) in energy.iter().take(8) {
        let zmax = scores[t]
            .iter()
            .fold(0.0f64, |m, z| m.max(z.abs()));
        println!(
            "  t {t}: share {:.3} max|z| {:.1} w {:.4} |y_t| {:.3} |y_(t-1)| {:.3}",
            e / total,
            zmax,
            weights[t],
            y[t].abs(),
            if t > 0 { y[t - 1].abs() } else { 0.0 }
        );
    }
    let med = energy[kk.min(energy.len() / 2)].0;
    println!("median row energy {med:.3}");

    // Per-level score spread vs its largest contributor.
    println!("levels: sd(z) and max|z|, beta-hat, alpha-hat");
    for k in [0usize, 14, 29, 44, 59] {
        let col: Vec<f64> = scores.iter().map(|row| row[k]).collect();
        let m: f64 = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / n as f64).sqrt();
        let mx = col.iter().fold(0.0f64, |a, z| a.max(z.abs()));
        let th = fits[k].theta_hat;
        println!(
            "  tau {:.3}: sd {:.2} max {:.1} beta {:.3} alpha {:+.4}",
            grid[k], sd, mx, th.beta1, th.alpha1
        );
    }
}
