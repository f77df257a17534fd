//! Dev harness: compare the Monte Carlo distribution of the constancy
//! statistic against subsample critical values, level by level.
//! Usage: cvm_debug [d] [n] [reps]

use qgarch::inference::{run_cvm_test, tau_grid, CvmConfig};
use qgarch::qr::QrFitConfig;
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let d: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let reps: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(50);
    let grid = tau_grid(0.7, 0.995, 0.005).unwrap();
    let kk = grid.len();
    let cfg = CvmConfig::new(grid.clone());
    let mut fit_cfg = QrFitConfig::new(0.7);
    fit_cfg.refine_iters = 12;

    let mut stats = Vec::new();
    let mut crits = Vec::new();
    let mut rejections = 0;
    let mut contrasts: Vec<Vec<f64>> = Vec::new();
    let mut block_sd_sum = vec![0.0; kk];
    let mut beta_sum = vec![0.0; kk];
    let mut alpha_sum = vec![0.0; kk];
    for r in 0..reps {
        let coef = preset_setting("5.4", Dist::Normal, Some(d)).unwrap();
        let spec = SimulationSpec::new(coef, n, 7000 + r);
        let series = simulate_qgarch(&spec).unwrap();
        let (result, fits) = run_cvm_test(&series, &cfg, &fit_cfg).unwrap();
        stats.push(result.statistic_value);
        crits.push(result.critical_value);
        if result.statistic_value > result.critical_value {
            rejections += 1;
        }
        let cs: Vec<f64> = fits.iter().map(|f| f.theta_hat.beta1).collect();
        let mean = cs.iter().sum::<f64>() / kk as f64;
        contrasts.push(cs.iter().map(|c| c - mean).collect());
        for k in 0..kk {
            beta_sum[k] += fits[k].theta_hat.beta1;
            alpha_sum[k] += fits[k].theta_hat.alpha1;
        }

        // Block-implied per-level sd of sqrt(n) * centered contrast, from the
        // same scores the critical value is built on.
        let weights = qgarch::model::compute_self_weights(
            &series,
            &qgarch::model::SelfWeightConfig::default(),
        )
        .unwrap();
        let scores =
            qgarch::inference::estimated_scores(&series, &fits, &weights, &cfg).unwrap();
        let b = cfg.block_size(n);
        let blocks = n - b + 1;
        for k in 0..kk {
            let mut acc = 0.0;
            let mut sum: f64 = scores[..b].iter().map(|row| row[k]).sum();
            let mut tail = 0;
            loop {
                let v = sum / b as f64;
                acc += b as f64 * v * v;
                if tail + b == n {
                    break;
                }
                sum += scores[tail + b][k] - scores[tail][k];
                tail += 1;
            }
            block_sd_sum[k] += (acc / blocks as f64).sqrt();
        }
    }

    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |v: &[f64], p: f64| v[((v.len() - 1) as f64 * p) as usize];
    println!(
        "d={d} n={n}: S_n over {reps} reps: med {:.3} q90 {:.3} q95 {:.3} max {:.3}",
        q(&stats, 0.5),
        q(&stats, 0.90),
        q(&stats, 0.95),
        stats[stats.len() - 1]
    );
    let mean_crit = crits.iter().sum::<f64>() / reps as f64;
    let poisoned = crits.iter().filter(|&&c| c > 100.0).count();
    let mut cs = crits.clone();
    cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "subsample critical: med {:.3} mean {:.3}  crit>100 in {poisoned}/{reps}",
        q(&cs, 0.5),
        mean_crit
    );
    println!(
        "rejection rate at 5%: {:.3}",
        rejections as f64 / reps as f64
    );

    println!("per-level: MC sd of sqrt(n)*(c_k - cbar) vs block-implied sd; mean fit");
    for k in [0usize, 9, 19, 29, 39, 49, 59] {
        let col: Vec<f64> = contrasts.iter().map(|c| c[k]).collect();
        let m = col.iter().sum::<f64>() / reps as f64;
        let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (reps - 1) as f64;
        let mc_sd = (n as f64).sqrt() * var.sqrt();
        println!(
            "  tau {:.3}: MC {:.3}  blocks {:.3}  beta {:.3} alpha {:.3}",
            grid[k],
            mc_sd,
            block_sd_sum[k] / reps as f64,
            beta_sum[k] / reps as f64,
            alpha_sum[k] / reps as f64
        );
    }
}
