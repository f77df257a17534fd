use qgarch::cqr::{cqr_fit, cqr_asymptotic_cov, g_transform, CqrConfig};
use qgarch::qr::{qr_fit, QrFitConfig};
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let tau0: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(42);

    let coef = preset_setting("5.2", Dist::Tukey { lambda: -0.2 }, None).unwrap();
    let spec = SimulationSpec::new(coef, n, seed);
    let series = simulate_qgarch(&spec).unwrap();

    let cfg = CqrConfig::new(tau0, 0.1);
    let t0 = std::time::Instant::now();
    let fit = cqr_fit(&series, &cfg).unwrap();
    let fit_time = t0.elapsed();
    let p = fit.phi_hat;
    println!(
        "cqr fit: a0={:.4} a1={:.4} b1={:.4} lambda={:.4} obj={:.3} [{:?}]",
        p.a0, p.a1, p.b1, p.lambda, fit.objective_value, fit_time
    );
    println!("  true: a0=0.0200 a1=0.1000 b1=0.8000 lambda=-0.2000");

    let theta = g_transform(&p, tau0).unwrap();
    println!(
        "  implied theta({tau0}): omega={:.4} alpha1={:.4} beta1={:.4}",
        theta.omega, theta.alpha1, theta.beta1
    );

    let weights = qgarch::model::compute_self_weights(&series, &Default::default()).unwrap();
    let t1 = std::time::Instant::now();
    match cqr_asymptotic_cov(&series, &fit, &weights, 1.0, false) {
        Ok(cov) => {
            let asd: Vec<f64> = (0..4)
                .map(|i| (cov.sigma[i][i] / n as f64).sqrt())
                .collect();
            println!(
                "  asd: a0={:.4} a1={:.4} b1={:.4} lambda={:.4}  B_n={:.2} dropped={} cond={:.2e} [{:?}]",
                asd[0], asd[1], asd[2], asd[3], cov.hac_bandwidth, cov.crossings_dropped,
                cov.omega1_condition, t1.elapsed()
            );
        }
        Err(e) => println!("  cov failed: {e}"),
    }

    let t2 = std::time::Instant::now();
    let qr_cfg = QrFitConfig::new(tau0);
    match qr_fit(&series, &qr_cfg) {
        Ok(qfit) => println!(
            "  qr at tau0: omega={:.4} alpha1={:.4} beta1={:.4} [{:?}]",
            qfit.theta_hat.omega, qfit.theta_hat.alpha1, qfit.theta_hat.beta1, t2.elapsed()
        ),
        Err(e) => println!("  qr failed: {e}"),
    }
}
