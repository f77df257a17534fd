//! Dev harness: print the beta1 profile objective at a weakly identified
//! quantile level to see how flat the valley is.

use qgarch::model::{compute_self_weights, SelfWeightConfig};
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};
use qgarch::solver::{solve_linear2, Linear2Problem};

fn main() {
    let n = 1000;
    let coef = preset_setting("5.4", Dist::Normal, Some(0.0)).unwrap();
    let spec = SimulationSpec::new(coef, n, 7000);
    let series = simulate_qgarch(&spec).unwrap();
    let y = series.values();
    let w = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();

    for tau in [0.75, 0.85, 0.95] {
        println!("tau = {tau}: profile objective by beta1");
        let mut best = (0.0, f64::INFINITY);
        for i in 1..=49 {
            let beta = 0.02 * i as f64;
            let mut x = vec![0.0; n];
            for t in 1..n {
                x[t] = y[t - 1].abs() + beta * x[t - 1];
            }
            let ones = vec![1.0; n];
            let taus = vec![tau; n];
            let p = Linear2Problem {
                u: y,
                v1: &ones,
                v2: &x,
                w: &w,
                taus: &taus,
                bounds1: (f64::NEG_INFINITY, f64::INFINITY),
                bounds2: (f64::NEG_INFINITY, f64::INFINITY),
            };
            let (_, _, obj) = solve_linear2(&p).unwrap();
            if obj < best.1 {
                best = (beta, obj);
            }
            if i % 4 == 0 || (0.26..0.4).contains(&beta) {
                println!("  beta {beta:.2}: {obj:.6}");
            }
        }
        println!("  argmin {:.2} obj {:.6}", best.0, best.1);
    }
}
