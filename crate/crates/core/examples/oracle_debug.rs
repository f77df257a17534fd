//! Dev harness: evaluate the true asymptotic sandwich for the persistence
//! coefficient per level at the true parameters, using the analytic
//! conditional density of the simulated process.

use qgarch::model::{compute_self_weights, normal_quantile, SelfWeightConfig};
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};

fn inv3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let c = |a: usize, b: usize| -> f64 {
        let r: Vec<usize> = (0..3).filter(|&i| i != a).collect();
        let s: Vec<usize> = (0..3).filter(|&j| j != b).collect();
        let minor = m[r[0]][s[0]] * m[r[1]][s[1]] - m[r[0]][s[1]] * m[r[1]][s[0]];
        if (a + b) % 2 == 0 {
            minor / det
        } else {
            -minor / det
        }
    };
    // Adjugate transpose.
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = c(j, i);
        }
    }
    out
}

fn main() {
    let n = 2000;
    let coef = preset_setting("5.4", Dist::Normal, Some(0.0)).unwrap();
    let spec = SimulationSpec::new(coef, n, 4242);
    let series = simulate_qgarch(&spec).unwrap();
    let y = series.values();
    let w = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();

    // Volatility path under the true persistence, for the analytic density.
    let mut x_true = vec![0.0; n];
    for t in 1..n {
        x_true[t] = y[t - 1].abs() + 0.3 * x_true[t - 1];
    }

    println!("asymptotic sd of sqrt(n)*(beta1-hat), rows = evaluation beta:");
    print!("beta_eval ");
    for tau in [0.7, 0.795, 0.895, 0.945, 0.995] {
        print!("  tau{:.3}", tau);
    }
    println!();
    for beta in [0.3, 0.5, 0.6, 0.7, 0.77, 0.85, 0.9] {
        let mut x = vec![0.0; n];
        let mut dd = vec![0.0; n];
        for t in 1..n {
            x[t] = y[t - 1].abs() + beta * x[t - 1];
            dd[t] = x[t - 1] + beta * dd[t - 1];
        }
        print!("{beta:9.2} ");
        for tau in [0.7, 0.795, 0.895, 0.945, 0.995] {
            let z = normal_quantile(tau).unwrap();
            // Slope rescaled so the fitted point matches the process scale.
            let alpha = 0.1 * z * (1.0 - beta) / 0.7;
            let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let mut o0 = [[0.0; 3]; 3];
            let mut o1 = [[0.0; 3]; 3];
            for t in 0..n {
                let sigma = 1.0 + x_true[t];
                let f = phi / (0.1 * sigma);
                let g = [1.0, x[t], alpha * dd[t]];
                for i in 0..3 {
                    for j in 0..3 {
                        o0[i][j] += w[t] * w[t] * g[i] * g[j] / n as f64;
                        o1[i][j] += w[t] * f * g[i] * g[j] / n as f64;
                    }
                }
            }
            let inv = inv3(o1);
            let mut var = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    var += inv[2][i] * o0[i][j] * inv[j][2];
                }
            }
            var *= tau * (1.0 - tau);
            print!(" {:8.2}", var.sqrt());
        }
        println!();
    }
}
