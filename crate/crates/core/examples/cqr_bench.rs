use qgarch::model::{compute_self_weights, tukey_quantile};
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};
use qgarch::solver::{objective2, solve_linear2_warm, Linear2Problem};
use std::time::Instant;

fn main() {
    let n: usize = 2000;
    let coef = preset_setting("5.2", Dist::Tukey { lambda: -0.2 }, None).unwrap();
    let spec = SimulationSpec::new(coef, n, 42);
    let series = simulate_qgarch(&spec).unwrap();
    let w = compute_self_weights(&series, &Default::default()).unwrap();
    let y = series.values();
    let abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();

    let kk = 19usize;
    let tau0 = 0.005;
    let h = 0.1;
    let levels: Vec<f64> = (0..kk)
        .map(|k| tau0 + h * k as f64 / (kk - 1) as f64)
        .collect();

    let mut u = vec![0.0; kk * n];
    let mut row_w = vec![0.0; kk * n];
    let mut row_tau = vec![0.0; kk * n];
    for k in 0..kk {
        for t in 0..n {
            u[k * n + t] = y[t];
            row_w[k * n + t] = w[t];
            row_tau[k * n + t] = levels[k];
        }
    }

    let regressor = |beta: f64| -> Vec<f64> {
        let mut x = vec![0.0; n];
        let mut s = 0.0;
        for t in 1..n {
            s = abs[t - 1] + beta * s;
            x[t] = s;
        }
        x
    };

    let fill = |lambda: f64, x: &[f64], v1: &mut Vec<f64>, v2: &mut Vec<f64>| {
        for k in 0..kk {
            let q = tukey_quantile(levels[k], lambda).unwrap();
            for t in 0..n {
                v1[k * n + t] = q;
                v2[k * n + t] = q * x[t];
            }
        }
    };

    let mut v1 = vec![0.0; kk * n];
    let mut v2 = vec![0.0; kk * n];

    // Single cold cell.
    let x = regressor(0.8);
    fill(-0.2, &x, &mut v1, &mut v2);
    let (a, b, obj, cold);
    {
        let p = Linear2Problem {
            u: &u,
            v1: &v1,
            v2: &v2,
            w: &row_w,
            taus: &row_tau,
            bounds1: (1e-8, f64::INFINITY),
            bounds2: (0.0, f64::INFINITY),
        };
        let t0 = Instant::now();
        let r = solve_linear2_warm(&p, None).unwrap();
        cold = t0.elapsed();
        let t1 = Instant::now();
        let r2 = solve_linear2_warm(&p, Some((r.0, r.1))).unwrap();
        let selfwarm = t1.elapsed();
        let t3 = Instant::now();
        let mut acc = 0.0;
        for _ in 0..10 {
            acc += objective2(&p, r.0, r.1);
        }
        let obj10 = t3.elapsed();
        (a, b, obj) = r;
        println!("cold cell: a0'={a:.5} a1={b:.5} obj={obj:.4} [{cold:?}]");
        println!("self-warm: a0'={:.5} a1={:.5} [{selfwarm:?}]", r2.0, r2.1);
        println!("objective2 x10: {obj10:?} (acc={acc:.1})");
    }

    // One full b1 column at lambda=-0.2 with warm carry; re-solve each cell
    // self-warm to detect capped (non-certified) terminations.
    let t2 = Instant::now();
    let mut warm = Some((a, b));
    let mut capped = 0;
    let mut worst_gap = 0.0f64;
    let mut resolve_time = std::time::Duration::ZERO;
    for i in 1..=49 {
        let b1 = i as f64 * 0.02;
        let x = regressor(b1);
        fill(-0.2, &x, &mut v1, &mut v2);
        let p = Linear2Problem {
            u: &u,
            v1: &v1,
            v2: &v2,
            w: &row_w,
            taus: &row_tau,
            bounds1: (1e-8, f64::INFINITY),
            bounds2: (0.0, f64::INFINITY),
        };
        let r = solve_linear2_warm(&p, warm).unwrap();
        let tr = Instant::now();
        let r2 = solve_linear2_warm(&p, Some((r.0, r.1))).unwrap();
        resolve_time += tr.elapsed();
        if r2.2 < r.2 - 1e-12 * (1.0 + r.2.abs()) {
            capped += 1;
            worst_gap = worst_gap.max((r.2 - r2.2) / r2.2.abs().max(1.0));
        }
        warm = Some((r2.0, r2.1));
    }
    let col = t2.elapsed() - resolve_time;
    println!(
        "49-cell b1 column, warm carry: {col:?} ({:?}/cell); capped cells {capped}/49, worst rel gap {worst_gap:.2e}",
        col / 49
    );

    // Smoothed-Newton localizer prototype: Moreau-envelope smoothing of the
    // check loss with eps continuation, column scaling, and backtracking
    // Newton steps.
    let smoothed = |p: &Linear2Problem, start: (f64, f64), eps0: f64| -> (f64, f64) {
        let n = p.u.len();
        let rms = |v: &[f64]| -> f64 {
            (v.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt().max(1e-300)
        };
        let (s1, s2) = (rms(p.v1), rms(p.v2));
        // Work in (a*s1, b*s2) so the Hessian is balanced.
        let (mut a, mut b) = (start.0 * s1, start.1 * s2);
        let mut eps = eps0;
        let sobj = |a: f64, b: f64, eps: f64| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                let r = p.u[i] - a * p.v1[i] / s1 - b * p.v2[i] / s2;
                let tau = p.taus[i];
                let val = if r >= eps * tau {
                    tau * r - 0.5 * eps * tau * tau
                } else if r <= -eps * (1.0 - tau) {
                    (tau - 1.0) * r - 0.5 * eps * (1.0 - tau) * (1.0 - tau)
                } else {
                    r * r / (2.0 * eps)
                };
                s += p.w[i] * val;
            }
            s
        };
        while eps > 1e-10 {
            for _ in 0..5 {
                let (mut g1, mut g2, mut h11, mut h12, mut h22) = (0.0, 0.0, 0.0, 0.0, 0.0);
                let mut gscale = 0.0;
                for i in 0..n {
                    let (z1, z2) = (p.v1[i] / s1, p.v2[i] / s2);
                    let r = p.u[i] - a * z1 - b * z2;
                    let tau = p.taus[i];
                    let psi = (r / eps).clamp(tau - 1.0, tau);
                    g1 -= p.w[i] * z1 * psi;
                    g2 -= p.w[i] * z2 * psi;
                    gscale += p.w[i] * (z1.abs() + z2.abs());
                    if r > -eps * (1.0 - tau) && r < eps * tau {
                        let m = p.w[i] / eps;
                        h11 += m * z1 * z1;
                        h12 += m * z1 * z2;
                        h22 += m * z2 * z2;
                    }
                }
                if g1.abs() + g2.abs() <= 1e-12 * gscale {
                    break;
                }
                let ridge = 1e-12 * (h11 + h22) + 1e-300;
                h11 += ridge;
                h22 += ridge;
                let det = h11 * h22 - h12 * h12;
                if !(det > 0.0) {
                    break;
                }
                let da = -(g1 * h22 - g2 * h12) / det;
                let db = -(h11 * g2 - h12 * g1) / det;
                let g_dot_d = g1 * da + g2 * db;
                if !(da.is_finite() && db.is_finite()) || g_dot_d >= 0.0 {
                    break;
                }
                let f0 = sobj(a, b, eps);
                let mut t = 1.0;
                let mut accepted = false;
                for _ in 0..30 {
                    let f1 = sobj(a + t * da, b + t * db, eps);
                    if f1 <= f0 + 0.25 * t * g_dot_d {
                        a += t * da;
                        b += t * db;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted || (da.abs() + db.abs()) * t < 1e-15 * (1.0 + a.abs() + b.abs()) {
                    break;
                }
            }
            eps *= 0.1;
        }
        (a / s1, b / s2)
    };

    {
        let x = regressor(0.8);
        fill(-0.2, &x, &mut v1, &mut v2);
        let p = Linear2Problem {
            u: &u,
            v1: &v1,
            v2: &v2,
            w: &row_w,
            taus: &row_tau,
            bounds1: (1e-8, f64::INFINITY),
            bounds2: (0.0, f64::INFINITY),
        };
        let t5 = Instant::now();
        let (sa, sb) = smoothed(&p, (0.0, 0.0), 1e-1);
        let smooth_time = t5.elapsed();
        let t6 = Instant::now();
        let (fa, fb, fobj) = solve_linear2_warm(&p, Some((sa, sb))).unwrap();
        let finish = t6.elapsed();
        println!(
            "smoothed cold: localize {smooth_time:?} -> ({sa:.6},{sb:.6}); finish {finish:?} -> ({fa:.6},{fb:.6}) obj={fobj:.4} (exact {obj:.4})"
        );
    }

    // Objective gap of the bare localizer endpoint vs the certified optimum
    // across the column: if tiny, scan cells need no descent at all.
    {
        let mut warm = (0.15, 0.09);
        let mut max_gap = 0.0f64;
        let mut loc_time = std::time::Duration::ZERO;
        for i in 1..=49 {
            let b1 = i as f64 * 0.02;
            let x = regressor(b1);
            fill(-0.2, &x, &mut v1, &mut v2);
            let p = Linear2Problem {
                u: &u,
                v1: &v1,
                v2: &v2,
                w: &row_w,
                taus: &row_tau,
                bounds1: (1e-8, f64::INFINITY),
                bounds2: (0.0, f64::INFINITY),
            };
            let tl = Instant::now();
            let loc = smoothed(&p, warm, 1e-2);
            loc_time += tl.elapsed();
            let lobj = objective2(&p, loc.0.max(1e-8), loc.1.max(0.0));
            let r = solve_linear2_warm(&p, Some(loc)).unwrap();
            max_gap = max_gap.max((lobj - r.2) / r.2.abs().max(1.0));
            warm = (r.0, r.1);
        }
        println!(
            "localizer-only gap across column: max rel {max_gap:.2e}, localize {:?}/cell",
            loc_time / 49
        );
    }

    // Full column driven by smoothed localizer + exact finish, with
    // per-phase timing.
    for eps0 in [1e-1, 1e-3] {
        let t7 = Instant::now();
        let mut warm = (0.15, 0.09);
        let mut loc_total = std::time::Duration::ZERO;
        let mut fin_total = std::time::Duration::ZERO;
        let mut fin_max = std::time::Duration::ZERO;
        let mut fin_max_b1 = 0.0;
        for i in 1..=49 {
            let b1 = i as f64 * 0.02;
            let x = regressor(b1);
            fill(-0.2, &x, &mut v1, &mut v2);
            let p = Linear2Problem {
                u: &u,
                v1: &v1,
                v2: &v2,
                w: &row_w,
                taus: &row_tau,
                bounds1: (1e-8, f64::INFINITY),
                bounds2: (0.0, f64::INFINITY),
            };
            let tl = Instant::now();
            let loc = smoothed(&p, warm, eps0);
            loc_total += tl.elapsed();
            let tf = Instant::now();
            let r = solve_linear2_warm(&p, Some(loc)).unwrap();
            let fe = tf.elapsed();
            fin_total += fe;
            if fe > fin_max {
                fin_max = fe;
                fin_max_b1 = b1;
            }
            warm = (r.0, r.1);
        }
        println!(
            "column eps0={eps0:.0e}: total {:?} ({:?}/cell), localize {loc_total:?}, finish {fin_total:?} (max {fin_max:?} at b1={fin_max_b1})",
            t7.elapsed(),
            t7.elapsed() / 49
        );
    }

    // Warm transport with a1 rescaled by the mean-regressor ratio.
    let t4 = Instant::now();
    let mut warm = Some((a, b));
    let mut prev_mean = {
        let x = regressor(0.02);
        x.iter().sum::<f64>() / n as f64
    };
    for i in 1..=49 {
        let b1 = i as f64 * 0.02;
        let x = regressor(b1);
        let mean = x.iter().sum::<f64>() / n as f64;
        fill(-0.2, &x, &mut v1, &mut v2);
        let p = Linear2Problem {
            u: &u,
            v1: &v1,
            v2: &v2,
            w: &row_w,
            taus: &row_tau,
            bounds1: (1e-8, f64::INFINITY),
            bounds2: (0.0, f64::INFINITY),
        };
        let scaled = warm.map(|(wa, wb)| (wa, wb * prev_mean / mean));
        let r = solve_linear2_warm(&p, scaled).unwrap();
        warm = Some((r.0, r.1));
        prev_mean = mean;
    }
    println!(
        "49-cell column, rescaled warm: {:?} ({:?}/cell)",
        t4.elapsed(),
        t4.elapsed() / 49
    );
}
