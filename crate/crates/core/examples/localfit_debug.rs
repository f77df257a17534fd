//! Dev harness: emulate independent per-level local fits that descend the
//! persistence profile from a fixed initializer, then measure the constancy
//! test's size and power under that estimator.

use qgarch::inference::{estimated_scores, subsample_test, tau_grid, CvmConfig, CvmStatistic};
use qgarch::model::{compute_self_weights, QGarchParams, ReturnSeries, SelfWeightConfig};
use qgarch::qr::{weights_id, QuantileFit};
use qgarch::solver::{objective2, solve_linear2_warm, Linear2Problem};
use qgarch::simulate::{preset_setting, simulate_qgarch, Dist, SimulationSpec};

const INIT_BETA: f64 = 0.5;
const GRID_STEP: f64 = 0.02;

fn profile_value(y: &[f64], w: &[f64], taus: &[f64], beta: f64) -> (f64, f64, f64) {
    let n = y.len();
    let mut x = vec![0.0; n];
    for t in 1..n {
        x[t] = y[t - 1].abs() + beta * x[t - 1];
    }
    let ones = vec![1.0; n];
    let p = Linear2Problem {
        u: y,
        v1: &ones,
        v2: &x,
        w,
        taus,
        bounds1: (f64::NEG_INFINITY, f64::INFINITY),
        bounds2: (f64::NEG_INFINITY, f64::INFINITY),
    };
    let (a, b, obj) = solve_linear2_warm(&p, None).unwrap();
    let _ = objective2(&p, a, b);
    (a, b, obj)
}

/// Walk downhill from the initializer on a uniform profile grid, then
/// golden-section refine inside the bracketing basin.
fn local_fit(y: &[f64], w: &[f64], tau: f64, wid: u64) -> QuantileFit {
    let taus = vec![tau; y.len()];
    let idx_max = (0.98 / GRID_STEP) as i64 - 1;
    let mut i = (INIT_BETA / GRID_STEP).round() as i64;
    let value = |j: i64| profile_value(y, w, &taus, j as f64 * GRID_STEP);
    let mut here = value(i);
    loop {
        let left = if i > 1 { Some(value(i - 1)) } else { None };
        let right = if i < idx_max { Some(value(i + 1)) } else { None };
        let lv = left.as_ref().map(|v| v.2).unwrap_or(f64::INFINITY);
        let rv = right.as_ref().map(|v| v.2).unwrap_or(f64::INFINITY);
        if lv < here.2 && lv <= rv {
            i -= 1;
            here = left.unwrap();
        } else if rv < here.2 {
            i += 1;
            here = right.unwrap();
        } else {
            break;
        }
    }
    // Golden refinement inside [i-1, i+1].
    let mut lo = (i - 1).max(0) as f64 * GRID_STEP;
    let mut hi = (i + 1).min(idx_max + 1) as f64 * GRID_STEP;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut m1 = hi - phi * (hi - lo);
    let mut m2 = lo + phi * (hi - lo);
    let mut f1 = profile_value(y, w, &taus, m1);
    let mut f2 = profile_value(y, w, &taus, m2);
    for _ in 0..30 {
        if f1.2 <= f2.2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - phi * (hi - lo);
            f1 = profile_value(y, w, &taus, m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + phi * (hi - lo);
            f2 = profile_value(y, w, &taus, m2);
        }
    }
    let best = if f1.2 <= f2.2 { (m1, f1) } else { (m2, f2) };
    QuantileFit {
        tau,
        theta_hat: QGarchParams {
            omega: best.1 .0,
            alpha1: best.1 .1,
            beta1: best.0,
        },
        objective_value: best.1 .2,
        cov: None,
        bandwidth_used: None,
        weights_id: wid,
    }
}

fn one_rep(d: f64, n: usize, seed: u64, cfg: &CvmConfig, global: bool) -> (f64, f64, Vec<f64>) {
    let coef = preset_setting("5.4", Dist::Normal, Some(d)).unwrap();
    let spec = SimulationSpec::new(coef, n, seed);
    let series: ReturnSeries = simulate_qgarch(&spec).unwrap();
    let w = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
    let wid = weights_id(&w);
    let fits: Vec<QuantileFit> = if global {
        let mut fc = qgarch::qr::QrFitConfig::new(cfg.tau_grid[0]);
        fc.refine_iters = 12;
        fc.weights = Some(w.clone());
        qgarch::qr::multi_tau_fit(&series, &cfg.tau_grid, &fc).unwrap()
    } else {
        cfg.tau_grid
            .iter()
            .map(|&tau| local_fit(series.values(), &w, tau, wid))
            .collect()
    };

    let kk = cfg.tau_grid.len();
    let delta = cfg.tau_grid[1] - cfg.tau_grid[0];
    let cs: Vec<f64> = fits.iter().map(|f| f.theta_hat.beta1).collect();
    let cbar = cs.iter().sum::<f64>() / kk as f64;
    let s_n = n as f64 * delta * cs.iter().map(|c| (c - cbar) * (c - cbar)).sum::<f64>();

    let scores = estimated_scores(&series, &fits, &w, cfg).unwrap();
    let r = subsample_test(&scores, s_n, cfg).unwrap();
    (s_n, r.critical_value, cs)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let d: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let reps: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(30);
    let global = args.get(4).map(|s| s == "global").unwrap_or(false);
    let grid = tau_grid(0.7, 0.995, 0.005).unwrap();
    let kk = grid.len();
    let mut cfg = CvmConfig::new(grid.clone());
    cfg.statistic = CvmStatistic::Cvm;

    let mut stats = Vec::new();
    let mut crits = Vec::new();
    let mut rej = 0;
    let mut contrasts: Vec<Vec<f64>> = Vec::new();
    for r in 0..reps {
        let (s, c, cs) = one_rep(d, n, 7000 + r, &cfg, global);
        if s > c {
            rej += 1;
        }
        let m = cs.iter().sum::<f64>() / kk as f64;
        contrasts.push(cs.iter().map(|x| x - m).collect());
        stats.push(s);
        crits.push(c);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    crits.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |v: &[f64], p: f64| v[((v.len() - 1) as f64 * p) as usize];
    println!(
        "mode={} d={d} n={n} reps={reps}: rejection {:.3}", if global { "global" } else { "local" },
        rej as f64 / reps as f64
    );
    println!(
        "  S_n med {:.3} q95 {:.3} | crit med {:.3} q95 {:.3}",
        q(&stats, 0.5),
        q(&stats, 0.95),
        q(&crits, 0.5),
        q(&crits, 0.95)
    );
    for k in [0usize, 29, 59] {
        let col: Vec<f64> = contrasts.iter().map(|c| c[k]).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (col.len() - 1) as f64;
        println!(
            "  tau {:.3}: realized wiggle {:.3}",
            grid[k],
            (n as f64 * var).sqrt()
        );
    }
}
