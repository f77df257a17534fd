use qgarch::model::*;
use qgarch::qr::*;
use qgarch::simulate::*;
use std::time::Instant;

fn main() {
    let coef = preset_setting("5.2", Dist::Normal, None).unwrap();
    let series = simulate_qgarch(&SimulationSpec::new(coef, 2000, 1)).unwrap();
    let t0 = Instant::now();
    let w = compute_self_weights(&series, &SelfWeightConfig::default()).unwrap();
    println!("self-weights n=2000: {:?}", t0.elapsed());
    let mut cfg = QrFitConfig::new(0.05);
    cfg.weights = Some(w);
    let t1 = Instant::now();
    let fit = qr_fit(&series, &cfg).unwrap();
    println!("qr_fit n=2000 default grid+40 golden: {:?}  beta={:.4}", t1.elapsed(), fit.theta_hat.beta1);
    let t2 = Instant::now();
    let (fit2, _) = fit_with_covariance(&series, &cfg, BandwidthKind::HallSheather).unwrap();
    println!("fit_with_covariance: {:?}  asd={:?}", t2.elapsed(), fit2.asd(2000));
    // n=1000 fit for CvM budget
    let coef2 = preset_setting("5.4", Dist::Normal, Some(0.0)).unwrap();
    let s1000 = simulate_qgarch(&SimulationSpec::new(coef2, 1000, 2)).unwrap();
    let mut c2 = QrFitConfig::new(0.85);
    c2.refine_iters = 12;
    let t3 = Instant::now();
    let _ = qr_fit(&s1000, &c2).unwrap();
    println!("qr_fit n=1000 grid+12 golden: {:?}", t3.elapsed());
}
