//! Exact simulation of the random-coefficient quantile GARCH(1,1) process
//!
//! ```text
//! y_t = omega(U_t) + alpha1(U_t) * sum_{j>=1} beta1(U_t)^(j-1) |y_{t-j}|,   U_t ~ iid U(0,1)
//! ```
//!
//! initialized with y_t = 0 for t <= 0. Because the geometric weight
//! beta1(U_t) changes with every observation, the inner sum cannot be updated
//! by a shared recursion; it is evaluated by direct summation truncated at the
//! lag M where beta_max^M drops below `truncation_tol`, beta_max being the
//! supremum of beta1 over the validation grid. Paths are deterministic given
//! the seed.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::{
    normal_quantile, standard_uniform_open, tukey_quantile, CoefficientFunctions, ReturnSeries,
};

/// Innovation quantile function used by the built-in coefficient presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Normal,
    Tukey { lambda: f64 },
}

impl Dist {
    /// Parses `"normal"` or `"tukey(<lambda>)"`, e.g. `"tukey(-0.2)"`.
    pub fn parse(s: &str) -> Result<Dist> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("normal") {
            return Ok(Dist::Normal);
        }
        if let Some(rest) = s.strip_prefix("tukey(").and_then(|r| r.strip_suffix(')')) {
            let lambda: f64 = rest
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("cannot parse tukey parameter {rest:?}")))?;
            tukey_quantile(0.5, lambda)?;
            return Ok(Dist::Tukey { lambda });
        }
        Err(Error::InvalidInput(format!(
            "unknown distribution {s:?}; expected \"normal\" or \"tukey(<lambda>)\""
        )))
    }

    /// Quantile function F^-1(u) for u in (0,1).
    pub fn quantile(&self, u: f64) -> Result<f64> {
        match *self {
            Dist::Normal => normal_quantile(u),
            Dist::Tukey { lambda } => tukey_quantile(u, lambda),
        }
    }

    fn quantile_or_nan(&self, u: f64) -> f64 {
        self.quantile(u).unwrap_or(f64::NAN)
    }
}

/// Everything needed to reproduce one simulated path.
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub coef: CoefficientFunctions,
    pub n: usize,
    pub burn_in: usize,
    pub truncation_tol: f64,
    pub seed: u64,
}

impl SimulationSpec {
    /// A spec with the default burn-in (500) and truncation tolerance (1e-12).
    pub fn new(coef: CoefficientFunctions, n: usize, seed: u64) -> Self {
        SimulationSpec {
            coef,
            n,
            burn_in: 500,
            truncation_tol: 1e-12,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidInput("n must be >= 1".into()));
        }
        if !(self.truncation_tol > 0.0) {
            return Err(Error::InvalidInput("truncation_tol must be > 0".into()));
        }
        Ok(())
    }

    /// Lags kept in the inner sum: smallest M with beta_max^M < truncation_tol.
    fn lag_cutoff(&self) -> usize {
        let b = self.coef.beta_max();
        if b <= 0.0 {
            return 1;
        }
        let m = (self.truncation_tol.ln() / b.ln()).ceil() as usize;
        m.max(1)
    }
}

/// Simulates a path of length `spec.n`, discarding `spec.burn_in` initial
/// observations. Strict stationarity of the coefficient functions is the
/// caller's responsibility (see `model::stationarity_check`); an explosive
/// path surfaces as a non-finite-value error naming the offending time index.
pub fn simulate_qgarch(spec: &SimulationSpec) -> Result<ReturnSeries> {
    simulate_qgarch_with_draws(spec).map(|(series, _)| series)
}

/// As [`simulate_qgarch`], additionally returning the uniform draws U_t
/// aligned with the retained observations (for invariant testing).
pub fn simulate_qgarch_with_draws(spec: &SimulationSpec) -> Result<(ReturnSeries, Vec<f64>)> {
    spec.validate()?;
    let total = spec.burn_in + spec.n;
    let m_max = spec.lag_cutoff();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut abs_hist: Vec<f64> = Vec::with_capacity(total);
    let mut path: Vec<f64> = Vec::with_capacity(total);
    let mut draws: Vec<f64> = Vec::with_capacity(total);

    for t in 1..=total {
        let u = standard_uniform_open(&mut rng);
        let (w, a, b) = (spec.coef.omega(u), spec.coef.alpha1(u), spec.coef.beta1(u));
        if !b.is_finite() || b >= 1.0 {
            return Err(Error::Numerical(format!(
                "beta1 draw {b} >= 1 at u = {u} (t = {t})"
            )));
        }
        let mut s = 0.0;
        let mut pow = 1.0;
        let lags = m_max.min(t - 1);
        for j in 1..=lags {
            s += pow * abs_hist[t - 1 - j];
            pow *= b;
        }
        let y = w + a * s;
        if !y.is_finite() {
            return Err(Error::At {
                what: "simulated path value at t",
                value: t as f64,
                source: Box::new(Error::Numerical("non-finite path value".into())),
            });
        }
        abs_hist.push(y.abs());
        path.push(y);
        draws.push(u);
    }

    let series = ReturnSeries::new(path.split_off(spec.burn_in))?;
    let retained_draws = draws.split_off(spec.burn_in);
    Ok((series, retained_draws))
}

/// Built-in coefficient presets, keyed by scenario name:
///
/// - `"5.2"`: omega(u) = alpha1(u) = 0.1 F^-1(u), beta1 = 0.8 — an ARCH(inf)
///   rewrite of a linear GARCH(1,1) scale process.
/// - `"5.3"`: omega(u) = 0.1 F^-1(u), alpha1(u) = u - 0.5 + 0.1 F^-1(u),
///   beta1(u) = 0.3 + 0.6 |u - 0.5| — all three coefficients vary with u.
/// - `"5.4"`: omega(u) = alpha1(u) = 0.1 F^-1(u),
///   beta1(u) = 0.3 + d (u - 0.5)^2 — beta1 constant iff d = 0 (`d` required).
pub fn preset_setting(name: &str, dist: Dist, d: Option<f64>) -> Result<CoefficientFunctions> {
    match name {
        "5.2" => CoefficientFunctions::new(
            format!("5.2/{dist:?}"),
            move |u| 0.1 * dist.quantile_or_nan(u),
            move |u| 0.1 * dist.quantile_or_nan(u),
            |_| 0.8,
        ),
        "5.3" => CoefficientFunctions::new(
            format!("5.3/{dist:?}"),
            move |u| 0.1 * dist.quantile_or_nan(u),
            move |u| u - 0.5 + 0.1 * dist.quantile_or_nan(u),
            |u| 0.3 + 0.6 * (u - 0.5).abs(),
        ),
        "5.4" => {
            let d = d.ok_or_else(|| {
                Error::InvalidInput("preset \"5.4\" requires the curvature parameter d".into())
            })?;
            if !d.is_finite() || d < 0.0 || 0.3 + d * 0.25 >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "d = {d} puts beta1 outside [0, 1)"
                )));
            }
            CoefficientFunctions::new(
                format!("5.4(d={d})/{dist:?}"),
                move |u| 0.1 * dist.quantile_or_nan(u),
                move |u| 0.1 * dist.quantile_or_nan(u),
                move |u| 0.3 + d * (u - 0.5) * (u - 0.5),
            )
        }
        other => Err(Error::InvalidInput(format!(
            "unknown preset {other:?}; expected \"5.2\", \"5.3\", or \"5.4\""
        ))),
    }
}
