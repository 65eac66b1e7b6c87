//! Monte Carlo harness: simulate, fit every requested estimator, score the
//! fits against the true Kronecker products.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{estimate_var, estimate_vlstar, estimate_vtar, VecModelFit};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_mar, estimate_mstar, estimate_mtar, FitResult, IlsOptions, SlopeThresholdGrid, ThresholdGrid,
};
use crate::exec::Exec;
use crate::model::{
    check_stationarity, simulate_noise_free_pairs, simulate_path, CoefficientSet, ModelSpec, SimOptions,
    TransitionSource,
};
use crate::series::LaggedSample;
use crate::tensor::{frobenius_dist_sq, MatrixNormalSpec, RealMatrix};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Mar,
    Mtar,
    Mstar,
    Var,
    Vtar,
    Vlstar,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Mar => "mar",
            Estimator::Mtar => "mtar",
            Estimator::Mstar => "mstar",
            Estimator::Var => "var",
            Estimator::Vtar => "vtar",
            Estimator::Vlstar => "vlstar",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mar" => Estimator::Mar,
            "mtar" => Estimator::Mtar,
            "mstar" => Estimator::Mstar,
            "var" => Estimator::Var,
            "vtar" => Estimator::Vtar,
            "vlstar" => Estimator::Vlstar,
            other => return Err(Error::InvalidInput(format!("unknown estimator `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// True model; also fixes `(m, n)` and the true `c`, `γ`.
    pub dgp: ModelSpec,
    pub t_len: usize,
    pub replications: usize,
    pub estimators: Vec<Estimator>,
    pub threshold_grid: ThresholdGrid,
    pub slope_grid: SlopeThresholdGrid,
    pub ils: IlsOptions,
    /// Replication `r` uses seed `base_seed + r`.
    pub base_seed: u64,
    pub burn_in: Option<usize>,
    /// Responses replaced by exact conditional means.
    pub noise_free: bool,
    /// Store wall-clock seconds per fit; off keeps rows bit-reproducible.
    pub record_timing: bool,
    /// Strategy across replications; each fit then runs sequentially.
    pub exec: Exec,
}

impl McConfig {
    pub fn new(dgp: ModelSpec, t_len: usize, replications: usize, estimators: Vec<Estimator>) -> Self {
        McConfig {
            dgp,
            t_len,
            replications,
            estimators,
            threshold_grid: ThresholdGrid::default(),
            slope_grid: SlopeThresholdGrid::default(),
            ils: IlsOptions::default(),
            base_seed: 0,
            burn_in: None,
            noise_free: false,
            record_timing: false,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        self.ils.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidInput("replications must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidInput("no estimators requested".into()));
        }
        if self.dgp.transition.is_some() && self.dgp.source == TransitionSource::Exogenous {
            return Err(Error::InvalidInput(
                "Monte Carlo DGPs need a trend or lagged-entry transition source".into(),
            ));
        }
        let report = check_stationarity(&self.dgp)?;
        if !report.stationary {
            return Err(Error::NonStationary(format!(
                "DGP regime spectral-radius products {:?} must all be < 1",
                report.radii
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResultRow {
    pub replication: usize,
    pub estimator: Estimator,
    pub seed: u64,
    /// `‖B̂ ⊗ Â - B ⊗ A‖²_F` (or the vectorized analogue).
    pub frob_regime1: Option<f64>,
    /// `‖D̂ ⊗ Ĉ - D ⊗ C‖²_F`; absent for one-regime estimators or DGPs.
    pub frob_regime2: Option<f64>,
    pub c_hat: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub seconds: f64,
    pub converged: bool,
    /// Largest relative SSQ increase over the ALS trace (structured fits).
    pub max_rel_increase: Option<f64>,
    pub error: Option<String>,
}

/// MTAR design with uniformly drawn coefficients (`A`, `B` entries
/// `U(0.1, 0.2)`, `C`, `D` entries `U(0.25, 0.4)`), trend transition and
/// identity noise. A regime whose radius product reaches one is shrunk
/// (both factors equally) to a product of 0.8.
pub fn mtar_companion_dgp(m: usize, n: usize, c: f64, seed: u64) -> Result<ModelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |k: usize, lo: f64, hi: f64| RealMatrix::from_fn(k, k, |_, _| rng.random_range(lo..hi));
    let r1 = CoefficientSet::new(draw(m, 0.1, 0.2), draw(n, 0.1, 0.2))?;
    let r2 = CoefficientSet::new(draw(m, 0.25, 0.4), draw(n, 0.25, 0.4))?;
    let shrink = |set: CoefficientSet| -> Result<CoefficientSet> {
        let rho = set.radius_product()?;
        if rho < 1.0 {
            return Ok(set);
        }
        let f = (0.8 / rho).sqrt();
        Ok(CoefficientSet {
            left: set.left * f,
            right: set.right * f,
        })
    };
    ModelSpec::mtar(
        shrink(r1)?,
        shrink(r2)?,
        c,
        MatrixNormalSpec::isotropic(m, n, 1.0),
        TransitionSource::NormalizedTrend,
    )
}

/// MSTAR design with `A = B = 0.2 I`, `C = D = 0.75 I`, trend transition
/// and identity noise.
pub fn mstar_companion_dgp(m: usize, n: usize, gamma: f64, c: f64) -> Result<ModelSpec> {
    ModelSpec::mstar(
        CoefficientSet::scaled_identity(m, n, 0.2, 0.2),
        CoefficientSet::scaled_identity(m, n, 0.75, 0.75),
        gamma,
        c,
        MatrixNormalSpec::isotropic(m, n, 1.0),
        TransitionSource::NormalizedTrend,
    )
}

fn kron_loss(est: &CoefficientSet, truth: &CoefficientSet) -> f64 {
    frobenius_dist_sq(&est.kron(), &truth.kron())
}

fn structured_row(fit: &FitResult, dgp: &ModelSpec, row: &mut McResultRow) {
    row.frob_regime1 = Some(kron_loss(&fit.model.regime1, &dgp.regime1));
    row.frob_regime2 = match (&fit.model.regime2, &dgp.regime2) {
        (Some(a), Some(b)) => Some(kron_loss(a, b)),
        _ => None,
    };
    row.c_hat = fit.threshold();
    row.gamma_hat = fit.slope();
    row.converged = fit.converged;
    row.max_rel_increase = Some(fit.max_relative_increase());
}

fn vector_row(fit: &VecModelFit, dgp: &ModelSpec, row: &mut McResultRow) {
    row.frob_regime1 = Some(frobenius_dist_sq(&fit.phi0, &dgp.regime1.kron()));
    row.frob_regime2 = match (fit.phi1(), &dgp.regime2) {
        (Some(p), Some(b)) => Some(frobenius_dist_sq(p, &b.kron())),
        _ => None,
    };
    row.c_hat = fit.tf.map(|tf| tf.threshold());
    row.gamma_hat = fit.tf.and_then(|tf| tf.slope());
    row.converged = true;
}

fn fit_one(cfg: &McConfig, est: Estimator, data: &LaggedSample, ils: &IlsOptions, row: &mut McResultRow) -> Result<()> {
    match est {
        Estimator::Mar => structured_row(&estimate_mar(data, ils)?, &cfg.dgp, row),
        Estimator::Mtar => structured_row(&estimate_mtar(data, &cfg.threshold_grid, ils)?, &cfg.dgp, row),
        Estimator::Mstar => structured_row(&estimate_mstar(data, &cfg.slope_grid, ils)?, &cfg.dgp, row),
        Estimator::Var => vector_row(&estimate_var(data)?, &cfg.dgp, row),
        Estimator::Vtar => vector_row(&estimate_vtar(data, &cfg.threshold_grid, ils)?, &cfg.dgp, row),
        Estimator::Vlstar => vector_row(&estimate_vlstar(data, &cfg.slope_grid, ils)?, &cfg.dgp, row),
    }
    Ok(())
}

fn replicate(cfg: &McConfig, r: usize) -> Vec<McResultRow> {
    let seed = cfg.base_seed.wrapping_add(r as u64);
    let sim = SimOptions {
        seed,
        burn_in: cfg.burn_in,
        ..Default::default()
    };
    let data = if cfg.noise_free {
        simulate_noise_free_pairs(&cfg.dgp, cfg.t_len, &sim)
    } else {
        simulate_path(&cfg.dgp, cfg.t_len, &sim).and_then(|p| LaggedSample::from_series(&p))
    };
    let mut ils = cfg.ils.clone();
    ils.seed = seed;
    if cfg.exec == Exec::Parallel {
        ils.exec = Exec::Sequential;
    }
    cfg.estimators
        .iter()
        .map(|&est| {
            let mut row = McResultRow {
                replication: r,
                estimator: est,
                seed,
                frob_regime1: None,
                frob_regime2: None,
                c_hat: None,
                gamma_hat: None,
                seconds: 0.0,
                converged: false,
                max_rel_increase: None,
                error: None,
            };
            let start = Instant::now();
            let outcome = data
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|d| fit_one(cfg, est, d, &ils, &mut row).map_err(|e| e.to_string()));
            if cfg.record_timing {
                row.seconds = start.elapsed().as_secs_f64();
            }
            if let Err(msg) = outcome {
                log::warn!("replication {r}, {est}: {msg}");
                row.converged = false;
                row.error = Some(msg);
            }
            row
        })
        .collect()
}

/// Runs every replication and estimator. Rows come back ordered by
/// replication, then by the order of `cfg.estimators`. Estimator failures
/// are recorded in the row (`converged = false`, `error` set).
pub fn run_monte_carlo(cfg: &McConfig) -> Result<Vec<McResultRow>> {
    cfg.validate()?;
    let reps: Vec<usize> = (0..cfg.replications).collect();
    Ok(cfg
        .exec
        .map(&reps, |&r| replicate(cfg, r))
        .into_iter()
        .flatten()
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile (`(n-1) p` position) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(BoxStats {
            count: v.len(),
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub rows: usize,
    pub convergence_rate: f64,
    pub frob_regime1: Option<BoxStats>,
    pub frob_regime2: Option<BoxStats>,
    /// `ĉ - c₀`.
    pub c_error: Option<BoxStats>,
    /// `γ̂ - γ₀`.
    pub gamma_error: Option<BoxStats>,
    /// `R⁻¹ Σ (ĉ_r - c₀)²` over rows that report `ĉ`.
    pub mse_c: Option<f64>,
    pub mse_gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub schema_version: u32,
    pub c_true: Option<f64>,
    pub gamma_true: Option<f64>,
    pub estimators: Vec<EstimatorSummary>,
}

fn mse(vals: &[f64]) -> Option<f64> {
    (!vals.is_empty()).then(|| vals.iter().map(|d| d * d).sum::<f64>() / vals.len() as f64)
}

/// Box-plot statistics, MSEs and convergence rate per estimator, in order of
/// first appearance.
pub fn summarize(rows: &[McResultRow], c_true: Option<f64>, gamma_true: Option<f64>) -> McSummary {
    let mut order: Vec<Estimator> = Vec::new();
    for r in rows {
        if !order.contains(&r.estimator) {
            order.push(r.estimator);
        }
    }
    let estimators = order
        .into_iter()
        .map(|est| {
            let group: Vec<&McResultRow> = rows.iter().filter(|r| r.estimator == est).collect();
            let c_err: Vec<f64> = match c_true {
                Some(c0) => group.iter().filter_map(|r| r.c_hat.map(|c| c - c0)).collect(),
                None => Vec::new(),
            };
            let g_err: Vec<f64> = match gamma_true {
                Some(g0) => group.iter().filter_map(|r| r.gamma_hat.map(|g| g - g0)).collect(),
                None => Vec::new(),
            };
            EstimatorSummary {
                estimator: est,
                rows: group.len(),
                convergence_rate: group.iter().filter(|r| r.converged).count() as f64 / group.len() as f64,
                frob_regime1: BoxStats::from_values(group.iter().filter_map(|r| r.frob_regime1)),
                frob_regime2: BoxStats::from_values(group.iter().filter_map(|r| r.frob_regime2)),
                c_error: BoxStats::from_values(c_err.iter().copied()),
                gamma_error: BoxStats::from_values(g_err.iter().copied()),
                mse_c: mse(&c_err),
                mse_gamma: mse(&g_err),
            }
        })
        .collect();
    McSummary {
        schema_version: SCHEMA_VERSION,
        c_true,
        gamma_true,
        estimators,
    }
}

/// Summary against the DGP's own `c` and `γ`.
pub fn summarize_against(rows: &[McResultRow], dgp: &ModelSpec) -> McSummary {
    let tf = dgp.transition;
    summarize(rows, tf.map(|t| t.threshold()), tf.and_then(|t| t.slope()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::ThresholdGrid;

    fn row(est: Estimator, c: Option<f64>, f1: f64) -> McResultRow {
        McResultRow {
            replication: 0,
            estimator: est,
            seed: 0,
            frob_regime1: Some(f1),
            frob_regime2: None,
            c_hat: c,
            gamma_hat: None,
            seconds: 0.0,
            converged: true,
            max_rel_increase: None,
            error: None,
        }
    }

    #[test]
    fn quantiles_match_linear_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        let b = BoxStats::from_values([7.0]).unwrap();
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (7.0, 7.0, 7.0, 7.0, 7.0));
    }

    #[test]
    fn exact_threshold_has_zero_mse() {
        let rows = vec![
            row(Estimator::Mtar, Some(0.3), 1.0),
            row(Estimator::Mtar, Some(0.3), 2.0),
        ];
        let s = summarize(&rows, Some(0.3), None);
        assert_eq!(s.estimators[0].mse_c, Some(0.0));
        assert_eq!(s.estimators[0].mse_gamma, None);
        assert_eq!(s.schema_version, SCHEMA_VERSION);
    }

    #[test]
    fn companion_dgps_are_stationary() {
        for (m, n) in [(2, 3), (4, 6)] {
            let d = mtar_companion_dgp(m, n, 0.3, 11).unwrap();
            assert!(check_stationarity(&d).unwrap().stationary);
            let d = mstar_companion_dgp(m, n, 10.0, 0.65).unwrap();
            assert!(check_stationarity(&d).unwrap().stationary);
        }
    }

    #[test]
    fn deterministic_and_schema_rules() {
        let dgp = mtar_companion_dgp(2, 2, 0.3, 1).unwrap();
        let mut cfg = McConfig::new(dgp, 150, 3, vec![Estimator::Mar, Estimator::Mtar, Estimator::Vtar]);
        cfg.threshold_grid = ThresholdGrid::percentiles(0.15).unwrap();
        let a = run_monte_carlo(&cfg).unwrap();
        cfg.exec = Exec::Sequential;
        let b = run_monte_carlo(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 9);
        assert!(a
            .iter()
            .filter(|r| r.estimator == Estimator::Mar)
            .all(|r| r.frob_regime2.is_none()));
        assert!(a
            .iter()
            .filter(|r| r.estimator != Estimator::Mar)
            .all(|r| r.frob_regime2.is_some()));
    }

    #[test]
    fn noise_free_replication_recovers() {
        let dgp = mtar_companion_dgp(2, 3, 0.3, 2).unwrap();
        let mut cfg = McConfig::new(dgp, 400, 1, vec![Estimator::Mtar]);
        cfg.noise_free = true;
        cfg.threshold_grid = ThresholdGrid::dense(0.1).unwrap();
        let rows = run_monte_carlo(&cfg).unwrap();
        assert!(rows[0].frob_regime1.unwrap() < 1e-6, "{rows:?}");
        assert!(rows[0].frob_regime2.unwrap() < 1e-6);
    }

    #[test]
    fn failures_become_rows() {
        let dgp = mtar_companion_dgp(2, 2, 0.3, 1).unwrap();
        let mut cfg = McConfig::new(dgp, 150, 1, vec![Estimator::Mtar]);
        cfg.threshold_grid = ThresholdGrid::explicit(vec![5.0]);
        let rows = run_monte_carlo(&cfg).unwrap();
        assert!(!rows[0].converged && rows[0].error.is_some());
    }
}
