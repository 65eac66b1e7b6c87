//! Alternating least-squares estimation of MAR, MTAR and MSTAR models.
//!
//! Every estimator works on sufficient statistics (weighted second moments
//! of the vectorized regressors and responses), so the cost of one ALS sweep
//! does not grow with the sample length.

mod als;
mod gradients;
pub(crate) mod grid;
mod inference;
mod mar;
pub(crate) mod moments;
pub(crate) mod mstar;
mod mtar;
mod normalize;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{CoefficientSet, ModelSpec};
use crate::tensor::RealMatrix;

pub use gradients::{mstar_gradients, mtar_gradients, MatrixGradients};
pub use grid::{CandidateRule, SlopeThresholdGrid, ThresholdGrid};
pub use inference::{coefficient_inference, PValueTable};
pub use mar::estimate_mar;
pub use mstar::{estimate_mstar, mstar_loss};
pub use mtar::{estimate_mtar, mtar_loss};
pub use normalize::{normalize_coefficients, normalize_identification, normalize_model};

/// SSQ at or below `NUMERICAL_ZERO * Σ‖Y_t‖²` counts as an exact fit.
pub(crate) const NUMERICAL_ZERO: f64 = 1e-24;

/// Starting values for the alternating updates. The left factors never
/// need a start: every sweep begins by solving for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Init {
    /// `B₀ = 0.2 I`, `C₀ = D₀ = 0.5 I`.
    Fixed,
    /// Entries of `B₀` from `U(0, 0.2)`, of `C₀`, `D₀` from `U(0, 0.5)`,
    /// drawn from [`IlsOptions::seed`].
    Uniform,
    /// Caller-supplied values.
    Given {
        #[serde(with = "crate::tensor::rows")]
        right: RealMatrix,
        regime2: Option<CoefficientSet>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlsOptions {
    pub max_sweeps: usize,
    /// Stop when `|SSQ_k - SSQ_{k-1}| / SSQ_{k-1}` falls below this.
    pub rel_tol: f64,
    pub init: Init,
    pub seed: u64,
    /// Cap on the MSTAR refinement rounds (matrix fit + `(γ, c)` search).
    pub max_refine: usize,
    pub exec: Exec,
}

impl Default for IlsOptions {
    fn default() -> Self {
        IlsOptions {
            max_sweeps: 200,
            rel_tol: 1e-8,
            init: Init::Fixed,
            seed: 0,
            max_refine: 200,
            exec: Exec::default(),
        }
    }
}

impl IlsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::InvalidInput("max_sweeps must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(Error::InvalidInput(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }

    pub(crate) fn initial_right(&self, n: usize) -> Result<RealMatrix> {
        match &self.init {
            Init::Fixed => Ok(RealMatrix::identity(n, n) * 0.2),
            Init::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok(RealMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..0.2)))
            }
            Init::Given { right, .. } => {
                if right.shape() != (n, n) {
                    return Err(Error::Dimension(format!("initial right factor must be {n}x{n}")));
                }
                Ok(right.clone())
            }
        }
    }

    pub(crate) fn initial_regime2(&self, m: usize, n: usize) -> Result<CoefficientSet> {
        match &self.init {
            Init::Fixed => Ok(CoefficientSet::scaled_identity(m, n, 0.5, 0.5)),
            Init::Uniform => {
                // Offset stream so the draws differ from the right-factor start.
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
                let left = RealMatrix::from_fn(m, m, |_, _| rng.random_range(0.0..0.5));
                let right = RealMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..0.5));
                Ok(CoefficientSet { left, right })
            }
            Init::Given { regime2, .. } => match regime2 {
                Some(set) if set.dims() == (m, n) => Ok(set.clone()),
                Some(_) => Err(Error::Dimension(format!(
                    "initial regime-2 factors must be {m}x{m}, {n}x{n}"
                ))),
                None => Ok(CoefficientSet::scaled_identity(m, n, 0.5, 0.5)),
            },
        }
    }
}

/// One evaluated grid candidate. `objective` is `None` when the candidate was
/// skipped; `note` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub gamma: Option<f64>,
    pub objective: Option<f64>,
    pub note: Option<String>,
}

/// Estimated model plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelSpec,
    pub ssq: f64,
    /// `Σ‖Y_t‖²` over the responses; the scale for zero-fit checks.
    pub sst: f64,
    /// SSQ after every sweep (and every accepted refinement step) of the
    /// reported fit.
    pub ssq_trace: Vec<f64>,
    pub sweeps_used: usize,
    pub converged: bool,
    pub grid_profile: Vec<GridPoint>,
    pub pvalues: Option<PValueTable>,
    pub n_obs: usize,
    /// Free coefficients, `m² + n²` per regime.
    pub n_params: usize,
    /// `(max Q - min Q) / min Q` over admissible grid candidates; small
    /// values mean the data carry little threshold information.
    pub flatness: Option<f64>,
}

impl FitResult {
    /// Largest relative SSQ increase between consecutive trace entries.
    /// Increases below `1e-22 * sst` are treated as round-off on an exact fit.
    pub fn max_relative_increase(&self) -> f64 {
        max_relative_increase(&self.ssq_trace, self.sst)
    }

    pub fn threshold(&self) -> Option<f64> {
        self.model.transition.map(|tf| tf.threshold())
    }

    pub fn slope(&self) -> Option<f64> {
        self.model.transition.and_then(|tf| tf.slope())
    }
}

pub fn max_relative_increase(trace: &[f64], sst: f64) -> f64 {
    let floor = 1e-22 * sst;
    trace
        .windows(2)
        .map(|w| {
            let inc = w[1] - w[0];
            if inc <= floor {
                0.0
            } else {
                inc / w[0].max(1e-300)
            }
        })
        .fold(0.0, f64::max)
}

/// Estimated noise law: isotropic with the residual variance per entry.
pub(crate) fn fitted_noise(
    m: usize,
    n: usize,
    ssq: f64,
    n_obs: usize,
    n_params: usize,
) -> crate::tensor::MatrixNormalSpec {
    let dof = (n_obs * m * n).saturating_sub(n_params).max(1);
    crate::tensor::MatrixNormalSpec::isotropic(m, n, ssq / dof as f64)
}

pub(crate) fn flatness(profile: &[GridPoint]) -> Option<f64> {
    let vals: Vec<f64> = profile.iter().filter_map(|p| p.objective).collect();
    if vals.len() < 2 {
        return None;
    }
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((hi - lo) / lo.max(1e-300))
}

/// Index of the smallest objective; ties keep the earliest (smallest)
/// candidate so parallel and sequential runs agree.
pub(crate) fn argmin_first(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}
