//! MAR, MTAR and MSTAR specifications: transition functions, conditional
//! means, residuals, path simulation and the spectral-radius stationarity
//! check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{LaggedSample, MatrixSeries};
use crate::tensor::{ensure_finite, kron, spectral_radius, MatrixNormalSampler, MatrixNormalSpec, RealMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransitionFunction {
    /// `(1 + exp(-γ (s - c)))⁻¹`.
    Logistic { gamma: f64, c: f64 },
    /// `1(s >= c)`; ties fall in the second regime.
    Indicator { c: f64 },
}

impl TransitionFunction {
    pub fn logistic(gamma: f64, c: f64) -> Result<Self> {
        let tf = TransitionFunction::Logistic { gamma, c };
        tf.validate()?;
        Ok(tf)
    }

    pub fn indicator(c: f64) -> Result<Self> {
        let tf = TransitionFunction::Indicator { c };
        tf.validate()?;
        Ok(tf)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TransitionFunction::Logistic { gamma, c } => {
                if !(gamma > 0.0) || !gamma.is_finite() || !c.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "logistic transition needs finite gamma > 0 and finite c, got gamma={gamma}, c={c}"
                    )));
                }
            }
            TransitionFunction::Indicator { c } => {
                if !c.is_finite() {
                    return Err(Error::InvalidModel(format!("threshold must be finite, got {c}")));
                }
            }
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        match *self {
            TransitionFunction::Logistic { c, .. } | TransitionFunction::Indicator { c } => c,
        }
    }

    pub fn slope(&self) -> Option<f64> {
        match *self {
            TransitionFunction::Logistic { gamma, .. } => Some(gamma),
            TransitionFunction::Indicator { .. } => None,
        }
    }

    /// Value in `[0, 1]`. The logistic form is evaluated as
    /// `0.5 (1 + tanh(γ (s - c) / 2))`, which cannot overflow.
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            TransitionFunction::Logistic { gamma, c } => 0.5 * (1.0 + (0.5 * gamma * (s - c)).tanh()),
            TransitionFunction::Indicator { c } => {
                if s >= c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Left (row-wise, `m x m`) and right (column-wise, `n x n`) coefficient
/// matrices of one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    #[serde(with = "crate::tensor::rows")]
    pub left: RealMatrix,
    #[serde(with = "crate::tensor::rows")]
    pub right: RealMatrix,
}

impl CoefficientSet {
    pub fn new(left: RealMatrix, right: RealMatrix) -> Result<Self> {
        let set = CoefficientSet { left, right };
        set.validate()?;
        Ok(set)
    }

    pub fn scaled_identity(m: usize, n: usize, left: f64, right: f64) -> Self {
        CoefficientSet {
            left: RealMatrix::identity(m, m) * left,
            right: RealMatrix::identity(n, n) * right,
        }
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self::scaled_identity(m, n, 0.0, 0.0)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.left.nrows(), self.right.nrows())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.left.is_square() || !self.right.is_square() || self.left.nrows() == 0 || self.right.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "coefficient matrices must be non-empty and square, got {:?} and {:?}",
                self.left.shape(),
                self.right.shape()
            )));
        }
        ensure_finite(&self.left, "left coefficient")?;
        ensure_finite(&self.right, "right coefficient")
    }

    /// `left * y * right'`.
    pub fn apply(&self, y: &RealMatrix) -> RealMatrix {
        &self.left * y * self.right.transpose()
    }

    /// `right ⊗ left`, the coefficient of the vectorized form.
    pub fn kron(&self) -> RealMatrix {
        kron(&self.right, &self.left)
    }

    pub fn radius_product(&self) -> Result<f64> {
        Ok(spectral_radius(&self.left)? * spectral_radius(&self.right)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mar,
    Mtar,
    Mstar,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Mar => "mar",
            ModelKind::Mtar => "mtar",
            ModelKind::Mstar => "mstar",
        })
    }
}

/// Where `s_t` comes from when a path is simulated or forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionSource {
    /// `s_t = t / T`.
    NormalizedTrend,
    /// `s_t = Y_{t-lag}[row, col]` (zero-based indices, `lag >= 1`).
    LaggedEntry { row: usize, col: usize, lag: usize },
    /// Supplied by the caller.
    Exogenous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub regime1: CoefficientSet,
    pub regime2: Option<CoefficientSet>,
    pub transition: Option<TransitionFunction>,
    pub noise: MatrixNormalSpec,
    pub source: TransitionSource,
}

impl ModelSpec {
    pub fn mar(regime1: CoefficientSet, noise: MatrixNormalSpec) -> Result<Self> {
        let spec = ModelSpec {
            kind: ModelKind::Mar,
            regime1,
            regime2: None,
            transition: None,
            noise,
            source: TransitionSource::Exogenous,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mtar(
        regime1: CoefficientSet,
        regime2: CoefficientSet,
        c: f64,
        noise: MatrixNormalSpec,
        source: TransitionSource,
    ) -> Result<Self> {
        let spec = ModelSpec {
            kind: ModelKind::Mtar,
            regime1,
            regime2: Some(regime2),
            transition: Some(TransitionFunction::indicator(c)?),
            noise,
            source,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mstar(
        regime1: CoefficientSet,
        regime2: CoefficientSet,
        gamma: f64,
        c: f64,
        noise: MatrixNormalSpec,
        source: TransitionSource,
    ) -> Result<Self> {
        let spec = ModelSpec {
            kind: ModelKind::Mstar,
            regime1,
            regime2: Some(regime2),
            transition: Some(TransitionFunction::logistic(gamma, c)?),
            noise,
            source,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.regime1.dims()
    }

    pub fn validate(&self) -> Result<()> {
        self.regime1.validate()?;
        let dims = self.dims();
        match (self.kind, &self.regime2, &self.transition) {
            (ModelKind::Mar, None, None) => {}
            (ModelKind::Mtar, Some(_), Some(TransitionFunction::Indicator { .. })) => {}
            (ModelKind::Mstar, Some(_), Some(TransitionFunction::Logistic { .. })) => {}
            (kind, r2, tf) => {
                return Err(Error::InvalidModel(format!(
                    "{kind} model with regime2 present={} and transition {:?} is inconsistent",
                    r2.is_some(),
                    tf
                )))
            }
        }
        if let Some(r2) = &self.regime2 {
            r2.validate()?;
            if r2.dims() != dims {
                return Err(Error::Dimension(format!(
                    "regime dimensions differ: {:?} vs {:?}",
                    dims,
                    r2.dims()
                )));
            }
        }
        if let Some(tf) = &self.transition {
            tf.validate()?;
        }
        if self.noise.dims() != dims {
            return Err(Error::Dimension(format!(
                "noise dimensions {:?} differ from model dimensions {:?}",
                self.noise.dims(),
                dims
            )));
        }
        if let TransitionSource::LaggedEntry { row, col, lag } = self.source {
            if row >= dims.0 || col >= dims.1 || lag == 0 {
                return Err(Error::InvalidModel(format!(
                    "lagged-entry transition ({row}, {col}, lag {lag}) is outside a {}x{} frame or has lag 0",
                    dims.0, dims.1
                )));
            }
        }
        self.noise.validate()
    }

    /// Transition weight applied to the second regime at `s`
    /// (always 0 for MAR).
    pub fn weight(&self, s: f64) -> f64 {
        self.transition.map_or(0.0, |tf| tf.eval(s))
    }

    /// Free coefficients of the Kronecker-structured fit: `m² + n²` per regime.
    pub fn parameter_count(&self) -> usize {
        let (m, n) = self.dims();
        let regimes = if self.regime2.is_some() { 2 } else { 1 };
        regimes * (m * m + n * n)
    }
}

pub fn eval_transition(tf: &TransitionFunction, s: f64) -> f64 {
    tf.eval(s)
}

/// `E[Y_t | Y_{t-1} = y_prev, s_t = s]`.
pub fn conditional_mean(model: &ModelSpec, y_prev: &RealMatrix, s: f64) -> Result<RealMatrix> {
    if y_prev.shape() != model.dims() {
        return Err(Error::Dimension(format!(
            "lagged frame is {:?}, model expects {:?}",
            y_prev.shape(),
            model.dims()
        )));
    }
    Ok(conditional_mean_unchecked(model, y_prev, s))
}

pub(crate) fn conditional_mean_unchecked(model: &ModelSpec, y_prev: &RealMatrix, s: f64) -> RealMatrix {
    match (model.kind, &model.regime2) {
        (ModelKind::Mar, _) | (_, None) => model.regime1.apply(y_prev),
        (ModelKind::Mtar, Some(r2)) => {
            if model.weight(s) > 0.5 {
                r2.apply(y_prev)
            } else {
                model.regime1.apply(y_prev)
            }
        }
        (ModelKind::Mstar, Some(r2)) => {
            let g = model.weight(s);
            let base = model.regime1.apply(y_prev);
            if g == 0.0 {
                base
            } else {
                base + r2.apply(y_prev) * g
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub stationary: bool,
    /// `ρ(A)ρ(B)` and, for two-regime models, `ρ(C)ρ(D)`.
    pub radii: Vec<f64>,
}

/// Each regime's product of spectral radii must be strictly below one.
pub fn check_stationarity(model: &ModelSpec) -> Result<StationarityReport> {
    let mut radii = vec![model.regime1.radius_product()?];
    if let Some(r2) = &model.regime2 {
        radii.push(r2.radius_product()?);
    }
    Ok(StationarityReport {
        stationary: radii.iter().all(|&r| r < 1.0),
        radii,
    })
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub seed: u64,
    /// Frames discarded before the returned sample. `None` means 100 for
    /// stationary transition sources and 0 for the normalized trend.
    pub burn_in: Option<usize>,
    /// Starting state; zero matrix when absent.
    pub initial: Option<RealMatrix>,
    pub allow_nonstationary: bool,
    /// Transition values for [`TransitionSource::Exogenous`], covering burn-in
    /// plus sample (length `burn_in + T`).
    pub exogenous: Option<Vec<f64>>,
}

impl SimOptions {
    pub fn seeded(seed: u64) -> Self {
        SimOptions {
            seed,
            ..Default::default()
        }
    }
}

/// Simulates `T` frames of `Y_t = conditional_mean(Y_{t-1}, s_t) + E_t`.
///
/// The first generated frame is `initial + E_1`. Deterministic in
/// `opts.seed`.
pub fn simulate_path(model: &ModelSpec, t_len: usize, opts: &SimOptions) -> Result<MatrixSeries> {
    let (frames, s) = simulate_frames(model, t_len, opts)?;
    MatrixSeries::new(frames, Some(s))
}

fn simulate_frames(model: &ModelSpec, t_len: usize, opts: &SimOptions) -> Result<(Vec<RealMatrix>, Vec<f64>)> {
    model.validate()?;
    if t_len < 2 {
        return Err(Error::InvalidInput("simulation needs T >= 2".into()));
    }
    if !opts.allow_nonstationary {
        let report = check_stationarity(model)?;
        if !report.stationary {
            return Err(Error::NonStationary(format!(
                "regime spectral-radius products {:?} must all be < 1 (ρ(A)·ρ(B) < 1 and ρ(C)·ρ(D) < 1); \
                 set the non-stationary override to simulate anyway",
                report.radii
            )));
        }
    }
    let burn_in = match (model.source, opts.burn_in) {
        (TransitionSource::NormalizedTrend, Some(b)) if b > 0 => {
            return Err(Error::InvalidInput(
                "burn-in is not allowed with a normalized-trend transition".into(),
            ))
        }
        (TransitionSource::NormalizedTrend, _) => 0,
        (_, Some(b)) => b,
        (_, None) => 100,
    };
    let total = burn_in + t_len;
    let (m, n) = model.dims();
    let initial = match &opts.initial {
        Some(y0) if y0.shape() != (m, n) => return Err(Error::Dimension(format!("initial frame must be {m}x{n}"))),
        Some(y0) => y0.clone(),
        None => RealMatrix::zeros(m, n),
    };
    let exo = match model.source {
        TransitionSource::Exogenous if model.transition.is_some() => {
            let e = opts
                .exogenous
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("exogenous transition requires supplied s_t values".into()))?;
            if e.len() != total {
                return Err(Error::Dimension(format!(
                    "exogenous transition needs {total} values (burn-in + T), got {}",
                    e.len()
                )));
            }
            Some(e.as_slice())
        }
        _ => None,
    };

    let sampler = MatrixNormalSampler::new(&model.noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut frames: Vec<RealMatrix> = Vec::with_capacity(total);
    let mut s_all: Vec<f64> = Vec::with_capacity(total);
    for k in 0..total {
        let s = match model.source {
            TransitionSource::NormalizedTrend => (k + 1) as f64 / t_len as f64,
            TransitionSource::LaggedEntry { row, col, lag } => {
                if k >= lag {
                    frames[k - lag][(row, col)]
                } else {
                    initial[(row, col)]
                }
            }
            TransitionSource::Exogenous => exo.map_or(0.0, |e| e[k]),
        };
        let mean = if k == 0 {
            initial.clone()
        } else {
            conditional_mean_unchecked(model, &frames[k - 1], s)
        };
        let y = mean + sampler.sample(&mut rng);
        frames.push(y);
        s_all.push(s);
    }
    let frames = frames.split_off(burn_in);
    let s = s_all.split_off(burn_in);
    if let Some(t) = frames.iter().position(|f| f.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("simulated frame {} overflowed", t + 1)));
    }
    Ok((frames, s))
}

/// Regression pairs with innovation-free responses: regressors follow the
/// model's stochastic path, responses are the exact conditional means
/// `conditional_mean(Y_{t-1}, s_t)`. Used for exact-recovery checks, where
/// a single noiseless path would collapse onto a low-dimensional subspace.
pub fn simulate_noise_free_pairs(model: &ModelSpec, t_len: usize, opts: &SimOptions) -> Result<LaggedSample> {
    if model.noise.is_degenerate() {
        return Err(Error::InvalidInput(
            "noise-free pairs need a non-degenerate noise law to excite the regressors".into(),
        ));
    }
    let path = simulate_path(model, t_len, opts)?;
    let s = path.transition().expect("simulated paths carry s_t");
    let prev = path.frames()[..t_len - 1].to_vec();
    let next = (1..t_len)
        .map(|t| conditional_mean_unchecked(model, path.frame(t - 1), s[t]))
        .collect();
    LaggedSample::from_pairs(prev, next, Some(s[1..].to_vec()))
}

/// `Y_t - conditional_mean(Y_{t-1}, s_t)` for `t = 2..T`.
pub fn residuals(model: &ModelSpec, series: &MatrixSeries) -> Result<MatrixSeries> {
    let sample = LaggedSample::from_series(series)?;
    MatrixSeries::new(residual_frames(model, &sample)?, None)
}

pub fn residual_frames(model: &ModelSpec, sample: &LaggedSample) -> Result<Vec<RealMatrix>> {
    if sample.dims() != model.dims() {
        return Err(Error::Dimension(format!(
            "series is {:?}, model expects {:?}",
            sample.dims(),
            model.dims()
        )));
    }
    let s = match model.kind {
        ModelKind::Mar => None,
        _ => Some(sample.require_transition()?),
    };
    Ok(sample
        .prev()
        .iter()
        .zip(sample.next())
        .enumerate()
        .map(|(t, (x, y))| y - conditional_mean_unchecked(model, x, s.map_or(0.0, |s| s[t])))
        .collect())
}

/// `s_{T+1}` implied by the transition source: `(T+1)/T` for the normalized
/// trend (an extrapolation past the sample), `Y_{T+1-lag}[row, col]` for a
/// lagged entry. Exogenous sources must be supplied by the caller.
pub fn next_transition_value(source: TransitionSource, series: &MatrixSeries) -> Result<f64> {
    let t = series.len();
    match source {
        TransitionSource::NormalizedTrend => {
            log::warn!("trend transition s_(T+1) = (T+1)/T lies outside the estimation support");
            Ok((t + 1) as f64 / t as f64)
        }
        TransitionSource::LaggedEntry { row, col, lag } => {
            let (m, n) = series.dims();
            if row >= m || col >= n || lag == 0 || lag > t {
                return Err(Error::InvalidModel(format!(
                    "lagged-entry transition ({row}, {col}, lag {lag}) does not fit a {m}x{n} series of length {t}"
                )));
            }
            Ok(series.frame(t - lag)[(row, col)])
        }
        TransitionSource::Exogenous => Err(Error::Usage(
            "exogenous transition: the next transition value must be given explicitly".into(),
        )),
    }
}

pub fn one_step_forecast(model: &ModelSpec, series: &MatrixSeries, s_next: f64) -> Result<RealMatrix> {
    conditional_mean(model, series.last(), s_next)
}
