use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::tensor::{ensure_finite, kron, RealMatrix};

/// An ordered sequence of `T` real `m x n` frames with an optional aligned
/// transition variable `s_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeries {
    dims: (usize, usize),
    frames: Vec<RealMatrix>,
    transition: Option<Vec<f64>>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl MatrixSeries {
    pub fn new(frames: Vec<RealMatrix>, transition: Option<Vec<f64>>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("a series needs at least one frame".into()))?;
        let (m, n) = first.shape();
        let row_labels = (1..=m).map(|i| format!("r{i}")).collect();
        let col_labels = (1..=n).map(|j| format!("c{j}")).collect();
        Self::with_labels(frames, transition, row_labels, col_labels)
    }

    pub fn with_labels(
        frames: Vec<RealMatrix>,
        transition: Option<Vec<f64>>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("a series needs at least one frame".into()))?;
        let dims = first.shape();
        if dims.0 == 0 || dims.1 == 0 {
            return Err(Error::Dimension("frames must have positive dimensions".into()));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.shape() != dims {
                return Err(Error::Dimension(format!(
                    "frame {} has shape {:?}, expected {:?}",
                    t + 1,
                    f.shape(),
                    dims
                )));
            }
            ensure_finite(f, &format!("frame {}", t + 1))?;
        }
        if let Some(s) = &transition {
            if s.len() != frames.len() {
                return Err(Error::Dimension(format!(
                    "transition series has length {}, series has {} frames",
                    s.len(),
                    frames.len()
                )));
            }
            if let Some(t) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("transition value at t={}", t + 1)));
            }
        }
        if row_labels.len() != dims.0 || col_labels.len() != dims.1 {
            return Err(Error::Dimension("label counts must match frame dimensions".into()));
        }
        Ok(MatrixSeries {
            dims,
            frames,
            transition,
            row_labels,
            col_labels,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[RealMatrix] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &RealMatrix {
        &self.frames[t]
    }

    pub fn last(&self) -> &RealMatrix {
        self.frames.last().expect("series is never empty")
    }

    pub fn transition(&self) -> Option<&[f64]> {
        self.transition.as_deref()
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn with_transition(mut self, s: Vec<f64>) -> Result<Self> {
        let frames = std::mem::take(&mut self.frames);
        Self::with_labels(frames, Some(s), self.row_labels, self.col_labels)
    }

    /// First `len` frames (and transition values).
    pub fn prefix(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::InvalidInput(format!(
                "prefix length {len} outside 1..={}",
                self.len()
            )));
        }
        Ok(MatrixSeries {
            dims: self.dims,
            frames: self.frames[..len].to_vec(),
            transition: self.transition.as_ref().map(|s| s[..len].to_vec()),
            row_labels: self.row_labels.clone(),
            col_labels: self.col_labels.clone(),
        })
    }

    /// Sum of squared entries over frames `2..T`, the scale of the responses.
    pub fn response_sum_of_squares(&self) -> f64 {
        self.frames[1..].iter().map(|f| f.norm_squared()).sum()
    }
}

/// Regression view of a series: the pairs `(Y_{t-1}, Y_t)` for `t = 2..T`
/// with the transition value `s_t` aligned to the response.
///
/// Estimators work on this view. Building it directly from pairs lets tests
/// supply innovation-free responses over an excited regressor path.
#[derive(Debug, Clone)]
pub struct LaggedSample {
    dims: (usize, usize),
    prev: Vec<RealMatrix>,
    next: Vec<RealMatrix>,
    s: Option<Vec<f64>>,
}

impl LaggedSample {
    pub fn from_series(series: &MatrixSeries) -> Result<Self> {
        if series.len() < 2 {
            return Err(Error::InvalidInput("a series needs at least two frames".into()));
        }
        let t = series.len();
        Ok(LaggedSample {
            dims: series.dims(),
            prev: series.frames()[..t - 1].to_vec(),
            next: series.frames()[1..].to_vec(),
            s: series.transition().map(|s| s[1..].to_vec()),
        })
    }

    pub fn from_pairs(prev: Vec<RealMatrix>, next: Vec<RealMatrix>, s: Option<Vec<f64>>) -> Result<Self> {
        if prev.is_empty() || prev.len() != next.len() {
            return Err(Error::InvalidInput("regressor and response counts differ".into()));
        }
        let dims = prev[0].shape();
        if prev.iter().chain(next.iter()).any(|f| f.shape() != dims) {
            return Err(Error::Dimension("all frames must share a shape".into()));
        }
        if let Some(s) = &s {
            if s.len() != prev.len() {
                return Err(Error::Dimension("transition length differs from pair count".into()));
            }
        }
        Ok(LaggedSample { dims, prev, next, s })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    /// Number of regression pairs, `T' = T - 1` for a series.
    pub fn len(&self) -> usize {
        self.prev.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prev.is_empty()
    }

    pub fn prev(&self) -> &[RealMatrix] {
        &self.prev
    }

    pub fn next(&self) -> &[RealMatrix] {
        &self.next
    }

    pub fn transition(&self) -> Option<&[f64]> {
        self.s.as_deref()
    }

    pub fn require_transition(&self) -> Result<&[f64]> {
        self.transition()
            .ok_or_else(|| Error::InvalidInput("this model needs a transition series s_t".into()))
    }

    pub fn response_sum_of_squares(&self) -> f64 {
        self.next.iter().map(|f| f.norm_squared()).sum()
    }
}

/// Anything the estimators can regress on: a series or prebuilt pairs.
pub trait AsLagged {
    fn as_lagged(&self) -> Result<Cow<'_, LaggedSample>>;
}

impl AsLagged for LaggedSample {
    fn as_lagged(&self) -> Result<Cow<'_, LaggedSample>> {
        Ok(Cow::Borrowed(self))
    }
}

impl AsLagged for MatrixSeries {
    fn as_lagged(&self) -> Result<Cow<'_, LaggedSample>> {
        LaggedSample::from_series(self).map(Cow::Owned)
    }
}

/// Per-entry standardization: mean 0 and sample standard deviation 1 with the
/// `T - 1` denominator. Constant entries become all zeros. The transition
/// series is carried over unchanged.
pub fn standardize_series(series: &MatrixSeries) -> Result<MatrixSeries> {
    let t = series.len();
    if t < 2 {
        return Err(Error::InvalidInput("standardization needs T >= 2".into()));
    }
    let (m, n) = series.dims();
    let mut mean = RealMatrix::zeros(m, n);
    for f in series.frames() {
        mean += f;
    }
    mean /= t as f64;
    let mut var = RealMatrix::zeros(m, n);
    for f in series.frames() {
        let d = f - &mean;
        var += d.component_mul(&d);
    }
    var /= (t - 1) as f64;
    let frames = series
        .frames()
        .iter()
        .map(|f| {
            RealMatrix::from_fn(m, n, |i, j| {
                let sd = var[(i, j)].sqrt();
                let centered = f[(i, j)] - mean[(i, j)];
                if sd > 0.0 && sd > 1e-14 * mean[(i, j)].abs() {
                    centered / sd
                } else {
                    0.0
                }
            })
        })
        .collect();
    MatrixSeries::with_labels(
        frames,
        series.transition().map(<[f64]>::to_vec),
        series.row_labels().to_vec(),
        series.col_labels().to_vec(),
    )
}

/// Moment estimate of `E[Y_{t+h} ⊗ Y_t']`: `(T-h)⁻¹ Σ_t Y_{t+h} ⊗ Y_t'`,
/// an `mn x nm` matrix. No mean is removed. Only `h >= 0` is supported.
pub fn sample_lag_cov(series: &MatrixSeries, h: usize) -> Result<RealMatrix> {
    let t = series.len();
    if h >= t {
        return Err(Error::InvalidInput(format!("lag {h} must be below T = {t}")));
    }
    let (m, n) = series.dims();
    let mut acc = RealMatrix::zeros(m * n, n * m);
    for s in 0..t - h {
        acc += kron(series.frame(s + h), &series.frame(s).transpose());
    }
    Ok(acc / (t - h) as f64)
}
