//! Candidate grids for the threshold and `(γ, c)` searches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nearest-rank quantile of sorted data: `sorted[ceil(q N) - 1]`.
pub(crate) fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

fn sorted_finite(s: &[f64]) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::InvalidInput("empty transition series".into()));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transition series".into()));
    }
    let mut v = s.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn check_trim(trim: f64) -> Result<()> {
    if !(trim > 0.0 && trim < 0.5) {
        return Err(Error::InvalidInput(format!(
            "trim quantile must lie in (0, 0.5), got {trim}"
        )));
    }
    Ok(())
}

/// `[quantile(q), quantile(1 - q)]` of the transition values.
pub fn trim_window(s: &[f64], trim: f64) -> Result<(f64, f64)> {
    check_trim(trim)?;
    let sorted = sorted_finite(s)?;
    Ok((nearest_rank(&sorted, trim), nearest_rank(&sorted, 1.0 - trim)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum CandidateRule {
    /// Percentiles 1..99 of `s_t` inside the trim window.
    Percentiles,
    /// Every distinct `s_t` inside the trim window.
    Dense,
    /// Fixed values, used as given.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdGrid {
    pub trim: f64,
    pub rule: CandidateRule,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid {
            trim: 0.1,
            rule: CandidateRule::Percentiles,
        }
    }
}

impl ThresholdGrid {
    pub fn percentiles(trim: f64) -> Result<Self> {
        check_trim(trim)?;
        Ok(ThresholdGrid {
            trim,
            rule: CandidateRule::Percentiles,
        })
    }

    pub fn dense(trim: f64) -> Result<Self> {
        check_trim(trim)?;
        Ok(ThresholdGrid {
            trim,
            rule: CandidateRule::Dense,
        })
    }

    pub fn explicit(values: Vec<f64>) -> Self {
        ThresholdGrid {
            trim: 0.1,
            rule: CandidateRule::Explicit(values),
        }
    }

    /// Sorted, distinct candidates for the given (response-aligned) `s_t`.
    pub fn candidates(&self, s: &[f64]) -> Result<Vec<f64>> {
        let mut out = match &self.rule {
            CandidateRule::Explicit(v) => {
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput("threshold candidates must be finite".into()));
                }
                let mut v = v.clone();
                v.sort_by(f64::total_cmp);
                v
            }
            CandidateRule::Percentiles => {
                let (lo, hi) = trim_window(s, self.trim)?;
                let sorted = sorted_finite(s)?;
                (1..100)
                    .map(|p| nearest_rank(&sorted, p as f64 / 100.0))
                    .filter(|v| (lo..=hi).contains(v))
                    .collect()
            }
            CandidateRule::Dense => {
                let (lo, hi) = trim_window(s, self.trim)?;
                sorted_finite(s)?
                    .into_iter()
                    .filter(|v| (lo..=hi).contains(v))
                    .collect()
            }
        };
        out.dedup();
        if out.is_empty() {
            return Err(Error::InvalidInput("threshold grid is empty".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlopeThresholdGrid {
    pub gamma: Vec<f64>,
    /// Explicit location values; when absent, `c_points` equally spaced
    /// values across the trimmed range of `s_t`.
    pub c: Option<Vec<f64>>,
    pub c_points: usize,
    pub trim: f64,
}

impl Default for SlopeThresholdGrid {
    fn default() -> Self {
        SlopeThresholdGrid {
            gamma: log_spaced(1.0, 50.0, 24),
            c: None,
            c_points: 25,
            trim: 0.1,
        }
    }
}

pub(crate) fn log_spaced(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..k)
        .map(|i| {
            if i == k - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (k - 1) as f64).exp()
            }
        })
        .collect()
}

fn lin_spaced(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..k)
        .map(|i| {
            if i == k - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (k - 1) as f64
            }
        })
        .collect()
}

impl SlopeThresholdGrid {
    pub fn with_values(gamma: Vec<f64>, c: Vec<f64>) -> Self {
        SlopeThresholdGrid {
            gamma,
            c: Some(c),
            ..Default::default()
        }
    }

    /// Sorted `(γ values, c values)` for the given `s_t`.
    pub fn resolve(&self, s: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut gamma = self.gamma.clone();
        if gamma.is_empty() || gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidInput(
                "slope grid must be non-empty with finite γ > 0".into(),
            ));
        }
        gamma.sort_by(f64::total_cmp);
        gamma.dedup();
        let mut c = match &self.c {
            Some(c) => c.clone(),
            None => {
                if self.c_points == 0 {
                    return Err(Error::InvalidInput("c_points must be at least 1".into()));
                }
                let (lo, hi) = trim_window(s, self.trim)?;
                lin_spaced(lo, hi, self.c_points)
            }
        };
        if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("location grid must be non-empty and finite".into()));
        }
        c.sort_by(f64::total_cmp);
        c.dedup();
        Ok((gamma, c))
    }
}
