//! Per-coefficient p-values.
//!
//! Each entry is treated as the slope of a one-regressor OLS problem: the
//! regressor is the derivative of the fitted mean with respect to that entry,
//! every other parameter (and the transition split) held at its estimate.
//! For `A[i, k]` the derivative direction is `E_ik X B'` and its squared norm
//! summed over the sample is the `(k, k)` entry of `Σ w² X B'B X'`; the other
//! factors are analogous.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::Result;
use crate::model::{CoefficientSet, ModelKind};
use crate::series::{AsLagged, LaggedSample};
use crate::tensor::RealMatrix;

use super::FitResult;

/// Row-major p-value tables aligned with `A`, `B` and, for two-regime
/// models, `C`, `D`. `None` marks entries without a usable standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueTable {
    pub a: Vec<Vec<Option<f64>>>,
    pub b: Vec<Vec<Option<f64>>>,
    pub c: Option<Vec<Vec<Option<f64>>>>,
    pub d: Option<Vec<Vec<Option<f64>>>>,
}

/// Two-sided normal p-value of `z`.
pub(crate) fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

fn regime_grams(sample: &LaggedSample, set: &CoefficientSet, w: &[f64]) -> (RealMatrix, RealMatrix) {
    let (m, n) = sample.dims();
    let rtr = set.right.transpose() * &set.right;
    let ltl = set.left.transpose() * &set.left;
    let mut gl = RealMatrix::zeros(m, m);
    let mut gr = RealMatrix::zeros(n, n);
    for (x, &wt) in sample.prev().iter().zip(w) {
        if wt == 0.0 {
            continue;
        }
        let w2 = wt * wt;
        gl += x * &rtr * x.transpose() * w2;
        gr += x.transpose() * &ltl * x * w2;
    }
    (gl, gr)
}

fn table(est: &RealMatrix, gram: &RealMatrix, sigma2: Option<f64>) -> Vec<Vec<Option<f64>>> {
    (0..est.nrows())
        .map(|i| {
            (0..est.ncols())
                .map(|k| {
                    let s2 = sigma2?;
                    let g = gram[(k, k)];
                    if !(g > 0.0) || !g.is_finite() {
                        return None;
                    }
                    let se = (s2 / g).sqrt();
                    if se == 0.0 {
                        return Some(if est[(i, k)] == 0.0 { 1.0 } else { 0.0 });
                    }
                    Some(normal_two_sided(est[(i, k)] / se))
                })
                .collect()
        })
        .collect()
}

pub fn coefficient_inference(fit: &FitResult, data: &impl AsLagged) -> Result<PValueTable> {
    let sample = data.as_lagged()?;
    let (m, n) = sample.dims();
    let model = &fit.model;
    let len = sample.len();
    let regimes = if model.regime2.is_some() { 2 } else { 1 };
    let p_eff = regimes * (m * m + n * n - 1);
    let dof = (len * m * n) as f64 - p_eff as f64;
    let sigma2 = (dof > 0.0).then(|| fit.ssq / dof);

    let (w1, w2): (Vec<f64>, Vec<f64>) = match model.kind {
        ModelKind::Mar => (vec![1.0; len], vec![0.0; len]),
        ModelKind::Mtar | ModelKind::Mstar => {
            let s = sample.require_transition()?;
            let g: Vec<f64> = s.iter().map(|&v| model.weight(v)).collect();
            if model.kind == ModelKind::Mtar {
                (g.iter().map(|v| 1.0 - v).collect(), g)
            } else {
                (vec![1.0; len], g)
            }
        }
    };
    let (ga, gb) = regime_grams(&sample, &model.regime1, &w1);
    let mut out = PValueTable {
        a: table(&model.regime1.left, &ga, sigma2),
        b: table(&model.regime1.right, &gb, sigma2),
        c: None,
        d: None,
    };
    if let Some(r2) = &model.regime2 {
        let (gc, gd) = regime_grams(&sample, r2, &w2);
        out.c = Some(table(&r2.left, &gc, sigma2));
        out.d = Some(table(&r2.right, &gd, sigma2));
    }
    Ok(out)
}
