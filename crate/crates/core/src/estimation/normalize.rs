use crate::error::{Error, Result};
use crate::model::{CoefficientSet, ModelSpec};
use crate::tensor::frobenius_norm;

use super::FitResult;

/// Rescales to `‖left‖_F = 1` (scale moved to `right`) and flips signs so
/// the first nonzero entry of `left`, column-major, is positive. The
/// product `right ⊗ left` is unchanged.
pub fn normalize_coefficients(set: &CoefficientSet) -> Result<CoefficientSet> {
    let f = frobenius_norm(&set.left);
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::InvalidModel("cannot normalize a zero left factor".into()));
    }
    let sign = set.left.iter().find(|v| **v != 0.0).map_or(1.0, |v| v.signum());
    Ok(CoefficientSet {
        left: &set.left * (sign / f),
        right: &set.right * (sign * f),
    })
}

pub fn normalize_model(model: &ModelSpec) -> Result<ModelSpec> {
    let mut out = model.clone();
    out.regime1 = normalize_coefficients(&model.regime1)?;
    if let Some(r2) = &model.regime2 {
        out.regime2 = Some(normalize_coefficients(r2)?);
    }
    Ok(out)
}

pub fn normalize_identification(fit: FitResult) -> Result<FitResult> {
    let model = normalize_model(&fit.model)?;
    Ok(FitResult { model, ..fit })
}
