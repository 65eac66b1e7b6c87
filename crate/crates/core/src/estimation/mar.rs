use crate::error::{Error, Result};
use crate::model::{CoefficientSet, ModelKind, ModelSpec, TransitionSource};
use crate::series::{AsLagged, LaggedSample};

use super::als::als_single;
use super::inference::coefficient_inference;
use super::moments::{Design, Moments};
use super::{fitted_noise, normalize_identification, FitResult, IlsOptions};

pub(crate) fn regime_ssq(sample: &LaggedSample, set: &CoefficientSet, idx: impl Iterator<Item = usize>) -> f64 {
    idx.map(|t| (&sample.next()[t] - set.apply(&sample.prev()[t])).norm_squared())
        .sum()
}

/// Least-squares MAR(1) fit `Y_t ≈ A Y_{t-1} B'` by alternating updates.
pub fn estimate_mar(data: &impl AsLagged, opts: &IlsOptions) -> Result<FitResult> {
    opts.validate()?;
    let sample = data.as_lagged()?;
    let (m, n) = sample.dims();
    if sample.len() + 1 < m + n + 2 {
        return Err(Error::InvalidInput(format!(
            "MAR fit needs T >= m + n + 2 = {}, got T = {}",
            m + n + 2,
            sample.len() + 1
        )));
    }
    let design = Design::new(&sample);
    let mom = Moments::full(&design);
    if mom.syy == 0.0 || mom.sxx.amax() == 0.0 {
        return Err(Error::InvalidInput(
            "series is identically zero; coefficients are not identified".into(),
        ));
    }
    let exact = |set: &CoefficientSet| regime_ssq(&sample, set, 0..sample.len());
    let out = als_single(&mom, m, n, opts.initial_right(n)?, opts, &exact)?;
    let n_params = m * m + n * n;
    let model = ModelSpec {
        kind: ModelKind::Mar,
        regime1: out.regime1,
        regime2: None,
        transition: None,
        noise: fitted_noise(m, n, out.ssq, sample.len(), n_params - 1),
        source: TransitionSource::Exogenous,
    };
    let fit = normalize_identification(FitResult {
        model,
        ssq: out.ssq,
        sst: mom.syy,
        ssq_trace: out.trace,
        sweeps_used: out.sweeps,
        converged: out.converged,
        grid_profile: Vec::new(),
        pvalues: None,
        n_obs: sample.len(),
        n_params,
        flatness: None,
    })?;
    let pvalues = coefficient_inference(&fit, sample.as_ref())?;
    Ok(FitResult {
        pvalues: Some(pvalues),
        ..fit
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_noise_free_pairs, simulate_path, SimOptions};
    use crate::series::MatrixSeries;
    use crate::tensor::{MatrixNormalSpec, RealMatrix};

    fn mar_model() -> ModelSpec {
        ModelSpec::mar(
            CoefficientSet::new(
                RealMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.4]),
                RealMatrix::from_row_slice(3, 3, &[0.6, 0.1, 0.0, -0.2, 0.5, 0.1, 0.1, 0.0, 0.7]),
            )
            .unwrap(),
            MatrixNormalSpec::isotropic(2, 3, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn exact_recovery_noise_free() {
        let model = mar_model();
        let pairs = simulate_noise_free_pairs(&model, 200, &SimOptions::seeded(3)).unwrap();
        let fit = estimate_mar(&pairs, &IlsOptions::default()).unwrap();
        let err = (fit.model.regime1.kron() - model.regime1.kron()).norm();
        assert!(err < 1e-6, "kron error {err}");
        assert!(fit.converged);
        assert!(fit.max_relative_increase() <= 1e-10);
        assert!((crate::tensor::frobenius_norm(&fit.model.regime1.left) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_fit_descends() {
        let model = mar_model();
        let path = simulate_path(&model, 300, &SimOptions::seeded(5)).unwrap();
        let fit = estimate_mar(&path, &IlsOptions::default()).unwrap();
        assert!(fit.max_relative_increase() <= 1e-10);
        assert!(fit.converged);
        let direct = regime_ssq(&LaggedSample::from_series(&path).unwrap(), &fit.model.regime1, 0..299);
        assert!((direct - fit.ssq).abs() <= 1e-10 * fit.ssq);
        assert!((fit.model.regime1.kron() - model.regime1.kron()).amax() < 0.2);
    }

    #[test]
    fn scalar_matches_ar1_ols() {
        let model = ModelSpec::mar(
            CoefficientSet::scaled_identity(1, 1, 0.7, 0.9),
            MatrixNormalSpec::isotropic(1, 1, 1.0),
        )
        .unwrap();
        let path = simulate_path(&model, 500, &SimOptions::seeded(12)).unwrap();
        let y: Vec<f64> = path.frames().iter().map(|f| f[(0, 0)]).collect();
        let sxy: f64 = y.windows(2).map(|w| w[0] * w[1]).sum();
        let sxx: f64 = y[..y.len() - 1].iter().map(|v| v * v).sum();
        let fit = estimate_mar(&path, &IlsOptions::default()).unwrap();
        let phi = fit.model.regime1.left[(0, 0)] * fit.model.regime1.right[(0, 0)];
        assert!((phi - sxy / sxx).abs() < 1e-10);
    }

    #[test]
    fn zero_series_rejected() {
        let s = MatrixSeries::new(vec![RealMatrix::zeros(2, 2); 20], None).unwrap();
        assert!(matches!(
            estimate_mar(&s, &IlsOptions::default()),
            Err(Error::InvalidInput(_))
        ));
    }
}
