//! Lagrange-multiplier test of the linear matrix autoregression against a
//! smooth-transition alternative, through a `K`-th order Taylor expansion of
//! the transition function around `γ = 0`.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::series::AsLagged;
use crate::tensor::{min_sym_eigenvalue, RealMatrix};

pub const DEFAULT_TAYLOR_ORDER: usize = 3;

/// Relative threshold for the positive-definiteness checks.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmForm {
    Score,
    Tr2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmTestResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub form: LmForm,
    pub taylor_order: usize,
}

/// Regressors of the auxiliary model: `X` has rows `vec(Y_{t-1})'` and
/// `Z_K` has rows `[vec(Y_{t-1})' s_t, …, vec(Y_{t-1})' s_t^K]`.
///
/// The `k = 0` Taylor term is collinear with `X` and is absorbed into the
/// linear coefficient, so `Z_K` starts at `k = 1`.
pub fn build_taylor_regressors(data: &impl AsLagged, k: usize) -> Result<(RealMatrix, RealMatrix)> {
    if k == 0 {
        return Err(Error::Usage("Taylor order K must be at least 1".into()));
    }
    let sample = data.as_lagged()?;
    let s = sample.require_transition()?;
    let (m, n) = sample.dims();
    let mn = m * n;
    let len = sample.len();
    let mut x = RealMatrix::zeros(len, mn);
    let mut z = RealMatrix::zeros(len, mn * k);
    for (t, prev) in sample.prev().iter().enumerate() {
        let mut pow = 1.0;
        for j in 0..mn {
            x[(t, j)] = prev.as_slice()[j];
        }
        for order in 0..k {
            pow *= s[t];
            for j in 0..mn {
                z[(t, order * mn + j)] = prev.as_slice()[j] * pow;
            }
        }
    }
    Ok((x, z))
}

/// Degrees of freedom: `mn` equations times the column dimension of `Z_K`.
pub fn lm_dof(m: usize, n: usize, k: usize) -> usize {
    (m * n) * (m * n * k)
}

/// Upper tail of the χ² distribution.
pub fn chi2_sf(statistic: f64, dof: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0)
}

/// Inverse of a symmetric matrix that must be positive definite, with the
/// smallest eigenvalue checked against `RANK_TOL` times the largest diagonal.
fn spd_inverse(mat: &RealMatrix, name: &str) -> Result<RealMatrix> {
    let scale = mat.diagonal().amax();
    let min_eig = min_sym_eigenvalue(mat);
    if !(scale > 0.0) || !(min_eig > RANK_TOL * scale) {
        return Err(Error::Rank(format!(
            "{name} is not positive definite (smallest eigenvalue {min_eig:e}, scale {scale:e}); \
             the linearity test needs full-rank regressors"
        )));
    }
    let chol = Cholesky::new(mat.clone())
        .ok_or_else(|| Error::Rank(format!("{name} is not positive definite (Cholesky failed)")))?;
    Ok(chol.inverse())
}

struct Restricted {
    x: RealMatrix,
    z: RealMatrix,
    xtx_inv: RealMatrix,
    resid: RealMatrix,
    mn: usize,
    len: usize,
}

fn restricted_fit(data: &impl AsLagged, k: usize) -> Result<Restricted> {
    let (x, z) = build_taylor_regressors(data, k)?;
    let sample = data.as_lagged()?;
    let (m, n) = sample.dims();
    let mn = m * n;
    let len = sample.len();
    if len <= mn * (k + 1) {
        return Err(Error::InvalidInput(format!(
            "linearity test with K = {k} needs more than {} transitions, got {len}",
            mn * (k + 1)
        )));
    }
    let mut y = RealMatrix::zeros(len, mn);
    for (t, next) in sample.next().iter().enumerate() {
        for j in 0..mn {
            y[(t, j)] = next.as_slice()[j];
        }
    }
    let xtx_inv = spd_inverse(&(x.transpose() * &x), "X'X")?;
    let beta = &xtx_inv * (x.transpose() * &y);
    let resid = &y - &x * beta;
    Ok(Restricted {
        x,
        z,
        xtx_inv,
        resid,
        mn,
        len,
    })
}

fn tr2_statistic(x: &RealMatrix, z: &RealMatrix, resid: &RealMatrix, frames: usize) -> Result<f64> {
    let ete_inv = spd_inverse(&(resid.transpose() * resid), "residual covariance")?;
    let mut w = RealMatrix::zeros(x.nrows(), x.ncols() + z.ncols());
    w.columns_mut(0, x.ncols()).copy_from(x);
    w.columns_mut(x.ncols(), z.ncols()).copy_from(z);
    let wtw_inv = spd_inverse(&(w.transpose() * &w), "[X, Z_K]'[X, Z_K]")?;
    let xi = resid - &w * (wtw_inv * (w.transpose() * resid));
    let mn = resid.ncols() as f64;
    Ok((frames as f64 * (mn - (ete_inv * xi.transpose() * xi).trace())).max(0.0))
}

/// Score form: `tr{Σ̂⁻¹ Ê'Z [Z'(I - P_X)Z]⁻¹ Z'Ê}` with `Σ̂ = Ê'Ê / T'`.
pub fn lm_test_score(data: &impl AsLagged, k: usize) -> Result<LmTestResult> {
    let r = restricted_fit(data, k)?;
    let xtz = r.x.transpose() * &r.z;
    let mzz = r.z.transpose() * &r.z - xtz.transpose() * &r.xtx_inv * &xtz;
    let mzz_inv = spd_inverse(&mzz, "Z_K'(I - P_X)Z_K")?;
    let sigma = r.resid.transpose() * &r.resid / r.len as f64;
    let sigma_inv = spd_inverse(&sigma, "residual covariance")?;
    let zte = r.z.transpose() * &r.resid;
    let statistic = (sigma_inv * zte.transpose() * mzz_inv * zte).trace().max(0.0);
    let dof = r.mn * r.z.ncols();
    Ok(LmTestResult {
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof),
        form: LmForm::Score,
        taylor_order: k,
    })
}

/// Auxiliary-regression form: `T (mn - tr{(Ê'Ê)⁻¹ Ξ̂'Ξ̂})`, where `Ξ̂`
/// are the residuals of `Ê` regressed on `[X, Z_K]` and `T` is the number
/// of frames in the series.
pub fn lm_test_tr2(data: &impl AsLagged, k: usize) -> Result<LmTestResult> {
    let r = restricted_fit(data, k)?;
    // Rank conditions are shared with the score form.
    let xtz = r.x.transpose() * &r.z;
    let mzz = r.z.transpose() * &r.z - xtz.transpose() * &r.xtx_inv * &xtz;
    spd_inverse(&mzz, "Z_K'(I - P_X)Z_K")?;
    let statistic = tr2_statistic(&r.x, &r.z, &r.resid, r.len + 1)?;
    let dof = r.mn * r.z.ncols();
    Ok(LmTestResult {
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof),
        form: LmForm::Tr2,
        taylor_order: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_path, CoefficientSet, ModelSpec, SimOptions};
    use crate::series::{LaggedSample, MatrixSeries};
    use crate::tensor::MatrixNormalSpec;

    fn linear_path(t: usize, seed: u64) -> MatrixSeries {
        let model = ModelSpec::mar(
            CoefficientSet::scaled_identity(2, 2, 0.2, 1.0),
            MatrixNormalSpec::isotropic(2, 2, 1.0),
        )
        .unwrap();
        let path = simulate_path(&model, t, &SimOptions::seeded(seed)).unwrap();
        path.with_transition((1..=t).map(|k| k as f64 / t as f64).collect())
            .unwrap()
    }

    #[test]
    fn taylor_regressors_by_hand() {
        let prev = vec![
            RealMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
            RealMatrix::from_column_slice(2, 1, &[-1.0, 0.5]),
            RealMatrix::from_column_slice(2, 1, &[3.0, 0.0]),
        ];
        let next = prev.clone();
        let sample = LaggedSample::from_pairs(prev, next, Some(vec![2.0, -1.0, 0.5])).unwrap();
        let (x, z) = build_taylor_regressors(&sample, 2).unwrap();
        let expected =
            RealMatrix::from_row_slice(3, 4, &[2.0, 4.0, 4.0, 8.0, 1.0, -0.5, -1.0, 0.5, 1.5, 0.0, 0.75, 0.0]);
        assert_eq!(z, expected);
        assert_eq!(x.row(1).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.5]);
        assert!(matches!(build_taylor_regressors(&sample, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn degenerate_transition_fails_rank_check() {
        let path = linear_path(200, 1);
        let path = path.with_transition(vec![1.0; 200]).unwrap();
        let (x, z) = build_taylor_regressors(&path, 1).unwrap();
        assert_eq!(x, z);
        let err = lm_test_score(&path, 1).unwrap_err();
        assert!(
            matches!(err, Error::Rank(_)) && err.to_string().contains("Z_K"),
            "{err}"
        );
        assert!(matches!(lm_test_tr2(&path, 1), Err(Error::Rank(_))));
    }

    #[test]
    fn forms_differ_by_sample_length_factor() {
        let path = linear_path(300, 2);
        let a = lm_test_score(&path, 3).unwrap();
        let b = lm_test_tr2(&path, 3).unwrap();
        assert_eq!(a.dof, 48);
        assert_eq!(a.dof, lm_dof(2, 2, 3));
        assert!((b.statistic - a.statistic * 300.0 / 299.0).abs() < 1e-8 * a.statistic.max(1.0));
        assert!((a.p_value - chi2_sf(a.statistic, a.dof)).abs() == 0.0);
    }

    #[test]
    fn invariant_under_linear_transforms() {
        let path = linear_path(250, 3);
        let p = RealMatrix::from_row_slice(2, 2, &[2.0, 0.3, -0.1, 0.7]);
        let q = RealMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.4, -3.0]);
        let frames = path.frames().iter().map(|y| &p * y * q.transpose()).collect();
        let moved = MatrixSeries::new(frames, path.transition().map(<[f64]>::to_vec)).unwrap();
        let a = lm_test_score(&path, 2).unwrap().statistic;
        let b = lm_test_score(&moved, 2).unwrap().statistic;
        assert!((a - b).abs() < 1e-8 * a.max(1.0), "{a} vs {b}");
    }

    #[test]
    fn chi2_tail() {
        assert_eq!(chi2_sf(0.0, 4), 1.0);
        // P(χ²₂ > x) = exp(-x/2)
        assert!((chi2_sf(3.0, 2) - (-1.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn tr2_column_order_invariant() {
        let path = linear_path(200, 4);
        let r = restricted_fit(&path, 2).unwrap();
        let a = tr2_statistic(&r.x, &r.z, &r.resid, 200).unwrap();
        let cols = r.z.ncols();
        let perm = RealMatrix::from_fn(r.z.nrows(), cols, |i, j| r.z[(i, cols - 1 - j)]);
        let b = tr2_statistic(&r.x, &perm, &r.resid, 200).unwrap();
        assert!((a - b).abs() < 1e-9 * a.max(1.0));
        assert_eq!(a, lm_test_tr2(&path, 2).unwrap().statistic);
    }

    #[test]
    fn tr2_extremes() {
        let path = linear_path(120, 5);
        let r = restricted_fit(&path, 1).unwrap();
        // Z orthogonal to both X and Ê: Ξ = Ê.
        let mut basis = RealMatrix::zeros(120 - 1, 8);
        basis.columns_mut(0, 4).copy_from(&r.x);
        basis.columns_mut(4, 4).copy_from(&r.resid);
        let raw = RealMatrix::from_fn(119, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let proj = &basis * (basis.transpose() * &basis).try_inverse().unwrap() * basis.transpose();
        let z = &raw - proj * &raw;
        let stat = tr2_statistic(&r.x, &z, &r.resid, 120).unwrap();
        assert!(stat < 1e-8, "{stat}");
        // Z containing the residuals: Ξ = 0.
        let stat = tr2_statistic(&r.x, &r.resid, &r.resid, 120).unwrap();
        assert!((stat - 120.0 * 4.0).abs() < 1e-6);
    }
}
