//! Unstructured comparison models on `vec(Y_t)`: VAR, threshold VAR and
//! logistic smooth-transition VAR, all without intercepts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::moments::{Design, Moments, TransitionMoments};
use crate::estimation::mstar::{logistic_weights, CoordinateSearch};
use crate::estimation::{argmin_first, GridPoint, IlsOptions, SlopeThresholdGrid, ThresholdGrid, NUMERICAL_ZERO};
use crate::model::TransitionFunction;
use crate::series::{AsLagged, LaggedSample};
use crate::tensor::{solve_gram_strict, RealMatrix};

/// `vec(Y_t) = Φ₀ vec(Y_{t-1}) [+ w_t Φ₁ vec(Y_{t-1})] + e_t`.
///
/// For the threshold model `Φ₀` is the regime-1 coefficient and `Φ₁` the
/// regime-2 coefficient (`w_t` selects one of them); for the smooth-transition
/// model `Φ₁` is the additive term weighted by `g_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecModelFit {
    #[serde(with = "crate::tensor::rows")]
    pub phi0: RealMatrix,
    pub phi1: Option<VecCoefficient>,
    pub tf: Option<TransitionFunction>,
    pub ssq: f64,
    pub n_obs: usize,
    /// `(mn)²` per regime.
    pub n_params: usize,
    pub grid_profile: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VecCoefficient(#[serde(with = "crate::tensor::rows")] pub RealMatrix);

impl VecModelFit {
    /// Coefficient acting in the second regime (threshold model) or on the
    /// transition-weighted term (smooth-transition model).
    pub fn phi1(&self) -> Option<&RealMatrix> {
        self.phi1.as_ref().map(|p| &p.0)
    }

    /// Conditional mean of `vec(Y_t)` given `x = vec(Y_{t-1})` and `s_t`.
    pub fn predict(&self, x: &RealMatrix, s: f64) -> RealMatrix {
        match (&self.tf, self.phi1()) {
            (Some(TransitionFunction::Indicator { c }), Some(p1)) => {
                if s >= *c {
                    p1 * x
                } else {
                    &self.phi0 * x
                }
            }
            (Some(tf), Some(p1)) => &self.phi0 * x + p1 * x * tf.eval(s),
            _ => &self.phi0 * x,
        }
    }
}

fn vec_col(m: &RealMatrix) -> RealMatrix {
    RealMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

fn ols(mom: &Moments) -> Option<RealMatrix> {
    solve_gram_strict(&mom.syx, &mom.sxx)
}

fn ols_ssq(mom: &Moments, phi: &RealMatrix) -> f64 {
    (mom.syy - phi.dot(&mom.syx)).max(0.0)
}

fn exact_ssq(sample: &LaggedSample, fit: &VecModelFit) -> f64 {
    let s = sample.transition();
    sample
        .prev()
        .iter()
        .zip(sample.next())
        .enumerate()
        .map(|(t, (x, y))| {
            let st = s.map_or(0.0, |s| s[t]);
            (vec_col(y) - fit.predict(&vec_col(x), st)).norm_squared()
        })
        .sum()
}

fn check_len(sample: &LaggedSample, what: &str) -> Result<usize> {
    let (m, n) = sample.dims();
    let mn = m * n;
    if sample.len() + 1 < mn + 2 {
        return Err(Error::InvalidInput(format!(
            "{what} needs T >= mn + 2 = {}, got T = {}",
            mn + 2,
            sample.len() + 1
        )));
    }
    Ok(mn)
}

/// OLS of `vec(Y_t)` on `vec(Y_{t-1})`.
pub fn estimate_var(data: &impl AsLagged) -> Result<VecModelFit> {
    let sample = data.as_lagged()?;
    let mn = check_len(&sample, "VAR")?;
    let mom = Moments::full(&Design::new(&sample));
    let phi0 = ols(&mom).ok_or_else(|| {
        Error::Rank("VAR regressor moment matrix X'X is singular (rank-deficient vec(Y_{t-1}))".into())
    })?;
    let mut fit = VecModelFit {
        phi0,
        phi1: None,
        tf: None,
        ssq: 0.0,
        n_obs: sample.len(),
        n_params: mn * mn,
        grid_profile: Vec::new(),
    };
    fit.ssq = exact_ssq(&sample, &fit);
    Ok(fit)
}

/// Threshold VAR over the same candidates as the structured threshold fit;
/// each regime needs at least `mn + 2` observations.
pub fn estimate_vtar(data: &impl AsLagged, grid: &ThresholdGrid, opts: &IlsOptions) -> Result<VecModelFit> {
    let sample = data.as_lagged()?;
    let mn = check_len(&sample, "VTAR")?;
    let s = sample.require_transition()?;
    let cands = grid.candidates(s)?;
    let design = Design::new(&sample);
    let len = sample.len();
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]).then(i.cmp(&j)));

    let mut lo_snap = Vec::with_capacity(cands.len());
    let mut acc = Moments::zeros(mn);
    let mut k = 0;
    for &c in &cands {
        while k < len && s[order[k]] < c {
            acc.add(&design, order[k]);
            k += 1;
        }
        lo_snap.push(acc.clone());
    }
    let mut hi_snap: Vec<Option<Moments>> = vec![None; cands.len()];
    let mut acc = Moments::zeros(mn);
    let mut k = len;
    for (ci, &c) in cands.iter().enumerate().rev() {
        while k > 0 && s[order[k - 1]] >= c {
            k -= 1;
            acc.add(&design, order[k]);
        }
        hi_snap[ci] = Some(acc.clone());
    }
    let min_size = mn + 2;
    let jobs: Vec<(f64, Moments, Moments)> = cands
        .iter()
        .zip(lo_snap)
        .zip(hi_snap)
        .map(|((&c, lo), hi)| (c, lo, hi.expect("filled above")))
        .collect();
    let evaluated: Vec<std::result::Result<(RealMatrix, RealMatrix, f64), String>> =
        opts.exec.map(&jobs, |(_, lo, hi)| {
            if lo.count < min_size || hi.count < min_size {
                return Err(format!(
                    "regime sizes {}/{} below the minimum {min_size}",
                    lo.count, hi.count
                ));
            }
            let p0 = ols(lo).ok_or("regime-1 regressor matrix is singular")?;
            let p1 = ols(hi).ok_or("regime-2 regressor matrix is singular")?;
            let q = ols_ssq(lo, &p0) + ols_ssq(hi, &p1);
            Ok((p0, p1, q))
        });
    let profile: Vec<GridPoint> = jobs
        .iter()
        .zip(&evaluated)
        .map(|((c, _, _), r)| GridPoint {
            c: *c,
            gamma: None,
            objective: r.as_ref().ok().map(|v| v.2),
            note: r.as_ref().err().cloned(),
        })
        .collect();
    let best = argmin_first(profile.iter().map(|p| p.objective)).ok_or_else(|| Error::NoAdmissibleCandidate {
        reason: format!(
            "no VTAR threshold candidate leaves {min_size} observations with full-rank regressors in both regimes"
        ),
        profile: profile.clone(),
    })?;
    let (p0, p1, _) = evaluated[best].clone().expect("admissible");
    let mut fit = VecModelFit {
        phi0: p0,
        phi1: Some(VecCoefficient(p1)),
        tf: Some(TransitionFunction::Indicator { c: jobs[best].0 }),
        ssq: 0.0,
        n_obs: len,
        n_params: 2 * mn * mn,
        grid_profile: profile,
    };
    fit.ssq = exact_ssq(&sample, &fit);
    Ok(fit)
}

/// Stacked OLS of `vec(Y_t)` on `[x_t, g_t x_t]`.
fn vlstar_ols(tm: &TransitionMoments, mn: usize) -> Option<(RealMatrix, RealMatrix, f64)> {
    let mut gram = RealMatrix::zeros(2 * mn, 2 * mn);
    gram.view_mut((0, 0), (mn, mn)).copy_from(&tm.base.sxx);
    gram.view_mut((0, mn), (mn, mn)).copy_from(&tm.sxx_g);
    gram.view_mut((mn, 0), (mn, mn)).copy_from(&tm.sxx_g.transpose());
    gram.view_mut((mn, mn), (mn, mn)).copy_from(&tm.sxx_g2);
    let mut cross = RealMatrix::zeros(mn, 2 * mn);
    cross.view_mut((0, 0), (mn, mn)).copy_from(&tm.base.syx);
    cross.view_mut((0, mn), (mn, mn)).copy_from(&tm.syx_g);
    let phi = solve_gram_strict(&cross, &gram)?;
    let ssq = (tm.base.syy - phi.dot(&cross)).max(0.0);
    Some((phi.columns(0, mn).into_owned(), phi.columns(mn, mn).into_owned(), ssq))
}

/// Logistic smooth-transition VAR: grid search over `(γ, c)`, then the
/// same coordinate refinement as the structured smooth-transition fit,
/// alternating with the closed-form OLS step.
pub fn estimate_vlstar(data: &impl AsLagged, grid: &SlopeThresholdGrid, opts: &IlsOptions) -> Result<VecModelFit> {
    opts.validate()?;
    let sample = data.as_lagged()?;
    let mn = check_len(&sample, "VLSTAR")?;
    let s = sample.require_transition()?;
    let (gammas, cs) = grid.resolve(s)?;
    let design = Design::new(&sample);
    let base = Moments::full(&design);
    if base.syy == 0.0 {
        return Err(Error::InvalidInput("series is identically zero".into()));
    }
    let fit_at = |gamma: f64, c: f64| {
        let g = logistic_weights(s, gamma, c);
        vlstar_ols(&TransitionMoments::new(&design, &base, &g), mn)
    };
    let pairs: Vec<(f64, f64)> = gammas.iter().flat_map(|&g| cs.iter().map(move |&c| (g, c))).collect();
    let evaluated = opts.exec.map(&pairs, |&(gamma, c)| fit_at(gamma, c));
    let profile: Vec<GridPoint> = pairs
        .iter()
        .zip(&evaluated)
        .map(|(&(gamma, c), r)| GridPoint {
            c,
            gamma: Some(gamma),
            objective: r.as_ref().map(|v| v.2),
            note: r
                .is_none()
                .then(|| "stacked regressors [x, g x] are collinear".to_string()),
        })
        .collect();
    let best = argmin_first(profile.iter().map(|p| p.objective)).ok_or_else(|| Error::NoAdmissibleCandidate {
        reason: "every (γ, c) pair gives collinear regressors [x, g x]; the transition weights are \
                 (nearly) constant over the sample"
            .into(),
        profile: profile.clone(),
    })?;
    let (mut gamma, mut c) = pairs[best];
    let (mut p0, mut p1, mut ssq) = evaluated[best].clone().expect("admissible");

    let search = CoordinateSearch::new(&gammas, &cs, s, grid.trim)?;
    let xs: Vec<RealMatrix> = sample.prev().iter().map(vec_col).collect();
    let ys: Vec<RealMatrix> = sample.next().iter().map(vec_col).collect();
    let mut scratch = Vec::new();
    for _ in 0..opts.max_refine {
        if ssq <= NUMERICAL_ZERO * base.syy {
            break;
        }
        let prev = ssq;
        let p: Vec<RealMatrix> = xs.iter().zip(&ys).map(|(x, y)| y - &p0 * x).collect();
        let q: Vec<RealMatrix> = xs.iter().map(|x| &p1 * x).collect();
        let (g_new, c_new) = search.step(gamma, c, &p, &q, s, &mut scratch);
        match fit_at(g_new, c_new) {
            Some((a, b, q)) if q <= prev => {
                (gamma, c, p0, p1, ssq) = (g_new, c_new, a, b, q);
            }
            _ => break,
        }
        if (prev - ssq).abs() / prev.max(1e-300) < opts.rel_tol {
            break;
        }
    }
    search.warn_if_on_envelope(gamma);
    let mut fit = VecModelFit {
        phi0: p0,
        phi1: Some(VecCoefficient(p1)),
        tf: Some(TransitionFunction::Logistic { gamma, c }),
        ssq,
        n_obs: sample.len(),
        n_params: 2 * mn * mn,
        grid_profile: profile,
    };
    fit.ssq = exact_ssq(&sample, &fit);
    Ok(fit)
}
