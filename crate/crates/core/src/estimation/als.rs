//! Alternating least-squares engines on precomputed moments.

use crate::error::{Error, Result};
use crate::model::CoefficientSet;
use crate::tensor::{solve_gram, RealMatrix};

use super::moments::{contract_left, contract_right, Moments, TransitionMoments};
use super::{IlsOptions, NUMERICAL_ZERO};

/// Below this fraction of `Σ‖y‖²` the moment-based SSQ loses too many digits
/// to cancellation and the exact residual sum is used instead.
const EXACT_SSQ_BELOW: f64 = 1e-4;

#[derive(Debug, Clone)]
pub(crate) struct AlsOutcome {
    pub regime1: CoefficientSet,
    pub regime2: Option<CoefficientSet>,
    pub ssq: f64,
    pub trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

fn frob_dot(a: &RealMatrix, b: &RealMatrix) -> f64 {
    a.dot(b)
}

fn iterate(opts: &IlsOptions, syy: f64, mut sweep: impl FnMut() -> Result<f64>) -> Result<(Vec<f64>, bool)> {
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_sweeps {
        let ssq = sweep()?;
        if !ssq.is_finite() {
            return Err(Error::NonFinite("SSQ diverged during alternating updates".into()));
        }
        let prev = trace.last().copied();
        trace.push(ssq);
        if ssq <= NUMERICAL_ZERO * syy {
            converged = true;
            break;
        }
        if let Some(p) = prev {
            if (ssq - p).abs() / p.max(1e-300) < opts.rel_tol {
                converged = true;
                break;
            }
        }
    }
    Ok((trace, converged))
}

/// Single-regime fit `Y ≈ A X B'` from moments, starting from `b0`.
///
/// `exact` returns the residual sum of squares computed from the data; it is
/// consulted only when the fit is nearly exact.
pub(crate) fn als_single(
    mom: &Moments,
    m: usize,
    n: usize,
    b0: RealMatrix,
    opts: &IlsOptions,
    exact: &dyn Fn(&CoefficientSet) -> f64,
) -> Result<AlsOutcome> {
    let mut a = RealMatrix::zeros(m, m);
    let mut b = b0;
    let syy = mom.syy;
    let (trace, converged) = iterate(opts, syy, || {
        let na = contract_right(&mom.syx, &b, m);
        let ga = contract_right(&mom.sxx, &(b.transpose() * &b), m);
        a = solve_gram(&na, &ga, "left factor A")?.0;
        let nb = contract_left(&mom.syx, &a, n);
        let gb = contract_left(&mom.sxx, &(a.transpose() * &a), n);
        b = solve_gram(&nb, &gb, "right factor B")?.0;
        let ssq = syy - 2.0 * frob_dot(&b, &nb) + frob_dot(&(&b * &gb), &b);
        Ok(if ssq < EXACT_SSQ_BELOW * syy {
            exact(&CoefficientSet {
                left: a.clone(),
                right: b.clone(),
            })
        } else {
            ssq
        })
    })?;
    Ok(AlsOutcome {
        regime1: CoefficientSet { left: a, right: b },
        regime2: None,
        ssq: *trace.last().expect("at least one sweep"),
        sweeps: trace.len(),
        trace,
        converged,
    })
}

/// Smooth-transition fit `Y ≈ A X B' + g C X D'` for known weights `g`.
pub(crate) fn als_transition(
    tm: &TransitionMoments,
    m: usize,
    n: usize,
    b0: RealMatrix,
    r2: CoefficientSet,
    opts: &IlsOptions,
    exact: &dyn Fn(&CoefficientSet, &CoefficientSet) -> f64,
) -> Result<AlsOutcome> {
    if !(tm.sum_g2 > 1e-12 * tm.base.count as f64) {
        return Err(Error::Singular(
            "regime-2 Gram matrix is singular: the transition weights g_t are numerically zero over the \
             whole sample (s_t lies far below c), so C and D are not identified"
                .into(),
        ));
    }
    let base = &tm.base;
    let syy = base.syy;
    let mut a = RealMatrix::zeros(m, m);
    let mut b = b0;
    let mut c = r2.left;
    let mut d = r2.right;
    let (trace, converged) = iterate(opts, syy, || {
        let na = contract_right(&base.syx, &b, m) - &c * contract_right(&tm.sxx_g, &(d.transpose() * &b), m);
        let ga = contract_right(&base.sxx, &(b.transpose() * &b), m);
        a = solve_gram(&na, &ga, "left factor A")?.0;

        let nb0 = contract_left(&base.syx, &a, n);
        let gb = contract_left(&base.sxx, &(a.transpose() * &a), n);
        let nb = &nb0 - &d * contract_left(&tm.sxx_g, &(c.transpose() * &a), n);
        b = solve_gram(&nb, &gb, "right factor B")?.0;

        let nc = contract_right(&tm.syx_g, &d, m) - &a * contract_right(&tm.sxx_g, &(b.transpose() * &d), m);
        let gc = contract_right(&tm.sxx_g2, &(d.transpose() * &d), m);
        c = solve_gram(&nc, &gc, "regime-2 left factor C")?.0;

        let nd = contract_left(&tm.syx_g, &c, n) - &b * contract_left(&tm.sxx_g, &(a.transpose() * &c), n);
        let gd = contract_left(&tm.sxx_g2, &(c.transpose() * &c), n);
        d = solve_gram(&nd, &gd, "regime-2 right factor D")?.0;

        let r0 = syy - 2.0 * frob_dot(&b, &nb0) + frob_dot(&(&b * &gb), &b);
        let ssq = r0 - 2.0 * frob_dot(&d, &nd) + frob_dot(&(&d * &gd), &d);
        Ok(if ssq < EXACT_SSQ_BELOW * syy {
            exact(
                &CoefficientSet {
                    left: a.clone(),
                    right: b.clone(),
                },
                &CoefficientSet {
                    left: c.clone(),
                    right: d.clone(),
                },
            )
        } else {
            ssq
        })
    })?;
    Ok(AlsOutcome {
        regime1: CoefficientSet { left: a, right: b },
        regime2: Some(CoefficientSet { left: c, right: d }),
        ssq: *trace.last().expect("at least one sweep"),
        sweeps: trace.len(),
        trace,
        converged,
    })
}
