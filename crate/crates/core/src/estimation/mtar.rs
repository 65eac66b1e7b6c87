use crate::error::{Error, Result};
use crate::model::{CoefficientSet, ModelKind, ModelSpec, TransitionFunction, TransitionSource};
use crate::series::{AsLagged, LaggedSample};

use super::als::{als_single, AlsOutcome};
use super::inference::coefficient_inference;
use super::mar::regime_ssq;
use super::moments::{Design, Moments};
use super::{
    argmin_first, fitted_noise, flatness, normalize_identification, FitResult, GridPoint, IlsOptions, ThresholdGrid,
};

/// Threshold loss `Q(c)`: regime 1 collects `s_t < c`, regime 2 the rest.
pub fn mtar_loss(r1: &CoefficientSet, r2: &CoefficientSet, data: &impl AsLagged, c: f64) -> Result<f64> {
    let sample = data.as_lagged()?;
    let s = sample.require_transition()?;
    Ok(sample
        .prev()
        .iter()
        .zip(sample.next())
        .zip(s)
        .map(|((x, y), &st)| {
            let set = if st < c { r1 } else { r2 };
            (y - set.apply(x)).norm_squared()
        })
        .sum())
}

/// Per-regime traces run independently; the pooled trace pads the shorter
/// one with its final value.
pub(crate) fn pooled_trace(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len().max(b.len());
    (0..len)
        .map(|k| a[k.min(a.len() - 1)] + b[k.min(b.len() - 1)])
        .collect()
}

struct Candidate {
    c: f64,
    n1: usize,
    lo: Moments,
    hi: Moments,
}

/// Threshold model fit: for every candidate `c` the two regimes are fitted
/// by alternating least squares and `Q(c)` is the pooled SSQ; the smallest
/// `Q` wins (ties go to the smaller candidate).
pub fn estimate_mtar(data: &impl AsLagged, grid: &ThresholdGrid, opts: &IlsOptions) -> Result<FitResult> {
    opts.validate()?;
    let sample = data.as_lagged()?;
    let (m, n) = sample.dims();
    let s = sample.require_transition()?;
    let cands = grid.candidates(s)?;
    let len = sample.len();
    let design = Design::new(&sample);
    let total_syy = design.yt.norm_squared();
    if total_syy == 0.0 {
        return Err(Error::InvalidInput("series is identically zero".into()));
    }

    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]).then(i.cmp(&j)));

    // Prefix moments (s < c) and suffix moments (s >= c) for every candidate.
    let mn = m * n;
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
    let mut hi_snap = vec![None; cands.len()];
    let mut acc = Moments::zeros(mn);
    let mut k = len;
    for (ci, &c) in cands.iter().enumerate().rev() {
        while k > 0 && s[order[k - 1]] >= c {
            k -= 1;
            acc.add(&design, order[k]);
        }
        hi_snap[ci] = Some(acc.clone());
    }
    let candidates: Vec<Candidate> = cands
        .iter()
        .zip(lo_snap)
        .zip(hi_snap)
        .map(|((&c, lo), hi)| Candidate {
            c,
            n1: lo.count,
            lo,
            hi: hi.expect("filled above"),
        })
        .collect();

    let min_size = m + n + 2;
    let b0 = opts.initial_right(n)?;
    let d0 = opts.initial_regime2(m, n)?.right;
    let fit_regime = |mom: &Moments, idx: &[usize], b: &nalgebra::DMatrix<f64>| -> Result<AlsOutcome> {
        let exact = |set: &CoefficientSet| regime_ssq(&sample, set, idx.iter().copied());
        als_single(mom, m, n, b.clone(), opts, &exact)
    };
    let evaluated: Vec<std::result::Result<(AlsOutcome, AlsOutcome), String>> = opts.exec.map(&candidates, |cand| {
        let n2 = len - cand.n1;
        if cand.n1 < min_size || n2 < min_size {
            return Err(format!("regime sizes {}/{} below the minimum {min_size}", cand.n1, n2));
        }
        let (idx1, idx2) = order.split_at(cand.n1);
        let r1 = fit_regime(&cand.lo, idx1, &b0).map_err(|e| format!("regime 1: {e}"))?;
        let r2 = fit_regime(&cand.hi, idx2, &d0).map_err(|e| format!("regime 2: {e}"))?;
        Ok((r1, r2))
    });

    let profile: Vec<GridPoint> = candidates
        .iter()
        .zip(&evaluated)
        .map(|(cand, r)| match r {
            Ok((a, b)) => GridPoint {
                c: cand.c,
                gamma: None,
                objective: Some(a.ssq + b.ssq),
                note: None,
            },
            Err(e) => GridPoint {
                c: cand.c,
                gamma: None,
                objective: None,
                note: Some(e.clone()),
            },
        })
        .collect();
    let best = argmin_first(profile.iter().map(|p| p.objective)).ok_or_else(|| Error::NoAdmissibleCandidate {
        reason: format!(
            "none of the {} threshold candidates leaves at least {min_size} observations in both regimes \
             with non-singular Gram matrices",
            cands.len()
        ),
        profile: profile.clone(),
    })?;
    let (r1, r2) = evaluated[best].as_ref().expect("admissible candidate");
    let c_hat = candidates[best].c;
    let ssq = r1.ssq + r2.ssq;
    let n_params = 2 * (m * m + n * n);
    let model = ModelSpec {
        kind: ModelKind::Mtar,
        regime1: r1.regime1.clone(),
        regime2: Some(r2.regime1.clone()),
        transition: Some(TransitionFunction::Indicator { c: c_hat }),
        noise: fitted_noise(m, n, ssq, len, n_params - 2),
        source: TransitionSource::Exogenous,
    };
    let fit = normalize_identification(FitResult {
        model,
        ssq,
        sst: total_syy,
        ssq_trace: pooled_trace(&r1.trace, &r2.trace),
        sweeps_used: r1.sweeps.max(r2.sweeps),
        converged: r1.converged && r2.converged,
        flatness: flatness(&profile),
        grid_profile: profile,
        pvalues: None,
        n_obs: len,
        n_params,
    })?;
    let pvalues = coefficient_inference(&fit, sample.as_ref() as &LaggedSample)?;
    Ok(FitResult {
        pvalues: Some(pvalues),
        ..fit
    })
}
