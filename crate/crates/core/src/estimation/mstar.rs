use crate::error::{Error, Result};
use crate::model::{CoefficientSet, ModelKind, ModelSpec, TransitionFunction, TransitionSource};
use crate::series::{AsLagged, LaggedSample};
use crate::tensor::RealMatrix;

use super::als::{als_transition, AlsOutcome};
use super::grid::trim_window;
use super::inference::coefficient_inference;
use super::moments::{Design, Moments, TransitionMoments};
use super::{
    argmin_first, fitted_noise, flatness, normalize_identification, FitResult, GridPoint, IlsOptions,
    SlopeThresholdGrid, NUMERICAL_ZERO,
};

/// `Σ_t ‖Y_t - A Y_{t-1} B' - g_t C Y_{t-1} D'‖²`.
pub fn mstar_loss(
    r1: &CoefficientSet,
    r2: &CoefficientSet,
    data: &impl AsLagged,
    tf: &TransitionFunction,
) -> Result<f64> {
    let sample = data.as_lagged()?;
    let s = sample.require_transition()?;
    Ok(transition_ssq(&sample, r1, r2, |t| tf.eval(s[t])))
}

fn transition_ssq(sample: &LaggedSample, r1: &CoefficientSet, r2: &CoefficientSet, g: impl Fn(usize) -> f64) -> f64 {
    sample
        .prev()
        .iter()
        .zip(sample.next())
        .enumerate()
        .map(|(t, (x, y))| (y - r1.apply(x) - r2.apply(x) * g(t)).norm_squared())
        .sum()
}

/// Golden-section minimization of `f` on `[lo, hi]` down to width `tol`.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `Σ_t ‖P_t - g_t Q_t‖²` with `g_t` logistic in `(γ, c)`: the SSQ of a
/// smooth-transition fit as a function of the transition parameters alone.
pub(crate) fn transition_objective(p: &[RealMatrix], q: &[RealMatrix], s: &[f64], gamma: f64, c: f64) -> f64 {
    let tf = TransitionFunction::Logistic { gamma, c };
    p.iter()
        .zip(q)
        .zip(s)
        .map(|((pt, qt), &st)| {
            let g = tf.eval(st);
            pt.iter().zip(qt.iter()).map(|(a, b)| (a - g * b).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Coordinate golden-section search over `(γ, c)`: `c` within one grid
/// spacing, then `γ` within one (logarithmic) grid spacing, both clipped to
/// the grid envelope. Steps are kept only when they lower the objective.
pub(crate) struct CoordinateSearch {
    c_env: (f64, f64),
    log_env: (f64, f64),
    dc: f64,
    log_dg: f64,
}

impl CoordinateSearch {
    pub fn new(gammas: &[f64], cs: &[f64], s: &[f64], trim: f64) -> Result<Self> {
        let (t_lo, t_hi) = trim_window(s, trim)?;
        let c_env = (cs[0].min(t_lo), cs[cs.len() - 1].max(t_hi));
        let g_env = (gammas[0], gammas[gammas.len() - 1]);
        let dc = if cs.len() > 1 {
            (cs[cs.len() - 1] - cs[0]) / (cs.len() - 1) as f64
        } else {
            0.1 * (c_env.1 - c_env.0).max(1e-3)
        };
        let log_dg = if gammas.len() > 1 {
            (g_env.1 / g_env.0).ln() / (gammas.len() - 1) as f64
        } else {
            std::f64::consts::LN_2
        };
        Ok(CoordinateSearch {
            c_env,
            log_env: (g_env.0.ln(), g_env.1.ln()),
            dc,
            log_dg,
        })
    }

    pub fn step(
        &self,
        gamma: f64,
        c: f64,
        p: &[RealMatrix],
        q: &[RealMatrix],
        s: &[f64],
        trace: &mut Vec<f64>,
    ) -> (f64, f64) {
        let (mut gamma, mut c) = (gamma, c);
        let mut current = transition_objective(p, q, s, gamma, c);
        let (lo, hi) = ((c - self.dc).max(self.c_env.0), (c + self.dc).min(self.c_env.1));
        if hi > lo {
            let tol = 1e-9 * self.dc.min(1.0);
            let (c_new, f_new) = golden_min(|v| transition_objective(p, q, s, gamma, v), lo, hi, tol);
            if f_new < current {
                c = c_new;
                current = f_new;
                trace.push(f_new);
            }
        }
        let lg = gamma.ln();
        let (lo, hi) = (
            (lg - self.log_dg).max(self.log_env.0),
            (lg + self.log_dg).min(self.log_env.1),
        );
        if hi > lo {
            let (lg_new, f_new) = golden_min(|v| transition_objective(p, q, s, v.exp(), c), lo, hi, 1e-9);
            if f_new < current {
                gamma = lg_new.exp();
                trace.push(f_new);
            }
        }
        (gamma, c)
    }

    pub fn warn_if_on_envelope(&self, gamma: f64) {
        let lg = gamma.ln();
        if lg <= self.log_env.0 + 1e-9 || lg >= self.log_env.1 - 1e-9 {
            log::warn!(
                "slope estimate {gamma} sits on the grid envelope [{}, {}]",
                self.log_env.0.exp(),
                self.log_env.1.exp()
            );
        }
    }
}

pub(crate) fn logistic_weights(s: &[f64], gamma: f64, c: f64) -> Vec<f64> {
    let tf = TransitionFunction::Logistic { gamma, c };
    s.iter().map(|&v| tf.eval(v)).collect()
}

struct Context<'a> {
    sample: &'a LaggedSample,
    design: Design,
    base: Moments,
    s: &'a [f64],
    m: usize,
    n: usize,
}

impl Context<'_> {
    fn fit_at(&self, gamma: f64, c: f64, b0: RealMatrix, r2: CoefficientSet, opts: &IlsOptions) -> Result<AlsOutcome> {
        let g = logistic_weights(self.s, gamma, c);
        let tm = TransitionMoments::new(&self.design, &self.base, &g);
        let exact = |a: &CoefficientSet, b: &CoefficientSet| transition_ssq(self.sample, a, b, |t| g[t]);
        als_transition(&tm, self.m, self.n, b0, r2, opts, &exact)
    }
}

/// Smooth-transition fit.
///
/// Phase 1 evaluates every `(γ, c)` pair of the grid with a conditional
/// alternating fit. Phase 2 starts from the best pair and alternates a
/// warm-started matrix fit with coordinate golden-section steps on `c` and
/// then `γ` (each within one grid spacing of the current value, clipped to
/// the grid envelope); a step is kept only if it lowers the SSQ.
pub fn estimate_mstar(data: &impl AsLagged, grid: &SlopeThresholdGrid, opts: &IlsOptions) -> Result<FitResult> {
    opts.validate()?;
    let sample = data.as_lagged()?;
    let (m, n) = sample.dims();
    let s = sample.require_transition()?;
    let (gammas, cs) = grid.resolve(s)?;
    let design = Design::new(&sample);
    let base = Moments::full(&design);
    if base.syy == 0.0 || base.sxx.amax() == 0.0 {
        return Err(Error::InvalidInput(
            "series is identically zero; coefficients are not identified".into(),
        ));
    }
    let ctx = Context {
        sample: &sample,
        design,
        base,
        s,
        m,
        n,
    };
    let sst = ctx.base.syy;
    let b0 = opts.initial_right(n)?;
    let r20 = opts.initial_regime2(m, n)?;

    let pairs: Vec<(f64, f64)> = gammas.iter().flat_map(|&g| cs.iter().map(move |&c| (g, c))).collect();
    let evaluated: Vec<Result<AlsOutcome>> = opts.exec.map(&pairs, |&(gamma, c)| {
        ctx.fit_at(gamma, c, b0.clone(), r20.clone(), opts)
    });
    let profile: Vec<GridPoint> = pairs
        .iter()
        .zip(&evaluated)
        .map(|(&(gamma, c), r)| GridPoint {
            c,
            gamma: Some(gamma),
            objective: r.as_ref().ok().map(|o| o.ssq),
            note: r.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    let best = match argmin_first(profile.iter().map(|p| p.objective)) {
        Some(b) => b,
        None => {
            let first_err = evaluated.into_iter().find_map(|r| r.err());
            let reason = match first_err {
                Some(e) => format!("every (γ, c) pair failed; first failure: {e}"),
                None => "empty grid".into(),
            };
            return Err(Error::NoAdmissibleCandidate { reason, profile });
        }
    };
    let (mut gamma, mut c) = pairs[best];
    let mut fit = evaluated.into_iter().nth(best).expect("index in range")?;
    let mut trace = fit.trace.clone();
    let mut sweeps = fit.sweeps;

    // Phase 2.
    let search = CoordinateSearch::new(&gammas, &cs, s, grid.trim)?;
    let mut converged = false;
    let mut ssq = fit.ssq;
    for _ in 0..opts.max_refine {
        if ssq <= NUMERICAL_ZERO * sst {
            converged = true;
            break;
        }
        let prev = ssq;
        let r1 = fit.regime1.clone();
        let r2 = fit.regime2.clone().expect("two-regime fit");
        let p: Vec<RealMatrix> = sample
            .prev()
            .iter()
            .zip(sample.next())
            .map(|(x, y)| y - r1.apply(x))
            .collect();
        let q: Vec<RealMatrix> = sample.prev().iter().map(|x| r2.apply(x)).collect();
        (gamma, c) = search.step(gamma, c, &p, &q, s, &mut trace);
        fit = ctx.fit_at(gamma, c, r1.right.clone(), r2, opts)?;
        trace.extend_from_slice(&fit.trace);
        sweeps += fit.sweeps;
        ssq = fit.ssq;
        if (prev - ssq).abs() / prev.max(1e-300) < opts.rel_tol {
            converged = true;
            break;
        }
    }
    search.warn_if_on_envelope(gamma);

    let n_params = 2 * (m * m + n * n);
    let model = ModelSpec {
        kind: ModelKind::Mstar,
        regime1: fit.regime1,
        regime2: fit.regime2,
        transition: Some(TransitionFunction::Logistic { gamma, c }),
        noise: fitted_noise(m, n, ssq, sample.len(), n_params - 2),
        source: TransitionSource::Exogenous,
    };
    let fit = normalize_identification(FitResult {
        model,
        ssq,
        sst,
        ssq_trace: trace,
        sweeps_used: sweeps,
        converged,
        flatness: flatness(&profile),
        grid_profile: profile,
        pvalues: None,
        n_obs: sample.len(),
        n_params,
    })?;
    let pvalues = coefficient_inference(&fit, sample.as_ref() as &LaggedSample)?;
    Ok(FitResult {
        pvalues: Some(pvalues),
        ..fit
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_noise_free_pairs, SimOptions};
    use crate::tensor::MatrixNormalSpec;

    fn mstar_model() -> ModelSpec {
        ModelSpec::mstar(
            CoefficientSet::scaled_identity(2, 3, 0.2, 0.2),
            CoefficientSet::scaled_identity(2, 3, 0.75, 0.75),
            10.0,
            0.65,
            MatrixNormalSpec::isotropic(2, 3, 1.0),
            TransitionSource::NormalizedTrend,
        )
        .unwrap()
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, f) = golden_min(|v| (v - 0.3).powi(2), 0.0, 1.0, 1e-9);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(f < 1e-16);
    }

    #[test]
    fn loss_at_truth_is_zero_on_noise_free_pairs() {
        let model = mstar_model();
        let pairs = simulate_noise_free_pairs(&model, 200, &SimOptions::seeded(1)).unwrap();
        let tf = model.transition.unwrap();
        let l = mstar_loss(&model.regime1, model.regime2.as_ref().unwrap(), &pairs, &tf).unwrap();
        assert!(l < 1e-25);
        let zero = CoefficientSet::zeros(2, 3);
        let l0 = mstar_loss(&zero, &zero, &pairs, &tf).unwrap();
        assert!((l0 - pairs.response_sum_of_squares()).abs() < 1e-10 * l0);
    }

    #[test]
    fn unidentified_second_regime_is_reported() {
        let model = mstar_model();
        let pairs = simulate_noise_free_pairs(&model, 200, &SimOptions::seeded(2)).unwrap();
        let grid = SlopeThresholdGrid::with_values(vec![50.0], vec![100.0]);
        let err = estimate_mstar(&pairs, &grid, &IlsOptions::default()).unwrap_err();
        match err {
            Error::NoAdmissibleCandidate { reason, .. } => assert!(reason.contains("not identified"), "{reason}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
