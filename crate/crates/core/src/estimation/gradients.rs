//! Analytic first derivatives of the least-squares losses.

use crate::error::{Error, Result};
use crate::model::{CoefficientSet, TransitionFunction};
use crate::series::AsLagged;
use crate::tensor::RealMatrix;

/// `∂Q/∂A`, `∂Q/∂B`, `∂Q/∂C`, `∂Q/∂D`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGradients {
    pub a: RealMatrix,
    pub b: RealMatrix,
    pub c: RealMatrix,
    pub d: RealMatrix,
}

impl MatrixGradients {
    fn zeros(m: usize, n: usize) -> Self {
        MatrixGradients {
            a: RealMatrix::zeros(m, m),
            b: RealMatrix::zeros(n, n),
            c: RealMatrix::zeros(m, m),
            d: RealMatrix::zeros(n, n),
        }
    }

    pub fn max_abs(&self) -> f64 {
        [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .map(|g| g.amax())
            .fold(0.0, f64::max)
    }
}

fn check_dims(r1: &CoefficientSet, r2: &CoefficientSet, dims: (usize, usize)) -> Result<()> {
    if r1.dims() != dims || r2.dims() != dims {
        return Err(Error::Dimension(format!(
            "coefficients {:?}/{:?} do not match data {:?}",
            r1.dims(),
            r2.dims(),
            dims
        )));
    }
    Ok(())
}

/// Gradients of `Σ_t ‖Y_t - A X B' - g_t C X D'‖²`:
/// `-2 Σ R B X'`, `-2 Σ R' A X`, `-2 Σ g R D X'`, `-2 Σ g R' C X`.
pub fn mstar_gradients(
    r1: &CoefficientSet,
    r2: &CoefficientSet,
    data: &impl AsLagged,
    tf: &TransitionFunction,
) -> Result<MatrixGradients> {
    let sample = data.as_lagged()?;
    let (m, n) = sample.dims();
    check_dims(r1, r2, (m, n))?;
    let s = sample.require_transition()?;
    let mut out = MatrixGradients::zeros(m, n);
    for ((x, y), &st) in sample.prev().iter().zip(sample.next()).zip(s) {
        let g = tf.eval(st);
        let r = y - r1.apply(x) - r2.apply(x) * g;
        out.a -= &r * &r1.right * x.transpose() * 2.0;
        out.b -= r.transpose() * &r1.left * x * 2.0;
        if g != 0.0 {
            out.c -= &r * &r2.right * x.transpose() * (2.0 * g);
            out.d -= r.transpose() * &r2.left * x * (2.0 * g);
        }
    }
    Ok(out)
}

/// Gradients of the two-regime threshold loss; regime 1 collects
/// `s_t < c`, regime 2 the rest.
pub fn mtar_gradients(
    r1: &CoefficientSet,
    r2: &CoefficientSet,
    data: &impl AsLagged,
    c: f64,
) -> Result<MatrixGradients> {
    let sample = data.as_lagged()?;
    let (m, n) = sample.dims();
    check_dims(r1, r2, (m, n))?;
    let s = sample.require_transition()?;
    let mut out = MatrixGradients::zeros(m, n);
    for ((x, y), &st) in sample.prev().iter().zip(sample.next()).zip(s) {
        if st < c {
            let r = y - r1.apply(x);
            out.a -= &r * &r1.right * x.transpose() * 2.0;
            out.b -= r.transpose() * &r1.left * x * 2.0;
        } else {
            let r = y - r2.apply(x);
            out.c -= &r * &r2.right * x.transpose() * 2.0;
            out.d -= r.transpose() * &r2.left * x * 2.0;
        }
    }
    Ok(out)
}
