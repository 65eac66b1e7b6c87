//! Dense matrix primitives shared by every model: vectorization, Kronecker
//! products, spectral radii, matrix-normal sampling and a few solvers.
//!
//! Matrices are `nalgebra::DMatrix<f64>`, stored column-major, so `vec` is a
//! plain copy of the backing buffer.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;

/// Column stacking: `result[i + j*m] = M[i, j]`.
pub fn vec(m: &RealMatrix) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<RealMatrix> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape a vector of length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(RealMatrix::from_column_slice(rows, cols, v))
}

/// Kronecker product: block `(i, j)` of the result is `left[i, j] * right`.
pub fn kron(left: &RealMatrix, right: &RealMatrix) -> RealMatrix {
    left.kronecker(right)
}

pub fn frobenius_norm(m: &RealMatrix) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Squared Frobenius distance between two equally shaped matrices.
pub fn frobenius_dist_sq(a: &RealMatrix, b: &RealMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Largest eigenvalue modulus, from the real Schur form of `m`.
pub fn spectral_radius(m: &RealMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::EigenNonConvergence(m.nrows()))?;
    let eig = schur.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn ensure_finite(m: &RealMatrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} contains NaN or infinite entries")))
    }
}

pub fn is_zero(m: &RealMatrix) -> bool {
    m.iter().all(|&x| x == 0.0)
}

/// Matrix-normal law: `vec(X - mean) ~ N(0, sigma_c ⊗ sigma_r)`.
///
/// An all-zero `sigma_r` or `sigma_c` is accepted and yields the mean exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixNormalSpec {
    #[serde(with = "crate::tensor::rows")]
    pub mean: RealMatrix,
    #[serde(with = "crate::tensor::rows")]
    pub sigma_r: RealMatrix,
    #[serde(with = "crate::tensor::rows")]
    pub sigma_c: RealMatrix,
}

impl MatrixNormalSpec {
    pub fn new(mean: RealMatrix, sigma_r: RealMatrix, sigma_c: RealMatrix) -> Result<Self> {
        let spec = MatrixNormalSpec { mean, sigma_r, sigma_c };
        spec.validate()?;
        Ok(spec)
    }

    /// Zero mean, `scale * I` row covariance and identity column covariance.
    pub fn isotropic(m: usize, n: usize, scale: f64) -> Self {
        MatrixNormalSpec {
            mean: RealMatrix::zeros(m, n),
            sigma_r: RealMatrix::identity(m, m) * scale,
            sigma_c: RealMatrix::identity(n, n),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mean.shape()
    }

    pub fn is_degenerate(&self) -> bool {
        is_zero(&self.sigma_r) || is_zero(&self.sigma_c)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.mean.shape();
        if self.sigma_r.shape() != (m, m) || self.sigma_c.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "matrix-normal covariances must be {m}x{m} and {n}x{n}, got {:?} and {:?}",
                self.sigma_r.shape(),
                self.sigma_c.shape()
            )));
        }
        ensure_finite(&self.mean, "noise mean")?;
        for (name, s) in [("sigma_r", &self.sigma_r), ("sigma_c", &self.sigma_c)] {
            ensure_finite(s, name)?;
            let asym = (s - s.transpose()).amax();
            if asym > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "{name} is not symmetric (max asymmetry {asym:e})"
                )));
            }
        }
        if !self.is_degenerate() {
            self.factors()?;
        }
        Ok(())
    }

    fn factors(&self) -> Result<(RealMatrix, RealMatrix)> {
        let lr = lower_cholesky(&self.sigma_r, "sigma_r")?;
        let lc = lower_cholesky(&self.sigma_c, "sigma_c")?;
        Ok((lr, lc))
    }
}

fn lower_cholesky(s: &RealMatrix, name: &str) -> Result<RealMatrix> {
    Cholesky::new(s.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::Cholesky(format!("{name} is not positive definite")))
}

/// Draws `mean + Lr * Z * Lc'` with `Z` i.i.d. standard normal.
pub fn sample_matrix_normal<R: Rng + ?Sized>(spec: &MatrixNormalSpec, rng: &mut R) -> Result<RealMatrix> {
    let sampler = MatrixNormalSampler::new(spec)?;
    Ok(sampler.sample(rng))
}

/// Pre-factored sampler; avoids refactoring the covariances on every draw.
#[derive(Debug, Clone)]
pub struct MatrixNormalSampler {
    mean: RealMatrix,
    factors: Option<(RealMatrix, RealMatrix)>,
}

impl MatrixNormalSampler {
    pub fn new(spec: &MatrixNormalSpec) -> Result<Self> {
        spec.validate()?;
        let factors = if spec.is_degenerate() {
            None
        } else {
            Some(spec.factors()?)
        };
        Ok(MatrixNormalSampler {
            mean: spec.mean.clone(),
            factors,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RealMatrix {
        let (m, n) = self.mean.shape();
        match &self.factors {
            None => self.mean.clone(),
            Some((lr, lc)) => {
                let z = RealMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                &self.mean + lr * z * lc.transpose()
            }
        }
    }
}

/// Outcome of [`solve_gram`]: whether the ridge fallback had to be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveKind {
    Direct,
    Ridged,
}

/// Solves `X * G = numer` for `X` (that is, `numer * G⁻¹`) with `G`
/// symmetric positive semi-definite.
///
/// A Cholesky solve is attempted first. If it fails, or the smallest pivot is
/// negligible relative to the largest diagonal entry, the system is retried
/// once with `G + λI`, `λ = 1e-10 * tr(G) / dim`. A second failure is an error.
pub fn solve_gram(numer: &RealMatrix, gram: &RealMatrix, what: &str) -> Result<(RealMatrix, SolveKind)> {
    if let Some(x) = try_cholesky_right_solve(numer, gram) {
        return Ok((x, SolveKind::Direct));
    }
    let dim = gram.nrows();
    let lambda = 1e-10 * gram.trace() / dim as f64;
    if lambda > 0.0 && lambda.is_finite() {
        let ridged = gram + RealMatrix::identity(dim, dim) * lambda;
        if let Some(x) = try_cholesky_right_solve(numer, &ridged) {
            log::debug!("{what}: Gram matrix singular, solved with ridge {lambda:e}");
            return Ok((x, SolveKind::Ridged));
        }
    }
    Err(Error::Singular(format!(
        "{what}: Gram matrix is singular (trace {:e})",
        gram.trace()
    )))
}

fn try_cholesky_right_solve(numer: &RealMatrix, gram: &RealMatrix) -> Option<RealMatrix> {
    let chol = Cholesky::new(gram.clone())?;
    if !cholesky_well_posed(&chol, gram, 1e-14) {
        return None;
    }
    // X G = N  <=>  G X' = N'
    let xt = chol.solve(&numer.transpose());
    if xt.iter().all(|v| v.is_finite()) {
        Some(xt.transpose())
    } else {
        None
    }
}

fn cholesky_well_posed(chol: &Cholesky<f64, Dyn>, gram: &RealMatrix, rel: f64) -> bool {
    let max_diag = gram.diagonal().amax();
    if !(max_diag > 0.0) {
        return false;
    }
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    min_pivot > rel * max_diag
}

/// Least-squares coefficients `numer * G⁻¹` without any ridge fallback.
/// Returns `None` when `G` is numerically singular.
pub fn solve_gram_strict(numer: &RealMatrix, gram: &RealMatrix) -> Option<RealMatrix> {
    let chol = Cholesky::new(gram.clone())?;
    if !cholesky_well_posed(&chol, gram, 1e-12) {
        return None;
    }
    let xt = chol.solve(&numer.transpose());
    xt.iter().all(|v| v.is_finite()).then(|| xt.transpose())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_sym_eigenvalue(s: &RealMatrix) -> f64 {
    let sym = (s + s.transpose()) * 0.5;
    nalgebra::SymmetricEigen::new(sym).eigenvalues.min()
}

/// Serde adapter storing a matrix as an array of rows.
pub mod rows {
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use super::RealMatrix;

    pub fn to_rows(m: &RealMatrix) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<RealMatrix, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 {
            return Err("matrix must have at least one row and one column".into());
        }
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("matrix rows have different lengths".into());
        }
        Ok(RealMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &RealMatrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RealMatrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}
