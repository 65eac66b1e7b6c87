//! Sufficient statistics for the alternating updates.
//!
//! With `x_t = vec(Y_{t-1})` and `y_t = vec(Y_t)` (index `i + j m`), every
//! normal equation of the bilinear fits is a partial trace of a weighted
//! moment `Σ w_t y_t x_t'` or `Σ w_t x_t x_t'` against a small matrix.

use crate::series::LaggedSample;
use crate::tensor::RealMatrix;

/// Vectorized sample: column `t` of `xt`/`yt` is `vec(Y_{t-1})`/`vec(Y_t)`,
/// and `x` holds the same regressors row-wise.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub xt: RealMatrix,
    pub yt: RealMatrix,
    pub x: RealMatrix,
}

impl Design {
    pub fn new(sample: &LaggedSample) -> Self {
        let (m, n) = sample.dims();
        let mn = m * n;
        let len = sample.len();
        let mut xt = RealMatrix::zeros(mn, len);
        let mut yt = RealMatrix::zeros(mn, len);
        for (t, (p, q)) in sample.prev().iter().zip(sample.next()).enumerate() {
            xt.column_mut(t).copy_from_slice(p.as_slice());
            yt.column_mut(t).copy_from_slice(q.as_slice());
        }
        let x = xt.transpose();
        Design { xt, yt, x }
    }

    pub fn len(&self) -> usize {
        self.xt.ncols()
    }

    /// `x` with row `t` scaled by `w[t]`.
    pub fn scaled_rows(&self, w: &[f64]) -> RealMatrix {
        let mut out = self.x.clone();
        for mut col in out.column_iter_mut() {
            for (v, &wt) in col.iter_mut().zip(w) {
                *v *= wt;
            }
        }
        out
    }
}

/// Unweighted moments of one (sub)sample.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    pub sxx: RealMatrix,
    pub syx: RealMatrix,
    pub syy: f64,
    pub count: usize,
}

impl Moments {
    pub fn zeros(mn: usize) -> Self {
        Moments {
            sxx: RealMatrix::zeros(mn, mn),
            syx: RealMatrix::zeros(mn, mn),
            syy: 0.0,
            count: 0,
        }
    }

    pub fn full(d: &Design) -> Self {
        Moments {
            sxx: &d.xt * &d.x,
            syx: &d.yt * &d.x,
            syy: d.yt.norm_squared(),
            count: d.len(),
        }
    }

    pub fn add(&mut self, d: &Design, t: usize) {
        let x = d.xt.column(t);
        let y = d.yt.column(t);
        self.sxx.ger(1.0, &x, &x, 1.0);
        self.syx.ger(1.0, &y, &x, 1.0);
        self.syy += y.norm_squared();
        self.count += 1;
    }
}

/// Moments for the smooth-transition fit at one `(γ, c)`.
#[derive(Debug, Clone)]
pub(crate) struct TransitionMoments {
    pub base: Moments,
    pub sxx_g: RealMatrix,
    pub syx_g: RealMatrix,
    pub sxx_g2: RealMatrix,
    pub sum_g2: f64,
}

impl TransitionMoments {
    pub fn new(d: &Design, base: &Moments, g: &[f64]) -> Self {
        let xg = d.scaled_rows(g);
        let g2: Vec<f64> = g.iter().map(|v| v * v).collect();
        let xg2 = d.scaled_rows(&g2);
        TransitionMoments {
            base: base.clone(),
            sxx_g: &d.xt * &xg,
            syx_g: &d.yt * &xg,
            sxx_g2: &d.xt * &xg2,
            sum_g2: g2.iter().sum(),
        }
    }
}

/// `R[i, i'] = Σ_{j, j'} W[j, j'] S[i + j m, i' + j' m]`, an `m x m` result.
pub(crate) fn contract_right(s: &RealMatrix, w: &RealMatrix, m: usize) -> RealMatrix {
    let n = w.nrows();
    let mut out = RealMatrix::zeros(m, m);
    for jp in 0..n {
        for j in 0..n {
            let wv = w[(j, jp)];
            if wv != 0.0 {
                out += s.view((j * m, jp * m), (m, m)) * wv;
            }
        }
    }
    out
}

/// `R[j, j'] = Σ_{i, i'} W[i, i'] S[i + j m, i' + j' m]`, an `n x n` result.
pub(crate) fn contract_left(s: &RealMatrix, w: &RealMatrix, n: usize) -> RealMatrix {
    let m = w.nrows();
    RealMatrix::from_fn(n, n, |j, jp| s.view((j * m, jp * m), (m, m)).dot(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> RealMatrix {
        RealMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn contractions_match_direct_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (m, n, t) = (2, 3, 7);
        let prev: Vec<_> = (0..t).map(|_| rand_mat(&mut rng, m, n)).collect();
        let next: Vec<_> = (0..t).map(|_| rand_mat(&mut rng, m, n)).collect();
        let sample = LaggedSample::from_pairs(prev.clone(), next.clone(), None).unwrap();
        let d = Design::new(&sample);
        let mom = Moments::full(&d);
        let b = rand_mat(&mut rng, n, n);
        let a = rand_mat(&mut rng, m, m);

        let direct: RealMatrix = (0..t).map(|k| &next[k] * &b * prev[k].transpose()).sum();
        assert!((contract_right(&mom.syx, &b, m) - direct).amax() < 1e-12);
        let w = b.transpose() * &b;
        let direct: RealMatrix = (0..t).map(|k| &prev[k] * &w * prev[k].transpose()).sum();
        assert!((contract_right(&mom.sxx, &w, m) - direct).amax() < 1e-12);
        let direct: RealMatrix = (0..t).map(|k| next[k].transpose() * &a * &prev[k]).sum();
        assert!((contract_left(&mom.syx, &a, n) - direct).amax() < 1e-12);

        let mut inc = Moments::zeros(m * n);
        for k in 0..t {
            inc.add(&d, k);
        }
        assert!((inc.sxx - &mom.sxx).amax() < 1e-12);
        assert!((inc.syx - &mom.syx).amax() < 1e-12);
        assert!((inc.syy - mom.syy).abs() < 1e-12);
    }

    #[test]
    fn weighted_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (m, n, t) = (2, 2, 5);
        let prev: Vec<_> = (0..t).map(|_| rand_mat(&mut rng, m, n)).collect();
        let next: Vec<_> = (0..t).map(|_| rand_mat(&mut rng, m, n)).collect();
        let g: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..1.0)).collect();
        let sample = LaggedSample::from_pairs(prev.clone(), next.clone(), None).unwrap();
        let d = Design::new(&sample);
        let tm = TransitionMoments::new(&d, &Moments::full(&d), &g);
        let vecm = |a: &RealMatrix| nalgebra::DVector::from_column_slice(a.as_slice());
        let direct: RealMatrix = (0..t).map(|k| vecm(&next[k]) * vecm(&prev[k]).transpose() * g[k]).sum();
        assert!((&tm.syx_g - direct).amax() < 1e-12);
        let direct: RealMatrix = (0..t)
            .map(|k| vecm(&prev[k]) * vecm(&prev[k]).transpose() * (g[k] * g[k]))
            .sum();
        assert!((&tm.sxx_g2 - direct).amax() < 1e-12);
    }
}
