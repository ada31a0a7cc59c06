//! Kernels, Gram matrices, regularized inversion, the projection
//! (extrapolation) operator and its gradient, and the pointwise kernel
//! discrepancy.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Kernel families on offer. All are stationary, strictly positive definite
/// and differentiable, with self-value k(x,x) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    InverseMultiquadric,
    Matern32,
}

/// Kernel family plus bandwidth and ridge regularization; parameterizes all
/// Gram-matrix algebra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Length scale h > 0 (scalar, applied to all coordinates).
    pub bandwidth: f64,
    /// Tikhonov ridge lambda >= 0 added to the Gram diagonal when solving.
    pub regularization: f64,
}

pub const DEFAULT_REGULARIZATION: f64 = 1e-8;

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64, regularization: f64) -> Result<Self> {
        let spec = KernelSpec {
            family,
            bandwidth,
            regularization,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(bandwidth: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            bandwidth,
            regularization: DEFAULT_REGULARIZATION,
        }
    }

    /// Gaussian kernel with bandwidth set by the median heuristic on `points`.
    pub fn gaussian_median(points: &PointSet) -> Self {
        let h = median_pairwise_distance(points).max(1e-8);
        KernelSpec::gaussian(h)
    }

    pub fn with_regularization(mut self, lambda: f64) -> Self {
        self.regularization = lambda;
        self
    }

    pub fn with_bandwidth(mut self, h: f64) -> Self {
        self.bandwidth = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::InvalidParam(format!(
                "bandwidth must be positive and finite, got {}",
                self.bandwidth
            )));
        }
        if !(self.regularization >= 0.0) || !self.regularization.is_finite() {
            return Err(Error::InvalidParam(format!(
                "regularization must be non-negative, got {}",
                self.regularization
            )));
        }
        Ok(())
    }

    /// k as a function of the squared distance r2 = ||x-y||^2.
    #[inline]
    pub(crate) fn eval_r2(&self, r2: f64) -> f64 {
        let h2 = self.bandwidth * self.bandwidth;
        match self.family {
            KernelFamily::Gaussian => (-r2 / (2.0 * h2)).exp(),
            KernelFamily::InverseMultiquadric => 1.0 / (1.0 + r2 / h2).sqrt(),
            KernelFamily::Matern32 => {
                let a = 3f64.sqrt() / self.bandwidth;
                let r = r2.sqrt();
                (1.0 + a * r) * (-a * r).exp()
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::dim(x.len(), y.len(), "kernel_eval points"));
        }
        if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("kernel_eval input"));
        }
        Ok(self.eval_r2(sq_dist(x, y)))
    }

    /// Gradient of z -> k(x, z), evaluated at z.
    pub fn grad_wrt_second(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        if x.len() != z.len() {
            return Err(Error::dim(x.len(), z.len(), "kernel gradient points"));
        }
        let h2 = self.bandwidth * self.bandwidth;
        let r2 = sq_dist(x, z);
        // For every family dk/dz_d = s(r2) * (x_d - z_d) with a smooth scalar s.
        let s = match self.family {
            KernelFamily::Gaussian => self.eval_r2(r2) / h2,
            KernelFamily::InverseMultiquadric => (1.0 + r2 / h2).powf(-1.5) / h2,
            KernelFamily::Matern32 => {
                let a = 3f64.sqrt() / self.bandwidth;
                a * a * (-a * r2.sqrt()).exp()
            }
        };
        Ok(x.iter().zip(z.iter()).map(|(xd, zd)| s * (xd - zd)).collect())
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// A set of N points in R^D, one row per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    data: DMatrix<f64>,
}

impl PointSet {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Empty("PointSet"));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("PointSet entries"));
        }
        Ok(PointSet { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("PointSet"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidParam("ragged point rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        PointSet::new(DMatrix::from_row_slice(rows.len(), d, &flat))
    }

    pub fn from_column(values: &[f64]) -> Result<Self> {
        PointSet::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// Matrix of pairwise kernel evaluations k(x^i, y^j).
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

impl GramMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn is_square(&self) -> bool {
        self.entries.nrows() == self.entries.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

/// entries[i][j] = k(x^i, y^j). Row assembly parallelizes when the `parallel`
/// feature is on; the output is identical either way.
pub fn gram(spec: &KernelSpec, x: &PointSet, y: &PointSet) -> Result<GramMatrix> {
    spec.validate()?;
    if x.dim() != y.dim() {
        return Err(Error::dim(x.dim(), y.dim(), "gram point dimensions"));
    }
    let (nx, ny) = (x.len(), y.len());
    let xm = x.matrix();
    let ym = y.matrix();

    let row = |i: usize| -> Vec<f64> {
        let xi: Vec<f64> = xm.row(i).iter().copied().collect();
        (0..ny)
            .map(|j| {
                let r2: f64 = xi
                    .iter()
                    .zip(ym.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                spec.eval_r2(r2)
            })
            .collect()
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = (0..nx).into_par_iter().map(row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..nx).map(row).collect();

    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(GramMatrix {
        entries: DMatrix::from_row_slice(nx, ny, &flat),
    })
}

/// Solves (G + lambda I) C = B in the least-squares sense. With positive
/// lambda a Cholesky factorization applies; a rank-revealing SVD
/// pseudo-inverse (cutoff 1e-10 * sigma_max) is the fallback for singular
/// systems, logging the effective rank.
pub fn regularized_solve(g: &GramMatrix, b: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if !g.is_square() {
        return Err(Error::size(g.nrows(), g.ncols(), "regularized_solve gram"));
    }
    if g.nrows() != b.nrows() {
        return Err(Error::size(g.nrows(), b.nrows(), "regularized_solve rhs"));
    }
    let n = g.nrows();
    let mut a = g.entries.clone();
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    if let Some(chol) = a.clone().cholesky() {
        let mut c = chol.solve(b);
        // Iterative refinement: ill-conditioned Grams otherwise leave training
        // residuals orders of magnitude above machine precision.
        for _ in 0..3 {
            let r = b - &a * &c;
            if r.abs().max() <= 1e-15 * (1.0 + b.abs().max()) {
                break;
            }
            c += chol.solve(&r);
        }
        return Ok(c);
    }
    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = 1e-10 * sigma_max;
    let rank = svd.singular_values.iter().filter(|s| **s > cutoff).count();
    log::warn!(
        "regularized_solve: Cholesky failed, SVD pseudo-inverse fallback (effective rank {rank}/{n})"
    );
    let pinv = svd
        .pseudo_inverse(cutoff)
        .map_err(|_| Error::Singular)?;
    Ok(pinv * b)
}

/// Kernel interpolant/extrapolant: evaluates k(X,z)^T (k(X,X)+lambda I)^{-1} P(X)
/// at each query row of `z`. Exact on the training set as lambda -> 0.
pub fn project(
    spec: &KernelSpec,
    x: &PointSet,
    values: &DMatrix<f64>,
    z: &PointSet,
) -> Result<DMatrix<f64>> {
    let coeffs = projection_coefficients(spec, x, values)?;
    let kzx = gram(spec, z, x)?;
    Ok(kzx.entries() * coeffs)
}

/// (k(X,X)+lambda I)^{-1} P(X); shared by `project` and `gradient`.
pub fn projection_coefficients(
    spec: &KernelSpec,
    x: &PointSet,
    values: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if values.nrows() != x.len() {
        return Err(Error::size(x.len(), values.nrows(), "projection values"));
    }
    let g = gram(spec, x, x)?;
    regularized_solve(&g, values, spec.regularization)
}

/// Analytic gradient of `project` with respect to each query point; one
/// D x M matrix per query row.
pub fn gradient(
    spec: &KernelSpec,
    x: &PointSet,
    values: &DMatrix<f64>,
    z: &PointSet,
) -> Result<Vec<DMatrix<f64>>> {
    let coeffs = projection_coefficients(spec, x, values)?;
    gradient_with_coefficients(spec, x, &coeffs, z)
}

pub fn gradient_with_coefficients(
    spec: &KernelSpec,
    x: &PointSet,
    coeffs: &DMatrix<f64>,
    z: &PointSet,
) -> Result<Vec<DMatrix<f64>>> {
    if x.dim() != z.dim() {
        return Err(Error::dim(x.dim(), z.dim(), "gradient query dimension"));
    }
    let d = x.dim();
    let n = x.len();
    let one = |qi: usize| -> Result<DMatrix<f64>> {
        let zq = z.point(qi);
        // rows: training points, cols: input dims
        let mut dk = DMatrix::zeros(n, d);
        for i in 0..n {
            let gi = spec.grad_wrt_second(&x.point(i), &zq)?;
            for j in 0..d {
                dk[(i, j)] = gi[j];
            }
        }
        Ok(dk.tr_mul(coeffs))
    };

    #[cfg(feature = "parallel")]
    let grads: Result<Vec<DMatrix<f64>>> = (0..z.len()).into_par_iter().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    let grads: Result<Vec<DMatrix<f64>>> = (0..z.len()).map(one).collect();

    grads
}

/// Pointwise kernel discrepancy d_k(x,y) = k(x,x) + k(y,y) - 2 k(x,y).
pub fn discrepancy(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let kxx = spec.eval(x, x)?;
    let kyy = spec.eval(y, y)?;
    let kxy = spec.eval(x, y)?;
    Ok((kxx + kyy - 2.0 * kxy).max(0.0))
}

/// Median of all pairwise distances; 0 for a single point.
pub fn median_pairwise_distance(points: &PointSet) -> f64 {
    let n = points.len();
    if n < 2 {
        return 1.0;
    }
    let rows = points.rows();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(&rows[i], &rows[j]).sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists[dists.len() / 2]
}

/// Default ridge level 1e-8 * trace(G)/N.
pub fn default_regularization(g: &GramMatrix) -> f64 {
    1e-8 * g.entries.trace() / g.nrows() as f64
}

/// Indices of rows that duplicate an earlier row (pairwise distance < 1e-12).
pub fn duplicate_rows(points: &PointSet) -> Vec<usize> {
    let rows = points.rows();
    let mut dups = Vec::new();
    for i in 1..rows.len() {
        if rows[..i].iter().any(|r| sq_dist(r, &rows[i]).sqrt() < 1e-12) {
            dups.push(i);
        }
    }
    dups
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut impl Rng, n: usize, d: usize) -> PointSet {
        let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        PointSet::new(DMatrix::from_row_slice(n, d, &data)).unwrap()
    }

    #[test]
    fn gaussian_self_value_is_one() {
        let spec = KernelSpec::gaussian(1.0);
        let x = [0.3, -0.7];
        assert_relative_eq!(spec.eval(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_closed_form() {
        let spec = KernelSpec::gaussian(1.0);
        let v = spec.eval(&[0.0], &[1.0]).unwrap();
        assert_relative_eq!(v, (-0.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn kernel_symmetry_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for family in [
            KernelFamily::Gaussian,
            KernelFamily::InverseMultiquadric,
            KernelFamily::Matern32,
        ] {
            let spec = KernelSpec::new(family, 0.7, 0.0).unwrap();
            for _ in 0..50 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                assert_relative_eq!(
                    spec.eval(&x, &y).unwrap(),
                    spec.eval(&y, &x).unwrap(),
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn eval_rejects_dim_mismatch_and_nonfinite() {
        let spec = KernelSpec::gaussian(1.0);
        assert!(spec.eval(&[0.0], &[0.0, 1.0]).is_err());
        assert!(spec.eval(&[f64::NAN], &[0.0]).is_err());
    }

    #[test]
    fn gram_single_point() {
        let spec = KernelSpec::gaussian(1.0);
        let x = PointSet::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let g = gram(&spec, &x, &x).unwrap();
        assert_eq!(g.nrows(), 1);
        assert_relative_eq!(g.entries()[(0, 0)], 1.0);
    }

    #[test]
    fn gram_duplicate_rows_all_equal() {
        let spec = KernelSpec::gaussian(1.0);
        let x = PointSet::from_rows(&[vec![0.5], vec![0.5]]).unwrap();
        let g = gram(&spec, &x, &x).unwrap();
        for v in g.entries().iter() {
            assert_relative_eq!(*v, 1.0);
        }
        assert_eq!(duplicate_rows(&x), vec![1]);
    }

    #[test]
    fn gram_matches_entrywise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = KernelSpec::gaussian(0.8);
        let x = random_points(&mut rng, 5, 2);
        let y = random_points(&mut rng, 4, 2);
        let g = gram(&spec, &x, &y).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let expect = spec.eval(&x.point(i), &y.point(j)).unwrap();
                assert_relative_eq!(g.entries()[(i, j)], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gram_square_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = KernelSpec::gaussian(0.5);
        let x = random_points(&mut rng, 20, 3);
        let g = gram(&spec, &x, &x).unwrap();
        let e = g.entries();
        assert!((e - e.transpose()).abs().max() < 1e-12);
        let eig = e.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-8);
    }

    #[test]
    fn solve_identity_system() {
        let spec = KernelSpec::gaussian(1.0);
        // far apart points -> Gram ~ I is not exact; test with literal identity
        let g = GramMatrix {
            entries: DMatrix::identity(3, 3),
        };
        let b = DMatrix::from_row_slice(3, 1, &[1.0, -2.0, 0.5]);
        let c = regularized_solve(&g, &b, 0.0).unwrap();
        assert!((c - &b).abs().max() < 1e-12);
        let _ = spec;
    }

    #[test]
    fn solve_diagonal() {
        let g = GramMatrix {
            entries: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]),
        };
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let c = regularized_solve(&g, &b, 0.0).unwrap();
        assert_relative_eq!(c[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(c[(1, 0)], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn solve_residual_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0f64));
        let spd = &a * a.transpose() + DMatrix::identity(6, 6) * 0.5;
        let g = GramMatrix { entries: spd.clone() };
        let b = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0f64));
        let lambda = 1e-8;
        let c = regularized_solve(&g, &b, lambda).unwrap();
        let resid = (&spd + DMatrix::identity(6, 6) * lambda) * &c - &b;
        assert!(resid.norm() <= 1e-6 * b.norm());
    }

    #[test]
    fn solve_singular_falls_back_to_pinv() {
        // rank-1 matrix, lambda = 0
        let g = GramMatrix {
            entries: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        };
        let b = DMatrix::from_row_slice(2, 1, &[2.0, 2.0]);
        let c = regularized_solve(&g, &b, 0.0).unwrap();
        let resid = g.entries() * &c - &b;
        assert!(resid.norm() < 1e-8);
    }

    #[test]
    fn project_reproduces_training_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_points(&mut rng, 15, 2);
        let spec = KernelSpec::gaussian_median(&x).with_regularization(0.0);
        let values = DMatrix::from_fn(15, 1, |_, _| rng.random_range(-1.0..1.0f64));
        let out = project(&spec, &x, &values, &x).unwrap();
        for i in 0..15 {
            let err = (out[(i, 0)] - values[(i, 0)]).abs();
            assert!(err <= 1e-6 * (1.0 + values[(i, 0)].abs()), "row {i}: {err}");
        }
    }

    #[test]
    fn project_constant_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_points(&mut rng, 60, 2);
        let spec = KernelSpec::gaussian_median(&x).with_regularization(0.0);
        let c = 3.25;
        let values = DMatrix::from_element(60, 1, c);
        // interior queries: constant reproduction degrades at the hull edge
        let data: Vec<f64> = (0..20).map(|_| rng.random_range(-0.5..0.5)).collect();
        let z = PointSet::new(DMatrix::from_row_slice(10, 2, &data)).unwrap();
        let out = project(&spec, &x, &values, &z).unwrap();
        for v in out.iter() {
            assert!((v - c).abs() < 1e-3 * c.abs(), "{v}");
        }
    }

    #[test]
    fn project_quadratic_1d() {
        let xs: Vec<f64> = (0..20).map(|i| -1.0 + 2.0 * i as f64 / 19.0).collect();
        let x = PointSet::from_column(&xs).unwrap();
        let spec = KernelSpec::gaussian_median(&x).with_regularization(0.0);
        let values = DMatrix::from_iterator(20, 1, xs.iter().map(|v| v * v));
        let z = PointSet::from_column(&[0.5]).unwrap();
        let out = project(&spec, &x, &values, &z).unwrap();
        assert!((out[(0, 0)] - 0.25).abs() < 1e-3);
    }

    #[test]
    fn project_linear_in_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_points(&mut rng, 12, 2);
        let spec = KernelSpec::gaussian_median(&x);
        let p = DMatrix::from_fn(12, 1, |_, _| rng.random_range(-1.0..1.0f64));
        let q = DMatrix::from_fn(12, 1, |_, _| rng.random_range(-1.0..1.0f64));
        let z = random_points(&mut rng, 6, 2);
        let (a, b) = (0.3, -1.7);
        let combo = project(&spec, &x, &(&p * a + &q * b), &z).unwrap();
        let sep = project(&spec, &x, &p, &z).unwrap() * a + project(&spec, &x, &q, &z).unwrap() * b;
        assert!((combo - sep).abs().max() < 1e-10);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_points(&mut rng, 60, 2);
        let spec = KernelSpec::gaussian_median(&x).with_regularization(0.0);
        let values = DMatrix::from_element(60, 1, 2.0);
        let data: Vec<f64> = (0..10).map(|_| rng.random_range(-0.5..0.5)).collect();
        let z = PointSet::new(DMatrix::from_row_slice(5, 2, &data)).unwrap();
        let grads = gradient(&spec, &x, &values, &z).unwrap();
        for g in grads {
            assert!(g.abs().max() <= 1e-3);
        }
    }

    #[test]
    fn gradient_quadratic_1d() {
        let xs: Vec<f64> = (0..20).map(|i| -1.0 + 2.0 * i as f64 / 19.0).collect();
        let x = PointSet::from_column(&xs).unwrap();
        let spec = KernelSpec::gaussian_median(&x).with_regularization(0.0);
        let values = DMatrix::from_iterator(20, 1, xs.iter().map(|v| v * v));
        let z = PointSet::from_column(&[0.5]).unwrap();
        let grads = gradient(&spec, &x, &values, &z).unwrap();
        assert!((grads[0][(0, 0)] - 1.0).abs() < 2e-2, "{}", grads[0][(0, 0)]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for family in [
            KernelFamily::Gaussian,
            KernelFamily::InverseMultiquadric,
            KernelFamily::Matern32,
        ] {
            let x = random_points(&mut rng, 20, 2);
            let spec = KernelSpec::new(family, 0.8, 1e-10).unwrap();
            let values = DMatrix::from_fn(20, 1, |_, _| rng.random_range(-1.0..1.0f64));
            let z = random_points(&mut rng, 8, 2);
            let grads = gradient(&spec, &x, &values, &z).unwrap();
            let step = 1e-5;
            for (qi, g) in grads.iter().enumerate() {
                let zq = z.point(qi);
                for d in 0..2 {
                    let mut zp = zq.clone();
                    let mut zm = zq.clone();
                    zp[d] += step;
                    zm[d] -= step;
                    let fp = project(&spec, &x, &values, &PointSet::from_rows(&[zp]).unwrap())
                        .unwrap()[(0, 0)];
                    let fm = project(&spec, &x, &values, &PointSet::from_rows(&[zm]).unwrap())
                        .unwrap()[(0, 0)];
                    let fd = (fp - fm) / (2.0 * step);
                    let scale = fd.abs().max(1e-3);
                    assert!(
                        (g[(d, 0)] - fd).abs() / scale <= 1e-4,
                        "{family:?} q{qi} d{d}: analytic {} vs fd {fd}",
                        g[(d, 0)]
                    );
                }
            }
        }
    }

    #[test]
    fn discrepancy_basics() {
        let spec = KernelSpec::gaussian(1.0);
        assert_relative_eq!(discrepancy(&spec, &[0.4], &[0.4]).unwrap(), 0.0);
        let v = discrepancy(&spec, &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(v, 2.0 - 2.0 * (-0.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn discrepancy_nonnegative_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let spec = KernelSpec::gaussian(0.6);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let d1 = discrepancy(&spec, &x, &y).unwrap();
            let d2 = discrepancy(&spec, &y, &x).unwrap();
            assert!(d1 >= 0.0);
            assert_relative_eq!(d1, d2, epsilon = 1e-14);
        }
    }
}
