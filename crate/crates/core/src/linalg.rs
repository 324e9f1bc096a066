//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Largest condition number accepted for an unregularized solve.
pub(crate) const MAX_CONDITION: f64 = 1e12;

/// Eigenvalues below this fraction of the largest magnitude are treated as zero.
pub(crate) const EIGEN_CLAMP: f64 = 1e-12;

/// Entries smaller than this do not decide an eigenvector's sign.
const SIGN_EPS: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix, ordered by |λ| descending.
pub(crate) struct SortedEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<f64>,
}

/// Eigendecomposes a symmetric matrix with a deterministic order and sign.
///
/// Ties in |λ| keep the solver's original index order. Each eigenvector is
/// flipped so its first entry with magnitude above 1e-12 is nonnegative.
pub(crate) fn sorted_eigen(sym: &DMatrix<f64>) -> SortedEigen {
    let dim = sym.nrows();
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut vectors = DMatrix::zeros(dim, dim);
    let mut values = Vec::with_capacity(dim);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        apply_sign_convention(&mut col);
        vectors.set_column(dst, &col);
        values.push(eig.eigenvalues[src]);
    }
    SortedEigen { values, vectors }
}

pub(crate) fn apply_sign_convention(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

pub(crate) fn satisfies_sign_convention(v: &[f64]) -> bool {
    v.iter().find(|x| x.abs() > SIGN_EPS).is_none_or(|x| *x >= 0.0)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Mean and 1/m covariance of a set of equally sized vectors.
pub(crate) fn mean_and_covariance(samples: &[&DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let dim = samples[0].len();
    let m = samples.len() as f64;
    // shifting by the first sample keeps identical samples exactly at zero spread
    let shift = samples[0];
    let mut offset = DVector::zeros(dim);
    for s in samples {
        offset += *s - shift;
    }
    let mean = shift + offset / m;
    let mut cov = DMatrix::zeros(dim, dim);
    for s in samples {
        let c = *s - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= m;
    symmetrize(&mut cov);
    (mean, cov)
}

/// Solves `(normal + lambda I) x = rhs` for symmetric positive (semi)definite `normal`.
///
/// With `lambda == 0` the system is refused when its condition number exceeds 1e12.
pub(crate) fn ridge_solve(normal: &DMatrix<f64>, rhs: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let dim = normal.nrows();
    if lambda == 0.0 {
        let eig = SymmetricEigen::new(normal.clone());
        let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min.is_nan() || min <= 0.0 || max / min > MAX_CONDITION {
            return Err(Error::IllConditioned(format!(
                "unregularized {dim}x{dim} normal matrix has condition estimate {:.3e}",
                if min > 0.0 { max / min } else { f64::INFINITY }
            )));
        }
    }
    let mut a = normal.clone();
    for i in 0..dim {
        a[(i, i)] += lambda;
    }
    let chol = a.cholesky().ok_or_else(|| {
        Error::IllConditioned(format!(
            "{dim}x{dim} normal matrix is not positive definite (lambda = {lambda:e})"
        ))
    })?;
    Ok(chol.solve(rhs))
}

/// Square-root factor `L` with `L Lᵀ = cov`, clipping negative eigenvalues to zero.
pub(crate) fn psd_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    let mut l = eig.eigenvectors;
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}

/// Draws `count` samples of N(mean, cov), deterministic in `seed`.
pub(crate) fn sample_gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>, seed: u64, count: usize) -> Vec<DVector<f64>> {
    let l = psd_sqrt(cov);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = mean.len();
    (0..count)
        .map(|_| {
            let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            mean + &l * z
        })
        .collect()
}

/// Checks symmetry and positive semidefiniteness, with tolerances scaled by the matrix magnitude.
pub(crate) fn check_psd(m: &DMatrix<f64>, tol: f64) -> std::result::Result<(), String> {
    if !m.is_square() {
        return Err(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err("matrix has non-finite entries".into());
    }
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return Err(format!("matrix is not symmetric at ({i}, {j})"));
            }
        }
    }
    if n > 0 {
        let eig = SymmetricEigen::new(m.clone());
        let min = eig.eigenvalues.min();
        if min < -tol * scale {
            return Err(format!("matrix has negative eigenvalue {min:e}"));
        }
    }
    Ok(())
}

/// Number of eigenvalues above `rel_tol` times the largest magnitude.
pub(crate) fn numerical_rank(values: &[f64], rel_tol: f64) -> usize {
    let max = values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if max == 0.0 {
        return 0;
    }
    values.iter().filter(|v| v.abs() > rel_tol * max).count()
}
