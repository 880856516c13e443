//! Principal component analysis through a cyclic Jacobi eigensolver.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Off-diagonal Frobenius norm, relative to the full norm, at which Jacobi stops.
pub const JACOBI_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues (descending) and matching unit eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Each eigenvector's largest-magnitude entry is made positive.
pub fn symmetric_eigen(matrix: ArrayView2<'_, f64>) -> Result<SymmetricEigen> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::Shape(format!("eigensolver needs a square matrix, got {n}x{}", matrix.ncols())));
    }
    let mut a = matrix.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let full_norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= JACOBI_TOLERANCE * full_norm.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    if !a.iter().all(|x| x.is_finite()) {
        return Err(Error::Data("eigendecomposition produced non-finite values".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = v.select(Axis(1), &order);
    for mut col in vectors.columns_mut() {
        let mut pivot = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let mut sum = 0.0;
    for ((i, j), x) in a.indexed_iter() {
        if i != j {
            sum += x * x;
        }
    }
    sum.sqrt()
}

/// Applies the rotation zeroing `a[p,q]`: A <- J^T A J, V <- V J.
fn rotate(a: &mut Array2<f64>, v: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    for k in 0..n {
        let akp = a[[k, p]];
        let akq = a[[k, q]];
        a[[k, p]] = c * akp - s * akq;
        a[[k, q]] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[[p, k]];
        let aqk = a[[q, k]];
        a[[p, k]] = c * apk - s * aqk;
        a[[q, k]] = s * apk + c * aqk;
    }
    a[[p, q]] = 0.0;
    a[[q, p]] = 0.0;
    for k in 0..n {
        let vkp = v[[k, p]];
        let vkq = v[[k, q]];
        v[[k, p]] = c * vkp - s * vkq;
        v[[k, q]] = s * vkp + c * vkq;
    }
}

/// Population covariance of the rows of `data` (N denominator).
pub fn covariance(data: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let n = data.nrows().max(1) as f64;
    let mean = data.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(data.ncols()));
    let centered = &data - &mean;
    let cov = centered.t().dot(&centered) / n;
    (mean, cov)
}

/// Fitted projection onto the leading principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// Column means subtracted before projection.
    pub mean: Array1<f64>,
    /// `d_in x d_out`, orthonormal columns.
    pub components: Array2<f64>,
    /// Covariance eigenvalues for all `d_in` directions, descending, clamped at 0.
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    pub fn fit(data: ArrayView2<'_, f64>, target_dims: usize) -> Result<Self> {
        let d_in = data.ncols();
        if target_dims == 0 || target_dims > d_in {
            return Err(Error::Config(format!(
                "cannot keep {target_dims} components of {d_in} features"
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::Data("PCA needs at least one row".into()));
        }
        let (mean, cov) = covariance(data);
        let eig = symmetric_eigen(cov.view())?;
        let components = eig.vectors.slice(ndarray::s![.., ..target_dims]).to_owned();
        let eigenvalues = eig.values.iter().map(|&l| l.max(0.0)).collect();
        Ok(Self {
            mean,
            components,
            eigenvalues,
        })
    }

    pub fn d_in(&self) -> usize {
        self.components.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.components.ncols()
    }

    /// Ratios for every one of the `d_in` directions; uniform when total variance is 0.
    pub fn full_explained_variance_ratios(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            let n = self.eigenvalues.len() as f64;
            return vec![1.0 / n; self.eigenvalues.len()];
        }
        self.eigenvalues.iter().map(|l| l / total).collect()
    }

    /// Ratios of the kept components.
    pub fn explained_variance_ratios(&self) -> Vec<f64> {
        let mut r = self.full_explained_variance_ratios();
        r.truncate(self.d_out());
        r
    }

    pub fn cumulative_explained_variance(&self) -> f64 {
        self.explained_variance_ratios().iter().sum()
    }

    pub fn project(&self, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if data.ncols() != self.d_in() {
            return Err(Error::Shape(format!(
                "PCA expects {} columns, got {}",
                self.d_in(),
                data.ncols()
            )));
        }
        Ok((&data - &self.mean).dot(&self.components))
    }
}
