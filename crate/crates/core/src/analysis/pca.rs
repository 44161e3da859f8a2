use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// k x dim, one unit eigenvector per row, eigenvalues descending
    pub components: Array2<f64>,
    pub explained_variance: Array1<f64>,
    pub explained_variance_ratio: Array1<f64>,
    /// rows x k
    pub projected: Array2<f64>,
}

impl Pca {
    /// Maps projected coordinates back to the input space.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.projected.dot(&self.components) + &self.mean
    }
}

/// Principal components from the eigendecomposition of the sample covariance.
/// Each component is signed so that its largest-magnitude entry is positive.
pub fn pca(x: &Array2<f64>, k: usize) -> Result<Pca> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 rows, got {n}")));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("PCA target dimension {k} outside 1..={d}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("PCA input holds non-finite values".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut components = Array2::zeros((k, d));
    let mut variance = Array1::zeros(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).expect("d > 0");
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[row, j]] = sign * v[j];
        }
        variance[row] = eig.eigenvalues[idx].max(0.0);
    }
    let ratio = if total > 0.0 { &variance / total } else { Array1::zeros(k) };
    let projected = centered.dot(&components.t());
    Ok(Pca {
        mean,
        components,
        explained_variance: variance,
        explained_variance_ratio: ratio,
        projected,
    })
}
