use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureMatrix, Provenance, Result};
use crate::linalg::{dot, symmetric_eigen, Matrix};
use crate::scalar::Real;

/// Principal axes of a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel<T> {
    pub mean: Vec<T>,
    /// `k × n_features`, orthonormal rows.
    pub components: Vec<Vec<T>>,
    /// Sample variance (n − 1 denominator) along each component.
    pub explained_variance: Vec<T>,
    pub explained_variance_ratio: Vec<T>,
}

/// Fit PCA keeping the fewest components whose cumulative explained
/// variance reaches `variance_target`.
///
/// Solves whichever of the covariance (`p × p`) or Gram (`n × n`) eigenproblem
/// is smaller.
pub fn pca_fit<T: Real>(x: &FeatureMatrix<T>, variance_target: f64) -> Result<PcaModel<T>> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if n < 2 {
        return Err(FeatureError::DegenerateData(format!("{n} rows; PCA needs at least 2")));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(FeatureError::Invalid(format!("variance target {variance_target} outside (0, 1]")));
    }
    let nf = T::of_usize(n);
    let mut mean = vec![T::zero(); p];
    for row in x.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut centered = Matrix::zeros(n, p);
    for (i, row) in x.rows().enumerate() {
        for (j, (&v, &m)) in row.iter().zip(&mean).enumerate() {
            centered[(i, j)] = v - m;
        }
    }
    let denom = T::of_usize(n - 1);

    let (eigvals, axes): (Vec<T>, Vec<Vec<T>>) = if p <= n {
        let mut cov = centered.transpose().matmul(&centered);
        cov.as_slice().to_vec().iter().enumerate().for_each(|(i, &v)| cov[(i / p, i % p)] = v / denom);
        let (vals, vecs) = symmetric_eigen(&cov);
        (vals, (0..p).map(|i| vecs.row(i).to_vec()).collect())
    } else {
        let mut gram = centered.matmul(&centered.transpose());
        gram.as_slice().to_vec().iter().enumerate().for_each(|(i, &v)| gram[(i / n, i % n)] = v / denom);
        let (vals, vecs) = symmetric_eigen(&gram);
        // right singular vectors: X^T u / ||X^T u||
        let xt = centered.transpose();
        let axes = (0..n)
            .map(|i| {
                let u = vecs.row(i);
                let mut axis: Vec<T> = (0..p).map(|j| dot(xt.row(j), u)).collect();
                let norm = dot(&axis, &axis).sqrt();
                if norm > T::zero() {
                    axis.iter_mut().for_each(|a| *a /= norm);
                }
                axis
            })
            .collect();
        (vals, axes)
    };

    let top = eigvals.first().copied().unwrap_or_else(T::zero);
    if !(top > T::zero()) {
        return Err(FeatureError::DegenerateData("zero total variance".into()));
    }
    // eigenvalues at rounding level are the null space, not signal
    let floor = top * T::epsilon() * T::of_usize(n.max(p)) * T::lit(10.0);
    let kept: Vec<usize> = (0..eigvals.len()).filter(|&i| eigvals[i] > floor).collect();
    let total: T = kept.iter().map(|&i| eigvals[i]).sum();
    let target = T::lit(variance_target) - T::lit(1e-12);
    let mut cumulative = T::zero();
    let mut k = 0;
    for &i in &kept {
        cumulative += eigvals[i] / total;
        k += 1;
        if cumulative >= target {
            break;
        }
    }

    let mut components = Vec::with_capacity(k);
    for &i in &kept[..k] {
        let mut axis = axes[i].clone();
        // sign convention: largest-magnitude loading positive
        let pivot = axis.iter().fold(T::zero(), |b, &v| if v.abs() > b.abs() { v } else { b });
        if pivot < T::zero() {
            axis.iter_mut().for_each(|a| *a = -*a);
        }
        components.push(axis);
    }
    let explained_variance: Vec<T> = kept[..k].iter().map(|&i| eigvals[i]).collect();
    let explained_variance_ratio = explained_variance.iter().map(|&v| v / total).collect();
    Ok(PcaModel { mean, components, explained_variance, explained_variance_ratio })
}

impl<T: Real> PcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &[T]) -> Vec<T> {
        let centered: Vec<T> = row.iter().zip(&self.mean).map(|(&v, &m)| v - m).collect();
        self.components.iter().map(|c| dot(c, &centered)).collect()
    }

    pub fn transform(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        if x.n_cols() != self.n_features() {
            return Err(FeatureError::DimensionMismatch { expected: self.n_features(), actual: x.n_cols() });
        }
        let values = x.rows().flat_map(|r| self.transform_row(r)).collect();
        let provenance = (0..self.n_components()).map(|index| Provenance::Component { index }).collect();
        Ok(x.with_values(values, provenance))
    }

    pub fn inverse_transform_row(&self, scores: &[T]) -> Vec<T> {
        let mut out = self.mean.clone();
        for (c, &s) in self.components.iter().zip(scores) {
            for (o, &v) in out.iter_mut().zip(c) {
                *o += s * v;
            }
        }
        out
    }
}
