//! Sandwich covariance estimators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VcovKind {
    /// Heteroskedasticity-robust, one observation per cluster.
    Hc0,
    /// Cluster-summed scores.
    Cluster,
}

/// `bread * (sum_g s_g s_g') * bread`, where `s_g` sums the rows of `scores`
/// (n x k) within cluster `g`. No small-sample factor is applied.
pub fn cluster_robust_vcov(bread: &DMatrix<f64>, scores: &DMatrix<f64>, clusters: &[usize]) -> Result<DMatrix<f64>> {
    if clusters.len() != scores.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} cluster ids for {} score rows",
            clusters.len(),
            scores.nrows()
        )));
    }
    let g = clusters.iter().max().map_or(0, |m| m + 1);
    let k = scores.ncols();
    let mut sums = DMatrix::<f64>::zeros(g, k);
    for (i, &c) in clusters.iter().enumerate() {
        for j in 0..k {
            sums[(c, j)] += scores[(i, j)];
        }
    }
    let used = {
        let mut seen = vec![false; g];
        clusters.iter().for_each(|&c| seen[c] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if used < 2 {
        return Err(Error::TooFewClusters(used));
    }
    let meat = sums.tr_mul(&sums);
    Ok(symmetrize(bread * meat * bread))
}

/// Heteroskedasticity-robust (HC0) sandwich.
pub fn hc0_vcov(bread: &DMatrix<f64>, scores: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if scores.nrows() < 2 {
        return Err(Error::TooFewClusters(scores.nrows()));
    }
    let meat = scores.tr_mul(scores);
    Ok(symmetrize(bread * meat * bread))
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive definite matrix.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| symmetrize(c.inverse()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_clusters_equal_hc0_exactly() {
        let bread = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let scores = DMatrix::from_row_slice(4, 2, &[0.1, -0.4, 0.7, 0.2, -0.3, 0.5, 0.05, -0.9]);
        let a = cluster_robust_vcov(&bread, &scores, &[3, 0, 2, 1]).unwrap();
        let b = hc0_vcov(&bread, &scores).unwrap();
        assert!((a - b).abs().max() < 1e-15);
    }

    #[test]
    fn one_cluster_is_an_error() {
        let bread = DMatrix::identity(1, 1);
        let scores = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            cluster_robust_vcov(&bread, &scores, &[0, 0, 0]),
            Err(Error::TooFewClusters(1))
        ));
    }

    #[test]
    fn cluster_meat_sums_scores_first() {
        let bread = DMatrix::identity(1, 1);
        let scores = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, -1.0]);
        let v = cluster_robust_vcov(&bread, &scores, &[0, 0, 1]).unwrap();
        assert_eq!(v[(0, 0)], 9.0 + 1.0);
    }
}
