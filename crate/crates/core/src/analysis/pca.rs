//! Principal component analysis of gait descriptors via eigendecomposition
//! of the sample covariance.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// Per-row scores on the top two components.
    pub scores: Vec<[f64; 2]>,
    /// Explained-variance ratios of the two kept components.
    pub explained: [f64; 2],
    /// All explained-variance ratios, non-increasing, summing to 1.
    pub ratios: Vec<f64>,
}

/// Projects N x D descriptor rows onto the top-2 principal components.
/// Columns are mean-centered internally; component signs are canonicalized
/// so the largest-magnitude loading is positive.
pub fn pca_project(rows: &[Vec<f64>]) -> Result<PcaProjection> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::PcaInput(format!(
            "needs at least 3 descriptors, got {n}"
        )));
    }
    let dim = rows[0].len();
    if dim < 2 || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::PcaInput(
            "ragged or too-narrow descriptor matrix".into(),
        ));
    }

    let mut centered = DMatrix::from_fn(n, dim, |i, j| rows[i][j]);
    for j in 0..dim {
        let mean = centered.column(j).sum() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);

    let eigen = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let total: f64 = eigen.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    // rank test relative to the data scale: centering identical rows leaves
    // round-off residuals around (eps * scale)^2, not exact zeros
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let variance_floor = (scale * 1e-12).powi(2) * dim as f64 + 1e-300;
    if total <= variance_floor {
        return Err(Error::PcaInput(
            "rank-0 input: all descriptors are identical".into(),
        ));
    }
    let ratios: Vec<f64> = order
        .iter()
        .map(|&k| eigen.eigenvalues[k].max(0.0) / total)
        .collect();

    let mut components: Vec<DVector<f64>> = Vec::with_capacity(2);
    for &k in order.iter().take(2) {
        let mut v: DVector<f64> = eigen.eigenvectors.column(k).into();
        // sign convention: largest |loading| positive
        let lead = (0..dim)
            .max_by(|&a, &b| {
                v[a].abs()
                    .partial_cmp(&v[b].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        if v[lead] < 0.0 {
            v = -v;
        }
        components.push(v);
    }

    let scores = (0..n)
        .map(|i| {
            let row = centered.row(i);
            [
                row.iter()
                    .zip(components[0].iter())
                    .map(|(a, b)| a * b)
                    .sum(),
                row.iter()
                    .zip(components[1].iter())
                    .map(|(a, b)| a * b)
                    .sum(),
            ]
        })
        .collect();

    Ok(PcaProjection {
        scores,
        explained: [ratios[0], ratios[1]],
        ratios,
    })
}
