use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("need at least 3 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("vectors must have at least 2 dimensions, got {0}")]
    TooFewDimensions(usize),
    #[error("vector {index} has {got} dimensions, expected {expected}")]
    Ragged { index: usize, expected: usize, got: usize },
    #[error("vector {0} has a non-finite component")]
    NonFinite(usize),
}

/// Result of projecting onto the top two principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub coords: Vec<[f64; 2]>,
    pub mean: Vec<f64>,
    /// Unit principal directions; a direction is all zeros when the data has
    /// no variance left for it.
    pub components: [Vec<f64>; 2],
    /// Sample variance (divided by n - 1) along each direction.
    pub variances: [f64; 2],
    /// Set when the centered data has rank below 2.
    pub degenerate: bool,
}

/// Mean-centers `vectors` and projects them onto the two leading
/// eigenvectors of the sample covariance. Each direction's sign makes its
/// largest-magnitude loading positive.
pub fn pca_project(vectors: &[Vec<f64>]) -> Result<PcaProjection, PcaError> {
    let n = vectors.len();
    if n < 3 {
        return Err(PcaError::TooFewVectors(n));
    }
    let d = vectors[0].len();
    if d < 2 {
        return Err(PcaError::TooFewDimensions(d));
    }
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != d {
            return Err(PcaError::Ragged {
                index,
                expected: d,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(PcaError::NonFinite(index));
        }
    }

    let data = DMatrix::from_fn(n, d, |i, j| vectors[i][j]);
    let mean: DVector<f64> = data.row_mean().transpose();
    let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
    let covariance = centered.transpose() * &centered / (n as f64 - 1.0);

    let eigen = SymmetricEigen::new(covariance.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let scale = covariance.trace().abs().max(f64::MIN_POSITIVE);
    let tolerance = 1e-12 * scale;
    let mut components: [Vec<f64>; 2] = [vec![0.0; d], vec![0.0; d]];
    let mut variances = [0.0; 2];
    let mut degenerate = false;
    for (k, &idx) in order.iter().take(2).enumerate() {
        let value = eigen.eigenvalues[idx];
        if value <= tolerance {
            degenerate = true;
            continue;
        }
        let mut direction: Vec<f64> = eigen.eigenvectors.column(idx).iter().copied().collect();
        let pivot = direction
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > direction[best].abs() { i } else { best });
        if direction[pivot] < 0.0 {
            direction.iter_mut().for_each(|x| *x = -*x);
        }
        components[k] = direction;
        variances[k] = value;
    }

    let coords = (0..n)
        .map(|i| {
            let row = centered.row(i);
            let project = |c: &[f64]| row.iter().zip(c).map(|(x, w)| x * w).sum::<f64>();
            [project(&components[0]), project(&components[1])]
        })
        .collect();

    Ok(PcaProjection {
        coords,
        mean: mean.iter().copied().collect(),
        components,
        variances,
        degenerate,
    })
}

/// Sum of squared distances between each centered vector and its
/// reconstruction from the two projected coordinates.
pub fn reconstruction_error(vectors: &[Vec<f64>], projection: &PcaProjection) -> f64 {
    vectors
        .iter()
        .zip(&projection.coords)
        .map(|(v, c)| {
            v.iter()
                .enumerate()
                .map(|(j, x)| {
                    let centered = x - projection.mean[j];
                    let rebuilt = c[0] * projection.components[0][j] + c[1] * projection.components[1][j];
                    (centered - rebuilt).powi(2)
                })
                .sum::<f64>()
        })
        .sum()
}
