//! Whitening: an affine map giving embeddings zero mean and identity
//! sample covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Axis};

use crate::autodiff::Mat;
use crate::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Whitener {
    pub mean: Array1<f64>,
    /// Symmetric inverse square root of the sample covariance.
    pub transform: Mat,
}

impl Whitener {
    /// Fits on rows of `x` using the `N − 1` sample covariance.
    pub fn fit(x: &Mat) -> Result<Self> {
        let (n, d) = x.dim();
        if n <= d {
            return Err(Error::InvalidInput(format!(
                "whitening needs more samples than dimensions ({n} samples, {d} dimensions)"
            )));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let centered = x - &mean;
        let cov = centered.t().dot(&centered) / (n - 1) as f64;
        let cov = DMatrix::from_fn(d, d, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
        let eig = SymmetricEigen::new(cov);
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min <= RANK_TOLERANCE * max {
            return Err(Error::RankDeficient { min_eigenvalue: min });
        }
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let w = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
        let transform = Mat::from_shape_fn((d, d), |(i, j)| w[(i, j)]);
        Ok(Self { mean, transform })
    }

    pub fn apply(&self, x: &Mat) -> Mat {
        (x - &self.mean).dot(&self.transform)
    }
}

pub fn whitening(x: &Mat) -> Result<Mat> {
    Ok(Whitener::fit(x)?.apply(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sample_cov(y: &Mat) -> Mat {
        let m = y.mean_axis(Axis(0)).unwrap();
        let c = y - &m;
        c.t().dot(&c) / (y.nrows() - 1) as f64
    }

    #[test]
    fn diagonal_covariance_becomes_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Mat::from_shape_fn((400, 2), |(_, j)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if j == 0 { 2.0 * z + 5.0 } else { z - 1.0 }
        });
        let y = whitening(&x).unwrap();
        let c = sample_cov(&y);
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((c[[i, j]] - target).abs() < 1e-8, "{c}");
            }
        }
        assert!(y.mean_axis(Axis(0)).unwrap().iter().all(|m| m.abs() < 1e-10));
    }

    #[test]
    fn rank_deficiency_and_shape_errors() {
        let x = Mat::from_shape_fn((50, 3), |(i, j)| if j == 2 { i as f64 } else { (i * (j + 1)) as f64 });
        assert!(matches!(whitening(&x), Err(Error::RankDeficient { .. })));
        assert!(whitening(&Mat::zeros((3, 3))).is_err());
    }
}
