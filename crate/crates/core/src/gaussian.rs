//! Dense multivariate normal used by the ground-truth mixtures and the GMM
//! downstream estimator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, RomeError};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: &[f64], covariance: &DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if covariance.nrows() != m || covariance.ncols() != m {
            return Err(RomeError::Shape(format!(
                "covariance is {}x{}, mean has {m} entries",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| RomeError::Data("covariance is not positive definite".into()))?
            .l();
        let log_det_half: f64 = chol.diagonal().iter().map(|d| d.ln()).sum();
        Ok(Self {
            mean: DVector::from_column_slice(mean),
            chol,
            log_norm: -log_det_half - 0.5 * m as f64 * LN_2PI,
        })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let m = self.dims();
        // forward substitution L y = x - mean
        let mut y = vec![0.0; m];
        for i in 0..m {
            let mut acc = x[i] - self.mean[i];
            for (k, yk) in y.iter().enumerate().take(i) {
                acc -= self.chol[(i, k)] * yk;
            }
            y[i] = acc / self.chol[(i, i)];
        }
        self.log_norm - 0.5 * y.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.dims();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        (0..m)
            .map(|i| self.mean[i] + (0..=i).map(|k| self.chol[(i, k)] * z[k]).sum::<f64>())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standard_normal_at_origin() {
        let g = Gaussian::new(&[0.0, 0.0], &DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(g.log_pdf(&[0.0, 0.0]), -LN_2PI, epsilon = 1e-15);
    }

    #[test]
    fn correlated_matches_closed_form() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let g = Gaussian::new(&[1.0, -1.0], &cov).unwrap();
        let x = [0.3, 0.4];
        let det: f64 = 2.0 - 0.36;
        let (dx, dy) = (x[0] - 1.0, x[1] + 1.0);
        let quad = (1.0 * dx * dx - 2.0 * 0.6 * dx * dy + 2.0 * dy * dy) / det;
        let expected = -0.5 * quad - 0.5 * det.ln() - LN_2PI;
        assert_abs_diff_eq!(g.log_pdf(&x), expected, epsilon = 1e-13);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(Gaussian::new(&[0.0, 0.0], &cov).is_err());
    }
}
