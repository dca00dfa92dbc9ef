//! Downstream density estimators fitted on whitened cluster samples.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, RomeError};
use crate::gaussian::Gaussian;

/// Silverman's rule for a Gaussian kernel's standard deviation:
/// `((m + 2) / 4 * n)^(-1 / (m + 4))`, with `n = 1` for the noise cluster.
pub fn silverman_bandwidth(m: usize, n_c: usize, is_noise: bool) -> f64 {
    let n = if is_noise { 1.0 } else { n_c as f64 };
    let m = m as f64;
    ((m + 2.0) / 4.0 * n).powf(-1.0 / (m + 4.0))
}

/// Volume of the unit ball in `m` dimensions, `pi^(m/2) / Gamma(m/2 + 1)`.
pub fn unit_ball_volume(m: usize) -> f64 {
    log_unit_ball_volume(m).exp()
}

fn log_unit_ball_volume(m: usize) -> f64 {
    let half = m as f64 / 2.0;
    half * PI.ln() - ln_gamma(half + 1.0)
}

/// Isotropic Gaussian KDE over whitened samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeComponent {
    #[serde(with = "crate::serde_matrix")]
    pub centers: Array2<f64>,
    pub bandwidth: f64,
}

impl KdeComponent {
    pub fn new(centers: Array2<f64>, bandwidth: f64) -> Result<Self> {
        if centers.nrows() == 0 || !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(RomeError::Config(format!(
                "KDE needs at least one center and a positive bandwidth, got {} centers and b={bandwidth}",
                centers.nrows()
            )));
        }
        let centers = centers.as_standard_layout().into_owned();
        Ok(Self { centers, bandwidth })
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        let m = self.centers.ncols();
        let n = self.centers.nrows();
        let inv_two_var = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        // streaming log-sum-exp over the kernels
        let mut max = f64::NEG_INFINITY;
        let mut acc = 0.0;
        let flat = self.centers.as_slice().expect("standard layout");
        for c in flat.chunks_exact(m) {
            let d2: f64 = c.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = -d2 * inv_two_var;
            if v <= max {
                acc += (v - max).exp();
            } else {
                acc = acc * (max - v).exp() + 1.0;
                max = v;
            }
        }
        let log_norm =
            -(n as f64).ln() - 0.5 * m as f64 * (2.0 * PI * self.bandwidth * self.bandwidth).ln();
        max + acc.ln() + log_norm
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let i = rng.random_range(0..self.centers.nrows());
        self.centers
            .row(i)
            .iter()
            .map(|c| {
                let z: f64 = rng.sample(StandardNormal);
                c + self.bandwidth * z
            })
            .collect()
    }
}

/// Single Gaussian fitted to the sample mean and covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GmmData", into = "GmmData")]
pub struct GmmComponent {
    data: GmmData,
    gaussian: Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GmmData {
    mean: Vec<f64>,
    #[serde(with = "crate::serde_matrix")]
    covariance: Array2<f64>,
}

impl TryFrom<GmmData> for GmmComponent {
    type Error = RomeError;

    fn try_from(data: GmmData) -> Result<Self> {
        let m = data.mean.len();
        let cov = DMatrix::from_fn(m, m, |i, j| data.covariance[(i, j)]);
        let gaussian = Gaussian::new(&data.mean, &cov)?;
        Ok(Self { data, gaussian })
    }
}

impl From<GmmComponent> for GmmData {
    fn from(c: GmmComponent) -> Self {
        c.data
    }
}

impl PartialEq for GmmComponent {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl GmmComponent {
    pub fn mean(&self) -> &[f64] {
        &self.data.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.data.covariance
    }
}

/// Fits a Gaussian to whitened samples.
///
/// The covariance uses `1/(n-1)`; `1e-9 I` is added when its smallest
/// eigenvalue is below `1e-12`. With a single sample the covariance falls back
/// to `b^2 I` with the noise-cluster Silverman bandwidth.
pub fn fit_gmm_component(samples: ArrayView2<'_, f64>) -> Result<GmmComponent> {
    let (n, m) = samples.dim();
    if n == 0 {
        return Err(RomeError::InsufficientData("GMM component needs samples".into()));
    }
    let mean = crate::transforms::column_means(samples);
    let mut cov = if n < 2 {
        let b = silverman_bandwidth(m, 1, true);
        DMatrix::identity(m, m) * (b * b)
    } else {
        DMatrix::from_fn(m, m, |i, j| {
            samples
                .rows()
                .into_iter()
                .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                .sum::<f64>()
                / (n - 1) as f64
        })
    };
    let min_eig = cov.clone().symmetric_eigenvalues().min();
    if min_eig < 1e-12 {
        cov += DMatrix::identity(m, m) * 1e-9;
    }
    GmmComponent::try_from(GmmData {
        mean,
        covariance: Array2::from_shape_fn((m, m), |(i, j)| cov[(i, j)]),
    })
}

/// k-nearest-neighbour density `k / (n V_m d_k^m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnComponent {
    #[serde(with = "crate::serde_matrix")]
    pub points: Array2<f64>,
    pub k: usize,
}

/// Fits a kNN density with the given `k`, or `floor(sqrt(n))` when `None`.
pub fn fit_knn_component(samples: ArrayView2<'_, f64>, k: Option<usize>) -> Result<KnnComponent> {
    let n = samples.nrows();
    if n == 0 {
        return Err(RomeError::InsufficientData("kNN component needs samples".into()));
    }
    let k = k.unwrap_or_else(|| ((n as f64).sqrt().floor() as usize).max(1));
    if k == 0 || k > n {
        return Err(RomeError::Config(format!("kNN k={k} must lie in [1, {n}]")));
    }
    Ok(KnnComponent {
        points: samples.as_standard_layout().into_owned(),
        k,
    })
}

impl KnnComponent {
    pub fn log_density(&self, z: &[f64]) -> f64 {
        let (n, m) = self.points.dim();
        let flat = self.points.as_slice().expect("standard layout");
        let mut dists: Vec<f64> = flat
            .chunks_exact(m)
            .map(|p| p.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect();
        let (_, kth, _) = dists.select_nth_unstable_by(self.k - 1, f64::total_cmp);
        let d_k = kth.sqrt();
        (self.k as f64).ln() - (n as f64).ln() - log_unit_ball_volume(m) - m as f64 * d_k.ln()
    }
}

/// The per-cluster density model, evaluated in whitened coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ComponentModel {
    Kde(KdeComponent),
    Gmm(GmmComponent),
    Knn(KnnComponent),
}

impl ComponentModel {
    pub fn dims(&self) -> usize {
        match self {
            ComponentModel::Kde(c) => c.centers.ncols(),
            ComponentModel::Gmm(c) => c.data.mean.len(),
            ComponentModel::Knn(c) => c.points.ncols(),
        }
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        match self {
            ComponentModel::Kde(c) => c.log_density(z),
            ComponentModel::Gmm(c) => c.gaussian.log_pdf(z),
            ComponentModel::Knn(c) => c.log_density(z),
        }
    }

    /// One draw in whitened coordinates, or `None` for kNN.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        match self {
            ComponentModel::Kde(c) => Some(c.sample(rng)),
            ComponentModel::Gmm(c) => Some(c.gaussian.sample(rng)),
            ComponentModel::Knn(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn silverman_examples() {
        assert_abs_diff_eq!(silverman_bandwidth(2, 1000, false), 0.316_227_766_016_837_94, epsilon = 1e-15);
        assert_abs_diff_eq!(silverman_bandwidth(2, 1, false), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(silverman_bandwidth(2, 500, true), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(silverman_bandwidth(24, 700, true), 6.5f64.powf(-1.0 / 28.0), epsilon = 1e-15);
        assert_abs_diff_eq!(silverman_bandwidth(24, 700, true), 0.93532, epsilon = 1e-4);
    }

    #[test]
    fn unit_ball_volumes() {
        assert_abs_diff_eq!(unit_ball_volume(1), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(unit_ball_volume(2), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn single_kernel_at_centre() {
        let kde = KdeComponent::new(array![[0.0, 0.0]], 1.0).unwrap();
        assert_abs_diff_eq!(kde.log_density(&[0.0, 0.0]), -(2.0 * PI).ln(), epsilon = 1e-14);
    }

    #[test]
    fn kde_matches_direct_sum() {
        let centers = array![[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5]];
        let b = 0.7;
        let kde = KdeComponent::new(centers.clone(), b).unwrap();
        let z = [0.3, 0.9];
        let direct: f64 = centers
            .rows()
            .into_iter()
            .map(|c| {
                let d2 = (c[0] - z[0]).powi(2) + (c[1] - z[1]).powi(2);
                (-d2 / (2.0 * b * b)).exp() / (2.0 * PI * b * b)
            })
            .sum::<f64>()
            / 3.0;
        assert_abs_diff_eq!(kde.log_density(&z), direct.ln(), epsilon = 1e-13);
    }

    #[test]
    fn kde_far_query_does_not_underflow() {
        let kde = KdeComponent::new(array![[0.0; 24]], 0.1).unwrap();
        let v = kde.log_density(&[50.0; 24]);
        assert!(v.is_finite() && v < -1e5);
    }

    #[test]
    fn knn_direct_formula() {
        let knn = fit_knn_component(array![[0.0], [1.0]].view(), Some(1)).unwrap();
        assert_abs_diff_eq!(knn.log_density(&[0.25]), 0.0, epsilon = 1e-14);
        // default k = floor(sqrt(n))
        let pts = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        assert_eq!(fit_knn_component(pts.view(), None).unwrap().k, 3);
    }

    #[test]
    fn gmm_on_exact_standard_moments() {
        // mean 0 and covariance I with the 1/(n-1) normalisation
        let s = (3.0f64 / 4.0).sqrt();
        let pts = array![[s, s], [s, -s], [-s, s], [-s, -s]];
        let g = fit_gmm_component(pts.view()).unwrap();
        assert_abs_diff_eq!(g.mean()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.covariance()[(0, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.covariance()[(0, 1)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.gaussian.log_pdf(&[0.0, 0.0]), -(2.0 * PI).ln(), epsilon = 1e-13);
    }

    #[test]
    fn gmm_degenerate_inputs() {
        let one = fit_gmm_component(array![[1.0, 2.0]].view()).unwrap();
        assert_eq!(one.covariance()[(0, 0)], 1.0);
        // collinear points are rank deficient and get jitter
        let line = fit_gmm_component(array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]].view()).unwrap();
        assert!(line.covariance()[(0, 0)] > 1.0);
        assert!(fit_gmm_component(Array2::zeros((0, 2)).view()).is_err());
    }
}
