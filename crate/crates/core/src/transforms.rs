//! Per-cluster decorrelation and normalisation.
//!
//! Each cluster gets an affine map `x -> (x - mean) T` with
//! `T = R^T diag(scales)^-1`, where the rows of `R` are the principal axes of
//! the cluster and `scales` are regularised standard deviations along them.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Decorrelating and normalising map of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTransform {
    pub mean: Vec<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub rotation: Array2<f64>,
    pub scales: Vec<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub forward: Array2<f64>,
    pub log_abs_det: f64,
}

impl ClusterTransform {
    /// Builds the map from its parts; `rotation` must be orthogonal.
    pub fn from_parts(mean: Vec<f64>, rotation: Array2<f64>, scales: Vec<f64>) -> Self {
        let m = mean.len();
        let forward = Array2::from_shape_fn((m, m), |(i, j)| rotation[(j, i)] / scales[j]);
        let log_abs_det = -scales.iter().map(|s| s.ln()).sum::<f64>();
        Self {
            mean,
            rotation,
            scales,
            forward,
            log_abs_det,
        }
    }

    pub fn identity(mean: Vec<f64>) -> Self {
        let m = mean.len();
        Self::from_parts(mean, Array2::eye(m), vec![1.0; m])
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) T`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, (xi, mi)) in x.iter().zip(&self.mean).enumerate() {
            let c = xi - mi;
            for (o, t) in out.iter_mut().zip(self.forward.row(i)) {
                *o += c * t;
            }
        }
    }

    /// Inverse of [`apply`](Self::apply): `mean + (z * scales) R`.
    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (i, (zi, si)) in z.iter().zip(&self.scales).enumerate() {
            let c = zi * si;
            for (o, r) in out.iter_mut().zip(self.rotation.row(i)) {
                *o += c * r;
            }
        }
        out
    }
}

/// Which ablations to honour when building a transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformFlags {
    pub decorrelate: bool,
    pub normalize: bool,
}

impl Default for TransformFlags {
    fn default() -> Self {
        Self {
            decorrelate: true,
            normalize: true,
        }
    }
}

/// Input to [`regularized_scales`].
#[derive(Debug, Clone, Copy)]
pub enum ScaleInput<'a> {
    /// Standard deviations of a regular cluster along its rotated axes.
    Normal(&'a [f64]),
    /// Raw per-dimension standard deviations of every non-noise cluster,
    /// used to size the noise cluster.
    Noise { cluster_stds: &'a [Vec<f64>], dims: usize },
}

/// Regularised scales.
///
/// Regular clusters shrink each std towards `sigma_min` so that the largest
/// std is kept as is: `(1 - sigma_min / max_std) * std + sigma_min`. The noise
/// cluster uses the average std of the regular clusters, floored at `sigma_min`.
pub fn regularized_scales(input: ScaleInput<'_>, sigma_min: f64) -> Vec<f64> {
    match input {
        ScaleInput::Normal(stds) => {
            let max = stds.iter().copied().fold(0.0, f64::max);
            if max <= 0.0 {
                return vec![sigma_min; stds.len()];
            }
            stds.iter()
                .map(|s| (1.0 - sigma_min / max) * s + sigma_min)
                .collect()
        }
        ScaleInput::Noise { cluster_stds, dims } => {
            if cluster_stds.is_empty() {
                return vec![sigma_min; dims];
            }
            let count = cluster_stds.len() as f64;
            (0..dims)
                .map(|m| {
                    let avg = cluster_stds.iter().map(|s| s[m]).sum::<f64>() / count;
                    avg.max(sigma_min)
                })
                .collect()
        }
    }
}

/// Principal axes of centred samples as the rows of a proper rotation.
///
/// Rows are sorted by descending variance; each row's largest-magnitude entry
/// is made positive, then the last row is flipped if needed so `det = +1`.
/// Fewer than two samples give the identity.
pub fn pca_rotation(centered: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, m) = centered.dim();
    if n < 2 {
        return Array2::eye(m);
    }
    let cov = DMatrix::from_fn(m, m, |i, j| {
        centered.column(i).dot(&centered.column(j)) / (n - 1) as f64
    });
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut rot = Array2::zeros((m, m));
    for (row, &k) in idx.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let norm = v.norm();
        let pivot = (0..m).fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..m {
            rot[(row, j)] = sign * v[j] / norm;
        }
    }
    let det = DMatrix::from_fn(m, m, |i, j| rot[(i, j)]).determinant();
    if det < 0.0 {
        rot.row_mut(m - 1).mapv_inplace(|v| -v);
    }
    rot
}

/// Column means.
pub fn column_means(x: ArrayView2<'_, f64>) -> Vec<f64> {
    x.mean_axis(Axis(0)).map(|a| a.to_vec()).unwrap_or_default()
}

/// Per-column standard deviations with `1/(n-1)` normalisation; zero for `n < 2`.
pub fn column_stds(x: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = x.nrows();
    if n < 2 {
        return vec![0.0; x.ncols()];
    }
    x.columns()
        .into_iter()
        .map(|c| {
            let mean = c.sum() / n as f64;
            (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        })
        .collect()
}

/// Builds the transform of one cluster.
///
/// `noise_context` holds the raw per-dimension stds of every non-noise
/// cluster and is only read when `is_noise` is set. The noise cluster is
/// never rotated.
pub fn build_transform(
    samples: ArrayView2<'_, f64>,
    is_noise: bool,
    noise_context: &[Vec<f64>],
    sigma_min: f64,
    flags: TransformFlags,
) -> ClusterTransform {
    let m = samples.ncols();
    let mean = column_means(samples);
    let centered = &samples - &ndarray::ArrayView1::from(&mean);

    let rotation = if flags.decorrelate && !is_noise {
        pca_rotation(centered.view())
    } else {
        Array2::eye(m)
    };

    let scales = if !flags.normalize {
        vec![1.0; m]
    } else if is_noise {
        regularized_scales(
            ScaleInput::Noise {
                cluster_stds: noise_context,
                dims: m,
            },
            sigma_min,
        )
    } else {
        let rotated = centered.dot(&rotation.t());
        regularized_scales(ScaleInput::Normal(&column_stds(rotated.view())), sigma_min)
    };

    ClusterTransform::from_parts(mean, rotation, scales)
}
