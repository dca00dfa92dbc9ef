//! The full estimator: cluster, whiten each cluster, fit a downstream density
//! per cluster, and recombine as a size-weighted mixture.
//!
//! For a query `x` the model evaluates
//!
//! ```text
//! ln p(x) = logsumexp_C [ ln(|C| / N) + ln p_C((x - mean_C) T_C) + ln|det T_C| ]
//! ```
//!
//! entirely in log space, so high-dimensional kernels never underflow.

mod component;

use std::fmt;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use component::{
    fit_gmm_component, fit_knn_component, silverman_bandwidth, unit_ball_volume, ComponentModel,
    GmmComponent, KdeComponent, KnnComponent,
};

use crate::dataset::Dataset;
use crate::density::{log_sum_exp, LogDensity};
use crate::error::{Result, RomeError};
use crate::optics::{self, ClusterSet, OpticsParams};
use crate::transforms::{build_transform, column_stds, ClusterTransform, TransformFlags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clustering {
    /// OPTICS with silhouette-based selection among 199 extractions.
    Silhouette,
    /// All samples in one cluster.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Downstream {
    Kde,
    Gmm,
    Knn,
}

/// Estimator configuration, including every ablation switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub clustering: Clustering,
    pub decorrelate: bool,
    pub normalize: bool,
    pub downstream: Downstream,
    /// `sigma_min` as a fraction of the largest per-dimension std of the data.
    pub sigma_min_factor: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub alpha_k: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            clustering: Clustering::Silhouette,
            decorrelate: true,
            normalize: true,
            downstream: Downstream::Kde,
            sigma_min_factor: 0.01,
            k_min: 5,
            k_max: 20,
            alpha_k: 400.0,
        }
    }
}

impl FitConfig {
    /// Plain global Gaussian KDE: every stage switched off.
    pub fn plain_kde() -> Self {
        Self {
            clustering: Clustering::None,
            decorrelate: false,
            normalize: false,
            ..Self::default()
        }
    }

    pub fn with_clustering(mut self, clustering: Clustering) -> Self {
        self.clustering = clustering;
        self
    }

    pub fn with_decorrelate(mut self, on: bool) -> Self {
        self.decorrelate = on;
        self
    }

    pub fn with_normalize(mut self, on: bool) -> Self {
        self.normalize = on;
        self
    }

    pub fn with_downstream(mut self, downstream: Downstream) -> Self {
        self.downstream = downstream;
        self
    }

    pub fn optics_params(&self) -> OpticsParams {
        OpticsParams {
            k_min: self.k_min,
            k_max: self.k_max,
            alpha_k: self.alpha_k,
        }
    }

    pub fn can_sample(&self) -> bool {
        self.downstream != Downstream::Knn
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min_factor > 0.0 && self.sigma_min_factor.is_finite()) {
            return Err(RomeError::Config(format!(
                "sigma_min_factor must be positive, got {}",
                self.sigma_min_factor
            )));
        }
        if self.k_min == 0 || self.k_min > self.k_max || !(self.alpha_k > 0.0) {
            return Err(RomeError::Config(format!(
                "invalid smoothing parameters k_min={}, k_max={}, alpha_k={}",
                self.k_min, self.k_max, self.alpha_k
            )));
        }
        Ok(())
    }

    /// Short stable label such as `silhouette-dec-norm-kde`.
    pub fn label(&self) -> String {
        format!(
            "{}-{}-{}-{}",
            match self.clustering {
                Clustering::Silhouette => "silhouette",
                Clustering::None => "noclust",
            },
            if self.decorrelate { "dec" } else { "nodec" },
            if self.normalize { "norm" } else { "nonorm" },
            match self.downstream {
                Downstream::Kde => "kde",
                Downstream::Gmm => "gmm",
                Downstream::Knn => "knn",
            }
        )
    }
}

impl fmt::Display for FitConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// One mixture component: a density in whitened coordinates, the map into
/// those coordinates, and the component's share of the training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub model: ComponentModel,
    pub transform: ClusterTransform,
    pub weight: f64,
    pub size: usize,
    pub is_noise: bool,
}

/// A fitted estimator. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomeModel {
    config: FitConfig,
    dims: usize,
    n_train: usize,
    components: Vec<Component>,
}

/// Fits the estimator to `x`.
pub fn fit(x: &Dataset, cfg: &FitConfig) -> Result<RomeModel> {
    let clusters = clusters_for(x, cfg)?;
    fit_with_clusters(x, cfg, &clusters)
}

/// The clustering step of [`fit`] on its own; configs that agree on the
/// clustering fields can share its result through [`fit_with_clusters`].
pub fn clusters_for(x: &Dataset, cfg: &FitConfig) -> Result<ClusterSet> {
    cfg.validate()?;
    if x.n() < 2 {
        return Err(RomeError::InsufficientData(format!(
            "need at least 2 samples to fit, got {}",
            x.n()
        )));
    }
    match cfg.clustering {
        Clustering::Silhouette => optics::cluster(x, cfg.optics_params()),
        Clustering::None => Ok(ClusterSet::single(x.n())),
    }
}

/// Fits everything after the clustering step.
pub fn fit_with_clusters(x: &Dataset, cfg: &FitConfig, clusters: &ClusterSet) -> Result<RomeModel> {
    cfg.validate()?;
    let (n, m) = (x.n(), x.dims());
    if n < 2 {
        return Err(RomeError::InsufficientData(format!(
            "need at least 2 samples to fit, got {n}"
        )));
    }
    if clusters.n() != n || !clusters.is_partition() {
        return Err(RomeError::Shape(
            "cluster set does not partition the dataset".into(),
        ));
    }

    let data_scale = column_stds(x.values()).into_iter().fold(0.0, f64::max);
    let sigma_min = if data_scale > 0.0 {
        cfg.sigma_min_factor * data_scale
    } else {
        cfg.sigma_min_factor
    };
    let flags = TransformFlags {
        decorrelate: cfg.decorrelate,
        normalize: cfg.normalize,
    };

    let members: Vec<Array2<f64>> = clusters.clusters().iter().map(|c| x.select(c)).collect();
    let noise_context: Vec<Vec<f64>> = members.iter().map(|s| column_stds(s.view())).collect();

    let mut groups: Vec<(Array2<f64>, bool)> = members.into_iter().map(|s| (s, false)).collect();
    if !clusters.noise().is_empty() {
        groups.push((x.select(clusters.noise()), true));
    }

    let mut components = Vec::with_capacity(groups.len());
    for (samples, is_noise) in groups {
        let size = samples.nrows();
        let transform = build_transform(samples.view(), is_noise, &noise_context, sigma_min, flags);
        let mut whitened = Array2::zeros((size, m));
        for (src, mut dst) in samples.rows().into_iter().zip(whitened.rows_mut()) {
            let z = transform.apply(&src.to_vec());
            dst.iter_mut().zip(z).for_each(|(d, v)| *d = v);
        }
        let model = match cfg.downstream {
            Downstream::Kde => ComponentModel::Kde(KdeComponent::new(
                whitened,
                silverman_bandwidth(m, size, is_noise),
            )?),
            Downstream::Gmm => ComponentModel::Gmm(fit_gmm_component(whitened.view())?),
            Downstream::Knn => ComponentModel::Knn(fit_knn_component(whitened.view(), None)?),
        };
        components.push(Component {
            model,
            transform,
            weight: size as f64 / n as f64,
            size,
            is_noise,
        });
    }

    Ok(RomeModel {
        config: *cfg,
        dims: m,
        n_train: n,
        components,
    })
}

impl RomeModel {
    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Whether the density integrates to one. kNN densities are not normalised.
    pub fn is_normalized(&self) -> bool {
        self.config.downstream != Downstream::Knn
    }

    pub fn can_sample(&self) -> bool {
        self.config.can_sample()
    }

    /// Natural log of the mixture density at `x`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dims);
        let mut z = vec![0.0; self.dims];
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                c.transform.apply_into(x, &mut z);
                c.weight.ln() + c.model.log_density(&z) + c.transform.log_abs_det
            })
            .collect();
        log_sum_exp(terms)
    }

    /// Log-density at every row of `queries`.
    pub fn log_density_batch(&self, queries: &Dataset) -> Result<Vec<f64>> {
        if queries.dims() != self.dims {
            return Err(RomeError::Shape(format!(
                "queries have {} dims, model has {}",
                queries.dims(),
                self.dims
            )));
        }
        Ok(queries.rows().map(|q| self.log_density(q)).collect())
    }

    /// Draws `n` samples: pick a component by weight, draw in whitened
    /// coordinates, map back through the inverse transform.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if !self.can_sample() {
            return Err(RomeError::Unsupported(
                "the kNN downstream estimator cannot generate samples".into(),
            ));
        }
        if n == 0 {
            return Err(RomeError::InsufficientData("cannot draw 0 samples".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Array2::zeros((n, self.dims));
        for mut row in values.rows_mut() {
            let c = &self.components[self.pick_component(&mut rng)];
            let z = c.model.sample(&mut rng).expect("checked can_sample");
            let x = c.transform.invert(&z);
            row.iter_mut().zip(x).for_each(|(r, v)| *r = v);
        }
        Dataset::new(values, seed)
    }

    fn pick_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u = rng.random::<f64>();
        for (i, c) in self.components.iter().enumerate() {
            if u < c.weight {
                return i;
            }
            u -= c.weight;
        }
        self.components.len() - 1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = self.to_json()?;
        crate::io::write_atomic(path.as_ref(), |w| {
            use std::io::Write;
            w.write_all(text.as_bytes())?;
            Ok(())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(RomeError::Data("model has no components".into()));
        }
        for c in &self.components {
            if c.transform.dims() != self.dims || c.model.dims() != self.dims {
                return Err(RomeError::Shape("component dimensionality mismatch".into()));
            }
            if !(c.weight > 0.0) {
                return Err(RomeError::Data("component weight must be positive".into()));
            }
        }
        Ok(())
    }
}

impl LogDensity for RomeModel {
    fn dims(&self) -> usize {
        self.dims
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        RomeModel::log_density(self, x)
    }
}
