//! OPTICS-style clustering: a reachability ordering of the samples, cheap
//! threshold extractions over that ordering, and silhouette-based selection
//! among 199 candidate extractions.

mod distance;
mod extract;
mod reachability;
mod silhouette;

use std::collections::HashMap;

use rayon::prelude::*;

pub use distance::{euclidean, DistanceMatrix};
pub use extract::{extract_dbscan, extract_xi};
pub use reachability::{core_smoothing_k, reachability_analysis, reachability_analysis_with};
pub use silhouette::{silhouette, silhouette_with, SILHOUETTE_SENTINEL};

use crate::dataset::Dataset;
use crate::error::{Result, RomeError};

/// Samples in visiting order plus the reachability at which each was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityOrdering {
    /// Permutation of sample indices.
    pub order: Vec<usize>,
    /// `reach[i]` belongs to `order[i]`; `reach[0]` is `+inf`.
    pub reach: Vec<f64>,
    pub k_used: usize,
}

impl ReachabilityOrdering {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Disjoint clusters over sample indices plus the leftover noise samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    n: usize,
    clusters: Vec<Vec<usize>>,
    noise: Vec<usize>,
    score: Option<f64>,
}

impl ClusterSet {
    pub fn new(n: usize, clusters: Vec<Vec<usize>>, noise: Vec<usize>) -> Self {
        Self {
            n,
            clusters,
            noise,
            score: None,
        }
    }

    /// Every sample in one cluster, scored with the sentinel.
    pub fn single(n: usize) -> Self {
        Self {
            n,
            clusters: vec![(0..n).collect()],
            noise: Vec::new(),
            score: Some(SILHOUETTE_SENTINEL),
        }
    }

    fn from_runs(ord: &ReachabilityOrdering, runs: &[(usize, usize)]) -> Self {
        let n = ord.len();
        let mut in_cluster = vec![false; n];
        let clusters = runs
            .iter()
            .map(|&(a, b)| {
                in_cluster[a..=b].iter_mut().for_each(|f| *f = true);
                ord.order[a..=b].to_vec()
            })
            .collect();
        let noise = (0..n).filter(|&p| !in_cluster[p]).map(|p| ord.order[p]).collect();
        Self::new(n, clusters, noise)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn noise(&self) -> &[usize] {
        &self.noise
    }

    pub fn score(&self) -> Option<f64> {
        self.score
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    /// Cluster index per sample, `None` for noise.
    pub fn labels(&self) -> Vec<Option<usize>> {
        let mut labels = vec![None; self.n];
        for (c, members) in self.clusters.iter().enumerate() {
            for &i in members {
                labels[i] = Some(c);
            }
        }
        labels
    }

    /// Labels where noise takes the id `clusters.len()`.
    pub(crate) fn labels_with_noise(&self) -> Vec<u32> {
        let noise_label = self.clusters.len() as u32;
        self.labels()
            .into_iter()
            .map(|l| l.map_or(noise_label, |c| c as u32))
            .collect()
    }

    /// True when clusters and noise together cover `0..n` exactly once and
    /// every cluster has at least two members.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![false; self.n];
        for &i in self.clusters.iter().flatten().chain(&self.noise) {
            if i >= self.n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.iter().all(|&s| s) && self.clusters.iter().all(|c| c.len() >= 2)
    }
}

/// The 100 absolute thresholds (quadratically spaced between the smallest and
/// largest finite reachability) and the 99 proportional thresholds `0.01..=0.99`.
pub fn candidate_grids(ord: &ReachabilityOrdering) -> Result<(Vec<f64>, Vec<f64>)> {
    let finite = ord.reach.iter().copied().filter(|r| r.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Err(RomeError::InsufficientData(
            "no finite reachability distances".into(),
        ));
    }
    let eps = (0..100)
        .map(|a| {
            let t = a as f64 / 99.0;
            lo + t * t * (hi - lo)
        })
        .collect();
    let xi = (1..100).map(|b| b as f64 / 100.0).collect();
    Ok((eps, xi))
}

#[derive(Debug, Clone, Copy)]
enum Candidate {
    Eps(f64),
    Xi(f64),
}

/// Picks the highest-silhouette extraction among all grid candidates.
///
/// Starts from the single all-samples cluster at the sentinel score; a
/// candidate replaces the incumbent only on a strictly higher score, scanning
/// the eps grid before the xi grid.
pub fn select_clustering(x: &Dataset, ord: &ReachabilityOrdering) -> Result<ClusterSet> {
    select_clustering_with(&DistanceMatrix::from_dataset(x), ord)
}

/// As [`select_clustering`], reading distances from a precomputed matrix.
pub fn select_clustering_with(dist: &DistanceMatrix, ord: &ReachabilityOrdering) -> Result<ClusterSet> {
    let n = ord.len();
    if dist.len() != n {
        return Err(RomeError::Shape(format!(
            "distance matrix covers {} samples, ordering has {n}",
            dist.len()
        )));
    }
    let mut best = ClusterSet::single(n);
    if n < 2 {
        return Ok(best);
    }
    let (eps_grid, xi_grid) = candidate_grids(ord)?;
    let candidates = eps_grid
        .iter()
        .map(|&e| Candidate::Eps(e))
        .chain(xi_grid.iter().map(|&x| Candidate::Xi(x)));

    let mut extracted = Vec::with_capacity(199);
    for cand in candidates {
        let cs = match cand {
            Candidate::Eps(e) if e > 0.0 => extract_dbscan(ord, e)?,
            // a zero threshold cannot admit any run
            Candidate::Eps(_) => ClusterSet::from_runs(ord, &[]),
            Candidate::Xi(x) => extract_xi(ord, x)?,
        };
        extracted.push(cs);
    }

    // Many thresholds produce the same partition; score each distinct one once.
    let mut unique: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut label_sets: Vec<Vec<u32>> = Vec::new();
    let slots: Vec<usize> = extracted
        .iter()
        .map(|cs| {
            let labels = cs.labels_with_noise();
            *unique.entry(labels.clone()).or_insert_with(|| {
                label_sets.push(labels);
                label_sets.len() - 1
            })
        })
        .collect();
    let scores: Vec<f64> = label_sets
        .par_iter()
        .map(|labels| silhouette::silhouette_from_labels(dist, labels))
        .collect();

    let mut best_score = SILHOUETTE_SENTINEL;
    for (cs, slot) in extracted.into_iter().zip(slots) {
        let s = scores[slot];
        if s > best_score {
            best_score = s;
            best = cs.with_score(s);
        }
    }
    Ok(best)
}

/// Smoothing-count parameters of the reachability analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticsParams {
    pub k_min: usize,
    pub k_max: usize,
    pub alpha_k: f64,
}

impl Default for OpticsParams {
    fn default() -> Self {
        Self {
            k_min: 5,
            k_max: 20,
            alpha_k: 400.0,
        }
    }
}

/// Full clustering step: smoothing count, reachability ordering and selection,
/// sharing a single distance matrix.
pub fn cluster(x: &Dataset, params: OpticsParams) -> Result<ClusterSet> {
    let k = core_smoothing_k(x.n(), x.dims(), params.k_min, params.k_max, params.alpha_k)?;
    let dist = DistanceMatrix::from_dataset(x);
    let ord = reachability_analysis_with(x, &dist, k)?;
    select_clustering_with(&dist, &ord)
}
