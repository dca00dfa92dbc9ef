use std::cmp::Ordering;

use super::distance::DistanceMatrix;
use super::ReachabilityOrdering;
use crate::dataset::Dataset;
use crate::error::{Result, RomeError};

/// Smoothing count for the core distance: `n * m / alpha_k` clamped to
/// `[k_min, k_max]`, rounded, and never above `n - 1`.
pub fn core_smoothing_k(
    n: usize,
    m: usize,
    k_min: usize,
    k_max: usize,
    alpha_k: f64,
) -> Result<usize> {
    if n < 2 {
        return Err(RomeError::InsufficientData(format!(
            "need at least 2 samples for reachability analysis, got {n}"
        )));
    }
    if k_min == 0 || k_min > k_max || !(alpha_k > 0.0 && alpha_k.is_finite()) {
        return Err(RomeError::Config(format!(
            "invalid smoothing parameters k_min={k_min}, k_max={k_max}, alpha_k={alpha_k}"
        )));
    }
    let raw = (n as f64 * m as f64 / alpha_k).clamp(k_min as f64, k_max as f64);
    let k = (raw.round() as usize).clamp(k_min, k_max);
    Ok(k.min(n - 1))
}

/// Greedy reachability ordering over all samples of `x` with smoothing count `k`.
pub fn reachability_analysis(x: &Dataset, k: usize) -> Result<ReachabilityOrdering> {
    reachability_analysis_with(x, &DistanceMatrix::from_dataset(x), k)
}

/// As [`reachability_analysis`], reusing a precomputed distance matrix.
///
/// The walk starts at the lexicographically smallest row. Each step adds the
/// unincluded sample `x` minimising `min_{y included} max(|x - y|, core(x))`,
/// where `core(x)` is the distance from `x` to its `k`-th nearest other
/// sample. Ties go to the smallest original index.
pub fn reachability_analysis_with(
    x: &Dataset,
    dist: &DistanceMatrix,
    k: usize,
) -> Result<ReachabilityOrdering> {
    let n = x.n();
    if n < 2 {
        return Err(RomeError::InsufficientData(format!(
            "need at least 2 samples for reachability analysis, got {n}"
        )));
    }
    if k == 0 || k >= n {
        return Err(RomeError::Config(format!(
            "smoothing count k={k} must lie in [1, {}]",
            n - 1
        )));
    }
    if dist.len() != n {
        return Err(RomeError::Shape(format!(
            "distance matrix covers {} samples, dataset has {n}",
            dist.len()
        )));
    }

    let core = core_distances(dist, k);
    let start = lexicographic_min(x);

    let mut included = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut order = Vec::with_capacity(n);
    let mut reach = Vec::with_capacity(n);
    included[start] = true;
    order.push(start);
    reach.push(f64::INFINITY);

    let mut current = start;
    for _ in 1..n {
        let row = dist.row(current);
        let mut next = usize::MAX;
        let mut next_r = f64::INFINITY;
        for j in 0..n {
            if included[j] {
                continue;
            }
            let r = row[j].max(core[j]);
            if r < best[j] {
                best[j] = r;
            }
            if next == usize::MAX || best[j] < next_r {
                next = j;
                next_r = best[j];
            }
        }
        included[next] = true;
        order.push(next);
        reach.push(next_r);
        current = next;
    }

    Ok(ReachabilityOrdering {
        order,
        reach,
        k_used: k,
    })
}

fn core_distances(dist: &DistanceMatrix, k: usize) -> Vec<f64> {
    let n = dist.len();
    let mut scratch = Vec::with_capacity(n - 1);
    (0..n)
        .map(|i| {
            scratch.clear();
            scratch.extend(dist.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, d)| *d));
            let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

fn lexicographic_min(x: &Dataset) -> usize {
    let mut best = 0;
    for i in 1..x.n() {
        let ord = x
            .row_slice(i)
            .iter()
            .zip(x.row_slice(best))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal);
        if ord == Ordering::Less {
            best = i;
        }
    }
    best
}
