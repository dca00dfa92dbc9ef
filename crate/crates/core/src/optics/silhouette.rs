use super::distance::DistanceMatrix;
use super::ClusterSet;
use crate::dataset::Dataset;

/// Score used when fewer than two labels exist.
pub const SILHOUETTE_SENTINEL: f64 = -1.1;

/// Mean silhouette of a clustering, with the noise set acting as one extra label.
///
/// Members of singleton labels score 0. Returns [`SILHOUETTE_SENTINEL`] when
/// the partition has fewer than two labels.
pub fn silhouette(x: &Dataset, cs: &ClusterSet) -> f64 {
    silhouette_with(&DistanceMatrix::from_dataset(x), cs)
}

/// As [`silhouette`], reading distances from a precomputed matrix.
pub fn silhouette_with(dist: &DistanceMatrix, cs: &ClusterSet) -> f64 {
    let labels = cs.labels_with_noise();
    silhouette_from_labels(dist, &labels)
}

pub(crate) fn silhouette_from_labels(dist: &DistanceMatrix, labels: &[u32]) -> f64 {
    let n = labels.len();
    let n_labels = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut sizes = vec![0usize; n_labels];
    for &l in labels {
        sizes[l as usize] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return SILHOUETTE_SENTINEL;
    }

    let mut sums = vec![0.0; n_labels];
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i] as usize;
        if sizes[own] < 2 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (d, &l) in dist.row(i).iter().zip(labels) {
            sums[l as usize] += d;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = sums
            .iter()
            .zip(&sizes)
            .enumerate()
            .filter(|&(l, (_, &size))| l != own && size > 0)
            .map(|(_, (s, &size))| s / size as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(points: &[f64]) -> Dataset {
        Dataset::from_rows(&points.iter().map(|p| vec![*p]).collect::<Vec<_>>(), 0).unwrap()
    }

    /// Straightforward per-sample silhouette on raw coordinates.
    fn oracle(points: &[f64], labels: &[usize]) -> f64 {
        let n = points.len();
        let mut total = 0.0;
        for i in 0..n {
            let same: Vec<f64> = (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .map(|j| (points[i] - points[j]).abs())
                .collect();
            if same.is_empty() {
                continue;
            }
            let a = same.iter().sum::<f64>() / same.len() as f64;
            let mut b = f64::INFINITY;
            for l in labels.iter().copied().filter(|&l| l != labels[i]) {
                let other: Vec<f64> = (0..n)
                    .filter(|&j| labels[j] == l)
                    .map(|j| (points[i] - points[j]).abs())
                    .collect();
                b = b.min(other.iter().sum::<f64>() / other.len() as f64);
            }
            total += (b - a) / a.max(b);
        }
        total / n as f64
    }

    #[test]
    fn two_tight_pairs() {
        let pts = [0.0, 0.1, 10.0, 10.1];
        let cs = ClusterSet::new(4, vec![vec![0, 1], vec![2, 3]], vec![]);
        let s = silhouette(&line(&pts), &cs);
        assert_abs_diff_eq!(s, oracle(&pts, &[0, 0, 1, 1]), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.990, epsilon = 1e-3);
    }

    #[test]
    fn single_cluster_is_sentinel() {
        let cs = ClusterSet::new(3, vec![vec![0, 1, 2]], vec![]);
        assert_eq!(silhouette(&line(&[0.0, 1.0, 2.0]), &cs), SILHOUETTE_SENTINEL);
        let all_noise = ClusterSet::new(3, vec![], vec![0, 1, 2]);
        assert_eq!(silhouette(&line(&[0.0, 1.0, 2.0]), &all_noise), SILHOUETTE_SENTINEL);
    }

    #[test]
    fn interleaved_clusters_score_non_positive() {
        let pts = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let cs = ClusterSet::new(6, vec![vec![0, 2, 4], vec![1, 3, 5]], vec![]);
        assert!(silhouette(&line(&pts), &cs) <= 0.0);
    }

    #[test]
    fn noise_is_one_label_and_singletons_score_zero() {
        let pts = [0.0, 0.2, 5.0, 9.0, 20.0];
        let cs = ClusterSet::new(5, vec![vec![0, 1], vec![4]], vec![2, 3]);
        let s = silhouette(&line(&pts), &cs);
        assert_abs_diff_eq!(s, oracle(&pts, &[0, 0, 2, 2, 1]), epsilon = 1e-12);
    }
}
