use super::{ClusterSet, ReachabilityOrdering};
use crate::error::{Result, RomeError};

/// Absolute-threshold extraction.
///
/// A cluster is a maximal run of ordering positions `c_min..=c_max` whose
/// reachabilities after `c_min` are all below `eps`, with `eps` not above
/// `min(reach[c_min], reach[c_max + 1])` (`reach[N]` is `+inf`).
pub fn extract_dbscan(ord: &ReachabilityOrdering, eps: f64) -> Result<ClusterSet> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(RomeError::Config(format!("eps must be positive and finite, got {eps}")));
    }
    let reach = &ord.reach;
    let n = reach.len();
    let mut runs = Vec::new();
    let mut pos = 1;
    while pos < n {
        if reach[pos] < eps {
            let start = pos - 1;
            let mut end = pos;
            while end + 1 < n && reach[end + 1] < eps {
                end += 1;
            }
            let bound = reach[start].min(reach_after(reach, end));
            if eps <= bound {
                runs.push((start, end));
            }
            pos = end + 1;
        } else {
            pos += 1;
        }
    }
    Ok(ClusterSet::from_runs(ord, &runs))
}

/// Proportional-threshold extraction.
///
/// A run `c_min..=c_max` qualifies when every reachability after `c_min` is at
/// most `(1 - xi) * min(reach[c_min], reach[c_max + 1])`. Only the outermost
/// qualifying runs are kept. The run spanning the whole ordering is bounded by
/// `+inf` on both sides, so the condition is vacuous there and it never counts.
pub fn extract_xi(ord: &ReachabilityOrdering, xi: f64) -> Result<ClusterSet> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(RomeError::Config(format!("xi must lie in (0, 1), got {xi}")));
    }
    let reach = &ord.reach;
    let n = reach.len();
    let factor = 1.0 - xi;

    // Longest qualifying run for each start position.
    let mut longest: Vec<(usize, usize)> = Vec::new();
    for a in 0..n.saturating_sub(1) {
        let limit_a = factor * reach[a];
        let mut inner_max = f64::NEG_INFINITY;
        let mut best_end = None;
        for b in (a + 1)..n {
            inner_max = inner_max.max(reach[b]);
            if inner_max > limit_a {
                break;
            }
            let bound = reach[a].min(reach_after(reach, b));
            if bound.is_finite() && inner_max <= factor * bound {
                best_end = Some(b);
            }
        }
        if let Some(b) = best_end {
            longest.push((a, b));
        }
    }

    // Drop runs nested in a run that starts earlier; starts are increasing so
    // a run survives only if it reaches past every earlier run.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut reach_so_far: Option<usize> = None;
    for (a, b) in longest {
        if reach_so_far.is_some_and(|e| e >= b) {
            continue;
        }
        reach_so_far = Some(b);
        // Partial overlaps need zero reachabilities; first come wins.
        if runs.last().is_some_and(|&(_, prev_end)| a <= prev_end) {
            continue;
        }
        runs.push((a, b));
    }
    Ok(ClusterSet::from_runs(ord, &runs))
}

#[inline]
fn reach_after(reach: &[f64], end: usize) -> f64 {
    reach.get(end + 1).copied().unwrap_or(f64::INFINITY)
}
