//! Sample-based evaluation metrics for density estimators.

mod assignment;

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub use assignment::solve_assignment;

use crate::dataset::Dataset;
use crate::density::LogDensity;
use crate::distributions::DistributionSpec;
use crate::error::{Result, RomeError};
use crate::optics::euclidean;
use crate::seed::derive_seed;

/// Sets larger than this are subsampled before solving the transport problem.
pub const EMD_MAX_POINTS: usize = 1024;
/// Number of subsample draws averaged for large sets.
pub const EMD_DRAWS: usize = 4;
/// Subsample seed used by [`emd`].
pub const EMD_DEFAULT_SEED: u64 = 0x5eed_e4d0;

/// Jensen-Shannon divergence in bits between two queryable densities,
/// estimated on `X1 ∪ X2`. Result lies in `[0, 1]`.
pub fn jsd<P1, P2>(p1: &P1, p2: &P2, x1: &Dataset, x2: &Dataset) -> Result<f64>
where
    P1: LogDensity + ?Sized,
    P2: LogDensity + ?Sized,
{
    if x1.n() != x2.n() {
        return Err(RomeError::Shape(format!(
            "sample sets differ in size: {} vs {}",
            x1.n(),
            x2.n()
        )));
    }
    for (name, d) in [("p1", p1.dims()), ("p2", p2.dims())] {
        if d != x1.dims() || d != x2.dims() {
            return Err(RomeError::Shape(format!(
                "{name} has {d} dims, samples have {} and {}",
                x1.dims(),
                x2.dims()
            )));
        }
    }
    let mut total = 0.0;
    let mut vanished = 0usize;
    for x in x1.rows().chain(x2.rows()) {
        let (l1, l2) = (p1.log_density(x), p2.log_density(x));
        if l1 == f64::NEG_INFINITY && l2 == f64::NEG_INFINITY {
            vanished += 1;
            continue;
        }
        total += jsd_term(l1, l2);
    }
    if vanished > 0 {
        warn!("{vanished} evaluation points have zero density under both models");
    }
    let value = total / (2.0 * x1.n() as f64 * std::f64::consts::LN_2);
    Ok(value.clamp(0.0, 1.0))
}

/// `h1(x) + h2(x)` from the two log-densities at `x`.
fn jsd_term(l1: f64, l2: f64) -> f64 {
    let d = l1 - l2;
    if d == 0.0 {
        return 0.0;
    }
    if d.is_nan() {
        // both +inf: treat the densities as equal
        return 0.0;
    }
    // w1 = p1 / (p1 + p2) = sigmoid(d); ln(2 w1) = ln 2 - softplus(-d)
    let ln2 = std::f64::consts::LN_2;
    let half = |d: f64| {
        if d == f64::NEG_INFINITY {
            return 0.0;
        }
        let w = 1.0 / (1.0 + (-d).exp());
        w * (ln2 - softplus(-d))
    };
    half(d) + half(-d)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Jensen-Shannon divergence between `p1` and the exact density of `spec`,
/// estimated on `X1 ∪ Xtrue`.
pub fn jsd_true<P>(p1: &P, spec: &DistributionSpec, x1: &Dataset, x_true: &Dataset) -> Result<f64>
where
    P: LogDensity + ?Sized,
{
    let truth = spec.true_density()?;
    jsd(p1, &truth, x1, x_true)
}

/// Exact 1-Wasserstein distance between two equal-size empirical measures
/// under Euclidean ground cost. Large sets are subsampled with a fixed seed.
pub fn emd(x: &Dataset, y: &Dataset) -> Result<f64> {
    emd_seeded(x, y, EMD_DEFAULT_SEED)
}

/// As [`emd`], with an explicit seed for the subsampling of large sets.
pub fn emd_seeded(x: &Dataset, y: &Dataset, seed: u64) -> Result<f64> {
    if x.n() != y.n() || x.dims() != y.dims() {
        return Err(RomeError::Shape(format!(
            "emd needs equal shapes, got {}x{} and {}x{}",
            x.n(),
            x.dims(),
            y.n(),
            y.dims()
        )));
    }
    let n = x.n();
    if n <= EMD_MAX_POINTS {
        let all: Vec<usize> = (0..n).collect();
        return Ok(matched_cost(x, y, &all));
    }
    let mut sum = 0.0;
    for draw in 0..EMD_DRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[draw as u64]));
        let mut idx = index::sample(&mut rng, n, EMD_MAX_POINTS).into_vec();
        idx.sort_unstable();
        sum += matched_cost(x, y, &idx);
    }
    Ok(sum / EMD_DRAWS as f64)
}

/// Mean cost of the optimal matching between `x[idx]` and `y[idx]`.
fn matched_cost(x: &Dataset, y: &Dataset, idx: &[usize]) -> f64 {
    let n = idx.len();
    if x.values() == y.values() {
        return 0.0;
    }
    let mut cost = Vec::with_capacity(n * n);
    for &i in idx {
        let a = x.row_slice(i);
        cost.extend(idx.iter().map(|&j| euclidean(a, y.row_slice(j))));
    }
    let assignment = solve_assignment(&cost, n);
    // summing in sorted order makes the result independent of argument order
    let mut matched: Vec<f64> = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).collect();
    matched.sort_unstable_by(f64::total_cmp);
    matched.iter().sum::<f64>() / n as f64
}

/// `(W(X1, X̂1) - W(X1, X2)) / W(X1, X2)`. Positive values mean over-smoothing
/// or misplaced modes, values in `[-1, 0)` mean over-fitting.
pub fn wasserstein_indicator(x1: &Dataset, x2: &Dataset, x_hat1: &Dataset) -> Result<f64> {
    wasserstein_indicator_seeded(x1, x2, x_hat1, EMD_DEFAULT_SEED)
}

pub fn wasserstein_indicator_seeded(x1: &Dataset, x2: &Dataset, x_hat1: &Dataset, seed: u64) -> Result<f64> {
    let reference = emd_seeded(x1, x2, seed)?;
    wasserstein_indicator_from(reference, emd_seeded(x1, x_hat1, seed)?)
}

/// The indicator from precomputed `W(X1, X2)` and `W(X1, X̂1)`.
pub fn wasserstein_indicator_from(reference: f64, model: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(RomeError::DegenerateReference);
    }
    Ok((model - reference) / reference)
}

/// Mean log-density of `p1` over the rows of `x2`.
pub fn avg_log_likelihood<P: LogDensity + ?Sized>(p1: &P, x2: &Dataset) -> Result<f64> {
    if p1.dims() != x2.dims() {
        return Err(RomeError::Shape(format!(
            "model has {} dims, samples have {}",
            p1.dims(),
            x2.dims()
        )));
    }
    let sum: f64 = x2.rows().map(|x| p1.log_density(x)).sum();
    Ok(sum / x2.n() as f64)
}

/// Likelihood factor of method A over method B from paired per-repetition
/// log-likelihoods: `F = mean(exp(LA_i - LB_i))` and the one-sided p-value of
/// a t-test against `F_i = 1`.
pub fn likelihood_factor(la: &[f64], lb: &[f64]) -> Result<(f64, f64)> {
    if la.len() != lb.len() {
        return Err(RomeError::Shape(format!(
            "paired lists differ in length: {} vs {}",
            la.len(),
            lb.len()
        )));
    }
    if la.len() < 2 {
        return Err(RomeError::InsufficientData(
            "likelihood factor needs at least 2 paired values".into(),
        ));
    }
    let factors: Vec<f64> = la.iter().zip(lb).map(|(a, b)| (a - b).exp()).collect();
    let (mean, std) = mean_std(&factors);
    let n = factors.len() as f64;
    let p = if std == 0.0 {
        match mean.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Greater) => 0.0,
            Some(std::cmp::Ordering::Less) => 1.0,
            _ => 0.5,
        }
    } else {
        let t = (mean - 1.0) / (std / n.sqrt());
        let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid t distribution");
        dist.sf(t)
    };
    Ok((mean, p))
}

/// Sample mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Jsd,
    JsdTrue,
    WassersteinIndicator,
    AvgLogLikelihood,
    LikelihoodFactor,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Jsd => "jsd",
            Self::JsdTrue => "jsd_true",
            Self::WassersteinIndicator => "wasserstein_indicator",
            Self::AvgLogLikelihood => "avg_log_likelihood",
            Self::LikelihoodFactor => "likelihood_factor",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = RomeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsd" => Ok(Self::Jsd),
            "jsd_true" | "jsd-true" => Ok(Self::JsdTrue),
            "wasserstein" | "wasserstein_indicator" | "w" => Ok(Self::WassersteinIndicator),
            "loglik" | "avg_log_likelihood" | "l" => Ok(Self::AvgLogLikelihood),
            "likelihood_factor" => Ok(Self::LikelihoodFactor),
            other => Err(RomeError::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// Per-repetition values of one metric and their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub per_rep: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub reps: usize,
}

impl MetricReport {
    pub fn from_values(metric: MetricKind, per_rep: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&per_rep);
        Self {
            metric,
            reps: per_rep.len(),
            per_rep,
            mean,
            std,
        }
    }

    pub const CSV_HEADER: &'static str = "distribution,estimator_config,metric,mean,std,reps";

    /// One line matching [`Self::CSV_HEADER`], without a trailing newline.
    pub fn csv_row(&self, distribution: &str, config: &str) -> String {
        format!(
            "{distribution},{config},{},{},{},{}",
            self.metric, self.mean, self.std, self.reps
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionKind;
    use crate::gaussian::Gaussian;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    struct Normal(Gaussian);

    impl Normal {
        fn new(mean: &[f64], std: f64) -> Self {
            let m = mean.len();
            Self(Gaussian::new(mean, &(DMatrix::identity(m, m) * (std * std))).unwrap())
        }
    }

    impl LogDensity for Normal {
        fn dims(&self) -> usize {
            self.0.dims()
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            self.0.log_pdf(x)
        }
    }

    fn draw(normal: &Normal, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| normal.0.sample(&mut rng)).collect();
        Dataset::from_rows(&rows, seed).unwrap()
    }

    fn ds(rows: &[&[f64]]) -> Dataset {
        Dataset::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), 0).unwrap()
    }

    fn brute_emd(x: &Dataset, y: &Dataset) -> f64 {
        fn rec(x: &Dataset, y: &Dataset, i: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if i == x.n() {
                *best = best.min(acc);
                return;
            }
            for j in 0..y.n() {
                if !used[j] {
                    used[j] = true;
                    rec(x, y, i + 1, used, acc + euclidean(x.row_slice(i), y.row_slice(j)), best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(x, y, 0, &mut vec![false; y.n()], 0.0, &mut best);
        best / x.n() as f64
    }

    #[test]
    fn jsd_of_identical_models_is_zero() {
        let p = Normal::new(&[0.0, 1.0], 1.3);
        let (a, b) = (draw(&p, 200, 1), draw(&p, 200, 2));
        assert_eq!(jsd(&p, &p, &a, &b).unwrap(), 0.0);
    }

    #[test]
    fn jsd_disjoint_supports_is_one() {
        let p = Normal::new(&[0.0], 1.0);
        let q = Normal::new(&[1e6], 1.0);
        let v = jsd(&p, &q, &draw(&p, 500, 1), &draw(&q, 500, 2)).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn jsd_matches_quadrature() {
        let p = Normal::new(&[0.0], 1.0);
        let q = Normal::new(&[1.0], 1.0);
        let v = jsd(&p, &q, &draw(&p, 10_000, 3), &draw(&q, 10_000, 4)).unwrap();

        // independent oracle: midpoint rule on the closed-form densities
        let pdf = |x: f64, mu: f64| (-0.5 * (x - mu).powi(2)).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let kl_term = |a: f64, m: f64| if a > 0.0 { a * (a / m).log2() } else { 0.0 };
        let (lo, hi, steps) = (-15.0, 16.0, 200_000);
        let h = (hi - lo) / steps as f64;
        let exact: f64 = (0..steps)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                let (a, b) = (pdf(x, 0.0), pdf(x, 1.0));
                let m = 0.5 * (a + b);
                0.5 * (kl_term(a, m) + kl_term(b, m)) * h
            })
            .sum();
        assert!(exact > 0.1 && exact < 0.25, "oracle {exact}");
        assert_abs_diff_eq!(v, exact, epsilon = 0.02);
    }

    #[test]
    fn jsd_handles_vanishing_densities() {
        assert_eq!(jsd_term(f64::NEG_INFINITY, 0.0), std::f64::consts::LN_2);
        assert_eq!(jsd_term(0.0, f64::NEG_INFINITY), std::f64::consts::LN_2);
        assert_eq!(jsd_term(-3.0, -3.0), 0.0);
        assert!(jsd_term(-1.0, -2.0) > 0.0);
    }

    #[test]
    fn jsd_rejects_mismatched_sizes() {
        let p = Normal::new(&[0.0], 1.0);
        assert!(matches!(jsd(&p, &p, &draw(&p, 3, 1), &draw(&p, 4, 1)), Err(RomeError::Shape(_))));
    }

    #[test]
    fn jsd_true_self_comparison_is_zero() {
        let spec = DistributionSpec::standard(DistributionKind::Aniso);
        let truth = spec.true_density().unwrap();
        let (a, b) = (spec.sample(500, 1).unwrap(), spec.sample(500, 2).unwrap());
        assert!(jsd_true(&truth, &spec, &a, &b).unwrap() < 1e-3);

        let moons = DistributionSpec::standard(DistributionKind::TwoMoons);
        let m = moons.sample(10, 1).unwrap();
        let p = Normal::new(&[0.0, 0.0], 1.0);
        assert!(matches!(jsd_true(&p, &moons, &m, &m), Err(RomeError::Unsupported(_))));
    }

    #[test]
    fn emd_examples() {
        assert_eq!(emd(&ds(&[&[0.0, 0.0]]), &ds(&[&[3.0, 4.0]])).unwrap(), 5.0);
        let x = ds(&[&[0.0, 0.0], &[1.0, 2.0], &[5.0, 1.0]]);
        assert_eq!(emd(&x, &x).unwrap(), 0.0);
        let y = ds(&[&[4.0, 1.0], &[0.5, 0.0], &[1.0, 3.0]]);
        assert_abs_diff_eq!(emd(&x, &y).unwrap(), brute_emd(&x, &y), epsilon = 1e-12);
        assert!(matches!(emd(&x, &ds(&[&[0.0, 0.0]])), Err(RomeError::Shape(_))));
    }

    #[test]
    fn emd_subsamples_large_sets_symmetrically() {
        let p = Normal::new(&[0.0, 0.0], 1.0);
        let (a, b) = (draw(&p, 1100, 1), draw(&p, 1100, 2));
        let ab = emd(&a, &b).unwrap();
        assert_eq!(ab, emd(&b, &a).unwrap());
        assert_eq!(ab, emd(&a, &b).unwrap());
        assert!(ab > 0.0 && ab < 1.0);
        assert_ne!(ab, emd_seeded(&a, &b, 99).unwrap());
    }

    #[test]
    fn indicator_identities() {
        let p = Normal::new(&[0.0, 0.0], 1.0);
        let (x1, x2) = (draw(&p, 60, 1), draw(&p, 60, 2));
        assert_eq!(wasserstein_indicator(&x1, &x2, &x2).unwrap(), 0.0);
        assert_eq!(wasserstein_indicator(&x1, &x2, &x1).unwrap(), -1.0);
        assert!(matches!(
            wasserstein_indicator(&x1, &x1, &x2),
            Err(RomeError::DegenerateReference)
        ));
        let wide = Normal::new(&[0.0, 0.0], 2.0);
        assert!(wasserstein_indicator(&x1, &x2, &draw(&wide, 60, 3)).unwrap() > 0.0);
    }

    #[test]
    fn log_likelihood_examples() {
        let p = Normal::new(&[0.0], 1.0);
        assert_abs_diff_eq!(avg_log_likelihood(&p, &ds(&[&[0.0]])).unwrap(), -0.918939, epsilon = 1e-6);
        let x = draw(&p, 2000, 5);
        let truth = avg_log_likelihood(&p, &x).unwrap();
        for other in [Normal::new(&[0.3], 1.0), Normal::new(&[0.0], 1.5), Normal::new(&[0.0], 0.7)] {
            assert!(avg_log_likelihood(&other, &x).unwrap() < truth);
        }
    }

    #[test]
    fn likelihood_factor_examples() {
        let la = [-1.0, -2.0, -1.5];
        assert_eq!(likelihood_factor(&la, &la).unwrap(), (1.0, 0.5));
        let lb: Vec<f64> = la.iter().map(|v| v - std::f64::consts::LN_2).collect();
        let (f, p) = likelihood_factor(&la, &lb).unwrap();
        assert_abs_diff_eq!(f, 2.0, epsilon = 1e-12);
        assert_eq!(p, 0.0);
        assert!(matches!(likelihood_factor(&la, &la[..2]), Err(RomeError::Shape(_))));

        // t = (mean - 1) / (s / sqrt(n)) with F = {1.1, 1.3}: mean 1.2, s = sqrt(0.02)
        let (f, p) = likelihood_factor(&[1.1f64.ln(), 1.3f64.ln()], &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(f, 1.2, epsilon = 1e-12);
        let t: f64 = 0.2 / (0.02f64.sqrt() / 2f64.sqrt());
        // one degree of freedom is a standard Cauchy
        let expected = 0.5 - t.atan() / std::f64::consts::PI;
        assert_abs_diff_eq!(p, expected, epsilon = 1e-9);
    }

    #[test]
    fn report_aggregates() {
        let r = MetricReport::from_values(MetricKind::Jsd, vec![1.0, 2.0, 3.0]);
        assert_eq!((r.mean, r.std, r.reps), (2.0, 1.0, 3));
        assert_eq!(r.csv_row("aniso", "cfg"), "aniso,cfg,jsd,2,1,3");
        let one = MetricReport::from_values(MetricKind::AvgLogLikelihood, vec![0.25]);
        assert_eq!(one.std, 0.0);
        assert_eq!("loglik".parse::<MetricKind>().unwrap(), MetricKind::AvgLogLikelihood);
    }

    fn point_set(n: usize, dims: usize) -> impl Strategy<Value = Dataset> {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dims), n)
            .prop_map(|rows| Dataset::from_rows(&rows, 0).unwrap())
    }

    fn instance() -> impl Strategy<Value = (Dataset, Dataset)> {
        (1usize..=6, 1usize..=3).prop_flat_map(|(n, d)| (point_set(n, d), point_set(n, d)))
    }

    proptest! {
        #[test]
        fn emd_equals_brute_force((x, y) in instance()) {
            let v = emd(&x, &y).unwrap();
            prop_assert!((v - brute_emd(&x, &y)).abs() <= 1e-9);
            prop_assert!((v - emd(&y, &x).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn emd_triangle_inequality(
            (x, y, z) in (1usize..=7, 1usize..=3)
                .prop_flat_map(|(n, d)| (point_set(n, d), point_set(n, d), point_set(n, d)))
        ) {
            let (xy, yz, xz) = (emd(&x, &y).unwrap(), emd(&y, &z).unwrap(), emd(&x, &z).unwrap());
            prop_assert!(xz <= xy + yz + 1e-9);
        }

        #[test]
        fn jsd_is_bounded(mu in -3.0f64..3.0, s in 0.2f64..3.0, seed in 0u64..1000) {
            let p = Normal::new(&[0.0, 0.0], 1.0);
            let q = Normal::new(&[mu, -mu], s);
            let v = jsd(&p, &q, &draw(&p, 50, seed), &draw(&q, 50, seed + 1)).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn log_likelihood_permutation_invariant(seed in 0u64..1000) {
            let p = Normal::new(&[0.5, -1.0], 0.8);
            let x = draw(&p, 40, seed);
            let mut rows: Vec<Vec<f64>> = x.rows().map(|r| r.to_vec()).collect();
            rows.reverse();
            rows.swap(3, 17);
            let shuffled = Dataset::from_rows(&rows, 0).unwrap();
            let (a, b) = (avg_log_likelihood(&p, &x).unwrap(), avg_log_likelihood(&p, &shuffled).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
