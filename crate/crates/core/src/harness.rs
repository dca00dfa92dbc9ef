//! Repeated-sampling experiments: draw fresh datasets, fit every configuration,
//! evaluate the requested metrics, and aggregate over repetitions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::distributions::DistributionSpec;
use crate::error::{Result, RomeError};
use crate::estimators::{clusters_for, fit_with_clusters, Clustering, Downstream, FitConfig, RomeModel};
use crate::metrics::{
    avg_log_likelihood, emd_seeded, jsd, jsd_true, wasserstein_indicator_from, MetricKind, MetricReport,
};
use crate::optics::ClusterSet;
use crate::seed::derive_seed;

const ROLE_X1: u64 = 1;
const ROLE_X2: u64 = 2;
const ROLE_TRUE: u64 = 3;
const ROLE_HAT: u64 = 4;
const ROLE_EMD: u64 = 5;

/// Metrics a plan may request. The likelihood factor is derived afterwards
/// from two configs' log-likelihood series.
pub const PLAN_METRICS: [MetricKind; 4] = [
    MetricKind::Jsd,
    MetricKind::JsdTrue,
    MetricKind::WassersteinIndicator,
    MetricKind::AvgLogLikelihood,
];

#[derive(Debug, Clone, PartialEq)]
pub struct NamedConfig {
    pub name: String,
    pub config: FitConfig,
}

impl NamedConfig {
    pub fn new(name: impl Into<String>, config: FitConfig) -> Self {
        Self {
            name: name.into(),
            config,
        }
    }
}

impl From<FitConfig> for NamedConfig {
    fn from(config: FitConfig) -> Self {
        Self::new(config.label(), config)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub distribution: DistributionSpec,
    pub n: usize,
    pub reps: usize,
    pub base_seed: u64,
    pub configs: Vec<NamedConfig>,
    pub metrics: Vec<MetricKind>,
    /// Debug switch: reuse X1 as X2 in every repetition.
    pub force_identical: bool,
}

impl ExperimentPlan {
    /// Full-size protocol: 3000 samples, 100 repetitions.
    pub fn new(distribution: DistributionSpec, configs: Vec<NamedConfig>) -> Self {
        let metrics = default_metrics(&distribution);
        Self {
            distribution,
            n: 3000,
            reps: 100,
            base_seed: 0,
            configs,
            metrics,
            force_identical: false,
        }
    }

    /// Reduced protocol for a single workstation: 1000 samples, 20 repetitions.
    pub fn desk(distribution: DistributionSpec, configs: Vec<NamedConfig>) -> Self {
        Self {
            n: 1000,
            reps: 20,
            ..Self::new(distribution, configs)
        }
    }

    pub fn with_metrics(mut self, metrics: Vec<MetricKind>) -> Self {
        self.metrics = metrics;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_size(mut self, n: usize, reps: usize) -> Self {
        self.n = n;
        self.reps = reps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(RomeError::Config("reps must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(RomeError::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.configs.is_empty() || self.metrics.is_empty() {
            return Err(RomeError::Config("plan needs at least one config and one metric".into()));
        }
        for m in &self.metrics {
            if !PLAN_METRICS.contains(m) {
                return Err(RomeError::Config(format!("metric {m} cannot be evaluated per repetition")));
            }
        }
        if self.metrics.contains(&MetricKind::JsdTrue) && !self.distribution.has_true_density() {
            return Err(RomeError::Unsupported(format!(
                "{} has no closed-form density for jsd_true",
                self.distribution.name()
            )));
        }
        for c in &self.configs {
            c.config.validate()?;
        }
        Ok(())
    }

    /// The (config index, metric) cells this plan evaluates, in output order.
    /// kNN models cannot sample, so they never get the Wasserstein indicator.
    pub fn cells(&self) -> Vec<(usize, MetricKind)> {
        let mut out = Vec::new();
        for (i, c) in self.configs.iter().enumerate() {
            for &m in &self.metrics {
                if m == MetricKind::WassersteinIndicator && !c.config.can_sample() {
                    continue;
                }
                out.push((i, m));
            }
        }
        out
    }

    fn wants(&self, metric: MetricKind) -> bool {
        self.cells().iter().any(|&(_, m)| m == metric)
    }
}

/// `jsd_true` is included only when the distribution has a closed-form density.
pub fn default_metrics(spec: &DistributionSpec) -> Vec<MetricKind> {
    let mut m = vec![MetricKind::Jsd];
    if spec.has_true_density() {
        m.push(MetricKind::JsdTrue);
    }
    m.extend([MetricKind::WassersteinIndicator, MetricKind::AvgLogLikelihood]);
    m
}

/// Metric values of one repetition, aligned with [`ExperimentPlan::cells`].
/// Failures carry a reason instead of a value.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub rep: usize,
    pub values: Vec<std::result::Result<f64, String>>,
}

/// Runs one repetition. Deterministic in `(plan, rep)`.
pub fn run_rep(plan: &ExperimentPlan, rep: usize) -> Result<RepOutcome> {
    plan.validate()?;
    let r = rep as u64;
    let seed = |role: u64| derive_seed(plan.base_seed, &[r, role]);
    let spec = &plan.distribution;

    let x1 = spec.sample(plan.n, seed(ROLE_X1))?;
    let x2 = if plan.force_identical {
        x1.clone()
    } else {
        spec.sample(plan.n, seed(ROLE_X2))?
    };
    let x_true = if plan.wants(MetricKind::JsdTrue) {
        Some(spec.sample(plan.n, seed(ROLE_TRUE))?)
    } else {
        None
    };
    let emd_seed = seed(ROLE_EMD);
    let reference = if plan.wants(MetricKind::WassersteinIndicator) {
        Some(emd_seeded(&x1, &x2, emd_seed).map_err(|e| e.to_string()))
    } else {
        None
    };

    let mut cache1 = ClusterCache::default();
    let mut cache2 = ClusterCache::default();
    let mut fitted: HashMap<usize, (std::result::Result<RomeModel, String>, Option<std::result::Result<RomeModel, String>>)> =
        HashMap::new();
    let needs_p2 = plan.wants(MetricKind::Jsd);

    let cells = plan.cells();
    let mut values = Vec::with_capacity(cells.len());
    for (ci, metric) in cells {
        let cfg = &plan.configs[ci].config;
        let (p1, p2) = fitted.entry(ci).or_insert_with(|| {
            let p1 = cache1.fit(&x1, cfg);
            let p2 = needs_p2.then(|| {
                if plan.force_identical {
                    p1.clone()
                } else {
                    cache2.fit(&x2, cfg)
                }
            });
            (p1, p2)
        });
        let value = (|| -> std::result::Result<f64, String> {
            let p1 = p1.as_ref().map_err(Clone::clone)?;
            let v = match metric {
                MetricKind::Jsd => {
                    let p2 = p2.as_ref().expect("fitted when jsd requested").as_ref().map_err(Clone::clone)?;
                    jsd(p1, p2, &x1, &x2)
                }
                MetricKind::JsdTrue => jsd_true(p1, spec, &x1, x_true.as_ref().expect("drawn")),
                MetricKind::WassersteinIndicator => {
                    let reference = reference.clone().expect("computed")?;
                    p1.sample(plan.n, seed(ROLE_HAT))
                        .and_then(|x_hat| emd_seeded(&x1, &x_hat, emd_seed))
                        .and_then(|w| wasserstein_indicator_from(reference, w))
                }
                MetricKind::AvgLogLikelihood => avg_log_likelihood(p1, &x2),
                MetricKind::LikelihoodFactor => unreachable!("rejected by validate"),
            };
            v.map_err(|e| e.to_string())
        })();
        values.push(value);
    }
    Ok(RepOutcome { rep, values })
}

/// Clusterings of one dataset, shared by configs with equal clustering fields.
#[derive(Default)]
struct ClusterCache {
    sets: HashMap<(Clustering, usize, usize, u64), std::result::Result<ClusterSet, String>>,
}

impl ClusterCache {
    fn fit(&mut self, x: &Dataset, cfg: &FitConfig) -> std::result::Result<RomeModel, String> {
        let key = (cfg.clustering, cfg.k_min, cfg.k_max, cfg.alpha_k.to_bits());
        let clusters = self
            .sets
            .entry(key)
            .or_insert_with(|| clusters_for(x, cfg).map_err(|e| e.to_string()))
            .clone()?;
        fit_with_clusters(x, cfg, &clusters).map_err(|e| e.to_string())
    }
}

/// Aggregated results of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigReport {
    pub name: String,
    pub config: FitConfig,
    pub metrics: Vec<MetricReport>,
    /// Failed repetitions per metric, with the first failure reason.
    pub failures: Vec<(MetricKind, usize, String)>,
}

impl ConfigReport {
    pub fn metric(&self, kind: MetricKind) -> Option<&MetricReport> {
        self.metrics.iter().find(|m| m.metric == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanReport {
    pub distribution: String,
    pub configs: Vec<ConfigReport>,
}

impl PlanReport {
    pub fn config(&self, name: &str) -> Option<&ConfigReport> {
        self.configs.iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(MetricReport::CSV_HEADER);
        out.push('\n');
        for c in &self.configs {
            for m in &c.metrics {
                let _ = writeln!(out, "{}", m.csv_row(&self.distribution, &c.name));
            }
        }
        out
    }

    /// Writes the CSV through a temporary file so readers never see a partial report.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let body = self.to_csv();
        crate::io::write_atomic(path.as_ref(), |w| {
            use std::io::Write;
            w.write_all(body.as_bytes())?;
            Ok(())
        })
    }
}

/// Runs all repetitions in parallel and aggregates them in repetition order.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanReport> {
    plan.validate()?;
    info!(
        "running {} reps of {} on {} with {} configs",
        plan.reps,
        plan.n,
        plan.distribution.name(),
        plan.configs.len()
    );
    let outcomes: Vec<RepOutcome> = (0..plan.reps)
        .into_par_iter()
        .map(|rep| run_rep(plan, rep))
        .collect::<Result<_>>()?;
    Ok(aggregate(plan, &outcomes))
}

/// Runs all repetitions on the calling thread.
pub fn run_plan_serial(plan: &ExperimentPlan) -> Result<PlanReport> {
    plan.validate()?;
    let outcomes: Vec<RepOutcome> = (0..plan.reps).map(|rep| run_rep(plan, rep)).collect::<Result<_>>()?;
    Ok(aggregate(plan, &outcomes))
}

fn aggregate(plan: &ExperimentPlan, outcomes: &[RepOutcome]) -> PlanReport {
    let cells = plan.cells();
    let mut configs: Vec<ConfigReport> = plan
        .configs
        .iter()
        .map(|c| ConfigReport {
            name: c.name.clone(),
            config: c.config,
            metrics: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for (k, &(ci, metric)) in cells.iter().enumerate() {
        let mut ok = Vec::with_capacity(outcomes.len());
        let mut failed = 0;
        let mut reason = None;
        for o in outcomes {
            match &o.values[k] {
                Ok(v) => ok.push(*v),
                Err(e) => {
                    failed += 1;
                    reason.get_or_insert_with(|| e.clone());
                }
            }
        }
        if let Some(reason) = reason {
            warn!(
                "{} / {metric}: {failed} of {} repetitions failed ({reason})",
                plan.configs[ci].name,
                outcomes.len()
            );
            configs[ci].failures.push((metric, failed, reason));
        }
        configs[ci].metrics.push(MetricReport::from_values(metric, ok));
    }
    PlanReport {
        distribution: plan.distribution.name().to_string(),
        configs,
    }
}

/// The ablation rows for one clustering choice, in table order.
fn table_rows(clustering: Clustering) -> Vec<FitConfig> {
    let base = FitConfig::default().with_clustering(clustering);
    let mut rows = Vec::new();
    for (dec, norm) in [(true, true), (false, true), (false, false)] {
        for ds in [Downstream::Kde, Downstream::Knn] {
            rows.push(base.with_decorrelate(dec).with_normalize(norm).with_downstream(ds));
        }
    }
    rows.push(base.with_downstream(Downstream::Gmm));
    rows
}

/// Parses an ablation grid.
///
/// * `paper`: for each clustering choice, the decorrelation/normalisation
///   corners with KDE and kNN downstream, plus a GMM row.
/// * `all`: every combination of the four switches.
/// * axis syntax, e.g. `clustering=silhouette|none;downstream=kde|gmm`, where
///   unlisted axes keep their default value.
pub fn parse_grid(spec: &str) -> Result<Vec<NamedConfig>> {
    let spec = spec.trim();
    let configs: Vec<FitConfig> = match spec {
        "paper" => [Clustering::Silhouette, Clustering::None]
            .into_iter()
            .flat_map(table_rows)
            .collect(),
        "all" => expand(&[
            ("clustering", vec!["silhouette", "none"]),
            ("decorrelate", vec!["true", "false"]),
            ("normalize", vec!["true", "false"]),
            ("downstream", vec!["kde", "gmm", "knn"]),
        ])?,
        _ => {
            let mut axes = Vec::new();
            for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                let (key, values) = part
                    .split_once('=')
                    .ok_or_else(|| RomeError::Config(format!("grid axis {part:?} is not key=v1|v2")))?;
                axes.push((key.trim(), values.split('|').map(str::trim).collect()));
            }
            if axes.is_empty() {
                return Err(RomeError::Config("empty grid".into()));
            }
            expand(&axes)?
        }
    };
    Ok(configs.into_iter().map(NamedConfig::from).collect())
}

fn expand(axes: &[(&str, Vec<&str>)]) -> Result<Vec<FitConfig>> {
    let mut out = vec![FitConfig::default()];
    for (key, values) in axes {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for cfg in &out {
            for v in values {
                next.push(set_axis(*cfg, key, v)?);
            }
        }
        out = next;
    }
    Ok(out)
}

fn set_axis(mut cfg: FitConfig, key: &str, value: &str) -> Result<FitConfig> {
    let bad = || RomeError::Config(format!("invalid value {value:?} for grid axis {key:?}"));
    let flag = |v: &str| match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(bad()),
    };
    match key {
        "clustering" => {
            cfg.clustering = match value {
                "silhouette" => Clustering::Silhouette,
                "none" => Clustering::None,
                _ => return Err(bad()),
            }
        }
        "decorrelate" => cfg.decorrelate = flag(value)?,
        "normalize" => cfg.normalize = flag(value)?,
        "downstream" => {
            cfg.downstream = match value {
                "kde" => Downstream::Kde,
                "gmm" => Downstream::Gmm,
                "knn" => Downstream::Knn,
                _ => return Err(bad()),
            }
        }
        _ => return Err(RomeError::Config(format!("unknown grid axis {key:?}"))),
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionKind;

    fn small_plan(configs: Vec<NamedConfig>, metrics: Vec<MetricKind>) -> ExperimentPlan {
        ExperimentPlan::new(DistributionSpec::standard(DistributionKind::Aniso), configs)
            .with_size(120, 2)
            .with_metrics(metrics)
            .with_seed(11)
    }

    #[test]
    fn same_rep_twice_is_identical() {
        let plan = small_plan(vec![FitConfig::default().into()], PLAN_METRICS.to_vec());
        assert_eq!(run_rep(&plan, 1).unwrap(), run_rep(&plan, 1).unwrap());
        assert_ne!(run_rep(&plan, 0).unwrap(), run_rep(&plan, 1).unwrap());
    }

    #[test]
    fn forced_identical_sets_give_zero_jsd() {
        let mut plan = small_plan(vec![FitConfig::default().into()], vec![MetricKind::Jsd]);
        plan.force_identical = true;
        let out = run_rep(&plan, 0).unwrap();
        assert_eq!(out.values, vec![Ok(0.0)]);
    }

    #[test]
    fn grid_expansion_gives_one_row_per_config_and_metric() {
        let configs = parse_grid("downstream=kde|gmm").unwrap();
        assert_eq!(configs.len(), 2);
        let plan = small_plan(configs, vec![MetricKind::Jsd, MetricKind::AvgLogLikelihood]);
        assert_eq!(run_rep(&plan, 0).unwrap().values.len(), 4);
        let report = run_plan(&plan).unwrap();
        assert_eq!(report.to_csv().lines().count(), 1 + 4);
    }

    #[test]
    fn knn_never_gets_wasserstein() {
        let plan = small_plan(
            vec![FitConfig::default().with_downstream(Downstream::Knn).into()],
            vec![MetricKind::WassersteinIndicator, MetricKind::Jsd],
        );
        assert_eq!(plan.cells(), vec![(0, MetricKind::Jsd)]);
    }

    #[test]
    fn single_rep_has_zero_std() {
        let plan = small_plan(vec![FitConfig::plain_kde().into()], vec![MetricKind::AvgLogLikelihood]).with_size(80, 1);
        let report = run_plan(&plan).unwrap();
        let m = &report.configs[0].metrics[0];
        assert_eq!((m.reps, m.std), (1, 0.0));
        assert!(report.to_csv().ends_with(",0,1\n"));
    }

    #[test]
    fn parallel_matches_serial() {
        let plan = small_plan(parse_grid("downstream=kde|knn").unwrap(), PLAN_METRICS.to_vec()).with_size(100, 3);
        let (par, ser) = (run_plan(&plan).unwrap(), run_plan_serial(&plan).unwrap());
        assert_eq!(par, ser);
        assert_eq!(par.to_csv(), ser.to_csv());
    }

    #[test]
    fn plan_validation() {
        let mut plan = small_plan(vec![FitConfig::default().into()], vec![MetricKind::Jsd]);
        plan.reps = 0;
        assert!(matches!(run_plan(&plan), Err(RomeError::Config(_))));
        let moons = ExperimentPlan::new(
            DistributionSpec::standard(DistributionKind::TwoMoons),
            vec![FitConfig::default().into()],
        )
        .with_metrics(vec![MetricKind::JsdTrue]);
        assert!(matches!(moons.validate(), Err(RomeError::Unsupported(_))));
        assert!(!default_metrics(&moons.distribution).contains(&MetricKind::JsdTrue));
    }

    #[test]
    fn grids() {
        let paper = parse_grid("paper").unwrap();
        assert_eq!(paper.len(), 14);
        assert_eq!(paper[0].name, "silhouette-dec-norm-kde");
        assert_eq!(paper[6].name, "silhouette-dec-norm-gmm");
        assert_eq!(paper[10].name, "noclust-nodec-norm-knn");
        assert_eq!(parse_grid("all").unwrap().len(), 24);
        let axes = parse_grid("clustering=none; normalize=true|false").unwrap();
        assert_eq!(axes.len(), 2);
        assert!(axes.iter().all(|c| c.config.clustering == Clustering::None && c.config.decorrelate));
        assert!(parse_grid("bogus=1").is_err());
        assert!(parse_grid("downstream=svm").is_err());
        assert!(parse_grid("").is_err());
    }

    #[test]
    fn csv_is_written_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let plan = small_plan(vec![FitConfig::plain_kde().into()], vec![MetricKind::AvgLogLikelihood]).with_size(50, 2);
        let report = run_plan(&plan).unwrap();
        report.write_csv(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), report.to_csv());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
