use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use rome_core::harness::{self, ExperimentPlan, NamedConfig};
use rome_core::{Dataset, DistributionSpec, FitConfig, MetricKind, RomeModel};

/// Robust multi-modal density estimation from samples.
///
/// Every flag can also be set through an environment variable named after it
/// with a `ROME_` prefix, e.g. `ROME_SEED=3`.
#[derive(Parser)]
#[command(name = "rome", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples from a benchmark distribution.
    Sample {
        #[arg(long, env = "ROME_DIST")]
        dist: String,
        #[arg(long, env = "ROME_N")]
        n: usize,
        #[arg(long, env = "ROME_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "ROME_OUT")]
        out: PathBuf,
    },
    /// Fit an estimator to a CSV of samples and save it as JSON.
    Fit {
        #[arg(long, env = "ROME_INPUT")]
        input: PathBuf,
        /// Path to a JSON config, or the JSON itself. Omitted fields keep their defaults.
        #[arg(long, env = "ROME_CONFIG")]
        config: Option<String>,
        #[arg(long, env = "ROME_OUT")]
        out: PathBuf,
    },
    /// Evaluate a fitted model's log-density at every row of a CSV.
    Density {
        #[arg(long, env = "ROME_MODEL")]
        model: PathBuf,
        #[arg(long, env = "ROME_QUERY")]
        query: PathBuf,
        #[arg(long, env = "ROME_OUT")]
        out: PathBuf,
    },
    /// Draw samples from a fitted model.
    Draw {
        #[arg(long, env = "ROME_MODEL")]
        model: PathBuf,
        #[arg(long, env = "ROME_N")]
        n: usize,
        #[arg(long, env = "ROME_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "ROME_OUT")]
        out: PathBuf,
    },
    /// Repeated-sampling evaluation of one or more configs.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Config to evaluate (path or inline JSON); repeat for several. Defaults to the full estimator.
        #[arg(long = "config", env = "ROME_CONFIG", value_delimiter = ';')]
        configs: Vec<String>,
    },
    /// Evaluate an ablation grid.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// `paper`, `all`, or axes such as `clustering=silhouette|none;downstream=kde|gmm`.
        #[arg(long, env = "ROME_GRID")]
        grid: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 3000 samples, 100 repetitions.
    Paper,
    /// 1000 samples, 20 repetitions.
    Desk,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "ROME_DIST")]
    dist: String,
    #[arg(long, env = "ROME_PRESET", value_enum, default_value = "paper")]
    preset: Preset,
    /// Samples per dataset; overrides the preset.
    #[arg(long, env = "ROME_N")]
    n: Option<usize>,
    /// Repetitions; overrides the preset.
    #[arg(long, env = "ROME_REPS")]
    reps: Option<usize>,
    #[arg(long, env = "ROME_SEED", default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of jsd, jsd_true, wasserstein, loglik.
    #[arg(long, env = "ROME_METRICS", value_delimiter = ',')]
    metrics: Vec<String>,
    #[arg(long, env = "ROME_OUT")]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample { dist, n, seed, out } => {
            let spec = DistributionSpec::by_name(&dist)?;
            spec.sample(n, seed)?.save(&out)?;
            info!("wrote {n} samples of {} to {}", spec.name(), out.display());
        }
        Command::Fit { input, config, out } => {
            let data = Dataset::load(&input).with_context(|| format!("reading {}", input.display()))?;
            let cfg = match config {
                Some(c) => parse_config(&c)?,
                None => FitConfig::default(),
            };
            let model = rome_core::fit(&data, &cfg)?;
            model.save(&out)?;
            info!("fitted {} components", model.components().len());
        }
        Command::Density { model, query, out } => {
            let model = load_model(&model)?;
            let queries = Dataset::load(&query).with_context(|| format!("reading {}", query.display()))?;
            let values = model.log_density_batch(&queries)?;
            let mut body = String::from("log_density\n");
            for v in values {
                body.push_str(&format!("{v:.16e}\n"));
            }
            write_file(&out, body.as_bytes())?;
        }
        Command::Draw { model, n, seed, out } => {
            load_model(&model)?.sample(n, seed)?.save(&out)?;
        }
        Command::Bench { run, configs } => {
            let configs = if configs.is_empty() {
                vec![NamedConfig::from(FitConfig::default())]
            } else {
                configs
                    .iter()
                    .map(|c| parse_config(c).map(NamedConfig::from))
                    .collect::<Result<_>>()?
            };
            run_plan(&run, configs)?;
        }
        Command::Ablate { run, grid } => {
            let configs = harness::parse_grid(&grid)?;
            run_plan(&run, configs)?;
        }
    }
    Ok(())
}

fn run_plan(args: &RunArgs, configs: Vec<NamedConfig>) -> Result<()> {
    let spec = DistributionSpec::by_name(&args.dist)?;
    let mut plan = match args.preset {
        Preset::Paper => ExperimentPlan::new(spec, configs),
        Preset::Desk => ExperimentPlan::desk(spec, configs),
    }
    .with_seed(args.seed);
    if let Some(n) = args.n {
        plan.n = n;
    }
    if let Some(reps) = args.reps {
        plan.reps = reps;
    }
    if !args.metrics.is_empty() {
        plan.metrics = args
            .metrics
            .iter()
            .map(|m| m.parse::<MetricKind>())
            .collect::<Result<_, _>>()?;
    }
    let report = harness::run_plan(&plan)?;
    report
        .write_csv(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    for c in &report.configs {
        for (metric, failed, reason) in &c.failures {
            eprintln!("warning: {} {metric}: {failed} repetitions failed: {reason}", c.name);
        }
    }
    Ok(())
}

fn parse_config(arg: &str) -> Result<FitConfig> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).with_context(|| format!("reading config {arg}"))?
    };
    let cfg: FitConfig = serde_json::from_str(&text).context("parsing config JSON")?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<RomeModel> {
    RomeModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    rome_core::io::write_atomic(path, |w| Ok(w.write_all(bytes)?))?;
    Ok(())
}
