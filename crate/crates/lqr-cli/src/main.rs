//! Experiment CLI: offline/online benchmark runs, exact policy iteration
//! traces, an LSTD-Q sample-size sweep, and re-aggregation of saved records.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use lqr::lstdq::{build_features, lstdq};
use lqr::lyapunov::policy_qfun;
use lqr::policy_iter::exact_pi;
use lqr::sim::{rollout, InitialState, RngStream};

use lqr_cli::config::{OfflineConfig, OnlineConfig, RawConfig};
use lqr_cli::error::{CliError, CliResult};
use lqr_cli::experiments::{run_offline_experiment, run_online_experiment};
use lqr_cli::instances;
use lqr_cli::output::{emit, read_records_csv, write_summary_csv, MetricRecord};
use lqr_cli::percentiles::{aggregate, DEFAULT_QUANTILES};

#[derive(Parser)]
#[command(name = "lqr-cli", about = "LQR policy iteration experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Structured TOML config file; CLI flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for all RNG streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for trial parallelism (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-budget offline comparison of control algorithms.
    Offline {
        #[command(flatten)]
        common: Common,
        /// Named preset selecting instance defaults.
        #[arg(long, default_value = "offline-paper")]
        preset: String,
        /// Simulation-step budget per trial.
        #[arg(long)]
        budget: Option<usize>,
        /// Comma-separated algorithm subset.
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<String>>,
    },
    /// Epoch-based adaptive control with regret accounting.
    Online {
        #[command(flatten)]
        common: Common,
        /// `online-paper` or `theory-online`.
        #[arg(long, default_value = "online-paper")]
        preset: String,
        /// Adaptive steps after the warm start (paper preset).
        #[arg(long)]
        horizon: Option<usize>,
        /// Number of epochs (theory preset).
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<String>>,
    },
    /// Exact policy iteration trace under known dynamics.
    PiExact {
        #[command(flatten)]
        common: Common,
        /// `offline-paper`, `adaptive-dean`, or a custom instance file.
        #[arg(long, default_value = "offline-paper")]
        instance: String,
        #[arg(long, default_value_t = 20)]
        iters: usize,
    },
    /// LSTD-Q estimation error versus trajectory length.
    LstdqSweep {
        #[command(flatten)]
        common: Common,
        /// Trajectory lengths to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 40_000, 160_000])]
        lengths: Vec<usize>,
        /// Exploration noise std.
        #[arg(long, default_value_t = 1.0)]
        sigma_eta: f64,
    },
    /// Recompute the percentile summary from a saved records CSV.
    Aggregate {
        /// Records CSV produced by a previous run.
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn init_jobs(jobs: Option<usize>) -> CliResult<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    Ok(())
}

fn load_raw(common: &Common) -> CliResult<RawConfig> {
    let mut raw = match &common.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    if common.seed.is_some() {
        raw.seed = common.seed;
    }
    if common.trials.is_some() {
        raw.trials = common.trials;
    }
    Ok(raw)
}

fn resolve_named_instance(name: &str) -> CliResult<instances::Instance> {
    match name {
        "offline-paper" => Ok(instances::offline_paper()),
        "adaptive-dean" => Ok(instances::adaptive_dean()),
        path => instances::load_custom(std::path::Path::new(path)),
    }
}

fn finish(
    mut records: Vec<MetricRecord>,
    out: &PathBuf,
    format: lqr_cli::config::OutputFormat,
) -> CliResult<()> {
    let summary = {
        let mut sorted = records.clone();
        lqr_cli::output::canonical_sort(&mut sorted);
        aggregate(&sorted, &DEFAULT_QUANTILES)
    };
    emit(&mut records, &summary, out, format)?;
    println!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn run() -> CliResult<()> {
    match Cli::parse().command {
        Command::Offline { common, preset, budget, algorithms } => {
            init_jobs(common.jobs)?;
            let mut raw = load_raw(&common)?;
            if raw.instance.is_none() {
                raw.instance = Some(match preset.as_str() {
                    "offline-paper" => "offline-paper".to_string(),
                    other => {
                        return Err(CliError::Config(format!(
                            "--preset: unknown offline preset `{other}`"
                        )))
                    }
                });
            }
            if budget.is_some() {
                raw.budget = budget;
            }
            if algorithms.is_some() {
                raw.algorithms = algorithms;
            }
            let cfg = OfflineConfig::from_raw(&raw)?;
            let records = run_offline_experiment(&cfg)?;
            finish(records, &common.out, cfg.format)
        }

        Command::Online { common, preset, horizon, epochs, algorithms } => {
            init_jobs(common.jobs)?;
            let mut raw = load_raw(&common)?;
            if raw.preset.is_none() {
                raw.preset = Some(preset);
            }
            if horizon.is_some() {
                raw.horizon = horizon;
            }
            if epochs.is_some() {
                raw.epochs = epochs;
            }
            if algorithms.is_some() {
                raw.algorithms = algorithms;
            }
            let cfg = OnlineConfig::from_raw(&raw)?;
            let records = run_online_experiment(&cfg)?;
            finish(records, &common.out, cfg.format)
        }

        Command::PiExact { common, instance, iters } => {
            let inst = resolve_named_instance(&instance)?;
            let n = inst.sys.state_dim();
            let d = inst.sys.input_dim();
            // K0 = 0 when the open loop is stable, else K0 = -I (requires
            // square B; a custom unstable instance may need its own K0)
            let k0 = if lqr::symmat::is_stable(&inst.sys.a) {
                DMatrix::zeros(d, n)
            } else if n == d {
                DMatrix::<f64>::identity(d, n) * -1.0
            } else {
                return Err(CliError::Config(
                    "instance has an unstable open loop and non-square B; no default K0".into(),
                ));
            };
            let trace = exact_pi(&inst.sys.a, &inst.sys.b, &inst.cost.s, &inst.cost.r, &k0, iters)?;
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("pi_exact.csv");
            let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
            use std::io::Write;
            writeln!(w, "iteration,delta_inf_to_star,rel_cost_err,stable")?;
            for (t, m) in trace.metrics.iter().enumerate() {
                writeln!(
                    w,
                    "{t},{},{},{}",
                    m.delta_inf_to_star.map_or(String::new(), |v| v.to_string()),
                    m.rel_cost_err.map_or(String::new(), |v| v.to_string()),
                    m.stable
                )?;
            }
            println!("wrote {} iterations to {}", trace.metrics.len(), path.display());
            Ok(())
        }

        Command::LstdqSweep { common, lengths, sigma_eta } => {
            init_jobs(common.jobs)?;
            let raw = load_raw(&common)?;
            let trials = raw.trials.unwrap_or(20);
            let seed = raw.seed.unwrap_or(0);
            let inst = instances::offline_paper();
            let k = DMatrix::zeros(inst.sys.input_dim(), inst.sys.state_dim());
            let truth = policy_qfun(
                &inst.sys.a,
                &inst.sys.b,
                &inst.cost.s,
                &inst.cost.r,
                &k,
                inst.sys.sigma_w,
            )?;
            let max_len = lengths.iter().copied().max().unwrap_or(0);
            if max_len == 0 {
                return Err(CliError::Config("--lengths: need at least one positive length".into()));
            }
            let per_trial: Vec<CliResult<Vec<MetricRecord>>> =
                lqr::par::map_indexed(trials, |trial| {
                    let stream = RngStream::new(seed).trial(trial as u64);
                    let mut rng = stream.rng();
                    let traj = rollout(
                        &inst.sys,
                        &inst.cost,
                        &k,
                        sigma_eta,
                        max_len,
                        InitialState::Fresh,
                        &mut rng,
                    )?;
                    let mut out = Vec::new();
                    for &t_len in &lengths {
                        let features = build_features(&traj.prefix(t_len), &k, inst.sys.sigma_w)?;
                        let est = lstdq(&features)?;
                        out.push(MetricRecord {
                            algorithm: "lstdq".into(),
                            trial,
                            step: t_len,
                            metric: "q_err".into(),
                            value: (&est.q - &truth.q).norm(),
                        });
                    }
                    Ok(out)
                });
            let mut records = Vec::new();
            for r in per_trial {
                records.extend(r?);
            }
            finish(records, &common.out, lqr_cli::config::OutputFormat::Csv)
        }

        Command::Aggregate { input, out } => {
            let text = std::fs::read_to_string(&input)?;
            let records = read_records_csv(&text)?;
            let summary = aggregate(&records, &DEFAULT_QUANTILES);
            std::fs::create_dir_all(&out)?;
            let path = out.join("summary.csv");
            let f = std::fs::File::create(&path)?;
            write_summary_csv(&summary, std::io::BufWriter::new(f))?;
            println!("wrote {} summary rows to {}", summary.len(), path.display());
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
