//! Command-line driver: train a single fair rule, run CV sweeps, assemble
//! Pareto frontiers, demo the fair hypothesis test, and run the exact
//! independence oracle on a pmf file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairopt::error::Error;
use fairopt::harness::hypothesis::{fair_hypothesis_test, simulate_test_power};
use fairopt::harness::pareto::pareto_frontier;
use fairopt::harness::report::{emit_results, emitted_to_points, read_points_csv, RunMetadata};
use fairopt::harness::{run_cv, train_full, AccuracyMetric, ExperimentConfig};
use fairopt::metrics::pmf::{independence_oracle, PmfFile};
use fairopt::solver::SolverOpts;

#[derive(Parser)]
#[command(
    name = "fairopt",
    about = "Fairness-constrained linear decision rules via moment-tensor constraints",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the dataset path.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Single full-data solve: fitted rule plus fairness report.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Hierarchy level "g,h" (defaults to the first grid entry).
        #[arg(long)]
        level: Option<String>,
        /// Constraint tightness ε (defaults to the first grid entry).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Norm-ball bound λ (defaults to the first grid entry).
        #[arg(long)]
        lambda: Option<f64>,
        /// Where to write the fitted rule and report (JSON).
        #[arg(long, default_value = "rule.json")]
        out: PathBuf,
    },
    /// Repeated k-fold sweep over the hyperparameter grid.
    Cv {
        #[command(flatten)]
        config: ConfigArgs,
        /// Override fold count.
        #[arg(long)]
        folds: Option<usize>,
        /// Override repeat count.
        #[arg(long)]
        repeats: Option<usize>,
        /// Output directory for points.csv and meta.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Recompute the non-dominated frontier from an emitted points CSV.
    Pareto {
        /// points.csv produced by `cv`.
        #[arg(long)]
        points: PathBuf,
        /// Accuracy metric orientation (auc | or2 | pinball_risk).
        #[arg(long, default_value = "auc")]
        metric: String,
        /// Output CSV for the frontier rows.
        #[arg(long, default_value = "frontier.csv")]
        out: PathBuf,
    },
    /// Fair hypothesis test: on data columns or by Monte-Carlo simulation.
    Fairtest {
        /// Known correlation ρ between the tested and protected variables.
        #[arg(long)]
        rho: f64,
        /// Significance level a.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// CSV with columns xi,psi; runs the test on this data.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Simulation: sample size per trial.
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Simulation: mean shift under the alternative.
        #[arg(long, default_value_t = 0.3)]
        mu: f64,
        /// Simulation: Monte-Carlo trials.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 20260810)]
        seed: u64,
    },
    /// Exact rational independence oracle on a pmf file.
    Oracle {
        /// JSON pmf file: {"atoms": [{"u": "1/2", "v": "0", "p": "1/4"}, ...]}.
        #[arg(long)]
        pmf: PathBuf,
        /// Levels to check, as "g,h".
        #[arg(long, default_value = "3,3")]
        level: String,
    },
}

fn parse_level(s: &str) -> Result<(usize, usize), Error> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("level must look like \"g,h\", got '{s}'")));
    }
    let g = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad level component '{}'", parts[0])))?;
    let h = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad level component '{}'", parts[1])))?;
    Ok((g, h))
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config: ExperimentConfig = if args
        .config
        .extension()
        .map(|e| e == "json")
        .unwrap_or(false)
    {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))?
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(ds) = &args.dataset {
        config.dataset = Some(ds.clone());
    }
    Ok(config)
}

fn read_xi_psi(path: &Path) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let xi_col = headers.iter().position(|h| h.trim() == "xi");
    let psi_col = headers.iter().position(|h| h.trim() == "psi");
    let (xi_col, psi_col) = match (xi_col, psi_col) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Schema("fairtest data needs 'xi' and 'psi' columns".into())),
    };
    let mut xi = Vec::new();
    let mut psi = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let get = |col: usize, name: &str| -> Result<f64, Error> {
            record
                .get(col)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Parse {
                    row: i + 2,
                    column: name.into(),
                    message: "expected a number".into(),
                })
        };
        xi.push(get(xi_col, "xi")?);
        psi.push(get(psi_col, "psi")?);
    }
    Ok((xi, psi))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train {
            config,
            level,
            epsilon,
            lambda,
            out,
        } => {
            let cfg = load_config(&config)?;
            let ds = cfg.load_dataset()?;
            let level = level.as_deref().map(parse_level).transpose()?;
            let output = train_full(&cfg, &ds, level, epsilon, lambda)?;
            println!(
                "status: {:?}  objective: {:.6e}  max_violation: {:.3e}  iterations: {}",
                output.solution.status,
                output.solution.objective,
                output.solution.max_violation,
                output.solution.iterations
            );
            println!(
                "fairness: ks = {:.6} ({:?}), eo = {}, mm_hat = {:.6}",
                output.report.ks,
                output.report.method,
                output
                    .report
                    .eo
                    .map(|v| format!("{v:.6}"))
                    .unwrap_or_else(|| "n/a".into()),
                output.report.mm_hat
            );
            std::fs::write(&out, serde_json::to_string_pretty(&output)?)?;
            println!("rule written to {}", out.display());
            Ok(())
        }
        Command::Cv {
            config,
            folds,
            repeats,
            out_dir,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(f) = folds {
                cfg.folds = f;
            }
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            let ds = cfg.load_dataset()?;
            let points = run_cv(&cfg, &ds)?;
            let frontier = pareto_frontier(&points);
            std::fs::create_dir_all(&out_dir)?;
            let csv_path = out_dir.join("points.csv");
            let json_path = out_dir.join("meta.json");
            let method = points.first().map(|p| p.fairness_method);
            let meta = RunMetadata::new(&cfg, method, SolverOpts::default());
            emit_results(&points, &frontier, &csv_path, &json_path, &meta)?;
            println!(
                "{} points ({} on frontier) written to {}",
                points.len(),
                frontier.len(),
                csv_path.display()
            );
            Ok(())
        }
        Command::Pareto { points, metric, out } => {
            let metric = match metric.as_str() {
                "auc" => AccuracyMetric::Auc,
                "or2" => AccuracyMetric::Or2,
                "pinball_risk" => AccuracyMetric::PinballRisk,
                other => {
                    return Err(Error::Config(format!(
                        "unknown metric '{other}' (expected auc | or2 | pinball_risk)"
                    )))
                }
            };
            let rows = read_points_csv(&points)?;
            let pts = emitted_to_points(&rows, metric);
            let frontier = pareto_frontier(&pts);
            let meta_cfg = ExperimentConfig {
                dataset: None,
                schema: Default::default(),
                task: match metric {
                    AccuracyMetric::Auc => fairopt::harness::Task::Svm,
                    AccuracyMetric::Or2 => fairopt::harness::Task::Regression,
                    AccuracyMetric::PinballRisk => fairopt::harness::Task::Quantile,
                },
                seed: 0,
                levels: vec![(1, 1)],
                epsilons: vec![0.0],
                lambdas: vec![1.0],
                schedule: fairopt::harness::ScheduleKind::Eps,
                subgaussian_m: None,
                subgaussian_sigma2: None,
                manual_deltas: None,
                mode: fairopt::constraints::FairnessMode::DisparateImpact,
                folds: 2,
                repeats: 1,
                pinball_over: 1.0,
                pinball_under: 2.0,
                binary_reduction: true,
                standardize: true,
                clamp_negative: None,
            };
            let meta = RunMetadata::new(&meta_cfg, None, SolverOpts::default());
            let json_path = out.with_extension("meta.json");
            emit_results(&frontier, &frontier, &out, &json_path, &meta)?;
            println!("{} frontier points written to {}", frontier.len(), out.display());
            Ok(())
        }
        Command::Fairtest {
            rho,
            alpha,
            data,
            n,
            mu,
            trials,
            seed,
        } => {
            match data {
                Some(path) => {
                    let (xi, psi) = read_xi_psi(&path)?;
                    let out = fair_hypothesis_test(&xi, &psi, rho, alpha)?;
                    println!("{}", serde_json::to_string_pretty(&out)?);
                }
                None => {
                    let est = simulate_test_power(rho, mu, n, trials, alpha, seed)?;
                    println!("{}", serde_json::to_string_pretty(&est)?);
                }
            }
            Ok(())
        }
        Command::Oracle { pmf, level } => {
            let (g, h) = parse_level(&level)?;
            let text = std::fs::read_to_string(&pmf)?;
            let file: PmfFile = serde_json::from_str(&text)?;
            let dist = file.into_pmf()?;
            let outcome = independence_oracle(&dist, g, h)?;
            println!(
                "pass: {}  worst_residual: {}  at: {:?}  failures: {:?}",
                outcome.pass,
                outcome.worst_residual_f64(),
                outcome.worst_level,
                outcome.failures
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message; usage problems exit 1
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
