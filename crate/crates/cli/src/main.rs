//! `fmcal`: command-line front end for simulation, calibration and landscape scans.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fmcal_core::harness::{
    comparison_targets, compare_objectives, gen_synthetic_targets, report_from_dir, resolve_target,
    run_calibration_campaign, run_landscape, synthetic_instance, write_json, ExperimentConfig, ExperimentReport,
    Optimizer, TargetSpec,
};
use fmcal_core::{simulate, Error, ObjectiveKind, PgpsParams};

#[derive(Parser)]
#[command(name = "fmcal", version, about = "Calibrate an agent-based limit order book simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample synthetic parameter vectors and simulate their target series.
    GenTargets {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Simulate one mid-price series.
    Simulate {
        /// JSON file with the six model parameters; defaults to the configured synthetic target's.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run a calibration campaign against the configured target.
    Calibrate {
        #[arg(long, value_delimiter = ',')]
        optimizer: Option<Vec<Optimizer>>,
        #[arg(long)]
        objective: Option<ObjectiveKind>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Scan a 2-D slice of parameter space and mark the top-k cells.
    Landscape {
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// Simulate every cell with the same seed.
        #[arg(long)]
        common_random_numbers: bool,
    },
    /// Calibrate each target under K-S and MSM and cross-score both results.
    CompareObjectives {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Rebuild `report.json` from the run records in the output directory.
    Report,
    /// Print configuration.
    Config {
        /// Print the built-in defaults instead of the effective configuration.
        #[arg(long)]
        defaults: bool,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::InvalidParameter(_)
            | Error::BudgetTooSmall { .. }
            | Error::DegenerateBounds { .. }
            | Error::LengthMismatch { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    fs::write(path, text).map_err(runtime)
}

fn print_report(report: &ExperimentReport) {
    println!("objective {:?}, {} points, critical value {:.4}", report.objective, report.compared_points, report.critical_value);
    for s in &report.summaries {
        println!(
            "{:>6}: mean {:.4} std {:.4} best {:.4} (run {}) below critical: {}",
            s.optimizer.name(),
            s.mean,
            s.std,
            s.best_value,
            s.best_run,
            s.below_critical
        );
    }
    for w in &report.wilcoxon {
        println!("rank-sum {} vs {}: U = {} p = {:.4}", w.a.name(), w.b.name(), w.test.u, w.test.p);
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(&cli.common)?;
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(runtime)?;
    }
    let out = cfg.output_dir.clone();

    match cli.command {
        Command::Config { defaults } => {
            let shown = if defaults { ExperimentConfig::default() } else { cfg };
            print!("{}", shown.to_toml());
        }
        Command::GenTargets { count } => {
            if let Some(c) = count {
                cfg.target_count = c;
            }
            cfg.validate()?;
            let seed = cfg.master_seed;
            let targets = gen_synthetic_targets(cfg.target_count, &PgpsParams::synthetic_bounds(), &cfg.sim, seed)?;
            for (i, (params, series)) in targets.iter().enumerate() {
                write(&out.join(format!("instance_{i}.csv")), &series.to_csv())?;
                write_json(out.join(format!("instance_{i}.json")), params)?;
            }
            println!("wrote {} targets (seed {seed}) to {}", targets.len(), out.display());
        }
        Command::Simulate { params } => {
            cfg.validate()?;
            let params = match params {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
                    let p: PgpsParams = serde_json::from_str(&text)
                        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
                    p.validate()?;
                    p
                }
                None => match &cfg.target {
                    TargetSpec::Synthetic { index, seed } => {
                        synthetic_instance(*index, &PgpsParams::synthetic_bounds(), &cfg.sim, *seed)?.0
                    }
                    TargetSpec::File { .. } => {
                        return Err(Failure::Config("--params is required with a file target".into()))
                    }
                },
            };
            let series = simulate(&params, &cfg.sim, cfg.master_seed)?;
            write(&out.join("series.csv"), &series.to_csv())?;
            write_json(out.join("series.json"), &serde_json::json!({ "params": params, "seed": cfg.master_seed }))?;
            println!("simulated {} steps to {}", series.len(), out.join("series.csv").display());
        }
        Command::Calibrate { optimizer, objective, repeats, budget } => {
            if let Some(o) = optimizer {
                cfg.optimizers = o;
            }
            if let Some(o) = objective {
                cfg.objective = o;
            }
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            if let Some(b) = budget {
                cfg.budget = b;
            }
            cfg.validate()?;
            write(&out.join("config.toml"), &cfg.to_toml())?;
            let report = run_calibration_campaign(&cfg, Some(&out))?;
            print_report(&report);
        }
        Command::Landscape { resolution, top_k, stride, common_random_numbers } => {
            cfg.landscape.common_random_numbers |= common_random_numbers;
            if let Some(r) = resolution {
                cfg.landscape.resolution = r;
            }
            if let Some(k) = top_k {
                cfg.landscape.top_k = k;
            }
            if let Some(s) = stride {
                cfg.stride = s;
            }
            let run = run_landscape(&cfg)?;
            write(&out.join("grid.csv"), &run.scan.to_csv(&run.mask))?;
            let mut sidecar = run.scan.sidecar_json(run.top_k);
            sidecar["seed"] = cfg.master_seed.into();
            sidecar["stride"] = cfg.stride.into();
            sidecar["objective"] = serde_json::to_value(cfg.objective).map_err(runtime)?;
            sidecar["common_random_numbers"] = cfg.landscape.common_random_numbers.into();
            write_json(out.join("grid.json"), &sidecar)?;
            println!(
                "scanned {} cells; {} tied at the minimum; target cell {:?}",
                run.scan.cells.len(),
                run.scan.tied_at_minimum(),
                run.scan.target_cell
            );
        }
        Command::CompareObjectives { count, budget } => {
            if let Some(c) = count {
                cfg.target_count = c;
            }
            if let Some(b) = budget {
                cfg.budget = b;
            }
            cfg.validate()?;
            let targets = comparison_targets(&cfg)?;
            let table = compare_objectives(&targets, &cfg.ncs_config(), cfg.stride, cfg.master_seed)?;
            write(&out.join("comparison.csv"), &table.to_csv())?;
            write_json(out.join("comparison.json"), &table)?;
            print!("{}", table.to_csv());
        }
        Command::Report => {
            // the stored config wins so `report` needs no flags beyond --out
            let stored = out.join("config.toml");
            if cli.common.config.is_none() && stored.exists() {
                let text = fs::read_to_string(&stored).map_err(runtime)?;
                cfg = ExperimentConfig { output_dir: out.clone(), ..ExperimentConfig::from_toml(&text)? };
            }
            resolve_target(&cfg)?;
            let report = report_from_dir(&cfg, &out)?;
            write_json(out.join("report.json"), &report)?;
            print_report(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
