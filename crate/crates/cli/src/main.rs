use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snapzip_cli::commands::{cmd_analyze, cmd_baseline, cmd_budget, cmd_sample, cmd_sweep, AnalyzeOps};
use snapzip_cli::config::{Overrides, RunConfig};
use snapzip_cli::{CliError, CliResult};
use snapzip_core::analysis::{CollapseOptions, Column};
use snapzip_core::Exec;

#[derive(Parser)]
#[command(name = "snapzip", version, about = "Snapshot sampling and compression-based diagonal entropy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    baseline_file: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    bond_cap: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            baseline_file: self.baseline_file.clone(),
            tol: self.tol,
            bond_cap: self.bond_cap,
        });
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build or extend a table of random-sequence code lengths.
    Baseline {
        /// Sequence lengths; taken from the config sizes when omitted.
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        baseline_file: Option<PathBuf>,
    },
    /// Write snapshot files and log-probability sidecars.
    Sample(RunArgs),
    /// Estimate s_d, E[CID] and observables over the parameter grid.
    Sweep(RunArgs),
    /// Smooth, differentiate and collapse a sweep table.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "s_d")]
        column: String,
        #[arg(long, default_value_t = 0)]
        smooth: usize,
        #[arg(long, value_delimiter = ',')]
        derivative: Vec<usize>,
        #[arg(long)]
        peaks: bool,
        #[arg(long)]
        gamma: bool,
        #[arg(long)]
        collapse: bool,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.4,0.4")]
        window: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,1.0")]
        start: Vec<f64>,
    },
    /// Smallest N_s with σ_CID ≤ α ε for every grid point.
    Budget {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1 << 16)]
        cap: usize,
    },
}

fn pair(v: &[f64], name: &str) -> CliResult<(f64, f64)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(CliError::Invalid(format!("--{name} takes two comma-separated numbers"))),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        snapzip_core::exec::set_threads(t);
    }
    let exec = Exec::Parallel;
    match cli.command {
        Command::Baseline { lengths, k, seed, out, config, baseline_file } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let lengths = if lengths.is_empty() {
                let cfg = cfg.as_ref().ok_or_else(|| CliError::Invalid("give --lengths or --config".into()))?;
                cfg.model.sizes.iter().map(|&l| cfg.sites(l)).collect::<CliResult<Vec<_>>>()?
            } else {
                lengths
            };
            let k = k.or(cfg.as_ref().map(|c| c.estimator.baseline_k)).unwrap_or(100);
            let seed = match seed {
                Some(s) => s,
                None => cfg
                    .as_ref()
                    .ok_or_else(|| CliError::Invalid("a seed is mandatory: pass --seed".into()))?
                    .baseline_seed()?,
            };
            let out = out
                .or(baseline_file)
                .or_else(|| cfg.as_ref().and_then(|c| c.estimator.baseline_file.clone()))
                .ok_or_else(|| CliError::Invalid("give --out".into()))?;
            let t = cmd_baseline(&lengths, k, seed, &out, exec)?;
            eprintln!("{}: {} entries", out.display(), t.lengths().len());
        }
        Command::Sample(args) => {
            let cfg = args.load()?;
            let dir = args
                .out
                .clone()
                .or_else(|| cfg.output.dir.clone())
                .ok_or_else(|| CliError::Invalid("give --out or [output] dir".into()))?;
            let files = cmd_sample(&cfg, &dir, exec)?;
            eprintln!("wrote {} snapshot files to {}", files.len(), dir.display());
        }
        Command::Sweep(args) => {
            let cfg = args.load()?;
            let out = args.out.clone().or_else(|| cfg.output.table.clone());
            let table = cmd_sweep(&cfg, out.as_deref(), exec)?;
            if out.is_none() {
                print!("{}", table.to_csv());
            }
            let failed = table.rows.iter().filter(|r| r.status.starts_with("error")).count();
            if failed > 0 {
                eprintln!("{failed} of {} rows failed; see the status column", table.rows.len());
            }
        }
        Command::Analyze { input, out, column, smooth, derivative, peaks, gamma, collapse, window, start } => {
            let column: Column = column.parse()?;
            let mut ops = AnalyzeOps::new(column);
            ops.smooth = smooth;
            ops.derivatives = derivative;
            ops.peaks = peaks;
            ops.gamma = gamma;
            if collapse {
                ops.collapse = Some(CollapseOptions::new(pair(&window, "window")?, pair(&start, "start")?));
            }
            let rows = cmd_analyze(&input, &ops, &out)?;
            eprintln!("{}: {} rows", out.display(), rows.len());
        }
        Command::Budget { run, alpha, cap } => {
            let cfg = run.load()?;
            let out = run.out.clone().or_else(|| cfg.output.budget.clone());
            let rows = cmd_budget(&cfg, alpha, cap, out.as_deref(), exec)?;
            if out.is_none() {
                for r in rows {
                    println!("L={} param={} N_s={:?} {}", r.l, r.param, r.n_s, r.status);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
