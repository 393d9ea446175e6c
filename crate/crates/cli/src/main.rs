//! Experiment runner for the LMEEC / LEACH simulator.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lmeec_core::engine::{self, write_trace, Protocol, TraceLevel};
use lmeec_core::experiment::{calibrate_threshold, run_experiment, ExperimentOptions};
use lmeec_core::{Error, RunConfig};

const EXIT_VALIDATION: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "lmeec",
    version,
    about = "Layered multi-hop clustering vs. LEACH, round-based WSN simulator"
)]
struct Cli {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one setting, e.g. `--set radio.e_elec=1e-8` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory.
    #[arg(long, default_value = "results", global = true)]
    out: PathBuf,

    /// Write full NDJSON event traces.
    #[arg(long, global = true)]
    trace: bool,

    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep node counts × seeds × protocols and write runs.csv, summary.csv, summary.json.
    Run,
    /// Search the election threshold base for a target first-round head fraction.
    Calibrate {
        #[arg(long, default_value_t = 0.075)]
        target: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Run a single simulation and write its event trace.
    Trace {
        #[arg(long, default_value = "lmeec")]
        protocol: Protocol,
        /// Node count (defaults to the first configured count).
        #[arg(long)]
        n: Option<usize>,
        /// Seed (defaults to the first configured seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Write the trace to stdout instead of the output directory.
        #[arg(long)]
        stdout: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    if cli.dump_config {
        print!("{}", cfg.to_toml_string());
        return ExitCode::SUCCESS;
    }
    let Some(command) = &cli.command else {
        eprintln!("error: no subcommand given (try `lmeec run`)");
        return ExitCode::from(EXIT_VALIDATION);
    };

    match dispatch(command, &cli, &cfg) {
        Ok(code) => code,
        Err(e @ Error::Config { .. }) | Err(e @ Error::Parse(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
        // output piped into something like `head`
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}

fn dispatch(command: &Command, cli: &Cli, cfg: &RunConfig) -> Result<ExitCode, Error> {
    match command {
        Command::Run => {
            let report = run_experiment(cfg, &cli.out, ExperimentOptions { trace: cli.trace })?;
            for row in &report.summary {
                let fnd = row.fnd_s.map_or_else(
                    || "-".to_string(),
                    |s| format!("{:.1} ({}/{})", s.mean, s.count, row.runs),
                );
                println!(
                    "{:<6} n={:<4} avg_dissipated={:.4} J  fnd={}",
                    row.protocol, row.n, row.avg_dissipated_j.mean, fnd
                );
            }
            for f in &report.files {
                log::info!("wrote {}", f.display());
            }
            if report.complete() {
                println!("{} runs written to {}", report.records.len(), cli.out.display());
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "partial results: {} run(s) failed, see {}",
                    report.failures.len(),
                    cli.out.join("failures.txt").display()
                );
                Ok(ExitCode::from(EXIT_PARTIAL))
            }
        }
        Command::Calibrate { target, n, trials } => match calibrate_threshold(cfg, *target, *n, *trials) {
            Ok(c) => {
                println!("recommended lmeec.threshold_base = {}", c.threshold_base);
                println!(
                    "achieved fraction {:.4} (hold-out {:.4}) after {} iteration(s); reachable range {:.4}..{:.4}",
                    c.achieved_fraction, c.holdout_fraction, c.iterations, c.bracket.1, c.bracket.0
                );
                Ok(ExitCode::SUCCESS)
            }
            Err(e @ Error::NoConvergence { .. }) => {
                eprintln!("{e}");
                Ok(ExitCode::from(EXIT_PARTIAL))
            }
            Err(e) => Err(e),
        },
        Command::Trace {
            protocol,
            n,
            seed,
            stdout,
        } => {
            let n = n.unwrap_or(cfg.experiment.node_counts[0]);
            let seed = seed.unwrap_or(cfg.experiment.seeds[0]);
            let mut sim = cfg.sim_config(n, seed, *protocol);
            sim.trace = TraceLevel::Full;
            let out = engine::run(&sim)?;
            if *stdout {
                let lock = io::stdout().lock();
                write_trace(&out.events, BufWriter::new(lock))?;
            } else {
                fs::create_dir_all(&cli.out)?;
                let path = cli.out.join(format!("trace_{protocol}_n{n}_s{seed}.ndjson"));
                let mut w = BufWriter::new(fs::File::create(&path)?);
                write_trace(&out.events, &mut w)?;
                w.flush()?;
                println!("{} events written to {}", out.events.len(), path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
