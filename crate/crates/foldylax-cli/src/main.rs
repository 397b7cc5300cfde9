use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use foldylax_cli::{commands, water, CliError, SceneConfig};

/// Time-domain multiple scattering by clusters of resonant bubbles.
#[derive(Debug, Parser)]
#[command(name = "foldylax", version, about)]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true, env = "FOLDYLAX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the amplitude system and write terms, partial sums, fields and a manifest.
    Simulate {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Run even when the convergence condition fails.
        #[arg(long)]
        force: bool,
    },
    /// Enumerate walks, maximise the path amplitude and report M_max.
    Paths {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Walk length, overrides paths.n.
        #[arg(short = 'n', long)]
        order: Option<usize>,
        /// 1-based start bubble.
        #[arg(long)]
        start: Option<usize>,
        /// 1-based end bubble.
        #[arg(long)]
        end: Option<usize>,
    },
    /// ε sweep of field differences and remainders with log-log fits.
    Scaling {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated ε values, overrides scaling.eps.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Recompute the air-in-water example and compare with the published values.
    ExampleWater {
        /// Also write report.json here.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print the convergence and solvability reports for a config.
    Check { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("`--threads`: must be ≥ 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.into()))?;
    }
    match cli.command {
        Command::Simulate { config, out, force } => {
            let cfg = SceneConfig::load(&config)?;
            let manifest = commands::simulate(&cfg, &out, force)?;
            let flags = manifest["flags"].as_array().cloned().unwrap_or_default();
            println!("wrote {}", out.display());
            if !flags.is_empty() {
                let names: Vec<String> = flags.iter().map(|f| f.as_str().unwrap_or("").to_string()).collect();
                return Err(CliError::Numerical(format!("run flagged: {}", names.join(", "))));
            }
        }
        Command::Paths {
            config,
            out,
            order,
            start,
            end,
        } => {
            let cfg = SceneConfig::load(&config)?;
            let summary = commands::paths(&cfg, &out, order, start, end)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Scaling { config, out, eps } => {
            let cfg = SceneConfig::load(&config)?;
            let summary = commands::scaling(&cfg, &out, eps)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if !(summary["diff_pass"].as_bool() == Some(true) && summary["remainder_pass"].as_bool() == Some(true)) {
                return Err(CliError::Numerical("fitted exponents outside tolerance".into()));
            }
        }
        Command::ExampleWater { out } => {
            let report = water::run().map_err(|e| CliError::Numerical(e.to_string()))?;
            print!("{}", report.text());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            }
            if !report.all_pass() {
                return Err(CliError::Numerical("example values do not match".into()));
            }
        }
        Command::Check { config } => {
            let cfg = SceneConfig::load(&config)?;
            let (report, ok) = commands::check(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !ok {
                return Err(CliError::Numerical("convergence condition fails".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
