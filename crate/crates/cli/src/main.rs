use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qsens::commands::{self, TimetagInput};
use qsens::config::ModeSelection;
use qsens::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "qsens", version, about = "Simulate and analyse quantum plasmonic kinetics experiments")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration, or a manifest from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> CliResult<RunConfig> {
        RunConfig::load(&self.config, self.seed)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise one dataset per configured injection.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Bootstrap the rate and affinity estimates from datasets.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Which noise model(s) to run; overrides the config.
        #[arg(long, value_enum)]
        mode: Option<ModeSelection>,
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
    },
    /// Compare measured per-bin spread with the shot-noise laws.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
    },
    /// Convert raw detector time tags into a dataset.
    IngestTimetags {
        #[command(flatten)]
        common: Common,
        /// Analyte concentration recorded in the dataset, M.
        #[arg(long, default_value_t = 0.0)]
        l0: f64,
        /// Merged `channel,timestamp_ps` file.
        #[arg(long, conflicts_with_all = ["channel_a", "channel_b"], required_unless_present = "channel_a")]
        events: Option<PathBuf>,
        /// Herald channel, one `timestamp_ps` per line.
        #[arg(long, requires = "channel_b")]
        channel_a: Option<PathBuf>,
        /// Probe channel, one `timestamp_ps` per line.
        #[arg(long, requires = "channel_a")]
        channel_b: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate { common } => {
            let cfg = common.load()?;
            for path in commands::simulate(&cfg, &common.out)? {
                println!("{}", path.display());
            }
        }
        Command::Estimate { common, mode, datasets } => {
            let mut cfg = common.load()?;
            if let Some(mode) = mode {
                cfg.estimate.mode = mode;
            }
            let report = commands::estimate(&cfg, &datasets, &common.out)?;
            print!("{}", commands::format_table(&report));
        }
        Command::Compare { common, datasets } => {
            let cfg = common.load()?;
            for path in commands::compare(&cfg, &datasets, &common.out)? {
                println!("{}", path.display());
            }
        }
        Command::IngestTimetags { common, l0, events, channel_a, channel_b } => {
            let cfg = common.load()?;
            let input = match (events, channel_a, channel_b) {
                (Some(e), _, _) => TimetagInput::Merged(e),
                (None, Some(a), Some(b)) => TimetagInput::PerChannel { a, b },
                _ => return Err(CliError::Config("give --events or both --channel-a and --channel-b".into())),
            };
            for path in commands::ingest_timetags(&cfg, &input, l0, &common.out)? {
                println!("{}", path.display());
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
