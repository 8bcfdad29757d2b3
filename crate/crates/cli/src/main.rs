use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};
use deconv_erm_cli::{preset, run_file, run_text, CliError, Options, PRESETS};

/// Empirical risk minimization from indirect observations.
#[derive(Debug, Parser)]
#[command(version, about)]
#[command(group(ArgGroup::new("input").required(true).args(["config", "preset", "list_presets"])))]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a shipped preset instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// Print the preset names and exit.
    #[arg(long)]
    list_presets: bool,
    /// Output directory for the artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if args.list_presets {
        for (name, _) in PRESETS {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let opts = Options {
        out: args.out,
        seed: args.seed,
        threads: args.threads,
    };
    let result: Result<_, CliError> = match (&args.config, &args.preset) {
        (Some(path), _) => run_file(path, &opts),
        (None, Some(name)) => preset(name).and_then(|text| run_text(text, &opts)),
        (None, None) => unreachable!("clap requires an input"),
    };
    match result {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
