mod commands;
mod config;
mod csvio;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{Command, RunConfig, KEYS};
use error::CliError;

/// Calibrate tuning parameters of simulation codes with GP surrogates.
#[derive(Parser)]
#[command(name = "codetune", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Fit a GP surrogate to computer (and optionally experimental) data.
    Fit(RunArgs),
    /// Estimate tuning parameters with ANLS, SMLE, full MLE or Max-min.
    Calibrate(RunArgs),
    /// Run the seeded comparison over the builtin test functions.
    Benchmark(RunArgs),
    /// Build a sequential IMSE design for a simulator.
    Design(RunArgs),
    /// Pretty-print a stored report.
    Report {
        path: PathBuf,
        /// Print the stored JSON instead of a summary.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value file, or an earlier JSON report to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; falls back to CODETUNE_JOBS, then all cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Further settings as --key value (see the key list below).
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn key_help(cmd: Command) -> String {
    let mut s = String::from("Keys (default):\n");
    for k in KEYS.iter().filter(|k| k.commands.contains(&cmd)) {
        let d = if k.default.is_empty() { "unset" } else { k.default };
        s.push_str(&format!("  {:<18} {}  [{d}]\n", k.name, k.doc));
    }
    s
}

/// Removes `--name value` or `--name=value` from the trailing overrides.
/// Clap stops recognising its own flags once the first override appears.
fn take_flag(args: &mut Vec<String>, name: &str) -> Result<Option<String>, CliError> {
    let mut found = None;
    let mut i = 0;
    while i < args.len() {
        if let Some(v) = args[i].strip_prefix(name).and_then(|r| r.strip_prefix('=')) {
            found = Some(v.to_string());
            args.remove(i);
        } else if args[i] == name {
            args.remove(i);
            if i >= args.len() {
                return Err(CliError::config(format!("{name} needs a value")));
            }
            found = Some(args.remove(i));
        } else {
            i += 1;
        }
    }
    Ok(found)
}

fn init_pool(jobs: Option<usize>) -> Result<(), CliError> {
    let jobs = match jobs {
        Some(j) => j,
        None => match std::env::var("CODETUNE_JOBS") {
            Ok(v) if !v.trim().is_empty() => v.trim().parse().map_err(|_| CliError::config(format!("CODETUNE_JOBS: cannot parse '{v}'")))?,
            _ => 0,
        },
    };
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(|e| CliError::config(e.to_string()))
}

fn execute(command: Command, mut a: RunArgs) -> Result<String, CliError> {
    for o in a.overrides.iter_mut().filter(|o| o.as_str() == "-o") {
        *o = "--out".into();
    }
    let jobs = match take_flag(&mut a.overrides, "--jobs")? {
        Some(v) => Some(v.parse().map_err(|_| CliError::config(format!("--jobs: cannot parse '{v}'")))?),
        None => a.jobs,
    };
    init_pool(jobs)?;
    let mut cfg = RunConfig::defaults(command);
    if let Some(path) = take_flag(&mut a.overrides, "--config")?.map(PathBuf::from).or(a.config) {
        cfg.load_file(&path)?;
    }
    if let Some(seed) = a.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &a.out {
        cfg.set("out", &out.to_string_lossy())?;
    }
    cfg.apply_overrides(&a.overrides)?;
    let path = commands::run(&cfg, command)?;
    Ok(format!("report written to {}\n", path.display()))
}

fn main() -> ExitCode {
    let mut cmd = Cli::command();
    for c in [Command::Fit, Command::Calibrate, Command::Benchmark, Command::Design] {
        cmd = cmd.mut_subcommand(c.name(), |s| s.after_long_help(key_help(c)));
    }
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Sub::Fit(a) => execute(Command::Fit, a),
        Sub::Calibrate(a) => execute(Command::Calibrate, a),
        Sub::Benchmark(a) => execute(Command::Benchmark, a),
        Sub::Design(a) => execute(Command::Design, a),
        Sub::Report { path, json } => commands::show(&path, json),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
