//! `tslto`: generate synthetic instances, solve, evaluate, preprocess real
//! tensors, and run ablations and parameter grids.
//!
//! Every run configuration key is also a flag (`--missing_rate 0.3` or
//! `--missing-rate 0.3`). Values come from defaults, then `--config FILE`,
//! then flags. Exit codes: 0 success, 1 usage error, 2 runtime error.

mod commands;

use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use tslto::config::RunConfig;

use crate::commands::{CliError, Context};

const SUBCOMMANDS: [(&str, &str); 6] = [
    ("generate", "Write a synthetic instance and its manifest to out_dir"),
    ("solve", "Recover X, L and R from an observed tensor and mask"),
    ("evaluate", "Score a solution in out_dir against the truth"),
    ("preprocess", "Smooth a real tensor, optionally rescale it, and inject anomalies and missing entries"),
    ("ablate", "Solve a synthetic instance with each regularizer subset removed"),
    ("grid", "Sweep two config keys across missing rates"),
];

fn cli() -> Command {
    let mut root = Command::new("tslto")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Sparse low-rank Tucker imputation and block-sparse anomaly detection")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in SUBCOMMANDS {
        root = root.subcommand(with_config_flags(Command::new(name).about(about)));
    }
    root
}

fn with_config_flags(mut cmd: Command) -> Command {
    cmd = cmd.arg(Arg::new("config").long("config").value_name("FILE").help("key=value run configuration")).arg(
        Arg::new("jobs")
            .long("jobs")
            .value_name("N")
            .value_parser(clap::value_parser!(usize))
            .help("Concurrent solves for ablate and grid [env: TSLTO_JOBS, default 1]"),
    );
    for (key, default) in RunConfig::default().entries() {
        let mut arg = Arg::new(key)
            .long(key)
            .value_name("VALUE")
            .action(ArgAction::Set)
            .overrides_with(key)
            .help(format!("[default: {default}]"));
        if key.contains('_') {
            arg = arg.alias(key.replace('_', "-"));
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn resolve(m: &ArgMatches) -> Result<Context, CliError> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::Usage(format!("{path}: {e}")))?,
        None => RunConfig::default(),
    };
    for key in RunConfig::keys() {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v).map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    let jobs = match m.get_one::<usize>("jobs") {
        Some(&j) => j,
        None => match std::env::var("TSLTO_JOBS") {
            Ok(v) => {
                v.trim().parse().map_err(|_| CliError::Usage(format!("TSLTO_JOBS must be an integer, got `{v}`")))?
            }
            Err(_) => 1,
        },
    };
    if jobs == 0 {
        return Err(CliError::Usage("jobs must be at least 1".into()));
    }
    Ok(Context { cfg, jobs })
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let outcome = resolve(sub).and_then(|ctx| match name {
        "generate" => commands::generate(&ctx),
        "solve" => commands::solve(&ctx),
        "evaluate" => commands::evaluate(&ctx),
        "preprocess" => commands::preprocess(&ctx),
        "ablate" => commands::ablate(&ctx),
        "grid" => commands::grid(&ctx),
        _ => unreachable!("unknown subcommand {name}"),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
