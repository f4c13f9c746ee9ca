mod artifact;
mod commands;
mod config;
mod error;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

const OVERRIDES: &str = "\
Any configuration field can be set on the command line as `--KEY VALUE` (or
`--KEY=VALUE`), using dots for nested fields, for example
`--sizes '[100, 654]' --mlp.hidden 64 --paths.output-dir out`. Values are read
as JSON when they parse, otherwise as strings.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.";

#[derive(Parser)]
#[command(name = "bnfuse", version, about = "Fuse Bayesian-network and text-classifier symptom predictions", after_help = OVERRIDES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Worker threads for (n, seed) cells.
    #[arg(long)]
    jobs: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset bundle (tabular data, mentions, text
    /// probabilities, optional embeddings).
    #[command(after_help = OVERRIDES)]
    Generate(Common),
    /// Fit networks, text classifiers and consistency tables for every
    /// (n, seed) cell.
    #[command(after_help = OVERRIDES)]
    Train(Common),
    /// Score trained cells on the test split and write the report.
    #[command(after_help = OVERRIDES)]
    Evaluate(Common),
    /// Posteriors for new patients from one trained cell.
    #[command(after_help = OVERRIDES)]
    Infer {
        #[command(flatten)]
        common: Common,
        /// Tabular CSV of patients (symptom columns optional).
        patients: PathBuf,
        /// Training size of the cell; the first configured size by default.
        #[arg(long)]
        size: Option<usize>,
        /// Seed of the cell; the first configured seed by default.
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; `output-dir/{n}/{seed}/infer.json` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drop symptom-describing sentences from notes.
    #[command(after_help = OVERRIDES)]
    Mask(Common),
}

type Overrides = Vec<(String, String)>;

/// Splits `args` into what clap understands and `--key value` overrides.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), CliError> {
    let cmd = Cli::command();
    let Some(pos) = args
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map(|p| p + 1)
    else {
        return Ok((args, Vec::new()));
    };
    let Some(sub) = cmd.find_subcommand(&args[pos]) else {
        return Ok((args, Vec::new()));
    };
    let known: BTreeSet<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .chain(["help".to_string()])
        .collect();
    let mut kept = args[..=pos].to_vec();
    let mut overrides = Vec::new();
    let mut rest = args[pos + 1..].iter();
    while let Some(arg) = rest.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            kept.push(arg.clone());
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (flag, None),
        };
        if known.contains(name) || name.is_empty() {
            kept.push(arg.clone());
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => rest
                .next()
                .cloned()
                .ok_or_else(|| CliError::Config(format!("`--{name}` needs a value")))?,
        };
        overrides.push((name.to_string(), value));
    }
    Ok((kept, overrides))
}

fn resolve(common: &Common, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref(), overrides)?;
    if common.jobs.is_some() {
        cfg.jobs = common.jobs;
    }
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn run() -> Result<(), CliError> {
    let (args, overrides) = split_overrides(std::env::args().collect())?;
    let cli = Cli::parse_from(args);
    let common = match &cli.command {
        Command::Generate(c) | Command::Train(c) | Command::Evaluate(c) | Command::Mask(c) => c,
        Command::Infer { common, .. } => common,
    };
    let cfg = resolve(common, &overrides)?;
    if common.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    match &cli.command {
        Command::Generate(_) => {
            for path in commands::generate(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Train(_) => {
            let n = commands::train(&cfg)?;
            println!("trained {n} cells into {}", cfg.paths.output_dir.display());
        }
        Command::Evaluate(_) => {
            let report = commands::evaluate(&cfg)?;
            print!("{}", report.to_table());
        }
        Command::Infer {
            patients,
            size,
            seed,
            out,
            ..
        } => {
            let n = size.unwrap_or(cfg.sizes[0]);
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let path = commands::infer(&cfg, patients, n, seed, out.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::Mask(_) => {
            let dropped = commands::mask(&cfg)?;
            println!(
                "dropped {dropped} spans; wrote {}",
                cfg.mask.notes_out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn overrides_are_separated_from_known_flags() {
        let (kept, over) = split_overrides(argv(
            "bnfuse train --jobs 2 --mlp.hidden 16 --sizes=[100] -c cfg.json",
        ))
        .unwrap();
        assert_eq!(kept, argv("bnfuse train --jobs 2 -c cfg.json"));
        assert_eq!(
            over,
            vec![
                ("mlp.hidden".into(), "16".into()),
                ("sizes".into(), "[100]".into())
            ]
        );
        assert!(split_overrides(argv("bnfuse train --plan-seed")).is_err());
    }

    #[test]
    fn infer_positional_survives() {
        let (kept, over) =
            split_overrides(argv("bnfuse infer p.csv --size 100 --baseline v-bn-text")).unwrap();
        assert_eq!(kept, argv("bnfuse infer p.csv --size 100"));
        assert_eq!(over.len(), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
