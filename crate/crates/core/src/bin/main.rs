use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use monoid_embed::family::RootScheme;
use monoid_embed::pipeline::{self, exit_code, RunConfig};

#[derive(Parser)]
#[command(name = "monoid-embed", version, about = "Embed ideal lattices into monoid lattices and verify the construction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in lattices.
    Catalog,
    /// Run every check and report; exit 1 if any fails.
    Verify(RunArgs),
    /// Describe the embedding: ideals, S-sets and fragment sizes.
    Embed(RunArgs),
    /// Cross-check the equality and membership oracles on a small instance.
    OracleCompare(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Independent,
    Complementary,
}

#[derive(Args)]
struct RunArgs {
    /// Catalog name or path to a lattice JSON file.
    #[arg(long, default_value = "M3")]
    lattice: String,
    #[arg(long)]
    kappa: Option<usize>,
    /// Truncation depth N (default: number of compact elements).
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 4)]
    word_bound: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    exhaustive_independence: bool,
    /// How depth-1 nodes are attached to bits.
    #[arg(long, value_enum, default_value = "independent")]
    root_scheme: Scheme,
    /// List S-set nodes up to this depth in `embed`.
    #[arg(long, default_value_t = 2)]
    list_depth: usize,
    /// Record wall-clock time per check (makes reports run-dependent).
    #[arg(long)]
    timings: bool,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            lattice: self.lattice.clone(),
            kappa: self.kappa,
            depth: self.depth,
            word_bound: self.word_bound,
            seed: self.seed,
            trials: self.trials,
            exhaustive_independence: self.exhaustive_independence,
            root_scheme: match self.root_scheme {
                Scheme::Independent => RootScheme::Independent,
                Scheme::Complementary => RootScheme::Complementary,
            },
            list_depth: self.list_depth,
            timings: self.timings,
        }
    }
}

fn emit(text: &str, path: Option<&PathBuf>) -> Result<(), ExitCode> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", p.display());
            ExitCode::from(2)
        }),
        None => {
            // A closed pipe (`| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    let fail = |e: monoid_embed::Error| {
        eprintln!("error: {e}");
        ExitCode::from(exit_code(&e) as u8)
    };
    match cli.command {
        Command::Catalog => {
            let v = pipeline::cmd_catalog().map_err(fail)?;
            emit(&serde_json::to_string_pretty(&v).expect("json"), None)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(a) => {
            let rep = pipeline::cmd_verify(&a.config()).map_err(fail)?;
            emit(&rep.to_json(), a.report.as_ref())?;
            Ok(if rep.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::OracleCompare(a) => {
            let rep = pipeline::cmd_oracle_compare(&a.config()).map_err(fail)?;
            emit(&rep.to_json(), a.report.as_ref())?;
            Ok(if rep.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Embed(a) => {
            let art = pipeline::cmd_embed(&a.config()).map_err(fail)?;
            emit(&serde_json::to_string_pretty(&art).expect("json"), a.report.as_ref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    run(Cli::parse()).unwrap_or_else(|c| c)
}
