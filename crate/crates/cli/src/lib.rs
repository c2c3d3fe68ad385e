//! Command-line surface over `bingear-core`: ingest, train, eval, bench and
//! export.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use error::{CliError, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};

const AFTER_HELP: &str = "\
Exit codes: 0 success, 2 data error, 64 usage error, 70 numeric error.

CSV schemas:
  eval     k,recall,ndcg,users
  bench    scorer,queries,wall_ms,flop,bop
  export   node,kind,index,layer,scaler,bits   (bits: 1 = +1, 0 = -1)";

#[derive(Debug, Parser)]
#[command(name = "bingear", version, about = "Binarized graph collaborative filtering", after_help = AFTER_HELP)]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "BINGEAR_THREADS")]
    pub threads: Option<usize>,

    /// Single worker thread and no wall-clock fields in outputs.
    #[arg(long, global = true)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PhaseArg {
    Teacher,
    Student,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScorerArg {
    Bitwise,
    Float,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Binary,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a train/test split and write the dataset cache.
    Ingest {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the teacher, the student, or both.
    #[command(after_help = config::keys_help())]
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        phase: PhaseArg,
    },
    /// Recall and NDCG on the test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,100")]
        k: Vec<usize>,
        #[arg(long, value_enum, default_value = "bitwise")]
        scorer: ScorerArg,
        /// Also write the CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time full-corpus scoring with the bitwise and float paths.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        queries: usize,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-serialize a binarized model or dump it as CSV.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads(cli: &Cli) -> Result<(), CliError> {
    let n = if cli.deterministic { 1 } else { cli.threads.unwrap_or(0) };
    // A pool may already exist when embedded in a test harness.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs one command, writing its normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> Result<(), CliError> {
    init_threads(&cli)?;
    match cli.command {
        Command::Ingest { train, test, out: dir } => {
            let report = commands::ingest(&train, &test, &dir)?;
            write!(out, "{report}")?;
        }
        Command::Train { config, phase } => {
            let cfg = config::RunConfig::load(&config)?;
            let phase = match phase {
                PhaseArg::Teacher => commands::TrainPhase::Teacher,
                PhaseArg::Student => commands::TrainPhase::Student,
                PhaseArg::Both => commands::TrainPhase::Both,
            };
            let s = commands::train(&cfg, phase, cli.deterministic)?;
            writeln!(out, "config_hash={:016x} records={}", s.config_hash, s.records)?;
        }
        Command::Eval { model, data, k, scorer, csv } => {
            let kind = match scorer {
                ScorerArg::Bitwise => commands::ScorerKind::Bitwise,
                ScorerArg::Float => commands::ScorerKind::Float,
            };
            let (text, table) = commands::eval(&model, &data, &k, kind)?;
            if let Some(path) = csv {
                std::fs::write(path, &text)?;
            }
            write!(out, "{text}")?;
            writeln!(err, "{table}")?;
        }
        Command::Bench { model, queries, repeat, seed } => {
            let (text, summary) = commands::bench(&model, queries, repeat, seed)?;
            write!(out, "{text}")?;
            write!(err, "{summary}")?;
        }
        Command::Export { model, format, out: dest } => {
            let format = match format {
                FormatArg::Binary => commands::ExportFormat::Binary,
                FormatArg::Csv => commands::ExportFormat::Csv,
            };
            commands::export(&model, format, &dest)?;
        }
    }
    Ok(())
}
