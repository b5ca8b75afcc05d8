//! `tandeg`: batch analysis and classification of tangentially degenerate submanifolds.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tandeg_core::corpus;
use tandeg_core::report::{self, RunConfig};
use tandeg_core::{Error, ExecMode};

/// Exit status when `corpus verify` finds a mismatch.
const EXIT_MISMATCH: u8 = 5;

#[derive(Parser)]
#[command(
    name = "tandeg",
    version,
    about = "Gauss rank, focal decomposition and cylinder/cone classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank profile, leaf matrices, pencil and focal objects as JSON.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Cylinder / cone verdict; the exit status encodes the verdict.
    Classify {
        input: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Generate or re-check the test corpus.
    #[command(subcommand)]
    Corpus(CorpusCommand),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Write the manifest and entries to a directory.
    Gen {
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Classify every entry and compare against its expectations.
    Verify {
        #[arg(long, default_value = "corpus")]
        dir: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Opts {
    /// Relative singular-value cut for rank decisions.
    #[arg(long)]
    tol_rank: Option<f64>,
    /// Relative eigenvalue separation for pencil distinctness.
    #[arg(long)]
    tol_gap: Option<f64>,
    /// Angular distance below which focal hyperplanes coincide.
    #[arg(long)]
    tol_coincide: Option<f64>,
    /// Number of base samples.
    #[arg(long, default_value_t = report::DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the document here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Run per-sample work on one thread.
    #[arg(long)]
    sequential: bool,
}

impl Opts {
    fn config(&self, command: &str, input: Option<&Path>) -> RunConfig {
        let mut cfg = RunConfig::new(command);
        cfg.input = input.map(|p| p.display().to_string());
        cfg.output = self.output.as_ref().map(|p| p.display().to_string());
        cfg.samples = self.samples;
        cfg.seed = self.seed;
        let t = &mut cfg.tolerances;
        if let Some(v) = self.tol_rank {
            t.rank.rel = v;
        }
        if let Some(v) = self.tol_gap {
            t.pencil.gap = v;
        }
        if let Some(v) = self.tol_coincide {
            t.coincide = v;
        }
        t.mode = if self.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        };
        cfg
    }

    fn emit(&self, text: &str) -> Result<(), Error> {
        match &self.output {
            Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e)),
        }
    }
}

fn analyze_csv(rep: &report::AnalyzeReport) -> String {
    let mut out = String::from("sample,rank,m,basic_residual,focal_residual,errors\n");
    for (i, leaf) in rep.leaves.iter().enumerate() {
        let rank = rep.rank_profile.per_sample[2 * i]
            .r
            .map_or(String::new(), |r| r.to_string());
        let m = leaf
            .leaf
            .as_ref()
            .map_or(String::new(), |d| d.m.to_string());
        let basic = leaf
            .basic_equations
            .map_or(String::new(), |b| format!("{:e}", b.residual));
        let focal = leaf
            .decomposition
            .as_ref()
            .map_or(String::new(), |f| format!("{:e}", f.residual));
        out.push_str(&format!(
            "{i},{rank},{m},{basic},{focal},{}\n",
            leaf.errors.len()
        ));
    }
    out
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Analyze { input, opts } => {
            let cfg = opts.config("analyze", Some(&input));
            cfg.validate()?;
            let rep = report::analyze(&report::read_input(&input)?, &cfg)?;
            let text = match opts.format {
                Format::Json => report::to_json(&rep)?,
                Format::Csv => analyze_csv(&rep),
            };
            opts.emit(&text)?;
            Ok(0)
        }
        Command::Classify { input, opts } => {
            let cfg = opts.config("classify", Some(&input));
            cfg.validate()?;
            let doc = report::classify_input(&report::read_input(&input)?, &cfg)?;
            let text = match opts.format {
                Format::Json => report::to_json(&doc)?,
                Format::Csv => report::verdict_csv(&doc),
            };
            opts.emit(&text)?;
            Ok(doc.exit_code as u8)
        }
        Command::Corpus(CorpusCommand::Gen { out, seed }) => {
            let entries = corpus::generate(seed)?;
            for path in report::write_corpus(&out, seed, &entries)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
        Command::Corpus(CorpusCommand::Verify { dir, opts }) => {
            let cfg = opts.config("corpus verify", Some(&dir));
            cfg.validate()?;
            let (_, entries) = report::read_corpus(&dir)?;
            let checks = report::verify_corpus(&entries, &cfg)?;
            let text = match opts.format {
                Format::Json => report::to_json(&checks)?,
                Format::Csv => report::csv_summary(&checks),
            };
            opts.emit(&text)?;
            for c in checks.iter().filter(|c| !c.ok()) {
                eprintln!("mismatch in {}: {}", c.name, c.mismatches.join("; "));
            }
            Ok(if checks.iter().all(|c| c.ok()) {
                0
            } else {
                EXIT_MISMATCH
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
