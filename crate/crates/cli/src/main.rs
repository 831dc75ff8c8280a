//! lifecheck command-line driver: analyze sources, run the interpreter,
//! fuzz against the concrete oracle, and score the expected-diagnostic
//! corpus.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lifecheck_core::diag::{Diagnostic, Severity};
use lifecheck_core::gen::{fuzz, FeatureMask};
use lifecheck_core::interp::{run, PathBounds, RunLimits, RunOutcome};
use lifecheck_core::pipeline::{analyze_source, Analysis, AnalyzeOptions, PipelineError};
use lifecheck_core::typeclass::FactsSet;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CLEAN: u8 = 0;
const EXIT_FINDINGS: u8 = 1;
const EXIT_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "lifecheck",
    about = "Use-after-free static analysis for the lifecheck mini-language",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Source files to analyze.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// JSON file with type facts for named types.
    #[arg(long)]
    type_facts: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Enable W101 possible-null-dereference warnings.
    #[arg(long)]
    warnings: bool,
    /// Report E001/E002 only when the pset is exactly {invalid}.
    #[arg(long)]
    certain_only: bool,
    /// Report calls to unknown functions.
    #[arg(long)]
    strict_calls: bool,
    /// Dump each function's CFG in DOT format.
    #[arg(long)]
    dump_cfg: bool,
    /// Dump the per-node input pmaps.
    #[arg(long)]
    dump_pmaps: bool,
}

#[derive(Args)]
struct RunArgs {
    input: PathBuf,
    /// Entry function.
    #[arg(long, default_value = "main")]
    entry: String,
    /// Print every transition.
    #[arg(long)]
    trace: bool,
    /// Step budget.
    #[arg(long, default_value_t = 100_000)]
    max_steps: usize,
    /// Branch choices for undecidable conditions, e.g. "tf" or "10".
    #[arg(long, default_value = "")]
    choices: String,
}

#[derive(Args)]
struct FuzzArgs {
    /// Number of programs to generate.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Base seed; program i uses seed + i.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated features: moves,heap,calls,loops (default all).
    #[arg(long, default_value = "")]
    feature_mask: String,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus directory with style subdirectories.
    dir: PathBuf,
    /// JSON file with type facts for named types.
    #[arg(long)]
    type_facts: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Statically analyze source files.
    Analyze(AnalyzeArgs),
    /// Execute a program under the concrete semantics.
    Run(RunArgs),
    /// Differential-test the analyzer against the concrete oracle.
    Fuzz(FuzzArgs),
    /// Score an expected-diagnostic corpus.
    Corpus(CorpusArgs),
}

fn color_enabled() -> bool {
    match std::env::var("LIFECHECK_COLOR") {
        Ok(v) => v == "1",
        Err(_) => false,
    }
}

fn load_facts(path: &Option<PathBuf>) -> Result<Option<FactsSet>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read type facts at {}", p.display()))?;
            let facts = FactsSet::from_json(&text)
                .map_err(|e| anyhow::anyhow!("{}: {}", p.display(), e))?;
            Ok(Some(facts))
        }
    }
}

fn print_diagnostics(diags: &[Diagnostic], format: Format, out: &mut impl Write) -> Result<()> {
    let color = color_enabled();
    for d in diags {
        match format {
            Format::Text => write!(out, "{}", d.render_text(color))?,
            Format::Json => writeln!(out, "{}", d.render_json())?,
        }
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<u8> {
    let facts = load_facts(&args.type_facts)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut any_error = false;
    for input in &args.inputs {
        let source = std::fs::read_to_string(input)
            .with_context(|| format!("cannot read {}", input.display()))?;
        let opts = AnalyzeOptions {
            facts: facts.clone(),
            warnings: args.warnings,
            certain_only: args.certain_only,
            strict_calls: args.strict_calls,
            order: None,
        };
        let analysis: Analysis =
            match analyze_source(&source, &input.to_string_lossy(), &opts) {
                Ok(a) => a,
                Err(PipelineError::Parse(e)) => bail!("{}", e),
                Err(PipelineError::Sema(e)) => bail!("{}", e),
                Err(PipelineError::Solve(e)) => bail!("{}", e),
            };
        if args.dump_cfg {
            write!(out, "{}", analysis.dump_cfgs())?;
        }
        if args.dump_pmaps {
            write!(out, "{}", analysis.dump_pmaps())?;
        }
        print_diagnostics(&analysis.diagnostics, args.format, &mut out)?;
        any_error |= analysis
            .diagnostics
            .iter()
            .any(|d| d.severity() == Severity::Error);
    }
    Ok(if any_error { EXIT_FINDINGS } else { EXIT_CLEAN })
}

fn parse_choices(spec: &str) -> Result<Vec<bool>> {
    spec.chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| match c {
            't' | 'T' | '1' => Ok(true),
            'f' | 'F' | '0' => Ok(false),
            other => bail!("bad branch choice '{}' (use t/f or 1/0)", other),
        })
        .collect()
}

fn cmd_run(args: &RunArgs) -> Result<u8> {
    let source = std::fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    let opts = AnalyzeOptions::default();
    let analysis = match analyze_source(&source, &args.input.to_string_lossy(), &opts) {
        Ok(a) => a,
        Err(e) => bail!("{}", e),
    };
    let choices = parse_choices(&args.choices)?;
    let mut trace = args.trace.then(Vec::new);
    let outcome = run(
        &analysis.norm,
        &args.entry,
        RunLimits {
            max_steps: args.max_steps,
        },
        &choices,
        trace.as_mut(),
    );
    if let Some(trace) = trace {
        for line in trace {
            println!("  {}", line);
        }
    }
    match outcome {
        RunOutcome::Terminal(state) => {
            println!(
                "terminal: {} live cells, {} live blocks",
                state.memory.len(),
                state.blocks.len()
            );
            Ok(EXIT_CLEAN)
        }
        RunOutcome::Error(e) => {
            println!("error: {}: {}", e.loc, e.message);
            Ok(EXIT_FINDINGS)
        }
        RunOutcome::LimitExceeded => {
            println!("limit exceeded after {} steps", args.max_steps);
            Ok(EXIT_FINDINGS)
        }
    }
}

fn cmd_fuzz(args: &FuzzArgs) -> Result<u8> {
    let mask = FeatureMask::parse(&args.feature_mask).map_err(|e| anyhow::anyhow!(e))?;
    let report = fuzz(args.count, args.seed, mask, PathBounds::default());
    print!("{}", report.render());
    Ok(if report.missed == 0 {
        EXIT_CLEAN
    } else {
        EXIT_FINDINGS
    })
}

fn cmd_corpus(args: &CorpusArgs) -> Result<u8> {
    let facts = load_facts(&args.type_facts)?;
    let opts = AnalyzeOptions {
        facts,
        ..AnalyzeOptions::default()
    };
    let report = lifecheck_core::corpus::run_corpus(&args.dir, &opts)
        .map_err(|e| anyhow::anyhow!("{}", e))?;
    print!("{}", report.render());
    Ok(if report.passes() {
        EXIT_CLEAN
    } else {
        EXIT_FINDINGS
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Run(args) => cmd_run(args),
        Command::Fuzz(args) => cmd_fuzz(args),
        Command::Corpus(args) => cmd_corpus(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("lifecheck: error: {:#}", e);
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
