use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use llm_grader::cli::{
    cmd_analyze, cmd_cost, cmd_grade_quiz, cmd_grade_report, cmd_taxonomy, AnalyzeMode, CliError,
    CostInput,
};
use llm_grader::config::Config;

/// Rubric-driven grading of short-answer quizzes and project reports
/// through a chat-completion endpoint, plus agreement analysis between two
/// graders.
#[derive(Parser)]
#[command(name = "grader", version, about)]
struct Cli {
    /// JSON config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Mock transport script (JSON); replaces the live endpoint.
    #[arg(long, global = true)]
    mock: Option<PathBuf>,
    /// Output directory for result files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Maximum concurrent model calls.
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grade a quiz from gold answers and a response CSV.
    GradeQuiz {
        /// gold_answers.json
        #[arg(long)]
        gold: PathBuf,
        /// responses.csv (header student_id,q1,…,qN)
        #[arg(long)]
        responses: PathBuf,
    },
    /// Grade every report (<team>.pdf or <team>.txt) in a directory.
    GradeReport {
        #[arg(long)]
        reports_dir: PathBuf,
        /// rubric.json; the built-in 8-section / 9-point rubric when omitted.
        #[arg(long)]
        rubric: Option<PathBuf>,
    },
    /// Compare two graders' result files and emit agreement tables.
    Analyze {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Grader A results CSV (e.g. the model).
        results_a: PathBuf,
        /// Grader B results CSV (e.g. the human grader).
        results_b: PathBuf,
    },
    /// Categorize deduction explanations into reason categories.
    Taxonomy {
        /// Results CSV to categorize (grader A).
        results: PathBuf,
        /// Optional second results CSV for a side-by-side comparison.
        results_b: Option<PathBuf>,
        /// Custom taxonomy.json ruleset.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Estimate API cost from a run manifest or a what-if scenario.
    Cost {
        /// Read usage from a run manifest.
        #[arg(long, conflicts_with_all = ["calls", "in_tokens", "out_tokens", "cached_fraction"])]
        manifest: Option<PathBuf>,
        /// Number of model calls in the scenario.
        #[arg(long, default_value_t = 1)]
        calls: u64,
        /// Input tokens per call.
        #[arg(long, default_value_t = 0)]
        in_tokens: u64,
        /// Output tokens per call.
        #[arg(long, default_value_t = 0)]
        out_tokens: u64,
        /// Fraction of input tokens served from cache, overriding the config.
        #[arg(long)]
        cached_fraction: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Quiz,
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(concurrency) = cli.concurrency {
        config.max_concurrency = concurrency.max(1);
    }
    let mock = cli.mock.as_deref();
    let out = cli.out.as_path();

    match cli.command {
        Command::GradeQuiz { gold, responses } => {
            let outcome = cmd_grade_quiz(&gold, &responses, out, &config, mock)?;
            println!(
                "graded {} item(s), {} auto-zeroed, {} escalated ({} reused); {} call(s) made",
                outcome.counts.graded,
                outcome.counts.auto_zero,
                outcome.counts.escalated,
                outcome.counts.reused,
                outcome.calls_made,
            );
            println!("results: {}", outcome.results_path.display());
            println!("totals: {}", outcome.totals_path.display());
            println!("manifest: {}", outcome.manifest_path.display());
        }
        Command::GradeReport { reports_dir, rubric } => {
            let outcome = cmd_grade_report(&reports_dir, rubric.as_deref(), out, &config, mock)?;
            println!("graded {} report(s), {} skipped", outcome.graded, outcome.skipped.len());
            for (team, reason) in &outcome.skipped {
                eprintln!("skipped {team}: {reason}");
            }
            println!("section grades: {}", outcome.section_grades_path.display());
            println!("manifest: {}", outcome.manifest_path.display());
        }
        Command::Analyze { mode, results_a, results_b } => {
            let mode = match mode {
                ModeArg::Quiz => AnalyzeMode::Quiz,
                ModeArg::Report => AnalyzeMode::Report,
            };
            let outcome = cmd_analyze(&results_a, &results_b, mode, out, &config)?;
            let table = std::fs::read_to_string(&outcome.md_path).unwrap_or_default();
            print!("{table}");
            println!("tables: {} and {}", outcome.csv_path.display(), outcome.md_path.display());
        }
        Command::Taxonomy { results, results_b, rules } => {
            let outcome = cmd_taxonomy(&results, results_b.as_deref(), rules.as_deref(), out)?;
            let table = std::fs::read_to_string(&outcome.md_path).unwrap_or_default();
            print!("{table}");
            println!("tables: {} and {}", outcome.csv_path.display(), outcome.md_path.display());
        }
        Command::Cost { manifest, calls, in_tokens, out_tokens, cached_fraction } => {
            let input = match &manifest {
                Some(path) => CostInput::Manifest(path),
                None => CostInput::Scenario {
                    calls,
                    input_tokens_per_call: in_tokens,
                    output_tokens_per_call: out_tokens,
                    cached_fraction,
                },
            };
            let dollars = cmd_cost(input, &config)?;
            println!("${dollars:.4}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
