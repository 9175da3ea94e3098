//! End-to-end run orchestration behind the `grader` binary: grading
//! pipelines, agreement analysis, taxonomy distribution, and cost
//! estimation, with deterministic result artifacts and run manifests.

mod artifacts;
mod manifest;

pub use artifacts::{
    read_quiz_results, read_section_results, write_quiz_results, write_section_results,
    QuizAnalysisRow, QuizResultRow, ReportAnalysisRow, SectionResultRow, SectionVerdict,
    TaxonomyTable,
};
pub use manifest::{digest_file, digest_inputs, manifest_path, InputDigest, RunCounts, RunManifest, UsageSummary};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::client::{
    estimate_cost, quiz_request, report_request, Client, ClientError, CostMeter, DynClient,
    HttpTransport, MockTransport, RetryPolicy, Transport,
};
use crate::config::{Config, ConfigError};
use crate::core::{
    is_empty_answer, GradeSource, QuizQuestion, Score, ScoreScale, TokenUsage,
};
use crate::ingest::{extract_report_text, load_quiz_bundle, load_rubric, IngestError};
use crate::parse::{format_report_grade, grade_or_escalate, parse_report_grade, ParseWarning};
use crate::prompt::{
    render_quiz_prompt, render_quiz_prompt_with_example, render_report_prompt, QuizPromptInputs,
    ReportPromptInputs,
};
use crate::stats::{
    descriptive, holm, match_breakdown, paired_t, pearson, wilcoxon_signed_rank, MatchBreakdown,
    PairedScores, StatsError,
};
use crate::taxonomy::{categorize, distribution, RuleSet, TaxonomyError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("transport exhausted: {0}")]
    Transport(ClientError),
    #[error(transparent)]
    Client(ClientError),
    #[error("label mismatch between inputs: {0}")]
    LabelMismatch(String),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 0 success, 2 ingestion error, 3 transport
    /// exhaustion, 4 analysis label mismatch, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Ingest(_) | CliError::Config(_) | CliError::Taxonomy(_) => 2,
            CliError::Client(ClientError::BadScript { .. }) => 2,
            CliError::Transport(_) => 3,
            CliError::LabelMismatch(_) => 4,
            CliError::Client(_) | CliError::Stats(_) | CliError::Io { .. } => 1,
        }
    }

    fn from_client(error: ClientError) -> CliError {
        match error {
            ClientError::Transport { .. } => CliError::Transport(error),
            other => CliError::Client(other),
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

fn build_client(config: &Config, mock: Option<&Path>) -> Result<DynClient, CliError> {
    let transport: Box<dyn Transport> = match mock {
        Some(path) => Box::new(MockTransport::load(path).map_err(CliError::from_client)?),
        None => Box::new(HttpTransport::from_config(config).map_err(CliError::from_client)?),
    };
    let policy = RetryPolicy::from_config(config);
    let meter = CostMeter::from_config(config).map_err(CliError::from_client)?;
    Ok(Client::new(transport, policy, meter))
}

fn cost_of(usage: TokenUsage, config: &Config) -> f64 {
    let meter = CostMeter::from_config(config).expect("config already validated");
    meter.record(usage);
    estimate_cost(&meter)
}

#[derive(Debug)]
pub struct GradeQuizOutcome {
    pub results_path: PathBuf,
    pub totals_path: PathBuf,
    pub manifest_path: PathBuf,
    pub counts: RunCounts,
    pub calls_made: u64,
}

struct QuizJob {
    student_id: String,
    question_id: u32,
    prompt: String,
    scale: ScoreScale,
}

/// Grades a quiz: loads gold answers and the response CSV, auto-zeroes
/// empty answers without a model call, grades the rest concurrently through
/// the client, and writes per-item results, per-student totals, and a run
/// manifest. When the output directory already holds a completed run over
/// byte-identical inputs, graded items are reused without new calls.
pub fn cmd_grade_quiz(
    gold_path: &Path,
    responses_path: &Path,
    out_dir: &Path,
    config: &Config,
    mock: Option<&Path>,
) -> Result<GradeQuizOutcome, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let digests = vec![
        digest_file(gold_path).map_err(|e| {
            CliError::Ingest(IngestError::Io { path: gold_path.display().to_string(), source: e })
        })?,
        digest_file(responses_path).map_err(|e| {
            CliError::Ingest(IngestError::Io {
                path: responses_path.display().to_string(),
                source: e,
            })
        })?,
    ];
    let mut manifest = RunManifest::new("grade-quiz", config, digests.clone());
    let manifest_file = manifest_path(out_dir);

    let (bundle, ingest_warnings) = match load_quiz_bundle(gold_path, responses_path) {
        Ok(loaded) => loaded,
        Err(error) => {
            manifest.status = "ingest_error".to_string();
            manifest.warnings.push(error.to_string());
            let _ = manifest.write(&manifest_file);
            return Err(error.into());
        }
    };
    manifest.warnings.extend(ingest_warnings);

    // Reuse rows from a completed run over identical inputs.
    let mut reusable: HashMap<(String, u32), QuizResultRow> = HashMap::new();
    if let Some(prior) = RunManifest::load(&manifest_file) {
        if prior.mode == "grade-quiz" && prior.status == "complete" && prior.inputs_match(&digests)
        {
            if let Ok(rows) = read_quiz_results(&out_dir.join("results.csv")) {
                for row in rows {
                    reusable.insert((row.student_id.clone(), row.question_id), row);
                }
            }
        }
    }

    let client = match build_client(config, mock) {
        Ok(client) => client,
        Err(error) => {
            manifest.status = "failed".to_string();
            manifest.warnings.push(error.to_string());
            let _ = manifest.write(&manifest_file);
            return Err(error);
        }
    };

    let questions: HashMap<u32, &QuizQuestion> =
        bundle.questions.iter().map(|q| (q.id, q)).collect();
    let mut responses = bundle.responses.clone();
    responses.sort_by(|a, b| (&a.student_id, a.question_id).cmp(&(&b.student_id, b.question_id)));

    let mut rows: Vec<QuizResultRow> = Vec::with_capacity(responses.len());
    let mut jobs: Vec<QuizJob> = Vec::new();
    let mut counts = RunCounts::default();
    for response in &responses {
        if let Some(row) = reusable.get(&(response.student_id.clone(), response.question_id)) {
            counts.reused += 1;
            rows.push(row.clone());
            continue;
        }
        let question = questions
            .get(&response.question_id)
            .expect("ingestion guarantees responses refer to existing questions");
        if is_empty_answer(&response.answer_text) {
            rows.push(QuizResultRow {
                quiz_id: bundle.quiz_id.clone(),
                student_id: response.student_id.clone(),
                question_id: response.question_id,
                score: Score::ZERO,
                explanation: String::new(),
                source: GradeSource::AutoZero,
                input_tokens: 0,
                output_tokens: 0,
            });
            continue;
        }
        let inputs = QuizPromptInputs::new(
            &question.text,
            &question.gold_answer,
            &response.answer_text,
            question.scale,
        )
        .expect("empty answers were filtered above");
        let prompt = match &config.quiz_example_override {
            Some(example) => render_quiz_prompt_with_example(&inputs, example),
            None => render_quiz_prompt(&inputs),
        };
        jobs.push(QuizJob {
            student_id: response.student_id.clone(),
            question_id: response.question_id,
            prompt,
            scale: question.scale,
        });
    }

    let (graded, fatal) = run_quiz_jobs(&jobs, &client, config);
    for (index, result) in graded {
        let job = &jobs[index];
        rows.push(QuizResultRow {
            quiz_id: bundle.quiz_id.clone(),
            student_id: job.student_id.clone(),
            question_id: job.question_id,
            score: result.score,
            explanation: result.explanation.unwrap_or_default(),
            source: result.source,
            input_tokens: result.usage.input_tokens,
            output_tokens: result.usage.output_tokens,
        });
    }

    for row in &rows {
        match row.source {
            GradeSource::Model => counts.graded += 1,
            GradeSource::AutoZero => counts.auto_zero += 1,
            GradeSource::HumanReviewRequired => counts.escalated += 1,
        }
    }
    // Reused rows were already tallied by source above; keep both views.

    let results_path = out_dir.join("results.csv");
    let totals_path = out_dir.join("totals.csv");
    write_quiz_results(&results_path, &rows)?;

    let mut totals: BTreeMap<(String, String), i64> = BTreeMap::new();
    for row in &rows {
        *totals.entry((row.quiz_id.clone(), row.student_id.clone())).or_insert(0) +=
            row.score.milli();
    }
    let totals_rows: Vec<(String, String, Score)> = totals
        .into_iter()
        .map(|((quiz, student), milli)| (quiz, student, Score::from_milli(milli)))
        .collect();
    artifacts::write_student_totals(&totals_path, &totals_rows)?;

    let usage_total = TokenUsage {
        input_tokens: rows.iter().map(|r| r.input_tokens).sum(),
        output_tokens: rows.iter().map(|r| r.output_tokens).sum(),
    };
    let calls_made = client.meter().calls();
    manifest.set_usage(usage_total, calls_made, cost_of(usage_total, config));
    manifest.counts = counts;

    if let Some(error) = fatal {
        manifest.status = match error {
            ClientError::Transport { .. } => "transport_exhausted".to_string(),
            _ => "failed".to_string(),
        };
        manifest.warnings.push(error.to_string());
        manifest.write(&manifest_file).map_err(|e| io_error(&manifest_file, e))?;
        return Err(CliError::from_client(error));
    }

    manifest.status = "complete".to_string();
    manifest.write(&manifest_file).map_err(|e| io_error(&manifest_file, e))?;
    Ok(GradeQuizOutcome {
        results_path,
        totals_path,
        manifest_path: manifest_file,
        counts,
        calls_made,
    })
}

/// Runs quiz jobs on a bounded worker pool. Per-item parse failures are
/// encoded in the results (one corrective re-ask, then escalation); fatal
/// client errors abort the remaining jobs.
fn run_quiz_jobs<T: Transport>(
    jobs: &[QuizJob],
    client: &Client<T>,
    config: &Config,
) -> (Vec<(usize, crate::core::GradeResult)>, Option<ClientError>) {
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<ClientError>> = Mutex::new(None);
    let done: Mutex<Vec<(usize, crate::core::GradeResult)>> =
        Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = client.policy().max_concurrency.min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= jobs.len() {
                    break;
                }
                match grade_one_quiz_item(&jobs[index], client, config) {
                    Ok(result) => done.lock().unwrap().push((index, result)),
                    Err(error) => {
                        let mut slot = fatal.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(error);
                        }
                        abort.store(true, Ordering::SeqCst);
                        break;
                    }
                }
            });
        }
    });
    (done.into_inner().unwrap(), fatal.into_inner().unwrap())
}

fn grade_one_quiz_item<T: Transport>(
    job: &QuizJob,
    client: &Client<T>,
    config: &Config,
) -> Result<crate::core::GradeResult, ClientError> {
    let request = quiz_request(&job.prompt, config)?;
    let first = client.complete(&request)?;
    let mut reask_error: Option<ClientError> = None;
    let result = grade_or_escalate(first, job.scale, |suffix| {
        let retry_prompt = format!("{}\n\n{suffix}", job.prompt);
        match quiz_request(&retry_prompt, config).and_then(|r| client.complete(&r)) {
            Ok(response) => Some(response),
            Err(error) => {
                reask_error = Some(error);
                None
            }
        }
    });
    if let Some(error) = reask_error {
        return Err(error);
    }
    Ok(result)
}

#[derive(Debug)]
pub struct GradeReportOutcome {
    pub section_grades_path: PathBuf,
    pub manifest_path: PathBuf,
    pub feedback_paths: Vec<PathBuf>,
    pub graded: usize,
    pub skipped: Vec<(String, String)>,
}

struct ReportJob {
    team_id: String,
    prompt: String,
}

/// Grades every report in a directory against a rubric. Extraction and
/// prompt-rendering failures skip that report with a recorded reason; the
/// rest are graded concurrently and written to a section-grade CSV plus one
/// feedback file per team.
pub fn cmd_grade_report(
    reports_dir: &Path,
    rubric_path: Option<&Path>,
    out_dir: &Path,
    config: &Config,
    mock: Option<&Path>,
) -> Result<GradeReportOutcome, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;

    // Discover <team>.pdf / <team>.txt, preferring the PDF and falling back
    // to the sidecar when extraction fails.
    let mut found: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    let entries = std::fs::read_dir(reports_dir).map_err(|e| {
        CliError::Ingest(IngestError::Io { path: reports_dir.display().to_string(), source: e })
    })?;
    for entry in entries {
        let path = entry.map_err(|e| io_error(reports_dir, e))?.path();
        let team = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("pdf") => found.entry(team).or_default().0 = Some(path),
            Some("txt") => found.entry(team).or_default().1 = Some(path),
            _ => {}
        }
    }
    if found.is_empty() {
        return Err(CliError::Ingest(IngestError::Schema {
            path: reports_dir.display().to_string(),
            detail: "no .pdf or .txt reports found".to_string(),
        }));
    }

    let mut digest_targets: Vec<PathBuf> = Vec::new();
    if let Some(rubric) = rubric_path {
        digest_targets.push(rubric.to_path_buf());
    }
    for (pdf, txt) in found.values() {
        if let Some(p) = pdf {
            digest_targets.push(p.clone());
        }
        if let Some(t) = txt {
            digest_targets.push(t.clone());
        }
    }
    let mut digests = Vec::new();
    for target in &digest_targets {
        digests.push(digest_file(target).map_err(|e| {
            CliError::Ingest(IngestError::Io { path: target.display().to_string(), source: e })
        })?);
    }
    let mut manifest = RunManifest::new("grade-report", config, digests);
    let manifest_file = manifest_path(out_dir);

    let rubric = match load_rubric(rubric_path) {
        Ok(rubric) => rubric,
        Err(error) => {
            manifest.status = "ingest_error".to_string();
            manifest.warnings.push(error.to_string());
            let _ = manifest.write(&manifest_file);
            return Err(error.into());
        }
    };

    let client = match build_client(config, mock) {
        Ok(client) => client,
        Err(error) => {
            manifest.status = "failed".to_string();
            manifest.warnings.push(error.to_string());
            let _ = manifest.write(&manifest_file);
            return Err(error);
        }
    };

    let mut skipped: Vec<(String, String)> = Vec::new();
    let mut jobs: Vec<ReportJob> = Vec::new();
    for (team_id, (pdf, txt)) in &found {
        let bundle = match (pdf, txt) {
            (Some(pdf_path), sidecar) => match extract_report_text(pdf_path) {
                Ok(bundle) => Ok(bundle),
                Err(pdf_error) => match sidecar {
                    Some(txt_path) => extract_report_text(txt_path).map_err(|txt_error| {
                        format!("pdf: {pdf_error}; sidecar: {txt_error}")
                    }),
                    None => Err(pdf_error.to_string()),
                },
            },
            (None, Some(txt_path)) => extract_report_text(txt_path).map_err(|e| e.to_string()),
            (None, None) => unreachable!("entries always have at least one path"),
        };
        let bundle = match bundle {
            Ok(bundle) => bundle,
            Err(reason) => {
                skipped.push((team_id.clone(), reason));
                continue;
            }
        };
        let inputs = match ReportPromptInputs::new(&rubric, &bundle.text) {
            Ok(inputs) => inputs,
            Err(error) => {
                skipped.push((team_id.clone(), error.to_string()));
                continue;
            }
        };
        match render_report_prompt(&inputs, config.context_budget_tokens) {
            Ok(prompt) => jobs.push(ReportJob { team_id: team_id.clone(), prompt }),
            Err(error) => skipped.push((team_id.clone(), error.to_string())),
        }
    }

    // Grade reports on the worker pool.
    enum ReportOutcome {
        Graded(crate::parse::ParsedReportGrade),
        Skipped(String),
    }
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<ClientError>> = Mutex::new(None);
    let done: Mutex<Vec<(usize, ReportOutcome)>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = client.policy().max_concurrency.min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= jobs.len() {
                    break;
                }
                let job = &jobs[index];
                let outcome = match report_request(&job.prompt, config)
                    .and_then(|request| client.complete(&request))
                {
                    Ok(response) => match parse_report_grade(&response.content, &rubric) {
                        Ok(parsed) => ReportOutcome::Graded(parsed),
                        Err(error) => ReportOutcome::Skipped(format!("unparseable output: {error}")),
                    },
                    Err(ClientError::ContextOverflow(detail)) => {
                        ReportOutcome::Skipped(format!("context overflow: {detail}"))
                    }
                    Err(error) => {
                        let mut slot = fatal.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(error);
                        }
                        abort.store(true, Ordering::SeqCst);
                        break;
                    }
                };
                done.lock().unwrap().push((index, outcome));
            });
        }
    });
    let fatal = fatal.into_inner().unwrap();
    let mut outcomes = done.into_inner().unwrap();
    outcomes.sort_by_key(|(index, _)| *index);

    let mut section_rows: Vec<SectionResultRow> = Vec::new();
    let mut feedback_paths = Vec::new();
    let mut graded = 0usize;
    for (index, outcome) in outcomes {
        let team_id = &jobs[index].team_id;
        match outcome {
            ReportOutcome::Skipped(reason) => skipped.push((team_id.clone(), reason)),
            ReportOutcome::Graded(parsed) => {
                graded += 1;
                for warning in &parsed.warnings {
                    if let ParseWarning::OverallMismatch { stated, computed } = warning {
                        manifest.warnings.push(format!(
                            "{team_id}: stated overall {stated} replaced by section sum {computed}"
                        ));
                    }
                }
                for grade in &parsed.section_grades {
                    let max = rubric
                        .section_by_name(&grade.section)
                        .expect("parsed sections come from the rubric")
                        .max_points;
                    section_rows.push(SectionResultRow {
                        team_id: team_id.clone(),
                        section: grade.section.clone(),
                        score: grade.score,
                        max_points: max,
                        feedback: grade.feedback.clone(),
                    });
                }
                let feedback_path = out_dir.join(format!("{team_id}.feedback.txt"));
                std::fs::write(&feedback_path, format_report_grade(&parsed) + "\n")
                    .map_err(|e| io_error(&feedback_path, e))?;
                feedback_paths.push(feedback_path);
            }
        }
    }
    skipped.sort();

    let section_grades_path = out_dir.join("section_grades.csv");
    write_section_results(&section_grades_path, &section_rows)?;

    let usage = client.meter().usage();
    manifest.set_usage(usage, client.meter().calls(), cost_of(usage, config));
    manifest.counts =
        RunCounts { graded, skipped: skipped.len(), ..RunCounts::default() };
    for (team, reason) in &skipped {
        manifest.warnings.push(format!("skipped {team}: {reason}"));
    }

    if let Some(error) = fatal {
        manifest.status = match error {
            ClientError::Transport { .. } => "transport_exhausted".to_string(),
            _ => "failed".to_string(),
        };
        manifest.warnings.push(error.to_string());
        manifest.write(&manifest_file).map_err(|e| io_error(&manifest_file, e))?;
        return Err(CliError::from_client(error));
    }

    manifest.status = "complete".to_string();
    manifest.write(&manifest_file).map_err(|e| io_error(&manifest_file, e))?;

    if graded == 0 {
        return Err(CliError::Ingest(IngestError::Schema {
            path: reports_dir.display().to_string(),
            detail: format!("no report was graded ({} skipped)", skipped.len()),
        }));
    }
    Ok(GradeReportOutcome {
        section_grades_path,
        manifest_path: manifest_file,
        feedback_paths,
        graded,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyzeMode {
    Quiz,
    Report,
}

#[derive(Debug)]
pub struct AnalyzeOutcome {
    pub csv_path: PathBuf,
    pub md_path: PathBuf,
    pub breakdown_path: Option<PathBuf>,
    pub quiz_rows: Vec<QuizAnalysisRow>,
    pub breakdown: Option<MatchBreakdown>,
    pub report_rows: Vec<ReportAnalysisRow>,
}

/// Compares two result files from independent graders over the same items.
///
/// Quiz mode consumes per-item results CSVs, sums them to per-student quiz
/// totals, and emits one agreement row per quiz plus an overall row and an
/// exact/over/under match breakdown. Report mode consumes section-grade
/// CSVs and emits one Wilcoxon row per section with Holm-adjusted p-values,
/// marking identical-score sections as not applicable.
pub fn cmd_analyze(
    a_path: &Path,
    b_path: &Path,
    mode: AnalyzeMode,
    out_dir: &Path,
    config: &Config,
) -> Result<AnalyzeOutcome, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    match mode {
        AnalyzeMode::Quiz => analyze_quiz(a_path, b_path, out_dir, config),
        AnalyzeMode::Report => analyze_report(a_path, b_path, out_dir, config),
    }
}

fn analyze_quiz(
    a_path: &Path,
    b_path: &Path,
    out_dir: &Path,
    config: &Config,
) -> Result<AnalyzeOutcome, CliError> {
    let rows_a = read_quiz_results(a_path)?;
    let rows_b = read_quiz_results(b_path)?;
    let key = |row: &QuizResultRow| (row.quiz_id.clone(), row.student_id.clone(), row.question_id);
    let map_a: BTreeMap<_, Score> = rows_a.iter().map(|r| (key(r), r.score)).collect();
    let map_b: BTreeMap<_, Score> = rows_b.iter().map(|r| (key(r), r.score)).collect();
    check_labels(
        map_a.keys().map(|(q, s, n)| format!("{q}/{s}/q{n}")),
        map_b.keys().map(|(q, s, n)| format!("{q}/{s}/q{n}")),
    )?;

    // Per-student totals within each quiz, in exact milli-points.
    let mut totals: BTreeMap<(String, String), (i64, i64)> = BTreeMap::new();
    for ((quiz, student, _), score) in &map_a {
        totals.entry((quiz.clone(), student.clone())).or_default().0 += score.milli();
    }
    for ((quiz, student, _), score) in &map_b {
        totals.entry((quiz.clone(), student.clone())).or_default().1 += score.milli();
    }

    let mut per_quiz: BTreeMap<String, Vec<(String, f64, f64)>> = BTreeMap::new();
    let mut pooled: Vec<(String, f64, f64)> = Vec::new();
    for ((quiz, student), (a_milli, b_milli)) in &totals {
        let a_points = Score::from_milli(*a_milli).as_points();
        let b_points = Score::from_milli(*b_milli).as_points();
        per_quiz.entry(quiz.clone()).or_default().push((student.clone(), a_points, b_points));
        pooled.push((format!("{quiz}/{student}"), a_points, b_points));
    }

    let mut quiz_rows = Vec::new();
    for (quiz, items) in &per_quiz {
        quiz_rows.push(quiz_analysis_row(quiz, items, config.alpha)?);
    }
    if per_quiz.len() > 1 {
        quiz_rows.push(quiz_analysis_row("overall", &pooled, config.alpha)?);
    }

    let pooled_pairs = PairedScores::new(
        pooled.iter().map(|(l, _, _)| l.clone()).collect(),
        pooled.iter().map(|(_, a, _)| *a).collect(),
        pooled.iter().map(|(_, _, b)| *b).collect(),
    )?;
    let breakdown = match_breakdown(&pooled_pairs, 0.0);

    let csv_path = out_dir.join("analysis_quiz.csv");
    let md_path = out_dir.join("analysis_quiz.md");
    let breakdown_path = out_dir.join("match_breakdown.csv");
    artifacts::write_quiz_analysis_csv(&csv_path, &quiz_rows)?;
    artifacts::write_quiz_analysis_markdown(&md_path, &quiz_rows, &breakdown)?;
    artifacts::write_breakdown_csv(&breakdown_path, &breakdown)?;
    Ok(AnalyzeOutcome {
        csv_path,
        md_path,
        breakdown_path: Some(breakdown_path),
        quiz_rows,
        breakdown: Some(breakdown),
        report_rows: Vec::new(),
    })
}

fn quiz_analysis_row(
    label: &str,
    items: &[(String, f64, f64)],
    alpha: f64,
) -> Result<QuizAnalysisRow, CliError> {
    let pairs = PairedScores::new(
        items.iter().map(|(l, _, _)| l.clone()).collect(),
        items.iter().map(|(_, a, _)| *a).collect(),
        items.iter().map(|(_, _, b)| *b).collect(),
    )?;
    let summary = descriptive(&pairs);
    let mut notes: Vec<String> = Vec::new();
    let (t_stat, t_p) = match paired_t(&pairs) {
        Ok(result) => {
            let result = result.at_alpha(alpha);
            (Some(result.statistic), result.p_value)
        }
        Err(error) => {
            notes.push(format!("t-test: {error}"));
            (None, None)
        }
    };
    // Identical score vectors leave nothing to correlate; report the
    // correlation as not applicable rather than a vacuous r = 1.
    let identical = items.iter().all(|(_, a, b)| a == b);
    let (corr, corr_p) = if identical {
        notes.push("correlation: zero variance: graders are identical".to_string());
        (None, None)
    } else {
        match pearson(&pairs) {
            Ok(result) => (Some(result.statistic), result.p_value),
            Err(error) => {
                notes.push(format!("correlation: {error}"));
                (None, None)
            }
        }
    };
    Ok(QuizAnalysisRow {
        label: label.to_string(),
        n: pairs.n(),
        mean_a: summary.mean_a,
        mean_b: summary.mean_b,
        mean_abs_diff: summary.mean_abs_diff,
        t_stat,
        t_p,
        corr,
        corr_p,
        note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
    })
}

fn analyze_report(
    a_path: &Path,
    b_path: &Path,
    out_dir: &Path,
    config: &Config,
) -> Result<AnalyzeOutcome, CliError> {
    let rows_a = read_section_results(a_path)?;
    let rows_b = read_section_results(b_path)?;
    let key = |row: &SectionResultRow| (row.team_id.clone(), row.section.clone());
    let map_a: BTreeMap<_, Score> = rows_a.iter().map(|r| (key(r), r.score)).collect();
    let map_b: BTreeMap<_, Score> = rows_b.iter().map(|r| (key(r), r.score)).collect();
    check_labels(
        map_a.keys().map(|(t, s)| format!("{t}/{s}")),
        map_b.keys().map(|(t, s)| format!("{t}/{s}")),
    )?;

    // Section order follows first appearance in grader A's file.
    let mut sections: Vec<String> = Vec::new();
    for row in &rows_a {
        if !sections.contains(&row.section) {
            sections.push(row.section.clone());
        }
    }
    let teams: BTreeSet<String> = rows_a.iter().map(|r| r.team_id.clone()).collect();

    let mut raw_entries: Vec<(String, f64)> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    let mut rows_without_holm: Vec<ReportAnalysisRow> = Vec::new();
    for section in &sections {
        let labels: Vec<String> = teams.iter().cloned().collect();
        let a: Vec<f64> = teams
            .iter()
            .map(|team| map_a[&(team.clone(), section.clone())].as_points())
            .collect();
        let b: Vec<f64> = teams
            .iter()
            .map(|team| map_b[&(team.clone(), section.clone())].as_points())
            .collect();
        let pairs = PairedScores::new(labels, a, b)?;
        let summary = descriptive(&pairs);
        let test = wilcoxon_signed_rank(&pairs);
        match test.p_value {
            Some(p) => raw_entries.push((section.clone(), p)),
            None => skipped.push(section.clone()),
        }
        rows_without_holm.push(ReportAnalysisRow {
            section: section.clone(),
            n: pairs.n(),
            mean_a: summary.mean_a,
            mean_b: summary.mean_b,
            mean_diff: summary.mean_a - summary.mean_b,
            w_statistic: if test.is_applicable() { Some(test.statistic) } else { None },
            raw_p: test.p_value,
            holm_p: None,
            verdict: SectionVerdict::AllScoresIdentical,
        });
    }

    let holm_result = holm(&raw_entries, &skipped)?;
    let adjusted: HashMap<&str, f64> =
        holm_result.adjusted.iter().map(|(label, p)| (label.as_str(), *p)).collect();

    let report_rows: Vec<ReportAnalysisRow> = rows_without_holm
        .into_iter()
        .map(|mut row| {
            row.holm_p = adjusted.get(row.section.as_str()).copied();
            row.verdict = match (row.raw_p, row.holm_p) {
                (None, _) => SectionVerdict::AllScoresIdentical,
                (Some(_), Some(adjusted_p)) if adjusted_p < config.alpha => {
                    SectionVerdict::Significant
                }
                _ => SectionVerdict::NotSignificant,
            };
            row
        })
        .collect();

    let csv_path = out_dir.join("analysis_report.csv");
    let md_path = out_dir.join("analysis_report.md");
    artifacts::write_report_analysis_csv(&csv_path, &report_rows)?;
    artifacts::write_report_analysis_markdown(&md_path, &report_rows)?;
    Ok(AnalyzeOutcome {
        csv_path,
        md_path,
        breakdown_path: None,
        quiz_rows: Vec::new(),
        breakdown: None,
        report_rows,
    })
}

fn check_labels<I, J>(a: I, b: J) -> Result<(), CliError>
where
    I: Iterator<Item = String>,
    J: Iterator<Item = String>,
{
    let set_a: BTreeSet<String> = a.collect();
    let set_b: BTreeSet<String> = b.collect();
    if set_a == set_b {
        return Ok(());
    }
    let only_a: Vec<&String> = set_a.difference(&set_b).take(3).collect();
    let only_b: Vec<&String> = set_b.difference(&set_a).take(3).collect();
    Err(CliError::LabelMismatch(format!(
        "{} labels only in A (e.g. {:?}), {} only in B (e.g. {:?})",
        set_a.difference(&set_b).count(),
        only_a,
        set_b.difference(&set_a).count(),
        only_b,
    )))
}

#[derive(Debug)]
pub struct TaxonomyOutcome {
    pub csv_path: PathBuf,
    pub md_path: PathBuf,
    pub table: TaxonomyTable,
}

/// Categorizes deduction explanations from one or two result files and
/// emits a count/percentage distribution table (two columns when a second
/// grader's file is given).
pub fn cmd_taxonomy(
    a_path: &Path,
    b_path: Option<&Path>,
    rules_path: Option<&Path>,
    out_dir: &Path,
) -> Result<TaxonomyOutcome, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let rules = match rules_path {
        Some(path) => RuleSet::load(path)?,
        None => RuleSet::default_rules(),
    };

    let tally = |path: &Path| -> Result<(Vec<(usize, usize)>, usize), CliError> {
        let explanations = deduction_explanations(path)?;
        let assignments: Vec<Option<String>> = explanations
            .iter()
            .map(|text| categorize(text, &rules).map(str::to_string))
            .collect();
        let dist = distribution(&assignments, &rules)?;
        Ok((
            dist.per_category.iter().map(|c| (c.count, dist.total)).collect(),
            dist.uncategorized,
        ))
    };

    let (a, uncategorized_a) = tally(a_path)?;
    let (b, uncategorized_b) = match b_path {
        Some(path) => {
            let (b, u) = tally(path)?;
            (Some(b), Some(u))
        }
        None => (None, None),
    };

    let table = TaxonomyTable {
        categories: rules.categories().iter().map(|c| c.to_string()).collect(),
        a,
        b,
        uncategorized_a,
        uncategorized_b,
    };
    let csv_path = out_dir.join("taxonomy.csv");
    let md_path = out_dir.join("taxonomy.md");
    artifacts::write_taxonomy_csv(&csv_path, &table)?;
    artifacts::write_taxonomy_markdown(&md_path, &table)?;
    Ok(TaxonomyOutcome { csv_path, md_path, table })
}

/// Pulls deduction explanations out of a results CSV. Section-grade files
/// (with `max_points`) contribute feedback from below-maximum sections;
/// per-item quiz files contribute non-empty explanation cells.
fn deduction_explanations(path: &Path) -> Result<Vec<String>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        CliError::Ingest(IngestError::Schema {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    })?;
    let headers = reader
        .headers()
        .map_err(|e| {
            CliError::Ingest(IngestError::Schema {
                path: path.display().to_string(),
                detail: e.to_string(),
            })
        })?
        .clone();
    let index = |name: &str| headers.iter().position(|h| h == name);

    if let (Some(score_col), Some(max_col), Some(feedback_col)) =
        (index("score"), index("max_points"), index("feedback"))
    {
        let rows = read_section_results(path)?;
        let _ = (score_col, max_col, feedback_col);
        return Ok(rows
            .into_iter()
            .filter(|row| row.score < row.max_points && !row.feedback.trim().is_empty())
            .map(|row| row.feedback)
            .collect());
    }
    if index("explanation").is_some() {
        let rows = read_quiz_results(path)?;
        return Ok(rows
            .into_iter()
            .filter(|row| !row.explanation.trim().is_empty())
            .map(|row| row.explanation)
            .collect());
    }
    Err(CliError::Ingest(IngestError::Schema {
        path: path.display().to_string(),
        detail: "no explanation or feedback/max_points columns found".to_string(),
    }))
}

/// Cost estimation input: a run manifest, or a synthetic scenario with
/// per-call token counts.
#[derive(Debug, Clone)]
pub enum CostInput<'a> {
    Manifest(&'a Path),
    Scenario {
        calls: u64,
        input_tokens_per_call: u64,
        output_tokens_per_call: u64,
        cached_fraction: Option<f64>,
    },
}

/// Estimated dollars for a manifest's recorded usage (at the rates the run
/// was configured with) or for a what-if scenario (at the current config's
/// rates).
pub fn cmd_cost(input: CostInput<'_>, config: &Config) -> Result<f64, CliError> {
    match input {
        CostInput::Manifest(path) => {
            let manifest = RunManifest::load(path).ok_or_else(|| {
                CliError::Ingest(IngestError::Schema {
                    path: path.display().to_string(),
                    detail: "not a readable run manifest".to_string(),
                })
            })?;
            let meter = CostMeter::from_config(&manifest.config).map_err(CliError::from_client)?;
            meter.record(TokenUsage::new(manifest.usage.input_tokens, manifest.usage.output_tokens));
            Ok(estimate_cost(&meter))
        }
        CostInput::Scenario {
            calls,
            input_tokens_per_call,
            output_tokens_per_call,
            cached_fraction,
        } => {
            let fraction = cached_fraction.unwrap_or(config.cached_input_fraction);
            let meter = CostMeter::new(config.input_rate, config.output_rate, fraction)
                .map_err(CliError::from_client)?;
            meter.record(TokenUsage::new(
                calls * input_tokens_per_call,
                calls * output_tokens_per_call,
            ));
            Ok(estimate_cost(&meter))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let ingest = CliError::Ingest(IngestError::Schema {
            path: "x".to_string(),
            detail: "bad".to_string(),
        });
        assert_eq!(ingest.exit_code(), 2);
        let transport = CliError::Transport(ClientError::Transport {
            attempts: 3,
            last: "HTTP 503".to_string(),
        });
        assert_eq!(transport.exit_code(), 3);
        assert_eq!(CliError::LabelMismatch("x".to_string()).exit_code(), 4);
        assert_eq!(CliError::Client(ClientError::Auth("no".to_string())).exit_code(), 1);
    }

    #[test]
    fn label_mismatch_reports_both_sides() {
        let a = ["q/s1/q1".to_string(), "q/s2/q1".to_string()];
        let b = ["q/s1/q1".to_string(), "q/s3/q1".to_string()];
        let err = check_labels(a.into_iter(), b.into_iter()).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("s2"));
        assert!(text.contains("s3"));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn cost_scenario_examples() {
        let config = Config::default();
        let cost = cmd_cost(
            CostInput::Scenario {
                calls: 700,
                input_tokens_per_call: 450,
                output_tokens_per_call: 40,
                cached_fraction: None,
            },
            &config,
        )
        .unwrap();
        assert!((cost - 1.0675).abs() < 1e-12);

        let cost = cmd_cost(
            CostInput::Scenario {
                calls: 700,
                input_tokens_per_call: 450,
                output_tokens_per_call: 40,
                cached_fraction: Some(0.8),
            },
            &config,
        )
        .unwrap();
        assert!((cost - 0.7525).abs() < 1e-12);

        let cost = cmd_cost(
            CostInput::Scenario {
                calls: 0,
                input_tokens_per_call: 0,
                output_tokens_per_call: 0,
                cached_fraction: None,
            },
            &config,
        )
        .unwrap();
        assert_eq!(cost, 0.0);
    }
}
