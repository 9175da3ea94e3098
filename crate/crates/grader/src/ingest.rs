//! Loaders for gold answers, student response CSVs, rubric configuration,
//! and report documents (PDF with a plain-text sidecar fallback).
//!
//! File formats:
//! - `gold_answers.json`: `{ quiz_id, questions: [ { id, text, gold_answer,
//!   full_score?, increment? } ] }`
//! - `responses.csv`: header `student_id,q1,…,qN`; UTF-8; RFC-4180 quoting
//! - `rubric.json`: `{ sections: [ { name, max_points, criteria } ],
//!   total_points? }`
//! - `reports/`: `<team_id>.pdf` or `<team_id>.txt`

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::core::{CoreError, QuizQuestion, Rubric, RubricSection, Score, ScoreScale, StudentResponse};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Schema { path: String, detail: String },
    #[error("{path}: header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch { path: String, expected: Vec<String>, found: Vec<String> },
    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RowArity { path: String, row: usize, expected: usize, found: usize },
    #[error("{path}: row {row} is not valid UTF-8")]
    Encoding { path: String, row: usize },
    #[error("cannot extract text from {path}: {detail}")]
    ExtractionFailed { path: String, detail: String },
    #[error("{path}: document has no extractable text")]
    EmptyDocument { path: String },
    #[error("rubric declares total {declared} but sections sum to {computed}")]
    TotalMismatch { declared: String, computed: String },
    #[error("{path}: unsupported extension (expected .pdf or .txt)")]
    UnsupportedPath { path: String },
}

/// A quiz's questions and the student responses to grade against them.
#[derive(Debug, Clone)]
pub struct QuizBundle {
    pub quiz_id: String,
    pub questions: Vec<QuizQuestion>,
    pub responses: Vec<StudentResponse>,
}

/// Where a report's text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportSource {
    Pdf,
    SidecarText,
}

/// Extracted text of one team's report.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub team_id: String,
    pub text: String,
    pub page_count: Option<usize>,
    pub source: ReportSource,
}

/// Gold answers for one quiz.
#[derive(Debug, Clone)]
pub struct GoldAnswers {
    pub quiz_id: String,
    pub questions: Vec<QuizQuestion>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoldAnswersFile {
    quiz_id: String,
    questions: Vec<GoldQuestionEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoldQuestionEntry {
    id: u32,
    text: String,
    gold_answer: String,
    #[serde(default)]
    full_score: Option<f64>,
    #[serde(default)]
    increment: Option<f64>,
}

fn schema_error(path: &Path, detail: impl Into<String>) -> IngestError {
    IngestError::Schema { path: path.display().to_string(), detail: detail.into() }
}

fn io_error(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io { path: path.display().to_string(), source }
}

/// Loads gold answers in file order. Per-question scales default to
/// (0.2, 0.1) and may be overridden per question.
pub fn load_gold_answers(path: &Path) -> Result<GoldAnswers, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let file: GoldAnswersFile = serde_json::from_str(&text).map_err(|e| {
        schema_error(path, format!("line {}, column {}: {}", e.line(), e.column(), e))
    })?;
    if file.quiz_id.trim().is_empty() {
        return Err(schema_error(path, "quiz_id is empty"));
    }
    let default_scale = ScoreScale::default();
    let mut seen_ids = HashSet::new();
    let mut questions = Vec::with_capacity(file.questions.len());
    for (index, entry) in file.questions.into_iter().enumerate() {
        if !seen_ids.insert(entry.id) {
            return Err(schema_error(path, format!("questions[{index}]: duplicate id {}", entry.id)));
        }
        let scale = match (entry.full_score, entry.increment) {
            (None, None) => default_scale,
            (full, increment) => ScoreScale::from_points(
                full.unwrap_or(default_scale.full_score().as_points()),
                increment.unwrap_or(default_scale.increment().as_points()),
            )
            .map_err(|e| schema_error(path, format!("questions[{index}].scale: {e}")))?,
        };
        let question = QuizQuestion::new(entry.id, entry.text, entry.gold_answer, scale).map_err(
            |e| match e {
                CoreError::EmptyField { field } => {
                    schema_error(path, format!("questions[{index}].{}: empty", field.replace(' ', "_")))
                }
                other => schema_error(path, format!("questions[{index}]: {other}")),
            },
        )?;
        questions.push(question);
    }
    Ok(GoldAnswers { quiz_id: file.quiz_id, questions })
}

/// Loads the response matrix: header `student_id,q<id>,…`, one row per
/// student, one cell per question. Blank cells are preserved as empty
/// answers. Duplicate (student, question) entries resolve last-write-wins
/// with a warning.
pub fn load_responses_csv(
    path: &Path,
    questions: &[QuizQuestion],
) -> Result<(Vec<StudentResponse>, Vec<String>), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => io_error(path, std::io::Error::other(e.to_string())),
            _ => schema_error(path, e.to_string()),
        })?;

    let expected: Vec<String> = std::iter::once("student_id".to_string())
        .chain(questions.iter().map(|q| format!("q{}", q.id)))
        .collect();
    let headers = reader
        .headers()
        .map_err(|e| schema_error(path, format!("cannot read header: {e}")))?
        .clone();
    let found: Vec<String> = headers.iter().map(str::to_string).collect();
    if found != expected {
        return Err(IngestError::HeaderMismatch {
            path: path.display().to_string(),
            expected,
            found,
        });
    }

    let mut warnings = Vec::new();
    let mut by_key: Vec<StudentResponse> = Vec::new();
    let mut seen_students: HashSet<String> = HashSet::new();
    for (index, record) in reader.byte_records().enumerate() {
        let row = index + 2; // 1-based, after the header
        let record = record.map_err(|e| schema_error(path, format!("row {row}: {e}")))?;
        if record.len() != expected.len() {
            return Err(IngestError::RowArity {
                path: path.display().to_string(),
                row,
                expected: expected.len(),
                found: record.len(),
            });
        }
        let mut fields = Vec::with_capacity(record.len());
        for raw in record.iter() {
            let field = std::str::from_utf8(raw)
                .map_err(|_| IngestError::Encoding { path: path.display().to_string(), row })?;
            fields.push(field.to_string());
        }
        let student_id = fields[0].trim().to_string();
        if student_id.is_empty() {
            return Err(schema_error(path, format!("row {row}: empty student_id")));
        }
        if !seen_students.insert(student_id.clone()) {
            warnings.push(format!(
                "row {row}: duplicate student {student_id}; later answers win"
            ));
            by_key.retain(|r| r.student_id != student_id);
        }
        for (question, answer) in questions.iter().zip(fields[1..].iter()) {
            by_key.push(StudentResponse {
                student_id: student_id.clone(),
                question_id: question.id,
                answer_text: answer.clone(),
            });
        }
    }
    Ok((by_key, warnings))
}

/// Loads a quiz bundle from a gold-answer file and a response CSV.
pub fn load_quiz_bundle(
    gold_path: &Path,
    responses_path: &Path,
) -> Result<(QuizBundle, Vec<String>), IngestError> {
    let gold = load_gold_answers(gold_path)?;
    let (responses, warnings) = load_responses_csv(responses_path, &gold.questions)?;
    Ok((
        QuizBundle { quiz_id: gold.quiz_id, questions: gold.questions, responses },
        warnings,
    ))
}

/// Extracts report text. PDFs are concatenated page by page, separated by
/// form-feed characters; `.txt` sidecars are read verbatim. Line endings are
/// normalized to `\n`.
pub fn extract_report_text(path: &Path) -> Result<ReportBundle, IngestError> {
    let team_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let extension = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match extension.as_str() {
        "txt" => {
            let raw = std::fs::read(path).map_err(|e| io_error(path, e))?;
            let text = String::from_utf8(raw).map_err(|_| IngestError::ExtractionFailed {
                path: path.display().to_string(),
                detail: "sidecar text is not valid UTF-8".to_string(),
            })?;
            let text = normalize_newlines(&text);
            if text.trim().is_empty() {
                return Err(IngestError::EmptyDocument { path: path.display().to_string() });
            }
            Ok(ReportBundle { team_id, text, page_count: None, source: ReportSource::SidecarText })
        }
        "pdf" => {
            let document = lopdf::Document::load(path).map_err(|e| IngestError::ExtractionFailed {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
            if document.is_encrypted() {
                return Err(IngestError::ExtractionFailed {
                    path: path.display().to_string(),
                    detail: "document is encrypted".to_string(),
                });
            }
            let pages: Vec<u32> = document.get_pages().keys().copied().collect();
            let mut page_texts = Vec::with_capacity(pages.len());
            for page in &pages {
                let text = document.extract_text(&[*page]).map_err(|e| {
                    IngestError::ExtractionFailed {
                        path: path.display().to_string(),
                        detail: format!("page {page}: {e}"),
                    }
                })?;
                page_texts.push(normalize_newlines(text.trim_end()));
            }
            let text = page_texts.join("\u{0c}");
            if text.replace('\u{0c}', "").trim().is_empty() {
                return Err(IngestError::EmptyDocument { path: path.display().to_string() });
            }
            Ok(ReportBundle {
                team_id,
                text,
                page_count: Some(pages.len()),
                source: ReportSource::Pdf,
            })
        }
        _ => Err(IngestError::UnsupportedPath { path: path.display().to_string() }),
    }
}

fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RubricFile {
    sections: Vec<RubricSectionEntry>,
    #[serde(default)]
    total_points: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RubricSectionEntry {
    name: String,
    max_points: f64,
    #[serde(default)]
    criteria: String,
}

/// Loads a rubric, or the default eight-section / 9-point rubric when no
/// path is given. A declared total that disagrees with the section sum is an
/// error.
pub fn load_rubric(path: Option<&Path>) -> Result<Rubric, IngestError> {
    let path = match path {
        None => return Ok(Rubric::default_report_rubric()),
        Some(p) => p,
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let file: RubricFile = serde_json::from_str(&text).map_err(|e| {
        schema_error(path, format!("line {}, column {}: {}", e.line(), e.column(), e))
    })?;
    let mut sections = Vec::with_capacity(file.sections.len());
    for (index, entry) in file.sections.into_iter().enumerate() {
        let max = Score::from_points(entry.max_points)
            .map_err(|e| schema_error(path, format!("sections[{index}].max_points: {e}")))?;
        let section = RubricSection::new(entry.name, max, entry.criteria)
            .map_err(|e| schema_error(path, format!("sections[{index}]: {e}")))?;
        sections.push(section);
    }
    let rubric = Rubric::new(sections).map_err(|e| schema_error(path, e.to_string()))?;
    if let Some(declared) = file.total_points {
        let declared = Score::from_points(declared)
            .map_err(|e| schema_error(path, format!("total_points: {e}")))?;
        if declared != rubric.total_points() {
            return Err(IngestError::TotalMismatch {
                declared: declared.to_string(),
                computed: rubric.total_points().to_string(),
            });
        }
    }
    Ok(rubric)
}
