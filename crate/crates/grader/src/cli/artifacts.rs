//! Result-file schemas and the analysis table writers.
//!
//! Everything written here is deterministic: rows are emitted in sorted
//! order and numbers are formatted with fixed rules, so two runs over the
//! same inputs produce byte-identical files.

use std::path::Path;

use crate::core::{GradeSource, Score};
use crate::ingest::IngestError;
use crate::stats::MatchBreakdown;

/// One row of a per-item quiz results CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuizResultRow {
    pub quiz_id: String,
    pub student_id: String,
    pub question_id: u32,
    pub score: Score,
    pub explanation: String,
    pub source: GradeSource,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

pub const QUIZ_RESULTS_HEADER: [&str; 8] = [
    "quiz_id",
    "student_id",
    "question_id",
    "score",
    "explanation",
    "source",
    "input_tokens",
    "output_tokens",
];

fn schema_error(path: &Path, detail: impl Into<String>) -> IngestError {
    IngestError::Schema { path: path.display().to_string(), detail: detail.into() }
}

/// Writes per-item quiz results sorted by (student_id, question_id).
pub fn write_quiz_results(path: &Path, rows: &[QuizResultRow]) -> Result<(), IngestError> {
    let mut sorted: Vec<&QuizResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.quiz_id, &a.student_id, a.question_id).cmp(&(&b.quiz_id, &b.student_id, b.question_id))
    });
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| schema_error(path, format!("cannot create: {e}")))?;
    writer
        .write_record(QUIZ_RESULTS_HEADER)
        .map_err(|e| schema_error(path, e.to_string()))?;
    for row in sorted {
        writer
            .write_record([
                row.quiz_id.as_str(),
                row.student_id.as_str(),
                &row.question_id.to_string(),
                &row.score.to_string(),
                row.explanation.as_str(),
                row.source.as_str(),
                &row.input_tokens.to_string(),
                &row.output_tokens.to_string(),
            ])
            .map_err(|e| schema_error(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| schema_error(path, e.to_string()))?;
    Ok(())
}

/// Reads a per-item quiz results CSV (the toolkit's own output format).
pub fn read_quiz_results(path: &Path) -> Result<Vec<QuizResultRow>, IngestError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| schema_error(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| schema_error(path, e.to_string()))?.clone();
    let index = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        index(name).ok_or_else(|| schema_error(path, format!("missing column {name:?}")))
    };
    let quiz_col = required("quiz_id")?;
    let student_col = required("student_id")?;
    let question_col = required("question_id")?;
    let score_col = required("score")?;
    let explanation_col = index("explanation");
    let source_col = index("source");
    let input_col = index("input_tokens");
    let output_col = index("output_tokens");

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema_error(path, format!("row {}: {e}", i + 2)))?;
        let field = |col: usize| record.get(col).unwrap_or_default().to_string();
        let question_id: u32 = field(question_col)
            .parse()
            .map_err(|_| schema_error(path, format!("row {}: bad question_id", i + 2)))?;
        let score = Score::parse(&field(score_col))
            .map_err(|e| schema_error(path, format!("row {}: {e}", i + 2)))?;
        let source = match source_col {
            None => GradeSource::Model,
            Some(col) => GradeSource::parse(&field(col))
                .ok_or_else(|| schema_error(path, format!("row {}: bad source", i + 2)))?,
        };
        let parse_tokens = |col: Option<usize>| -> Result<u64, IngestError> {
            match col {
                None => Ok(0),
                Some(c) => field(c)
                    .parse()
                    .map_err(|_| schema_error(path, format!("row {}: bad token count", i + 2))),
            }
        };
        rows.push(QuizResultRow {
            quiz_id: field(quiz_col),
            student_id: field(student_col),
            question_id,
            score,
            explanation: explanation_col.map(field).unwrap_or_default(),
            source,
            input_tokens: parse_tokens(input_col)?,
            output_tokens: parse_tokens(output_col)?,
        });
    }
    Ok(rows)
}

/// Writes per-student totals sorted by (quiz_id, student_id).
pub fn write_student_totals(
    path: &Path,
    totals: &[(String, String, Score)],
) -> Result<(), IngestError> {
    let mut sorted: Vec<&(String, String, Score)> = totals.iter().collect();
    sorted.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| schema_error(path, format!("cannot create: {e}")))?;
    writer
        .write_record(["quiz_id", "student_id", "total"])
        .map_err(|e| schema_error(path, e.to_string()))?;
    for (quiz_id, student_id, total) in sorted {
        writer
            .write_record([quiz_id.as_str(), student_id.as_str(), &total.to_string()])
            .map_err(|e| schema_error(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| schema_error(path, e.to_string()))?;
    Ok(())
}

/// One row of a per-team section-grade CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionResultRow {
    pub team_id: String,
    pub section: String,
    pub score: Score,
    pub max_points: Score,
    pub feedback: String,
}

pub const SECTION_RESULTS_HEADER: [&str; 5] =
    ["team_id", "section", "score", "max_points", "feedback"];

/// Writes section grades in the given order (already team-then-rubric
/// ordered by the caller).
pub fn write_section_results(path: &Path, rows: &[SectionResultRow]) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| schema_error(path, format!("cannot create: {e}")))?;
    writer
        .write_record(SECTION_RESULTS_HEADER)
        .map_err(|e| schema_error(path, e.to_string()))?;
    for row in rows {
        writer
            .write_record([
                row.team_id.as_str(),
                row.section.as_str(),
                &row.score.to_string(),
                &row.max_points.to_string(),
                row.feedback.as_str(),
            ])
            .map_err(|e| schema_error(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| schema_error(path, e.to_string()))?;
    Ok(())
}

/// Reads a section-grade CSV (team_id, section, score, optional extras).
pub fn read_section_results(path: &Path) -> Result<Vec<SectionResultRow>, IngestError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| schema_error(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| schema_error(path, e.to_string()))?.clone();
    let index = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        index(name).ok_or_else(|| schema_error(path, format!("missing column {name:?}")))
    };
    let team_col = required("team_id")?;
    let section_col = required("section")?;
    let score_col = required("score")?;
    let max_col = index("max_points");
    let feedback_col = index("feedback");

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema_error(path, format!("row {}: {e}", i + 2)))?;
        let field = |col: usize| record.get(col).unwrap_or_default().to_string();
        let score = Score::parse(&field(score_col))
            .map_err(|e| schema_error(path, format!("row {}: {e}", i + 2)))?;
        let max_points = match max_col {
            None => Score::ZERO,
            Some(col) => Score::parse(&field(col))
                .map_err(|e| schema_error(path, format!("row {}: {e}", i + 2)))?,
        };
        rows.push(SectionResultRow {
            team_id: field(team_col),
            section: field(section_col),
            score,
            max_points,
            feedback: feedback_col.map(field).unwrap_or_default(),
        });
    }
    Ok(rows)
}

/// One row of the quiz agreement table (per quiz, plus an overall row).
#[derive(Debug, Clone, PartialEq)]
pub struct QuizAnalysisRow {
    pub label: String,
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_abs_diff: f64,
    pub t_stat: Option<f64>,
    pub t_p: Option<f64>,
    pub corr: Option<f64>,
    pub corr_p: Option<f64>,
    /// Set when a test could not run (e.g. zero variance).
    pub note: Option<String>,
}

/// Section verdict for the report agreement table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionVerdict {
    Significant,
    NotSignificant,
    AllScoresIdentical,
}

impl SectionVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            SectionVerdict::Significant => "True",
            SectionVerdict::NotSignificant => "False",
            SectionVerdict::AllScoresIdentical => "All scores identical",
        }
    }
}

/// One row of the report agreement table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportAnalysisRow {
    pub section: String,
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_diff: f64,
    pub w_statistic: Option<f64>,
    pub raw_p: Option<f64>,
    pub holm_p: Option<f64>,
    pub verdict: SectionVerdict,
}

fn fmt_opt(value: Option<f64>, precision: usize) -> String {
    match value {
        Some(v) => format!("{v:.precision$}"),
        None => "n/a".to_string(),
    }
}

fn fmt_p(value: Option<f64>) -> String {
    match value {
        None => "n/a".to_string(),
        Some(p) if p != 0.0 && p < 1e-3 => format!("{p:.2e}"),
        Some(p) => format!("{p:.4}"),
    }
}

/// Writes the quiz agreement table as CSV.
pub fn write_quiz_analysis_csv(path: &Path, rows: &[QuizAnalysisRow]) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| schema_error(path, format!("cannot create: {e}")))?;
    writer
        .write_record([
            "quiz", "n", "mean_a", "mean_b", "mean_abs_diff", "t_stat", "t_p", "corr", "corr_p",
            "note",
        ])
        .map_err(|e| schema_error(path, e.to_string()))?;
    for row in rows {
        writer
            .write_record([
                row.label.as_str(),
                &row.n.to_string(),
                &format!("{:.6}", row.mean_a),
                &format!("{:.6}", row.mean_b),
                &format!("{:.6}", row.mean_abs_diff),
                &fmt_opt(row.t_stat, 6),
                &fmt_p(row.t_p),
                &fmt_opt(row.corr, 6),
                &fmt_p(row.corr_p),
                row.note.as_deref().unwrap_or(""),
            ])
            .map_err(|e| schema_error(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| schema_error(path, e.to_string()))?;
    Ok(())
}

/// Writes the quiz agreement table plus the match-breakdown line as aligned
/// Markdown.
pub fn write_quiz_analysis_markdown(
    path: &Path,
    rows: &[QuizAnalysisRow],
    breakdown: &MatchBreakdown,
) -> Result<(), IngestError> {
    let header = [
        "Quiz", "n", "A Mean", "B Mean", "Mean Abs Diff", "t-stat", "p-value", "Corr",
        "Corr p-value",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            vec![
                row.label.clone(),
                row.n.to_string(),
                format!("{:.3}", row.mean_a),
                format!("{:.3}", row.mean_b),
                format!("{:.3}", row.mean_abs_diff),
                fmt_opt(row.t_stat, 3),
                fmt_p(row.t_p),
                fmt_opt(row.corr, 3),
                fmt_p(row.corr_p),
            ]
        })
        .collect();
    let mut out = markdown_table(&header, &body);
    let (exact, over, under) = breakdown.percentages();
    out.push_str(&format!(
        "\nMatch breakdown over {} pairs: exact {} ({exact:.1}%), above {} ({over:.1}%), below {} ({under:.1}%).\n",
        breakdown.n(),
        breakdown.exact,
        breakdown.over,
        breakdown.under,
    ));
    std::fs::write(path, out).map_err(|e| schema_error(path, e.to_string()))
}

/// Writes the match breakdown as CSV.
pub fn write_breakdown_csv(path: &Path, breakdown: &MatchBreakdown) -> Result<(), IngestError> {
    let (exact_pct, over_pct, under_pct) = breakdown.percentages();
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| schema_error(path, format!("cannot create: {e}")))?;
    writer
        .write_record(["n", "exact", "over", "under", "exact_pct", "over_pct", "under_pct"])
        .map_err(|e| schema_error(path, e.to_string()))?;
    writer
        .write_record([
            breakdown.n().to_string(),
            breakdown.exact.to_string(),
            breakdown.over.to_string(),
            breakdown.under.to_string(),
            format!("{exact_pct:.1}"),
            format!("{over_pct:.1}"),
            format!("{under_pct:.1}"),
        ])
        .map_err(|e| schema_error(path, e.to_string()))?;
    writer.flush().map_err(|e| schema_error(path, e.to_string()))?;
    Ok(())
}

/// Writes the report agreement table as CSV.
pub fn write_report_analysis_csv(
    path: &Path,
    rows: &[ReportAnalysisRow],
) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| schema_error(path, format!("cannot create: {e}")))?;
    writer
        .write_record([
            "section", "n", "mean_a", "mean_b", "mean_diff", "w_statistic", "raw_p", "holm_p",
            "significant",
        ])
        .map_err(|e| schema_error(path, e.to_string()))?;
    for row in rows {
        writer
            .write_record([
                row.section.as_str(),
                &row.n.to_string(),
                &format!("{:.6}", row.mean_a),
                &format!("{:.6}", row.mean_b),
                &format!("{:.6}", row.mean_diff),
                &fmt_opt(row.w_statistic, 2),
                &fmt_p(row.raw_p),
                &fmt_p(row.holm_p),
                row.verdict.as_str(),
            ])
            .map_err(|e| schema_error(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| schema_error(path, e.to_string()))?;
    Ok(())
}

/// Writes the report agreement table as aligned Markdown.
pub fn write_report_analysis_markdown(
    path: &Path,
    rows: &[ReportAnalysisRow],
) -> Result<(), IngestError> {
    let header = ["Section", "A Mean", "B Mean", "Mean Diff", "Holm p-value", "Significant (Holm)"];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            vec![
                row.section.clone(),
                format!("{:.3}", row.mean_a),
                format!("{:.3}", row.mean_b),
                format!("{:.3}", row.mean_diff),
                match row.verdict {
                    SectionVerdict::AllScoresIdentical => "N/A".to_string(),
                    _ => fmt_p(row.holm_p),
                },
                row.verdict.as_str().to_string(),
            ]
        })
        .collect();
    std::fs::write(path, markdown_table(&header, &body))
        .map_err(|e| schema_error(path, e.to_string()))
}

/// Two-column (or one-column) taxonomy comparison table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyTable {
    pub categories: Vec<String>,
    /// (count, total) per category for grader A.
    pub a: Vec<(usize, usize)>,
    /// Per-category counts for grader B, when a second file was given.
    pub b: Option<Vec<(usize, usize)>>,
    pub uncategorized_a: usize,
    pub uncategorized_b: Option<usize>,
}

fn pct_cell(count: usize, total: usize) -> String {
    if count == 0 {
        "--".to_string()
    } else {
        format!("{:.1}", crate::stats::round1(count as f64 * 100.0 / total as f64))
    }
}

pub fn write_taxonomy_csv(path: &Path, table: &TaxonomyTable) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| schema_error(path, format!("cannot create: {e}")))?;
    let mut header = vec!["category", "count_a", "pct_a"];
    if table.b.is_some() {
        header.extend(["count_b", "pct_b"]);
    }
    writer.write_record(&header).map_err(|e| schema_error(path, e.to_string()))?;
    let total_a = table.a.first().map(|(_, t)| *t).unwrap_or(0);
    for (i, category) in table.categories.iter().enumerate() {
        let (count_a, _) = table.a[i];
        let mut record = vec![
            category.clone(),
            count_a.to_string(),
            format!("{:.1}", crate::stats::round1(count_a as f64 * 100.0 / total_a.max(1) as f64)),
        ];
        if let Some(b) = &table.b {
            let (count_b, total_b) = b[i];
            record.push(count_b.to_string());
            record.push(format!(
                "{:.1}",
                crate::stats::round1(count_b as f64 * 100.0 / total_b.max(1) as f64)
            ));
        }
        writer.write_record(&record).map_err(|e| schema_error(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| schema_error(path, e.to_string()))?;
    Ok(())
}

pub fn write_taxonomy_markdown(path: &Path, table: &TaxonomyTable) -> Result<(), IngestError> {
    let two = table.b.is_some();
    let header: Vec<&str> = if two {
        vec!["Deduction Reason Category", "A (%)", "B (%)"]
    } else {
        vec!["Deduction Reason Category", "Share (%)"]
    };
    let mut body = Vec::new();
    for (i, category) in table.categories.iter().enumerate() {
        let (count_a, total_a) = table.a[i];
        let mut row = vec![category.clone(), pct_cell(count_a, total_a)];
        if let Some(b) = &table.b {
            let (count_b, total_b) = b[i];
            row.push(pct_cell(count_b, total_b));
        }
        body.push(row);
    }
    if table.uncategorized_a > 0 || table.uncategorized_b.unwrap_or(0) > 0 {
        let total_a = table.a.first().map(|(_, t)| *t).unwrap_or(0);
        let mut row = vec![
            "Uncategorized".to_string(),
            pct_cell(table.uncategorized_a, total_a.max(1)),
        ];
        if let Some(b) = &table.b {
            let total_b = b.first().map(|(_, t)| *t).unwrap_or(0);
            row.push(pct_cell(table.uncategorized_b.unwrap_or(0), total_b.max(1)));
        }
        body.push(row);
    }
    std::fs::write(path, markdown_table(&header, &body))
        .map_err(|e| schema_error(path, e.to_string()))
}

/// Renders an aligned Markdown table.
pub fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let columns = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(columns) {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let write_row = |out: &mut String, cells: Vec<String>| {
        out.push('|');
        for (i, cell) in cells.iter().enumerate() {
            out.push(' ');
            out.push_str(cell);
            out.push_str(&" ".repeat(widths[i] - cell.len() + 1));
            out.push('|');
        }
        out.push('\n');
    };
    write_row(&mut out, header.iter().map(|h| h.to_string()).collect());
    out.push('|');
    for width in &widths {
        out.push_str(&"-".repeat(width + 2));
        out.push('|');
    }
    out.push('\n');
    for row in rows {
        write_row(&mut out, row.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::GradeSource;

    fn row(student: &str, question: u32, milli: i64) -> QuizResultRow {
        QuizResultRow {
            quiz_id: "quiz-1".to_string(),
            student_id: student.to_string(),
            question_id: question,
            score: Score::from_milli(milli),
            explanation: if milli < 200 { "Partial match.".to_string() } else { String::new() },
            source: GradeSource::Model,
            input_tokens: 100,
            output_tokens: 5,
        }
    }

    #[test]
    fn quiz_results_round_trip_and_sort() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let rows = vec![row("s02", 1, 200), row("s01", 2, 100), row("s01", 1, 0)];
        write_quiz_results(&path, &rows).unwrap();
        let loaded = read_quiz_results(&path).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded[0].student_id, "s01");
        assert_eq!(loaded[0].question_id, 1);
        assert_eq!(loaded[1].question_id, 2);
        assert_eq!(loaded[2].student_id, "s02");
        assert_eq!(loaded[1].score, Score::from_milli(100));
        assert_eq!(loaded[1].explanation, "Partial match.");
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let rows = vec![row("s01", 1, 200), row("s02", 1, 100)];
        write_quiz_results(&a, &rows).unwrap();
        let mut reversed = rows.clone();
        reversed.reverse();
        write_quiz_results(&b, &reversed).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn section_results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sections.csv");
        let rows = vec![SectionResultRow {
            team_id: "team-a".to_string(),
            section: "Results".to_string(),
            score: Score::from_milli(1800),
            max_points: Score::from_milli(2000),
            feedback: "More quantitative data would help.".to_string(),
        }];
        write_section_results(&path, &rows).unwrap();
        let loaded = read_section_results(&path).unwrap();
        assert_eq!(loaded, rows);
    }

    #[test]
    fn markdown_table_alignment() {
        let table = markdown_table(
            &["Name", "Value"],
            &[
                vec!["a".to_string(), "1".to_string()],
                vec!["longer".to_string(), "2.5".to_string()],
            ],
        );
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("| Name"));
        assert!(lines[1].starts_with("|----"));
        let widths: Vec<usize> = lines.iter().map(|l| l.len()).collect();
        assert!(widths.iter().all(|w| *w == widths[0]));
    }

    #[test]
    fn p_value_formatting() {
        assert_eq!(fmt_p(Some(0.1817)), "0.1817");
        assert_eq!(fmt_p(Some(2.9e-4)), "2.90e-4");
        assert_eq!(fmt_p(Some(0.0)), "0.0000");
        assert_eq!(fmt_p(None), "n/a");
    }
}
