//! Renders the grading prompts: the quiz template with its worked example
//! and the rubric-driven report template.
//!
//! Both renderers are pure; identical inputs produce identical bytes. The
//! quiz template lives in `fixtures/quiz_prompt_template.txt` and is also the
//! golden snapshot the tests compare against.

use thiserror::Error;

use crate::client::estimate_tokens;
use crate::core::{Rubric, ScoreScale};

/// The quiz grading template with its five substitution placeholders:
/// `{full_score}`, `{valid_scores}`, `{question}`, `{gold_answer}`, and
/// `{student_answer}`.
pub const QUIZ_PROMPT_TEMPLATE: &str = include_str!("../fixtures/quiz_prompt_template.txt");

/// The worked example embedded verbatim in every quiz prompt.
pub const QUIZ_EXAMPLE_BLOCK: &str = "Question: All delimiters used in our implementation are punctuation marks. What types of tokens should not be split by such delimiters?\nGold Answer: URLs, email addresses, decimal numbers, and abbreviations\nStudent Answer: email and decimal numbers.\nGrade: 0.2";

/// Version of the machine-parseable report output shape requested by the
/// report prompt and expected by the parser.
pub const REPORT_SCHEMA_VERSION: &str = "1";

const REPORT_TEMPLATE: &str = "You are grading a student team's project report against a fixed rubric. Follow these rules:\n\n1. Score each rubric section independently. A section's score must be a value from 0.0 up to the section maximum, in increments of 0.1.\n2. For every rubric section, in the order listed below, output exactly three lines:\nSection: <section name>\nGrade: X\nFeedback: <one short sentence justifying the score>\n3. After the last section block, output a single line exactly in the format \"Overall: X\" where X is the sum of all section grades. The maximum overall score is {total_points}.\n4. On the next line, output \"Summary: <2-4 sentence summary of the report>\".\n5. End your response immediately after the summary line.\n\nRubric:\n{rubric_sections}\n\nReport:\n{report_text}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("student answer is empty; empty answers are auto-zeroed and never reach the model")]
    EmptyStudentAnswer,
    #[error("report text is empty")]
    EmptyReportText,
    #[error("report of ~{estimated_tokens} tokens exceeds the context budget of {budget} tokens")]
    ReportTooLong { estimated_tokens: u64, budget: u64 },
    #[error("unsupported report output schema version {0:?}")]
    UnsupportedSchemaVersion(String),
}

/// Inputs for one quiz grading prompt. The student answer must be non-empty;
/// empty answers are auto-zeroed upstream and never rendered.
#[derive(Debug, Clone)]
pub struct QuizPromptInputs<'a> {
    question: &'a str,
    gold_answer: &'a str,
    student_answer: &'a str,
    scale: ScoreScale,
}

impl<'a> QuizPromptInputs<'a> {
    pub fn new(
        question: &'a str,
        gold_answer: &'a str,
        student_answer: &'a str,
        scale: ScoreScale,
    ) -> Result<QuizPromptInputs<'a>, PromptError> {
        if student_answer.trim().is_empty() {
            return Err(PromptError::EmptyStudentAnswer);
        }
        Ok(QuizPromptInputs {
            question,
            gold_answer,
            student_answer,
            scale,
        })
    }

    pub fn scale(&self) -> ScoreScale {
        self.scale
    }
}

/// Inputs for one report grading prompt.
#[derive(Debug, Clone)]
pub struct ReportPromptInputs<'a> {
    rubric: &'a Rubric,
    report_text: &'a str,
    schema_version: String,
}

impl<'a> ReportPromptInputs<'a> {
    pub fn new(rubric: &'a Rubric, report_text: &'a str) -> Result<ReportPromptInputs<'a>, PromptError> {
        ReportPromptInputs::with_schema_version(rubric, report_text, REPORT_SCHEMA_VERSION)
    }

    pub fn with_schema_version(
        rubric: &'a Rubric,
        report_text: &'a str,
        schema_version: &str,
    ) -> Result<ReportPromptInputs<'a>, PromptError> {
        if report_text.trim().is_empty() {
            return Err(PromptError::EmptyReportText);
        }
        if schema_version != REPORT_SCHEMA_VERSION {
            return Err(PromptError::UnsupportedSchemaVersion(schema_version.to_string()));
        }
        Ok(ReportPromptInputs {
            rubric,
            report_text,
            schema_version: schema_version.to_string(),
        })
    }

    pub fn schema_version(&self) -> &str {
        &self.schema_version
    }
}

/// Renders the quiz grading prompt with the default worked example.
pub fn render_quiz_prompt(inputs: &QuizPromptInputs) -> String {
    render_quiz_prompt_with_example(inputs, QUIZ_EXAMPLE_BLOCK)
}

/// Renders the quiz prompt with a caller-supplied worked example replacing
/// the default one.
pub fn render_quiz_prompt_with_example(inputs: &QuizPromptInputs, example_block: &str) -> String {
    let template = if example_block == QUIZ_EXAMPLE_BLOCK {
        QUIZ_PROMPT_TEMPLATE.to_string()
    } else {
        QUIZ_PROMPT_TEMPLATE.replacen(QUIZ_EXAMPLE_BLOCK, example_block, 1)
    };
    substitute(
        &template,
        &[
            ("full_score", &inputs.scale.full_score().to_string()),
            ("valid_scores", &inputs.scale.render_valid_scores()),
            ("question", inputs.question),
            ("gold_answer", inputs.gold_answer),
            ("student_answer", inputs.student_answer),
        ],
    )
}

/// Renders the report grading prompt: rubric enumeration, output-shape
/// instructions, then the full report text last.
///
/// `max_context_tokens` bounds the report length with the character/4
/// heuristic; longer reports fail with [`PromptError::ReportTooLong`].
pub fn render_report_prompt(
    inputs: &ReportPromptInputs,
    max_context_tokens: u64,
) -> Result<String, PromptError> {
    let estimated_tokens = estimate_tokens(inputs.report_text);
    if estimated_tokens > max_context_tokens {
        return Err(PromptError::ReportTooLong {
            estimated_tokens,
            budget: max_context_tokens,
        });
    }
    let rubric_sections: Vec<String> = inputs
        .rubric
        .sections()
        .iter()
        .map(|s| format!("- {} (max {}): {}", s.name, s.max_points, s.criteria))
        .collect();
    Ok(substitute(
        REPORT_TEMPLATE,
        &[
            ("total_points", &inputs.rubric.total_points().to_string()),
            ("rubric_sections", &rubric_sections.join("\n")),
            ("report_text", inputs.report_text),
        ],
    ))
}

/// Single-pass placeholder substitution. Replacement values are emitted
/// verbatim and never rescanned, so placeholder-looking text inside a
/// question or answer survives untouched.
fn substitute(template: &str, replacements: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let mut matched = false;
        for (key, value) in replacements {
            let token = format!("{{{key}}}");
            if tail.starts_with(&token) {
                out.push_str(value);
                rest = &tail[token.len()..];
                matched = true;
                break;
            }
        }
        if !matched {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}
