//! Strict validation and extraction of model grading output.
//!
//! Nothing here ever clamps: a grade outside the valid set is an error or an
//! escalation, never a nearest-valid substitution.

use thiserror::Error;

use crate::client::{ChatResponse, ClientError};
use crate::core::{GradeResult, Rubric, Score, ScoreError, ScoreScale};

/// Appended to the original prompt for the single corrective re-ask after a
/// malformed response.
pub const CORRECTIVE_SUFFIX: &str = "Your previous response was not in the required format. Respond with only \"Grade: X\" where X is one of the valid scores, followed on the next line by \"Explanation: <one sentence>\" only if X is less than the maximum score.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed output: {0}")]
    MalformedOutput(String),
    #[error("grade {grade} is not in the valid set {valid}")]
    GradeOutOfScale { grade: String, valid: String },
    #[error("score below full credit requires an explanation line")]
    MissingExplanation,
    #[error("unexpected trailing content: {0:?}")]
    UnexpectedTrailingContent(String),
    #[error("rubric section {0:?} missing from output")]
    MissingSection(String),
    #[error("rubric section {0:?} appears more than once")]
    DuplicateSection(String),
    #[error("section {section:?} scored {score}, above its maximum {max}")]
    SectionOverMax { section: String, score: String, max: String },
}

/// Benign deviations that are tolerated but surfaced to the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseWarning {
    /// A full-credit grade carried an explanation; the score is kept and the
    /// explanation discarded.
    ExplanationOnFullScore,
    /// The stated overall disagreed with the section sum; the recomputed sum
    /// wins because sections are the rubric's unit of record.
    OverallMismatch { stated: Score, computed: Score },
}

/// A validated quiz grade.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQuizGrade {
    pub score: Score,
    pub explanation: Option<String>,
    pub warnings: Vec<ParseWarning>,
}

/// One scored rubric section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionGrade {
    pub section: String,
    pub score: Score,
    pub feedback: String,
}

/// A validated report grade: one entry per rubric section, in rubric order,
/// with `overall` always equal to the section sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedReportGrade {
    pub section_grades: Vec<SectionGrade>,
    pub overall: Score,
    pub summary: String,
    pub warnings: Vec<ParseWarning>,
}

fn score_error_to_parse(err: ScoreError, raw: &str, scale: &ScoreScale) -> ParseError {
    match err {
        ScoreError::Unparseable(_) => {
            ParseError::MalformedOutput(format!("grade value {raw:?} is not a decimal"))
        }
        // Parseable decimals that cannot be exact scale members are
        // out-of-scale, not malformed.
        ScoreError::TooPrecise(_) | ScoreError::Negative(_) => ParseError::GradeOutOfScale {
            grade: raw.to_string(),
            valid: scale.render_valid_scores(),
        },
        other => ParseError::MalformedOutput(other.to_string()),
    }
}

/// Parses `Grade: X` (first line) plus an optional `Explanation:` line and
/// validates the score against the question's scale. An explanation is
/// required below full credit and forbidden at full credit; a full-credit
/// explanation is tolerated, discarded, and flagged.
pub fn parse_quiz_grade(text: &str, scale: ScoreScale) -> Result<ParsedQuizGrade, ParseError> {
    let mut lines = text.trim().lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines
        .next()
        .ok_or_else(|| ParseError::MalformedOutput("empty output".to_string()))?;
    let value = first
        .strip_prefix("Grade:")
        .ok_or_else(|| ParseError::MalformedOutput(format!("expected \"Grade: X\", got {first:?}")))?
        .trim();
    let score = Score::parse(value).map_err(|e| score_error_to_parse(e, value, &scale))?;
    if !scale.contains(score) {
        return Err(ParseError::GradeOutOfScale {
            grade: value.to_string(),
            valid: scale.render_valid_scores(),
        });
    }

    let mut warnings = Vec::new();
    let explanation = match lines.next() {
        None => None,
        Some(line) => match line.strip_prefix("Explanation:") {
            Some(rest) => {
                if let Some(extra) = lines.next() {
                    return Err(ParseError::UnexpectedTrailingContent(extra.to_string()));
                }
                let rest = rest.trim();
                if rest.is_empty() {
                    return Err(ParseError::MissingExplanation);
                }
                Some(rest.to_string())
            }
            None => return Err(ParseError::UnexpectedTrailingContent(line.to_string())),
        },
    };

    let explanation = if score == scale.full_score() {
        if explanation.is_some() {
            warnings.push(ParseWarning::ExplanationOnFullScore);
        }
        None
    } else {
        match explanation {
            Some(e) => Some(e),
            None => return Err(ParseError::MissingExplanation),
        }
    };

    Ok(ParsedQuizGrade { score, explanation, warnings })
}

/// Parses the line-oriented report grade blocks:
///
/// ```text
/// Section: <name>
/// Grade: X
/// Feedback: <sentence>
/// ...
/// Overall: X
/// Summary: <sentences>
/// ```
///
/// Section names match case-insensitively. Every rubric section must appear
/// exactly once; each score must lie on the section's 0.1 grid at or below
/// its maximum. A stated overall that disagrees with the section sum is
/// replaced by the sum and flagged.
pub fn parse_report_grade(text: &str, rubric: &Rubric) -> Result<ParsedReportGrade, ParseError> {
    let mut lines = text.trim().lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    let mut found: Vec<SectionGrade> = Vec::new();
    let mut warnings = Vec::new();

    let stated_overall = loop {
        let line = lines.next().ok_or_else(|| {
            ParseError::MalformedOutput("output ended before an Overall line".to_string())
        })?;
        if let Some(value) = line.strip_prefix("Overall:") {
            let value = value.trim();
            break Score::parse(value).map_err(|e| {
                ParseError::MalformedOutput(format!("overall grade {value:?}: {e}"))
            })?;
        }
        let name = line
            .strip_prefix("Section:")
            .ok_or_else(|| {
                ParseError::MalformedOutput(format!(
                    "expected \"Section: <name>\" or \"Overall: X\", got {line:?}"
                ))
            })?
            .trim();
        let section = rubric
            .section_by_name(name)
            .ok_or_else(|| ParseError::MalformedOutput(format!("unknown section {name:?}")))?;
        if found.iter().any(|g| g.section == section.name) {
            return Err(ParseError::DuplicateSection(section.name.clone()));
        }

        let grade_line = lines.next().ok_or_else(|| {
            ParseError::MalformedOutput(format!("section {name:?} has no Grade line"))
        })?;
        let value = grade_line
            .strip_prefix("Grade:")
            .ok_or_else(|| {
                ParseError::MalformedOutput(format!(
                    "expected \"Grade: X\" after section {name:?}, got {grade_line:?}"
                ))
            })?
            .trim();
        let section_scale = section.scale();
        let score = Score::parse(value).map_err(|e| score_error_to_parse(e, value, &section_scale))?;
        if score > section.max_points {
            return Err(ParseError::SectionOverMax {
                section: section.name.clone(),
                score: score.to_string(),
                max: section.max_points.to_string(),
            });
        }
        if !section_scale.contains(score) {
            return Err(ParseError::GradeOutOfScale {
                grade: value.to_string(),
                valid: section_scale.render_valid_scores(),
            });
        }

        let feedback_line = lines.next().ok_or_else(|| {
            ParseError::MalformedOutput(format!("section {name:?} has no Feedback line"))
        })?;
        let feedback = feedback_line
            .strip_prefix("Feedback:")
            .ok_or_else(|| {
                ParseError::MalformedOutput(format!(
                    "expected \"Feedback: ...\" after section {name:?}, got {feedback_line:?}"
                ))
            })?
            .trim()
            .to_string();

        found.push(SectionGrade { section: section.name.clone(), score, feedback });
    };

    let summary_line = lines.next().ok_or_else(|| {
        ParseError::MalformedOutput("output ended before a Summary line".to_string())
    })?;
    let mut summary = summary_line
        .strip_prefix("Summary:")
        .ok_or_else(|| {
            ParseError::MalformedOutput(format!("expected \"Summary: ...\", got {summary_line:?}"))
        })?
        .trim()
        .to_string();
    for continuation in lines {
        summary.push(' ');
        summary.push_str(continuation);
    }
    if summary.is_empty() {
        return Err(ParseError::MalformedOutput("summary is empty".to_string()));
    }

    // Every rubric section exactly once, reordered to rubric order.
    let mut section_grades = Vec::with_capacity(rubric.sections().len());
    for section in rubric.sections() {
        match found.iter().find(|g| g.section == section.name) {
            Some(grade) => section_grades.push(grade.clone()),
            None => return Err(ParseError::MissingSection(section.name.clone())),
        }
    }

    let computed = Score::sum(section_grades.iter().map(|g| g.score));
    if stated_overall != computed {
        warnings.push(ParseWarning::OverallMismatch { stated: stated_overall, computed });
    }

    Ok(ParsedReportGrade { section_grades, overall: computed, summary, warnings })
}

/// Canonical rendering of a report grade in the block format accepted by
/// [`parse_report_grade`]. Newlines inside feedback or summary are
/// normalized to spaces so the format stays line-oriented.
pub fn format_report_grade(grade: &ParsedReportGrade) -> String {
    let mut out = String::new();
    for section in &grade.section_grades {
        out.push_str("Section: ");
        out.push_str(&section.section);
        out.push('\n');
        out.push_str("Grade: ");
        out.push_str(&section.score.to_string());
        out.push('\n');
        out.push_str("Feedback: ");
        out.push_str(&single_line(&section.feedback));
        out.push('\n');
    }
    out.push_str("Overall: ");
    out.push_str(&grade.overall.to_string());
    out.push('\n');
    out.push_str("Summary: ");
    out.push_str(&single_line(&grade.summary));
    out
}

fn single_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Turns a raw model response into a [`GradeResult`], re-asking once with a
/// corrective suffix on parse failure and escalating to human review after
/// that. Failures are encoded in the result, never raised.
///
/// `reask` receives the corrective suffix to append to the original prompt
/// and returns the retry response, or `None` when no retry is possible (the
/// caller observes its own transport errors separately).
pub fn grade_or_escalate<F>(first: ChatResponse, scale: ScoreScale, reask: F) -> GradeResult
where
    F: FnOnce(&str) -> Option<ChatResponse>,
{
    match parse_quiz_grade(&first.content, scale) {
        Ok(parsed) => GradeResult::model(parsed.score, parsed.explanation, first.content, first.usage),
        Err(_) => match reask(CORRECTIVE_SUFFIX) {
            None => GradeResult::human_review_required(first.content, first.usage),
            Some(second) => {
                let usage = first.usage + second.usage;
                match parse_quiz_grade(&second.content, scale) {
                    Ok(parsed) => {
                        GradeResult::model(parsed.score, parsed.explanation, second.content, usage)
                    }
                    Err(_) => GradeResult::human_review_required(second.content, usage),
                }
            }
        },
    }
}

/// Convenience for piecing retry transport plumbing into [`grade_or_escalate`].
pub fn reask_failed(error: &ClientError) -> bool {
    matches!(error, ClientError::Transport { .. } | ClientError::Auth(_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::FinishReason;
    use crate::core::{GradeSource, TokenUsage};

    fn scale() -> ScoreScale {
        ScoreScale::default()
    }

    fn response(content: &str, input: u64, output: u64) -> ChatResponse {
        ChatResponse {
            content: content.to_string(),
            usage: TokenUsage::new(input, output),
            finish_reason: FinishReason::Stop,
        }
    }

    #[test]
    fn full_score_without_explanation() {
        let parsed = parse_quiz_grade("Grade: 0.2", scale()).unwrap();
        assert_eq!(parsed.score, Score::from_milli(200));
        assert_eq!(parsed.explanation, None);
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn deduction_with_explanation() {
        let parsed = parse_quiz_grade(
            "Grade: 0.1\nExplanation: The answer omits URLs and abbreviations.",
            scale(),
        )
        .unwrap();
        assert_eq!(parsed.score, Score::from_milli(100));
        assert_eq!(
            parsed.explanation.as_deref(),
            Some("The answer omits URLs and abbreviations.")
        );
    }

    #[test]
    fn off_grid_grade_is_out_of_scale() {
        let err = parse_quiz_grade("Grade: 0.15", scale()).unwrap_err();
        assert!(matches!(err, ParseError::GradeOutOfScale { .. }));
        let err = parse_quiz_grade("Grade: 0.3", scale()).unwrap_err();
        assert!(matches!(err, ParseError::GradeOutOfScale { .. }));
        let err = parse_quiz_grade("Grade: -0.1", scale()).unwrap_err();
        assert!(matches!(err, ParseError::GradeOutOfScale { .. }));
    }

    #[test]
    fn missing_grade_line_is_malformed() {
        for text in ["", "The answer is good.", "grade 0.2", "Score: 0.2"] {
            assert!(
                matches!(parse_quiz_grade(text, scale()), Err(ParseError::MalformedOutput(_))),
                "{text:?}"
            );
        }
    }

    #[test]
    fn deduction_without_explanation_is_rejected() {
        assert_eq!(parse_quiz_grade("Grade: 0.1", scale()).unwrap_err(), ParseError::MissingExplanation);
        assert_eq!(
            parse_quiz_grade("Grade: 0.1\nExplanation:", scale()).unwrap_err(),
            ParseError::MissingExplanation
        );
    }

    #[test]
    fn trailing_content_is_rejected() {
        let err = parse_quiz_grade("Grade: 0.1\nExplanation: ok\nMore text", scale()).unwrap_err();
        assert!(matches!(err, ParseError::UnexpectedTrailingContent(_)));
        let err = parse_quiz_grade("Grade: 0.2\nSome chatter", scale()).unwrap_err();
        assert!(matches!(err, ParseError::UnexpectedTrailingContent(_)));
    }

    #[test]
    fn full_score_explanation_is_tolerated_and_flagged() {
        let parsed = parse_quiz_grade("Grade: 0.2\nExplanation: Great answer.", scale()).unwrap();
        assert_eq!(parsed.score, Score::from_milli(200));
        assert_eq!(parsed.explanation, None);
        assert_eq!(parsed.warnings, vec![ParseWarning::ExplanationOnFullScore]);
    }

    #[test]
    fn equivalent_decimal_spellings_accepted() {
        for text in ["Grade: 0.2", "Grade: .2", "Grade: 0.20", "Grade:0.2", "  Grade: 0.2  "] {
            let parsed = parse_quiz_grade(text, scale()).unwrap();
            assert_eq!(parsed.score, Score::from_milli(200), "{text:?}");
        }
    }

    #[test]
    fn round_trip_every_valid_score_across_scales() {
        for (full, inc) in [(0.2, 0.1), (1.0, 0.5), (0.4, 0.1), (2.0, 0.2), (3.0, 1.0)] {
            let scale = ScoreScale::from_points(full, inc).unwrap();
            for score in scale.valid_scores() {
                let text = if score == scale.full_score() {
                    format!("Grade: {score}")
                } else {
                    format!("Grade: {score}\nExplanation: Partial credit.")
                };
                let parsed = parse_quiz_grade(&text, scale).unwrap();
                assert_eq!(parsed.score, score);
            }
        }
    }

    fn team_a_block() -> String {
        "Section: Abstract\nGrade: 1.0\nFeedback: The abstract is concise and informative.\n\
         Section: Introduction\nGrade: 1.0\nFeedback: Clear goals and motivation.\n\
         Section: Related Work\nGrade: 1.0\nFeedback: Reviews relevant prior research.\n\
         Section: Approach\nGrade: 2.0\nFeedback: Clearly explained and technically sound.\n\
         Section: Results\nGrade: 1.8\nFeedback: Evaluation metrics and benchmarks are described properly, but more quantitative data would help.\n\
         Section: Conclusion\nGrade: 1.0\nFeedback: Summarizes findings and future work effectively.\n\
         Section: References\nGrade: 0.5\nFeedback: References are complete, recent, and properly formatted.\n\
         Section: Format\nGrade: 0.5\nFeedback: The report is well-organized and easy to read.\n\
         Overall: 8.8\nSummary: A solid project report with strong methodology."
            .to_string()
    }

    #[test]
    fn report_blocks_parse_with_overall_sum() {
        let rubric = Rubric::default_report_rubric();
        let parsed = parse_report_grade(&team_a_block(), &rubric).unwrap();
        assert_eq!(parsed.section_grades.len(), 8);
        assert_eq!(parsed.overall, Score::from_milli(8800));
        assert_eq!(parsed.overall.to_string(), "8.8");
        assert!(parsed.warnings.is_empty());
        let scores: Vec<f64> = parsed.section_grades.iter().map(|g| g.score.as_points()).collect();
        assert_eq!(scores, vec![1.0, 1.0, 1.0, 2.0, 1.8, 1.0, 0.5, 0.5]);
    }

    #[test]
    fn report_all_sections_at_max_totals_nine() {
        let rubric = Rubric::default_report_rubric();
        let blocks: String = rubric
            .sections()
            .iter()
            .map(|s| format!("Section: {}\nGrade: {}\nFeedback: Meets every criterion.\n", s.name, s.max_points))
            .collect();
        let text = format!("{blocks}Overall: 9.0\nSummary: Excellent throughout.");
        let parsed = parse_report_grade(&text, &rubric).unwrap();
        assert_eq!(parsed.overall, Score::from_milli(9000));
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn report_section_over_max_is_rejected_not_clamped() {
        let rubric = Rubric::default_report_rubric();
        let text = team_a_block().replace("Section: Approach\nGrade: 2.0", "Section: Approach\nGrade: 2.5");
        let err = parse_report_grade(&text, &rubric).unwrap_err();
        assert_eq!(
            err,
            ParseError::SectionOverMax {
                section: "Approach".to_string(),
                score: "2.5".to_string(),
                max: "2.0".to_string(),
            }
        );
    }

    #[test]
    fn report_missing_and_duplicate_sections() {
        let rubric = Rubric::default_report_rubric();
        let mut text = team_a_block();
        text = text.replace(
            "Section: Format\nGrade: 0.5\nFeedback: The report is well-organized and easy to read.\n",
            "",
        );
        assert_eq!(
            parse_report_grade(&text, &rubric).unwrap_err(),
            ParseError::MissingSection("Format".to_string())
        );

        let dup = team_a_block().replace(
            "Section: Conclusion",
            "Section: Abstract\nGrade: 1.0\nFeedback: Again.\nSection: Conclusion",
        );
        assert_eq!(
            parse_report_grade(&dup, &rubric).unwrap_err(),
            ParseError::DuplicateSection("Abstract".to_string())
        );
    }

    #[test]
    fn report_section_names_match_case_insensitively() {
        let rubric = Rubric::default_report_rubric();
        let text = team_a_block().replace("Section: Related Work", "Section: RELATED WORK");
        let parsed = parse_report_grade(&text, &rubric).unwrap();
        // Canonical rubric spelling is restored.
        assert_eq!(parsed.section_grades[2].section, "Related Work");
    }

    #[test]
    fn report_overall_mismatch_recomputes_and_warns() {
        let rubric = Rubric::default_report_rubric();
        let text = team_a_block().replace("Overall: 8.8", "Overall: 9.0");
        let parsed = parse_report_grade(&text, &rubric).unwrap();
        assert_eq!(parsed.overall, Score::from_milli(8800));
        assert_eq!(
            parsed.warnings,
            vec![ParseWarning::OverallMismatch {
                stated: Score::from_milli(9000),
                computed: Score::from_milli(8800),
            }]
        );
    }

    #[test]
    fn report_off_grid_section_score_rejected() {
        let rubric = Rubric::default_report_rubric();
        let text = team_a_block().replace("Section: Results\nGrade: 1.8", "Section: Results\nGrade: 1.85");
        assert!(matches!(
            parse_report_grade(&text, &rubric),
            Err(ParseError::GradeOutOfScale { .. })
        ));
    }

    #[test]
    fn report_format_round_trips() {
        let rubric = Rubric::default_report_rubric();
        let parsed = parse_report_grade(&team_a_block(), &rubric).unwrap();
        let rendered = format_report_grade(&parsed);
        let reparsed = parse_report_grade(&rendered, &rubric).unwrap();
        assert_eq!(reparsed.section_grades, parsed.section_grades);
        assert_eq!(reparsed.overall, parsed.overall);
        assert_eq!(reparsed.summary, parsed.summary);
        assert!(reparsed.warnings.is_empty());
    }

    #[test]
    fn clean_response_passes_through() {
        let result = grade_or_escalate(response("Grade: 0.2", 100, 4), scale(), |_| {
            panic!("no re-ask expected")
        });
        assert_eq!(result.source, GradeSource::Model);
        assert_eq!(result.score, Score::from_milli(200));
        assert_eq!(result.usage, TokenUsage::new(100, 4));
    }

    #[test]
    fn malformed_then_clean_recovers_with_merged_usage() {
        let mut seen_suffix = None;
        let result = grade_or_escalate(response("I think 0.2 is fair", 100, 8), scale(), |suffix| {
            seen_suffix = Some(suffix.to_string());
            Some(response("Grade: 0.2", 120, 4))
        });
        assert_eq!(seen_suffix.as_deref(), Some(CORRECTIVE_SUFFIX));
        assert_eq!(result.source, GradeSource::Model);
        assert_eq!(result.score, Score::from_milli(200));
        assert_eq!(result.usage, TokenUsage::new(220, 12));
        assert_eq!(result.raw_output, "Grade: 0.2");
    }

    #[test]
    fn two_malformed_responses_escalate() {
        let result = grade_or_escalate(response("nonsense", 100, 8), scale(), |_| {
            Some(response("still nonsense", 120, 8))
        });
        assert_eq!(result.source, GradeSource::HumanReviewRequired);
        assert_eq!(result.score, Score::ZERO);
        assert_eq!(result.usage, TokenUsage::new(220, 16));
        assert_eq!(result.raw_output, "still nonsense");
    }

    #[test]
    fn unavailable_reask_escalates_on_first_output() {
        let result = grade_or_escalate(response("nonsense", 100, 8), scale(), |_| None);
        assert_eq!(result.source, GradeSource::HumanReviewRequired);
        assert_eq!(result.usage, TokenUsage::new(100, 8));
        assert_eq!(result.raw_output, "nonsense");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Whatever the model emits, an accepted score is always a
            /// member of the valid set; everything else errors.
            #[test]
            fn parsed_scores_never_leave_the_valid_set(
                whole in 0u32..4,
                frac in 0u32..1000,
                digits in 1usize..=3,
                inc_steps in 1i64..=4,
                full_steps in 1i64..=5,
                noise in "[a-zA-Z0-9 .:]{0,20}",
            ) {
                let scale = ScoreScale::new(
                    Score::from_milli(100 * inc_steps * full_steps),
                    Score::from_milli(100 * inc_steps),
                ).unwrap();
                let text = format!(
                    "Grade: {whole}.{frac:0digits$}\n{noise}",
                    frac = frac % 10u32.pow(digits as u32),
                );
                if let Ok(parsed) = parse_quiz_grade(&text, scale) {
                    prop_assert!(scale.contains(parsed.score));
                }
            }

            /// Free-form garbage never parses into a grade.
            #[test]
            fn arbitrary_text_never_panics(text in ".{0,80}") {
                let _ = parse_quiz_grade(&text, ScoreScale::default());
            }
        }
    }
}
