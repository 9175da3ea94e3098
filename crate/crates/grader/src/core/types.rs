//! Grading units, rubrics, and grade results.

use thiserror::Error;

use super::score::{Score, ScoreError, ScoreScale};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("{field} must be non-empty")]
    EmptyField { field: &'static str },
    #[error("rubric has no sections")]
    EmptyRubric,
    #[error("rubric section {name:?}: max points {max} must be positive and a multiple of 0.1")]
    BadSectionMax { name: String, max: String },
    #[error("results span multiple students: {first:?} and {second:?}")]
    MixedStudents { first: String, second: String },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// One quiz question with its instructor-authored reference answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuizQuestion {
    pub id: u32,
    pub text: String,
    pub gold_answer: String,
    pub scale: ScoreScale,
}

impl QuizQuestion {
    pub fn new(
        id: u32,
        text: impl Into<String>,
        gold_answer: impl Into<String>,
        scale: ScoreScale,
    ) -> Result<QuizQuestion, CoreError> {
        let text = text.into();
        let gold_answer = gold_answer.into();
        if text.trim().is_empty() {
            return Err(CoreError::EmptyField { field: "question text" });
        }
        if gold_answer.trim().is_empty() {
            return Err(CoreError::EmptyField { field: "gold answer" });
        }
        Ok(QuizQuestion { id, text, gold_answer, scale })
    }
}

/// One student's answer to one question. The answer may be empty; empty
/// answers are auto-zeroed upstream of the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentResponse {
    pub student_id: String,
    pub question_id: u32,
    pub answer_text: String,
}

/// Where a grade came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradeSource {
    /// Parsed from a well-formed model response.
    Model,
    /// Empty answer short-circuited to zero without a model call.
    AutoZero,
    /// The model never produced a usable grade; a human must review.
    HumanReviewRequired,
}

impl GradeSource {
    pub fn as_str(self) -> &'static str {
        match self {
            GradeSource::Model => "model",
            GradeSource::AutoZero => "auto_zero",
            GradeSource::HumanReviewRequired => "human_review_required",
        }
    }

    pub fn parse(text: &str) -> Option<GradeSource> {
        match text {
            "model" => Some(GradeSource::Model),
            "auto_zero" => Some(GradeSource::AutoZero),
            "human_review_required" => Some(GradeSource::HumanReviewRequired),
            _ => None,
        }
    }
}

/// Token counts for one or more model calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> TokenUsage {
        TokenUsage { input_tokens, output_tokens }
    }

    pub fn is_zero(self) -> bool {
        self.input_tokens == 0 && self.output_tokens == 0
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, other: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_tokens: self.input_tokens + other.input_tokens,
            output_tokens: self.output_tokens + other.output_tokens,
        }
    }
}

/// A validated grade for one response.
///
/// Invariants: an explanation is present iff the score is below full credit
/// and the grade came from the model; `AutoZero` implies a zero score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradeResult {
    pub score: Score,
    pub explanation: Option<String>,
    pub source: GradeSource,
    pub raw_output: String,
    pub usage: TokenUsage,
}

impl GradeResult {
    /// A grade parsed from model output.
    pub fn model(
        score: Score,
        explanation: Option<String>,
        raw_output: impl Into<String>,
        usage: TokenUsage,
    ) -> GradeResult {
        GradeResult {
            score,
            explanation,
            source: GradeSource::Model,
            raw_output: raw_output.into(),
            usage,
        }
    }

    /// Zero score for an empty answer; no model call, no tokens.
    pub fn auto_zero() -> GradeResult {
        GradeResult {
            score: Score::ZERO,
            explanation: None,
            source: GradeSource::AutoZero,
            raw_output: String::new(),
            usage: TokenUsage::default(),
        }
    }

    /// Escalation after repeated malformed output. The score is recorded as
    /// zero, flagged by the source so it is never mistaken for a real grade.
    pub fn human_review_required(raw_output: impl Into<String>, usage: TokenUsage) -> GradeResult {
        GradeResult {
            score: Score::ZERO,
            explanation: None,
            source: GradeSource::HumanReviewRequired,
            raw_output: raw_output.into(),
            usage,
        }
    }
}

/// A grade result attributed to a (student, question) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradedItem {
    pub student_id: String,
    pub question_id: u32,
    pub result: GradeResult,
}

/// One rubric section with a point maximum and grading criteria.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RubricSection {
    pub name: String,
    pub max_points: Score,
    pub criteria: String,
}

impl RubricSection {
    pub fn new(
        name: impl Into<String>,
        max_points: Score,
        criteria: impl Into<String>,
    ) -> Result<RubricSection, CoreError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(CoreError::EmptyField { field: "section name" });
        }
        if max_points.milli() <= 0 || max_points.milli() % 100 != 0 {
            return Err(CoreError::BadSectionMax { name, max: max_points.to_string() });
        }
        Ok(RubricSection { name, max_points, criteria: criteria.into() })
    }

    /// The valid set for this section: `{0, 0.1, …, max_points}`.
    pub fn scale(&self) -> ScoreScale {
        ScoreScale::new(self.max_points, Score::from_milli(100))
            .expect("section maxima are multiples of 0.1")
    }
}

/// An ordered list of report sections with point maxima.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rubric {
    sections: Vec<RubricSection>,
    total_points: Score,
}

impl Rubric {
    pub fn new(sections: Vec<RubricSection>) -> Result<Rubric, CoreError> {
        if sections.is_empty() {
            return Err(CoreError::EmptyRubric);
        }
        let total_points = Score::sum(sections.iter().map(|s| s.max_points));
        Ok(Rubric { sections, total_points })
    }

    /// The default report rubric: eight sections totaling 9 points.
    pub fn default_report_rubric() -> Rubric {
        let mp = Score::from_milli;
        let sections = vec![
            ("Abstract", mp(1000), "Concise summary of the project's objectives, intellectual merit, and broader impact."),
            ("Introduction", mp(1000), "States the project goals, motivation, and a well-defined problem statement."),
            ("Related Work", mp(1000), "Reviews relevant prior research and distinguishes the proposed work from existing solutions."),
            ("Approach", mp(2000), "Technical soundness, detailed description of steps, models, and algorithms, and justified novelty."),
            ("Results", mp(2000), "Evaluation plan, metrics, datasets, benchmarks, and quantitative evidence."),
            ("Conclusion", mp(1000), "Summarizes findings, limitations, and future work, reflecting on project impact."),
            ("References", mp(500), "Complete, recent, and properly formatted citations."),
            ("Format", mp(500), "Organization, readability, and adherence to the required document format."),
        ];
        Rubric::new(
            sections
                .into_iter()
                .map(|(name, max, criteria)| RubricSection::new(name, max, criteria).unwrap())
                .collect(),
        )
        .unwrap()
    }

    pub fn sections(&self) -> &[RubricSection] {
        &self.sections
    }

    pub fn total_points(&self) -> Score {
        self.total_points
    }

    /// Case-insensitive section lookup.
    pub fn section_by_name(&self, name: &str) -> Option<&RubricSection> {
        self.sections
            .iter()
            .find(|s| s.name.eq_ignore_ascii_case(name.trim()))
    }
}

/// True iff the text is empty after trimming Unicode whitespace. Empty
/// answers are assigned zero without a model call; "obviously irrelevant"
/// answers are left to the model.
pub fn is_empty_answer(text: &str) -> bool {
    text.trim().is_empty()
}

/// Exact milli-point sum of one student's grades.
pub fn aggregate_quiz_score<'a, I>(items: I) -> Result<Score, CoreError>
where
    I: IntoIterator<Item = &'a GradedItem>,
{
    let mut student: Option<&str> = None;
    let mut total = 0i64;
    for item in items {
        match student {
            None => student = Some(&item.student_id),
            Some(s) if s != item.student_id => {
                return Err(CoreError::MixedStudents {
                    first: s.to_string(),
                    second: item.student_id.clone(),
                })
            }
            Some(_) => {}
        }
        total += item.result.score.milli();
    }
    Ok(Score::from_milli(total))
}
