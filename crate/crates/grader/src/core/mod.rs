//! Domain types, score scales, and score arithmetic shared by every other
//! module.
//!
//! Scores are stored as integer milli-points (1 point = 1000 milli-points) so
//! that set membership and equality are exact: 0.1-increment decimals are not
//! exactly representable in binary floating point, and the grading contract
//! is set membership against a finite valid set.

mod score;
mod types;

pub use score::{Score, ScoreError, ScoreScale, MILLI_PER_POINT};
pub use types::{
    aggregate_quiz_score, is_empty_answer, CoreError, GradeResult, GradeSource, GradedItem,
    QuizQuestion, Rubric, RubricSection, StudentResponse, TokenUsage,
};
