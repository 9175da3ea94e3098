//! Exact fixed-point scores and the finite score scales they are drawn from.

use std::fmt;

use thiserror::Error;

/// Number of milli-points in one point.
pub const MILLI_PER_POINT: i64 = 1000;

/// Errors from score parsing and scale construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    /// The increment does not evenly divide the full score, or is not positive.
    #[error("invalid scale: increment {increment} must be positive and divide full score {full_score}")]
    InvalidScale { full_score: String, increment: String },
    /// The text is not a decimal number.
    #[error("not a decimal score: {0:?}")]
    Unparseable(String),
    /// The decimal has more precision than a milli-point.
    #[error("score {0:?} is finer than milli-point resolution")]
    TooPrecise(String),
    /// Scores are non-negative.
    #[error("score {0:?} is negative")]
    Negative(String),
    /// A points value that cannot be converted exactly to milli-points.
    #[error("points value {0} is not an exact milli-point multiple")]
    InexactPoints(f64),
}

/// A score in exact milli-points.
///
/// `Score` deliberately does not implement arithmetic against floats; convert
/// at the edges with [`Score::as_points`] and construct from milli-points or
/// decimal text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Score(i64);

impl Score {
    pub const ZERO: Score = Score(0);

    /// Constructs from a milli-point count. Panics on negative input; use
    /// [`Score::parse`] for untrusted text.
    pub fn from_milli(milli: i64) -> Score {
        assert!(milli >= 0, "scores are non-negative");
        Score(milli)
    }

    /// Converts a points value (e.g. `0.2`) to an exact score, rejecting
    /// anything that is not a whole number of milli-points.
    pub fn from_points(points: f64) -> Result<Score, ScoreError> {
        if !points.is_finite() {
            return Err(ScoreError::InexactPoints(points));
        }
        let milli = (points * MILLI_PER_POINT as f64).round();
        if (points * MILLI_PER_POINT as f64 - milli).abs() > 1e-6 {
            return Err(ScoreError::InexactPoints(points));
        }
        if milli < 0.0 {
            return Err(ScoreError::Negative(points.to_string()));
        }
        Ok(Score(milli as i64))
    }

    pub fn milli(self) -> i64 {
        self.0
    }

    /// Points as a float, for statistics and display math only.
    pub fn as_points(self) -> f64 {
        self.0 as f64 / MILLI_PER_POINT as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Exact sum of scores.
    pub fn sum<I: IntoIterator<Item = Score>>(scores: I) -> Score {
        Score(scores.into_iter().map(|s| s.0).sum())
    }

    /// Parses a decimal score. Accepts `"0.2"`, `".2"`, `"0.20"`, and `"2"`
    /// as long as the value is an exact milli-point count.
    pub fn parse(text: &str) -> Result<Score, ScoreError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(ScoreError::Unparseable(text.to_string()));
        }
        let (negative, digits) = match trimmed.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
        };
        let (int_part, frac_part) = match digits.split_once('.') {
            Some((i, f)) => (i, f),
            None => (digits, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(ScoreError::Unparseable(text.to_string()));
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(ScoreError::Unparseable(text.to_string()));
        }
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| ScoreError::Unparseable(text.to_string()))?
        };
        // Fractional digits beyond the third must all be zero to stay exact.
        let mut frac_milli: i64 = 0;
        for (i, c) in frac_part.chars().enumerate() {
            let d = i64::from(c.to_digit(10).unwrap());
            if i < 3 {
                frac_milli += d * 10_i64.pow(2 - i as u32);
            } else if d != 0 {
                return Err(ScoreError::TooPrecise(text.to_string()));
            }
        }
        let milli = whole
            .checked_mul(MILLI_PER_POINT)
            .and_then(|m| m.checked_add(frac_milli))
            .ok_or_else(|| ScoreError::Unparseable(text.to_string()))?;
        if negative && milli != 0 {
            return Err(ScoreError::Negative(text.to_string()));
        }
        Ok(Score(milli))
    }
}

impl fmt::Display for Score {
    /// Canonical decimal rendering: minimal fraction digits, at least one
    /// (`0.0`, `0.2`, `1.8`, `0.15`).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / MILLI_PER_POINT;
        let frac = self.0 % MILLI_PER_POINT;
        if frac == 0 {
            write!(f, "{whole}.0")
        } else if frac % 100 == 0 {
            write!(f, "{whole}.{}", frac / 100)
        } else if frac % 10 == 0 {
            write!(f, "{whole}.{:02}", frac / 10)
        } else {
            write!(f, "{whole}.{frac:03}")
        }
    }
}

/// A finite set of grantable scores: `{0, inc, 2·inc, …, full}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScoreScale {
    full_score: Score,
    increment: Score,
}

impl ScoreScale {
    pub fn new(full_score: Score, increment: Score) -> Result<ScoreScale, ScoreError> {
        if increment.milli() <= 0 || full_score.milli() % increment.milli() != 0 {
            return Err(ScoreError::InvalidScale {
                full_score: full_score.to_string(),
                increment: increment.to_string(),
            });
        }
        Ok(ScoreScale {
            full_score,
            increment,
        })
    }

    /// Convenience constructor from points values, e.g. `(0.2, 0.1)`.
    pub fn from_points(full_score: f64, increment: f64) -> Result<ScoreScale, ScoreError> {
        ScoreScale::new(Score::from_points(full_score)?, Score::from_points(increment)?)
    }

    pub fn full_score(&self) -> Score {
        self.full_score
    }

    pub fn increment(&self) -> Score {
        self.increment
    }

    /// Number of valid scores, `full_score / increment + 1`.
    pub fn cardinality(&self) -> usize {
        (self.full_score.milli() / self.increment.milli()) as usize + 1
    }

    /// The valid set in ascending order, exact values.
    pub fn valid_scores(&self) -> Vec<Score> {
        (0..self.cardinality() as i64)
            .map(|k| Score(k * self.increment.milli()))
            .collect()
    }

    pub fn contains(&self, score: Score) -> bool {
        score.milli() >= 0
            && score <= self.full_score
            && score.milli() % self.increment.milli() == 0
    }

    /// Renders the valid set as a bracketed ascending list, e.g.
    /// `[0.0, 0.1, 0.2]`.
    pub fn render_valid_scores(&self) -> String {
        let rendered: Vec<String> = self.valid_scores().iter().map(Score::to_string).collect();
        format!("[{}]", rendered.join(", "))
    }
}

impl Default for ScoreScale {
    /// The quiz default: 0.2 maximum in 0.1 increments.
    fn default() -> Self {
        ScoreScale::new(Score::from_milli(200), Score::from_milli(100)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(v: &[f64]) -> Vec<Score> {
        v.iter().map(|&p| Score::from_points(p).unwrap()).collect()
    }

    #[test]
    fn valid_scores_quiz_default() {
        let scale = ScoreScale::default();
        assert_eq!(scale.valid_scores(), points(&[0.0, 0.1, 0.2]));
        assert_eq!(scale.cardinality(), 3);
    }

    #[test]
    fn valid_scores_degenerate_two_element() {
        let scale = ScoreScale::from_points(1.0, 1.0).unwrap();
        assert_eq!(scale.valid_scores(), points(&[0.0, 1.0]));
    }

    #[test]
    fn valid_scores_half_point_increments() {
        // Frozen from enumerating k * 0.5 for k = 0..=4.
        let scale = ScoreScale::from_points(2.0, 0.5).unwrap();
        assert_eq!(scale.valid_scores(), points(&[0.0, 0.5, 1.0, 1.5, 2.0]));
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(matches!(
            ScoreScale::from_points(0.5, 0.2),
            Err(ScoreError::InvalidScale { .. })
        ));
        assert!(matches!(
            ScoreScale::new(Score::from_milli(200), Score::ZERO),
            Err(ScoreError::InvalidScale { .. })
        ));
    }

    #[test]
    fn score_parse_accepts_equivalent_spellings() {
        let expected = Score::from_milli(200);
        for text in ["0.2", ".2", "0.20", "0.200", " 0.2 ", "0.2000"] {
            assert_eq!(Score::parse(text).unwrap(), expected, "{text:?}");
        }
        assert_eq!(Score::parse("2").unwrap(), Score::from_milli(2000));
        assert_eq!(Score::parse("1.8").unwrap(), Score::from_milli(1800));
    }

    #[test]
    fn score_parse_rejects_garbage() {
        for text in ["", ".", "0.2.1", "abc", "0.2 points", "1e-3", "0,2"] {
            assert!(matches!(Score::parse(text), Err(ScoreError::Unparseable(_))), "{text:?}");
        }
        assert!(matches!(Score::parse("-0.1"), Err(ScoreError::Negative(_))));
        assert!(matches!(Score::parse("0.1234"), Err(ScoreError::TooPrecise(_))));
        // Negative zero is still zero.
        assert_eq!(Score::parse("-0.0").unwrap(), Score::ZERO);
    }

    #[test]
    fn display_is_minimal_with_at_least_one_decimal() {
        let cases = [
            (0, "0.0"),
            (100, "0.1"),
            (200, "0.2"),
            (1800, "1.8"),
            (2000, "2.0"),
            (150, "0.15"),
            (125, "0.125"),
            (9000, "9.0"),
        ];
        for (milli, expected) in cases {
            assert_eq!(Score::from_milli(milli).to_string(), expected);
        }
    }

    #[test]
    fn render_valid_scores_bracketed() {
        assert_eq!(ScoreScale::default().render_valid_scores(), "[0.0, 0.1, 0.2]");
    }

    #[test]
    fn pairwise_differences_are_increment_multiples() {
        let scale = ScoreScale::from_points(2.0, 0.5).unwrap();
        let scores = scale.valid_scores();
        for a in &scores {
            for b in &scores {
                let diff = (a.milli() - b.milli()).abs();
                assert_eq!(diff % scale.increment().milli(), 0);
            }
        }
    }

    mod properties {
        use super::*;
        use crate::core::{aggregate_quiz_score, GradeResult, GradedItem, TokenUsage};
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn format_then_parse_round_trips(milli in 0i64..1_000_000) {
                let score = Score::from_milli(milli);
                prop_assert_eq!(Score::parse(&score.to_string()).unwrap(), score);
            }

            #[test]
            fn scales_enumerate_exactly(increment in 1i64..=2000, steps in 1i64..=50) {
                let scale = ScoreScale::new(
                    Score::from_milli(increment * steps),
                    Score::from_milli(increment),
                ).unwrap();
                let scores = scale.valid_scores();
                prop_assert_eq!(scores.len() as i64, steps + 1);
                prop_assert_eq!(scores[0], Score::ZERO);
                prop_assert_eq!(*scores.last().unwrap(), scale.full_score());
                for pair in scores.windows(2) {
                    prop_assert_eq!(pair[1].milli() - pair[0].milli(), increment);
                }
                for score in &scores {
                    prop_assert!(scale.contains(*score));
                    prop_assert_eq!(score.milli() % increment, 0);
                }
            }

            #[test]
            fn aggregate_is_permutation_invariant(scores in proptest::collection::vec(0i64..=400, 0..30)) {
                let items: Vec<GradedItem> = scores.iter().map(|&m| GradedItem {
                    student_id: "s1".to_string(),
                    question_id: 1,
                    result: GradeResult::model(Score::from_milli(m), None, "", TokenUsage::default()),
                }).collect();
                let total = aggregate_quiz_score(&items).unwrap();
                let mut reversed = items.clone();
                reversed.reverse();
                prop_assert_eq!(aggregate_quiz_score(&reversed).unwrap(), total);
                // Associative over concatenation: sum of part sums equals the whole.
                let (left, right) = items.split_at(items.len() / 2);
                let split_sum = Score::from_milli(
                    aggregate_quiz_score(left).unwrap().milli()
                        + aggregate_quiz_score(right).unwrap().milli(),
                );
                prop_assert_eq!(split_sum, total);
            }
        }
    }
}
