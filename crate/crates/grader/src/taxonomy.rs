//! Categorizes deduction explanations into reason categories with
//! case-insensitive keyword rules, and computes count/percentage
//! distributions.
//!
//! The rule engine is deterministic and total: the highest-priority rule
//! with any matching pattern wins, and unmatched explanations fall into an
//! `uncategorized` bucket. The default ruleset targets the nine deduction
//! reason categories observed in report grading and is user-editable JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("cannot read ruleset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ruleset {path}: {detail}")]
    Schema { path: String, detail: String },
    #[error("rule {category:?} has no patterns")]
    EmptyPatterns { category: String },
    #[error("duplicate category {0:?}")]
    DuplicateCategory(String),
    #[error("no deduction explanations to distribute")]
    EmptyInput,
}

/// One categorization rule: any pattern matching (case-insensitive
/// substring) assigns the category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyRule {
    pub category: String,
    #[serde(rename = "patterns")]
    pub keyword_patterns: Vec<String>,
    pub priority: i32,
}

/// Validated, priority-ordered ruleset.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<TaxonomyRule>,
}

impl RuleSet {
    pub fn new(mut rules: Vec<TaxonomyRule>) -> Result<RuleSet, TaxonomyError> {
        let mut seen = std::collections::HashSet::new();
        for rule in &rules {
            if rule.keyword_patterns.is_empty() {
                return Err(TaxonomyError::EmptyPatterns { category: rule.category.clone() });
            }
            if !seen.insert(rule.category.clone()) {
                return Err(TaxonomyError::DuplicateCategory(rule.category.clone()));
            }
        }
        // Stable sort keeps declaration order within equal priorities.
        rules.sort_by_key(|r| r.priority);
        Ok(RuleSet { rules })
    }

    /// The built-in ruleset covering the nine report-grading deduction
    /// categories.
    pub fn default_rules() -> RuleSet {
        let rules: Vec<TaxonomyRule> =
            serde_json::from_str(include_str!("../fixtures/default_taxonomy.json"))
                .expect("embedded default taxonomy parses");
        RuleSet::new(rules).expect("embedded default taxonomy is valid")
    }

    /// Loads a ruleset from a JSON file: `[ { category, patterns, priority } ]`.
    pub fn load(path: &Path) -> Result<RuleSet, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let rules: Vec<TaxonomyRule> =
            serde_json::from_str(&text).map_err(|e| TaxonomyError::Schema {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
        RuleSet::new(rules)
    }

    pub fn rules(&self) -> &[TaxonomyRule] {
        &self.rules
    }

    /// Category names in priority order.
    pub fn categories(&self) -> Vec<&str> {
        self.rules.iter().map(|r| r.category.as_str()).collect()
    }
}

/// Assigns the explanation to the first rule (by priority, then declaration
/// order) with any matching pattern; `None` means uncategorized. Total and
/// deterministic: never fails on any input.
pub fn categorize<'r>(explanation: &str, rules: &'r RuleSet) -> Option<&'r str> {
    let lowered = explanation.to_lowercase();
    for rule in &rules.rules {
        if rule
            .keyword_patterns
            .iter()
            .any(|p| !p.is_empty() && lowered.contains(&p.to_lowercase()))
        {
            return Some(&rule.category);
        }
    }
    None
}

/// Count of one category within a distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryCount {
    pub category: String,
    pub count: usize,
}

/// Distribution of deduction reasons. Counts are exact; percentages are
/// derived on demand and rounded to one decimal only for display.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeductionDistribution {
    pub total: usize,
    /// One entry per ruleset category, in priority order, zero counts kept.
    pub per_category: Vec<CategoryCount>,
    pub uncategorized: usize,
}

impl DeductionDistribution {
    /// Percentage of the total, rounded to one decimal place.
    pub fn percentage(&self, count: usize) -> f64 {
        crate::stats::round1(count as f64 * 100.0 / self.total as f64)
    }
}

/// Tallies categorized explanations into a distribution over the ruleset's
/// categories. `None` assignments count as uncategorized.
pub fn distribution(
    assignments: &[Option<String>],
    rules: &RuleSet,
) -> Result<DeductionDistribution, TaxonomyError> {
    if assignments.is_empty() {
        return Err(TaxonomyError::EmptyInput);
    }
    let mut per_category: Vec<CategoryCount> = rules
        .rules()
        .iter()
        .map(|r| CategoryCount { category: r.category.clone(), count: 0 })
        .collect();
    let mut uncategorized = 0;
    for assignment in assignments {
        match assignment {
            None => uncategorized += 1,
            Some(category) => {
                match per_category.iter_mut().find(|c| &c.category == category) {
                    Some(slot) => slot.count += 1,
                    None => uncategorized += 1,
                }
            }
        }
    }
    Ok(DeductionDistribution { total: assignments.len(), per_category, uncategorized })
}

/// Categorizes and tallies raw explanations in one step.
pub fn categorize_all(
    explanations: &[String],
    rules: &RuleSet,
) -> Result<DeductionDistribution, TaxonomyError> {
    let assignments: Vec<Option<String>> = explanations
        .iter()
        .map(|e| categorize(e, rules).map(str::to_string))
        .collect();
    distribution(&assignments, rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::round1;

    #[test]
    fn categorize_typical_feedback_lines() {
        let rules = RuleSet::default_rules();
        assert_eq!(
            categorize("but more quantitative data would help", &rules),
            Some("Insufficient quantitative results")
        );
        assert_eq!(
            categorize("the novelty claim could be more explicitly justified", &rules),
            Some("Weak novelty justification")
        );
        assert_eq!(categorize("", &rules), None);
    }

    #[test]
    fn categorize_is_case_insensitive_and_priority_ordered() {
        let rules = RuleSet::default_rules();
        assert_eq!(
            categorize("INSUFFICIENT QUANTITATIVE EVIDENCE", &rules),
            Some("Insufficient quantitative results")
        );
        // Matches both "quantitative" (priority 1) and "conclusion"
        // (priority 9); the higher priority wins.
        assert_eq!(
            categorize("conclusion lacks quantitative support", &rules),
            Some("Insufficient quantitative results")
        );
    }

    #[test]
    fn declaration_order_breaks_priority_ties() {
        let rules = RuleSet::new(vec![
            TaxonomyRule {
                category: "First".to_string(),
                keyword_patterns: vec!["shared".to_string()],
                priority: 1,
            },
            TaxonomyRule {
                category: "Second".to_string(),
                keyword_patterns: vec!["shared".to_string()],
                priority: 1,
            },
        ])
        .unwrap();
        assert_eq!(categorize("a shared keyword", &rules), Some("First"));
    }

    #[test]
    fn ruleset_validation() {
        assert!(matches!(
            RuleSet::new(vec![TaxonomyRule {
                category: "X".to_string(),
                keyword_patterns: vec![],
                priority: 1,
            }]),
            Err(TaxonomyError::EmptyPatterns { .. })
        ));
        let dup = TaxonomyRule {
            category: "X".to_string(),
            keyword_patterns: vec!["x".to_string()],
            priority: 1,
        };
        assert!(matches!(
            RuleSet::new(vec![dup.clone(), dup]),
            Err(TaxonomyError::DuplicateCategory(_))
        ));
    }

    #[test]
    fn distribution_one_decimal_percentages() {
        let rules = RuleSet::default_rules();
        // 13 deductions with 4 in the top category: 30.8%.
        let mut assignments = vec![Some("Insufficient quantitative results".to_string()); 4];
        assignments.extend(vec![Some("Superficial Related Work".to_string()); 9]);
        let dist = distribution(&assignments, &rules).unwrap();
        assert_eq!(dist.total, 13);
        assert_eq!(dist.per_category[0].count, 4);
        assert_eq!(dist.percentage(4), 30.8);

        // 20 deductions with 5 in one category: 25.0%.
        let mut assignments = vec![Some("Formatting issue".to_string()); 5];
        assignments.extend(vec![Some("Superficial Related Work".to_string()); 15]);
        let dist = distribution(&assignments, &rules).unwrap();
        assert_eq!(dist.total, 20);
        assert_eq!(dist.percentage(5), 25.0);
    }

    #[test]
    fn distribution_single_category_is_100_percent() {
        let rules = RuleSet::default_rules();
        let assignments = vec![Some("Missing limitations discussion".to_string()); 7];
        let dist = distribution(&assignments, &rules).unwrap();
        assert_eq!(dist.percentage(7), 100.0);
    }

    #[test]
    fn distribution_counts_sum_to_total() {
        let rules = RuleSet::default_rules();
        let assignments = vec![
            Some("Formatting issue".to_string()),
            None,
            Some("Missing/inadequate conclusion".to_string()),
            None,
        ];
        let dist = distribution(&assignments, &rules).unwrap();
        let categorized: usize = dist.per_category.iter().map(|c| c.count).sum();
        assert_eq!(categorized + dist.uncategorized, dist.total);
        assert_eq!(dist.uncategorized, 2);
    }

    #[test]
    fn distribution_rejects_empty_input() {
        let rules = RuleSet::default_rules();
        assert!(matches!(distribution(&[], &rules), Err(TaxonomyError::EmptyInput)));
    }

    #[test]
    fn table_percentages_are_count_multiples() {
        // Each model-grader percentage must be expressible as k/13 and each
        // human percentage as k/20, validating the case counts.
        for pct in [30.8, 23.1, 15.4, 7.7] {
            assert!(
                (1..=13).any(|k| round1(k as f64 * 100.0 / 13.0) == pct),
                "{pct} is not a multiple of 1/13"
            );
        }
        for pct in [15.0, 25.0, 10.0, 5.0] {
            assert!(
                (1..=20).any(|k| round1(k as f64 * 100.0 / 20.0) == pct),
                "{pct} is not a multiple of 1/20"
            );
        }
    }

    #[test]
    fn full_table_reproduction() {
        let rules = RuleSet::default_rules();
        // Model grader: 13 deductions across 7 categories.
        let model_counts = [4usize, 3, 2, 1, 1, 1, 1, 0, 0];
        let mut assignments = Vec::new();
        for (category, &count) in rules.categories().iter().zip(&model_counts) {
            assignments.extend(vec![Some(category.to_string()); count]);
        }
        let dist = distribution(&assignments, &rules).unwrap();
        assert_eq!(dist.total, 13);
        let percentages: Vec<f64> =
            dist.per_category.iter().map(|c| dist.percentage(c.count)).collect();
        assert_eq!(percentages, vec![30.8, 23.1, 15.4, 7.7, 7.7, 7.7, 7.7, 0.0, 0.0]);

        // Human grader: 20 deductions across 7 categories.
        let human_counts = [3usize, 5, 0, 5, 2, 1, 0, 2, 2];
        let mut assignments = Vec::new();
        for (category, &count) in rules.categories().iter().zip(&human_counts) {
            assignments.extend(vec![Some(category.to_string()); count]);
        }
        let dist = distribution(&assignments, &rules).unwrap();
        assert_eq!(dist.total, 20);
        let percentages: Vec<f64> =
            dist.per_category.iter().map(|c| dist.percentage(c.count)).collect();
        assert_eq!(percentages, vec![15.0, 25.0, 0.0, 25.0, 10.0, 5.0, 0.0, 10.0, 10.0]);
    }
}
