//! Agreement battery for comparing two graders over the same items:
//! descriptive statistics, paired t-test, Pearson correlation with
//! significance, exact/over/under match breakdown, Wilcoxon signed-rank
//! test, and the Holm–Bonferroni step-down correction.

mod special;

pub use special::{erfc, inc_beta, ln_gamma, normal_cdf, student_t_cdf, student_t_two_sided_p};

use thiserror::Error;

/// Default significance level for all tests.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Largest number of nonzero differences for which the Wilcoxon p-value is
/// computed by exhaustive sign enumeration (2^m assignments).
pub const WILCOXON_EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("too few pairs: need at least {needed}, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("zero variance: {what}")]
    ZeroVariance { what: &'static str },
    #[error("{what} failed to converge")]
    NonConvergence { what: &'static str },
    #[error("domain error: {what}")]
    DomainError { what: &'static str },
    #[error("paired inputs must be equal-length, non-empty, and finite")]
    InvalidPairs,
    #[error("p-values must be finite and lie in [0, 1]")]
    InvalidPValue,
}

/// Two graders' scores over the same labeled items.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScores {
    labels: Vec<String>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PairedScores {
    pub fn new(labels: Vec<String>, a: Vec<f64>, b: Vec<f64>) -> Result<PairedScores, StatsError> {
        if a.is_empty() || a.len() != b.len() || labels.len() != a.len() {
            return Err(StatsError::InvalidPairs);
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(StatsError::InvalidPairs);
        }
        Ok(PairedScores { labels, a, b })
    }

    /// Pairs labeled by position, for callers that do not track identifiers.
    pub fn from_values(a: &[f64], b: &[f64]) -> Result<PairedScores, StatsError> {
        let labels = (1..=a.len()).map(|i| i.to_string()).collect();
        PairedScores::new(labels, a.to_vec(), b.to_vec())
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    fn diffs(&self) -> impl Iterator<Item = f64> + '_ {
        self.a.iter().zip(&self.b).map(|(x, y)| x - y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    PairedT,
    Pearson,
    WilcoxonExact,
    WilcoxonNormal,
}

impl TestMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TestMethod::PairedT => "paired_t",
            TestMethod::Pearson => "pearson",
            TestMethod::WilcoxonExact => "wilcoxon_exact",
            TestMethod::WilcoxonNormal => "wilcoxon_normal",
        }
    }
}

/// Outcome of a significance test. `p_value` and `significant` are `None`
/// when the test is not applicable (e.g. Wilcoxon over identical scores).
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub method: TestMethod,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub df_or_n: f64,
    pub alpha: f64,
    pub significant: Option<bool>,
}

impl TestResult {
    fn new(method: TestMethod, statistic: f64, p_value: Option<f64>, df_or_n: f64) -> TestResult {
        TestResult {
            method,
            statistic,
            p_value,
            df_or_n,
            alpha: DEFAULT_ALPHA,
            significant: p_value.map(|p| p < DEFAULT_ALPHA),
        }
    }

    /// Re-evaluates the significance flag at a different level.
    pub fn at_alpha(mut self, alpha: f64) -> TestResult {
        self.alpha = alpha;
        self.significant = self.p_value.map(|p| p < alpha);
        self
    }

    pub fn is_applicable(&self) -> bool {
        self.p_value.is_some()
    }
}

/// Arithmetic means of both graders and the mean absolute difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptive {
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_abs_diff: f64,
}

pub fn descriptive(pairs: &PairedScores) -> Descriptive {
    let n = pairs.n() as f64;
    Descriptive {
        mean_a: pairs.a().iter().sum::<f64>() / n,
        mean_b: pairs.b().iter().sum::<f64>() / n,
        mean_abs_diff: pairs.diffs().map(f64::abs).sum::<f64>() / n,
    }
}

/// Two-sided paired t-test on the per-item differences `a - b`.
///
/// The statistic is negative exactly when grader A's mean is below grader
/// B's. Uses the sample standard deviation (n - 1 denominator) and a
/// Student-t CDF with n - 1 degrees of freedom.
pub fn paired_t(pairs: &PairedScores) -> Result<TestResult, StatsError> {
    let n = pairs.n();
    if n < 2 {
        return Err(StatsError::TooFewPairs { needed: 2, got: n });
    }
    let diffs: Vec<f64> = pairs.diffs().collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Err(StatsError::ZeroVariance {
            what: "all paired differences are identical",
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let df = n as f64 - 1.0;
    let p = student_t_two_sided_p(t, df)?;
    Ok(TestResult::new(TestMethod::PairedT, t, Some(p), df))
}

/// Sample Pearson correlation with a two-sided p-value from the
/// t-transform `t = r * sqrt((n - 2) / (1 - r^2))` with n - 2 degrees of
/// freedom. Perfect correlation yields p = 0.
pub fn pearson(pairs: &PairedScores) -> Result<TestResult, StatsError> {
    let n = pairs.n();
    if n < 3 {
        return Err(StatsError::TooFewPairs { needed: 3, got: n });
    }
    let nf = n as f64;
    let mean_a = pairs.a().iter().sum::<f64>() / nf;
    let mean_b = pairs.b().iter().sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in pairs.a().iter().zip(pairs.b()) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(StatsError::ZeroVariance {
            what: "a score vector is constant",
        });
    }
    let r = (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let p = if 1.0 - r * r <= 0.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        student_t_two_sided_p(t, df)?
    };
    Ok(TestResult::new(TestMethod::Pearson, r, Some(p), df))
}

/// Partition of item pairs into exact-match, A-over-B, and A-under-B.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchBreakdown {
    pub exact: usize,
    pub over: usize,
    pub under: usize,
}

impl MatchBreakdown {
    pub fn n(&self) -> usize {
        self.exact + self.over + self.under
    }

    /// Exact/over/under rates; they sum to 1.
    pub fn rates(&self) -> (f64, f64, f64) {
        let n = self.n() as f64;
        (
            self.exact as f64 / n,
            self.over as f64 / n,
            self.under as f64 / n,
        )
    }

    /// Rates as percentages rounded to one decimal, for display.
    pub fn percentages(&self) -> (f64, f64, f64) {
        let (e, o, u) = self.rates();
        (round1(e * 100.0), round1(o * 100.0), round1(u * 100.0))
    }
}

/// Rounds to one decimal place.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Classifies each pair as exact (|a - b| <= tolerance), over (a > b), or
/// under (a < b). The default tolerance of zero is exact equality; callers
/// holding fixed-point scores compare them exactly by construction.
pub fn match_breakdown(pairs: &PairedScores, tolerance: f64) -> MatchBreakdown {
    assert!(tolerance >= 0.0, "tolerance must be non-negative");
    let mut breakdown = MatchBreakdown { exact: 0, over: 0, under: 0 };
    for (x, y) in pairs.a().iter().zip(pairs.b()) {
        if (x - y).abs() <= tolerance {
            breakdown.exact += 1;
        } else if x > y {
            breakdown.over += 1;
        } else {
            breakdown.under += 1;
        }
    }
    breakdown
}

/// Two-sided Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are discarded. If none remain the result is
/// not-applicable (`p_value = None`). Absolute differences are ranked with
/// mid-ranks for ties; the statistic is the sum of ranks of positive
/// differences. The p-value is exact (all 2^m sign assignments) for
/// m <= [`WILCOXON_EXACT_LIMIT`], otherwise a normal approximation with tie
/// correction and 0.5 continuity correction.
pub fn wilcoxon_signed_rank(pairs: &PairedScores) -> TestResult {
    let diffs: Vec<f64> = pairs.diffs().filter(|d| *d != 0.0).collect();
    let m = diffs.len();
    if m == 0 {
        return TestResult::new(TestMethod::WilcoxonExact, 0.0, None, 0.0);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    if m <= WILCOXON_EXACT_LIMIT {
        // Mid-ranks are multiples of 1/2; doubling makes every sum an
        // exact integer for the enumeration.
        let scaled: Vec<u64> = ranks.iter().map(|r| (r * 2.0).round() as u64).collect();
        let w2 = (w_plus * 2.0).round() as u64;
        let total = 1u64 << m;
        let mut at_most = 0u64;
        let mut at_least = 0u64;
        for mask in 0..total {
            let mut w = 0u64;
            let mut bits = mask;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                w += scaled[i];
                bits &= bits - 1;
            }
            if w <= w2 {
                at_most += 1;
            }
            if w >= w2 {
                at_least += 1;
            }
        }
        let tail = at_most.min(at_least) as f64 / total as f64;
        let p = (2.0 * tail).min(1.0);
        TestResult::new(TestMethod::WilcoxonExact, w_plus, Some(p), m as f64)
    } else {
        let mf = m as f64;
        let mean = mf * (mf + 1.0) / 4.0;
        let tie_correction: f64 = tie_group_sizes(&ranks)
            .into_iter()
            .map(|t| {
                let t = t as f64;
                (t * t * t - t) / 48.0
            })
            .sum();
        let var = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_correction;
        if var <= 0.0 {
            return TestResult::new(TestMethod::WilcoxonNormal, w_plus, None, mf);
        }
        let dev = w_plus - mean;
        let correction = if dev > 0.0 {
            0.5
        } else if dev < 0.0 {
            -0.5
        } else {
            0.0
        };
        let z = (dev - correction) / var.sqrt();
        let phi = normal_cdf(z).expect("normal cdf converges for finite z");
        let p = (2.0 * phi.min(1.0 - phi)).clamp(0.0, 1.0);
        TestResult::new(TestMethod::WilcoxonNormal, w_plus, Some(p), mf)
    }
}

/// 1-based ranks with mid-ranks (average rank) for tied values.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of tie groups among the ranked values.
fn tie_group_sizes(ranks: &[f64]) -> Vec<usize> {
    let mut sorted: Vec<f64> = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite ranks"));
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        sizes.push(j - i + 1);
        i = j + 1;
    }
    sizes
}

/// Holm–Bonferroni step-down adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct HolmResult {
    /// Raw (label, p) pairs in input order.
    pub raw: Vec<(String, f64)>,
    /// Adjusted (label, p_adj) pairs in the same order as `raw`.
    pub adjusted: Vec<(String, f64)>,
    /// Number of tested hypotheses; skipped labels are excluded.
    pub m: usize,
    /// Labels excluded from the correction (e.g. identical score vectors).
    pub skipped: Vec<String>,
}

/// Adjusts raw p-values by the Holm–Bonferroni step-down rule:
/// sort ascending, `p_adj(i) = min(1, max_{j <= i} (m - j + 1) * p_(j))`,
/// then restore the original order. `skipped` labels never enter `m`.
pub fn holm(raw: &[(String, f64)], skipped: &[String]) -> Result<HolmResult, StatsError> {
    if raw.iter().any(|(_, p)| !p.is_finite() || !(0.0..=1.0).contains(p)) {
        return Err(StatsError::InvalidPValue);
    }
    let m = raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| raw[i].1.partial_cmp(&raw[j].1).expect("finite p"));
    let mut adjusted: Vec<(String, f64)> = raw.to_vec();
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let candidate = (m - rank) as f64 * raw[idx].1;
        running = running.max(candidate);
        adjusted[idx].1 = running.min(1.0);
    }
    Ok(HolmResult {
        raw: raw.to_vec(),
        adjusted,
        m,
        skipped: skipped.to_vec(),
    })
}
