//! Rubric-driven grading of short-answer quizzes and project reports through
//! a chat-completion endpoint.
//!
//! The library is organized around a small set of modules:
//!
//! * [`core`] — exact fixed-point scores, score scales, and the domain types
//!   shared by everything else.
//! * [`prompt`] — renders the grading prompts (quiz template and the
//!   rubric-driven report template).
//! * [`client`] — chat-completion transport with deterministic parameters,
//!   retry/backoff, a scripted mock transport, and cost accounting.
//! * [`parse`] — strict validation and extraction of model grading output.
//! * [`ingest`] — loaders for gold answers, response CSVs, rubrics, and
//!   report documents (PDF with plain-text fallback).
//! * [`stats`] — the agreement battery: descriptive stats, paired t-test,
//!   Pearson correlation, match breakdown, Wilcoxon signed-rank, and the
//!   Holm–Bonferroni correction.
//! * [`taxonomy`] — keyword categorization of deduction explanations.
//! * [`cli`] — run orchestration, result/manifest writers, and analysis
//!   table emitters behind the `grader` binary.

pub mod cli;
pub mod client;
pub mod config;
pub mod core;
pub mod ingest;
pub mod parse;
pub mod prompt;
pub mod stats;
pub mod taxonomy;
