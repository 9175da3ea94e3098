//! Shared fixture builders: synthetic quiz corpora, report directories, and
//! the mock transport scripts that cover them.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use llm_grader::client::{prompt_hash, ScriptEntry};
use llm_grader::core::{Rubric, ScoreScale};
use llm_grader::prompt::{render_quiz_prompt, render_report_prompt, QuizPromptInputs, ReportPromptInputs};

pub const MOCK_INPUT_TOKENS: u64 = 450;
pub const MOCK_OUTPUT_TOKENS: u64 = 40;

pub struct QuizCorpus {
    pub gold_path: PathBuf,
    pub responses_path: PathBuf,
    pub script_path: PathBuf,
    pub students: usize,
    pub question_count: usize,
    pub empty_count: usize,
}

pub fn question_text(q: usize) -> String {
    format!("Question {q}: explain concept number {q} in your own words.")
}

pub fn gold_answer(q: usize) -> String {
    format!("Concept {q} combines tokenization, context, and evaluation metrics.")
}

pub fn student_answer(s: usize, q: usize) -> String {
    format!("Student {s} thinks concept {q} is about tokenization and metrics.")
}

/// Whether the (student, question) cell is left blank, 1-based indices.
pub fn is_blank_cell(s: usize, q: usize, question_count: usize) -> bool {
    ((s - 1) * question_count + (q - 1)).is_multiple_of(47)
}

/// Deterministic scripted verdict for one cell: full credit, a 0.1
/// deduction, or zero, cycling by position.
pub fn scripted_response(s: usize, q: usize) -> String {
    match (s + q) % 3 {
        0 => "Grade: 0.2".to_string(),
        1 => format!("Grade: 0.1\nExplanation: Student {s} missed part of concept {q}."),
        _ => format!("Grade: 0.0\nExplanation: Answer {q} from student {s} is off-topic."),
    }
}

/// Writes gold answers, a responses CSV, and a mock script covering every
/// non-empty cell of a `students x question_count` corpus.
pub fn build_quiz_corpus(dir: &Path, students: usize, question_count: usize) -> QuizCorpus {
    let gold_path = dir.join("gold_answers.json");
    let responses_path = dir.join("responses.csv");
    let script_path = dir.join("mock_script.json");

    let questions_json: Vec<String> = (1..=question_count)
        .map(|q| {
            serde_json::json!({
                "id": q,
                "text": question_text(q),
                "gold_answer": gold_answer(q),
            })
            .to_string()
        })
        .collect();
    std::fs::write(
        &gold_path,
        format!(r#"{{"quiz_id": "quiz-5", "questions": [{}]}}"#, questions_json.join(",")),
    )
    .unwrap();

    let mut writer = csv::Writer::from_path(&responses_path).unwrap();
    let mut header = vec!["student_id".to_string()];
    header.extend((1..=question_count).map(|q| format!("q{q}")));
    writer.write_record(&header).unwrap();
    let mut empty_count = 0usize;
    for s in 1..=students {
        let mut record = vec![format!("s{s:03}")];
        for q in 1..=question_count {
            if is_blank_cell(s, q, question_count) {
                empty_count += 1;
                record.push(String::new());
            } else {
                record.push(student_answer(s, q));
            }
        }
        writer.write_record(&record).unwrap();
    }
    writer.flush().unwrap();
    drop(writer);

    let scale = ScoreScale::default();
    let mut entries = Vec::new();
    for s in 1..=students {
        for q in 1..=question_count {
            if is_blank_cell(s, q, question_count) {
                continue;
            }
            let question = question_text(q);
            let gold = gold_answer(q);
            let answer = student_answer(s, q);
            let inputs = QuizPromptInputs::new(&question, &gold, &answer, scale).unwrap();
            let prompt = render_quiz_prompt(&inputs);
            entries.push(ScriptEntry {
                prompt_hash: prompt_hash(&prompt),
                response_text: scripted_response(s, q),
                input_tokens: MOCK_INPUT_TOKENS,
                output_tokens: MOCK_OUTPUT_TOKENS,
                fail_count: 0,
            });
        }
    }
    std::fs::write(&script_path, serde_json::to_string_pretty(&entries).unwrap()).unwrap();

    QuizCorpus {
        gold_path,
        responses_path,
        script_path,
        students,
        question_count,
        empty_count,
    }
}

/// The model response used for the fully-correct Team A report: full credit
/// everywhere except Results at 1.8, overall 8.8.
pub fn team_a_response() -> String {
    "Section: Abstract\nGrade: 1.0\nFeedback: The abstract is concise and informative, clearly summarizing the project's objectives.\n\
     Section: Introduction\nGrade: 1.0\nFeedback: The introduction clearly states the project goals and motivation.\n\
     Section: Related Work\nGrade: 1.0\nFeedback: Reviews relevant prior research and distinguishes the proposed work.\n\
     Section: Approach\nGrade: 2.0\nFeedback: Clearly explained and technically sound with justified novelty.\n\
     Section: Results\nGrade: 1.8\nFeedback: Evaluation metrics and benchmarks are described properly, but more quantitative data would help.\n\
     Section: Conclusion\nGrade: 1.0\nFeedback: Summarizes findings and future work effectively.\n\
     Section: References\nGrade: 0.5\nFeedback: References are complete, recent, and properly formatted.\n\
     Section: Format\nGrade: 0.5\nFeedback: The report is well-organized and easy to read.\n\
     Overall: 8.8\nSummary: A strong report on an AI-powered platform with clear goals, sound methods, and minor gaps in quantitative evidence."
        .to_string()
}

pub fn report_body(team: &str) -> String {
    format!(
        "Abstract: Team {team} proposes an NLP system for a real-world problem.\n\
         Introduction: The goals and motivation are stated here.\n\
         Related Work: Prior systems are reviewed and contrasted.\n\
         Approach: The pipeline combines retrieval with a classifier.\n\
         Results: Preliminary accuracy numbers are reported on a held-out set.\n\
         Conclusion: Findings and future work are summarized.\n\
         References: A dozen recent citations.\n"
    )
}

/// Writes `<team>.txt` reports and a mock script mapping each rendered
/// report prompt to the given response text.
pub fn build_report_fixtures(
    dir: &Path,
    teams: &[(&str, String)],
) -> (PathBuf, PathBuf) {
    let reports_dir = dir.join("reports");
    std::fs::create_dir_all(&reports_dir).unwrap();
    let rubric = Rubric::default_report_rubric();
    let mut entries = Vec::new();
    for (team, response) in teams {
        let body = report_body(team);
        std::fs::write(reports_dir.join(format!("{team}.txt")), &body).unwrap();
        let inputs = ReportPromptInputs::new(&rubric, &body).unwrap();
        let prompt = render_report_prompt(&inputs, 100_000).unwrap();
        entries.push(ScriptEntry {
            prompt_hash: prompt_hash(&prompt),
            response_text: response.clone(),
            input_tokens: 4000,
            output_tokens: 350,
            fail_count: 0,
        });
    }
    let script_path = dir.join("report_script.json");
    std::fs::write(&script_path, serde_json::to_string_pretty(&entries).unwrap()).unwrap();
    (reports_dir, script_path)
}
