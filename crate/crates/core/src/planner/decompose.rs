use std::fmt::Write as _;

use super::tables;
use super::{Instruction, PlannerBackend, PlannerError, Subtask, Verb};
use crate::knowledge::{render_decomposition_example, render_objects, render_skills};

const BRING_WORDS: [&str; 6] = ["bring", "fetch", "get", "deliver", "carry", "take"];

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Every phrase that names a vocabulary object, longest first.
fn phrase_table<S: AsRef<str>>(vocab: &[S]) -> Vec<(Vec<String>, String)> {
    let mut phrases = Vec::new();
    for label in vocab {
        let label = label.as_ref();
        phrases.push((tokenize(&label.replace('_', " ")), label.to_string()));
        for alias in tables::aliases(label) {
            phrases.push((tokenize(alias), label.to_string()));
        }
    }
    phrases.retain(|(p, _)| !p.is_empty());
    phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
    phrases
}

fn token_matches(text: &str, phrase: &str, last: bool) -> bool {
    text == phrase
        || (last && (text.strip_suffix('s') == Some(phrase) || text.strip_suffix("es") == Some(phrase)))
}

/// Object labels named in `text`, in order of first mention. Aliases from
/// the bundled synonym table count; overlapping mentions resolve to the
/// longest phrase.
pub fn find_object_mentions<S: AsRef<str>>(text: &str, vocab: &[S]) -> Vec<String> {
    let tokens = tokenize(text);
    let phrases = phrase_table(vocab);
    let mut found: Vec<String> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let hit = phrases.iter().find(|(p, _)| {
            p.len() <= tokens.len() - i
                && p.iter()
                    .enumerate()
                    .all(|(j, pt)| token_matches(&tokens[i + j], pt, j + 1 == p.len()))
        });
        match hit {
            Some((p, label)) => {
                if !found.contains(label) {
                    found.push(label.clone());
                }
                i += p.len();
            }
            None => i += 1,
        }
    }
    found
}

fn detect_verb(text: &str) -> Verb {
    if tokenize(text).iter().any(|t| BRING_WORDS.contains(&t.as_str())) {
        Verb::Bring
    } else {
        Verb::Find
    }
}

/// The line after the last `Task Description:` header, if any.
pub(crate) fn task_description(prompt: &str) -> Option<&str> {
    let lines: Vec<&str> = prompt.lines().collect();
    let header = lines.iter().rposition(|l| l.trim() == "Task Description:")?;
    lines[header + 1..].iter().map(|l| l.trim()).find(|l| !l.is_empty())
}

pub fn render_decomposition_prompt<S: AsRef<str>>(task: &str, object_vocab: &[S]) -> String {
    let mut text = String::new();
    let _ = write!(text, "(a) Skills\n{}\n", render_skills().text);
    let _ = write!(text, "(b) Objects in the environment\n{}\n", render_objects(object_vocab).text);
    let example = render_decomposition_example("Prepare for the excursion.", &["water bottle", "backpack"]);
    let _ = write!(text, "(c) Example\n{}\n", example.text);
    text.push_str(
        "(d) Rule for decomposing tasks\n\
         # IMPORTANT: List only the items needed to fulfil the task, chosen from the objects in (b) \
         or their common names. Answer with one \"SubTask k: Bring a <item>.\" line per item.\n\n",
    );
    let _ = writeln!(text, "Task Description:\n{task}");
    text
}

/// Reads `SubTask k: ...` lines and anchors each to vocabulary objects.
/// Lines naming nothing known are dropped. Text after `->` is ignored.
pub fn parse_subtask_lines<S: AsRef<str>>(reply: &str, object_vocab: &[S]) -> Vec<Subtask> {
    let mut out: Vec<Subtask> = Vec::new();
    for line in reply.lines() {
        let clean = line.replace("**", "");
        let clean = clean.trim();
        if !clean.to_lowercase().starts_with("subtask") {
            continue;
        }
        let Some((_, body)) = clean.split_once(':') else { continue };
        let body = body.split("->").next().unwrap_or("");
        let verb = detect_verb(body);
        for object in find_object_mentions(body, object_vocab) {
            if !out.iter().any(|s| s.target_object == object) {
                out.push(Subtask { verb, target_object: object, destination: None });
            }
        }
    }
    out
}

/// Splits an instruction into one subtask per target object. Explicitly
/// named objects are taken as-is; otherwise the backend is asked which
/// items the request implies.
pub fn decompose<S: AsRef<str>>(
    instruction: &Instruction,
    object_vocab: &[S],
    backend: &dyn PlannerBackend,
) -> Result<Vec<Subtask>, PlannerError> {
    if object_vocab.is_empty() {
        return Err(PlannerError::EmptyVocabulary);
    }
    let explicit = find_object_mentions(&instruction.text, object_vocab);
    if !explicit.is_empty() {
        let verb = detect_verb(&instruction.text);
        return Ok(explicit
            .into_iter()
            .map(|o| Subtask { verb, target_object: o, destination: None })
            .collect());
    }
    let prompt = render_decomposition_prompt(&instruction.text, object_vocab);
    let reply = backend.complete(&prompt)?;
    let subtasks = parse_subtask_lines(&reply, object_vocab);
    if subtasks.is_empty() {
        return Err(PlannerError::EmptyDecomposition(instruction.text.clone()));
    }
    Ok(subtasks)
}
