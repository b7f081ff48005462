//! On-site knowledge: what a robot extracts from its learned model, and the
//! plain-text prompt blocks built from it.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial::{SpatialConceptModel, SpatialError};

pub const DEFAULT_VOCAB_THRESHOLD: f64 = 0.05;

const PRESENCE_TITLE: &str = "\"List of probabilities that an object exists\":";
const DIVIDER: &str = "----------------";

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error(transparent)]
    Model(#[from] SpatialError),
    #[error("{given} room names supplied for a model with {regions} regions")]
    RoomCount { given: usize, regions: usize },
    #[error("vocabulary threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("presence row for `{object}` has {len} entries, expected {expected}")]
    RowLength { object: String, len: usize, expected: usize },
    #[error("cannot parse prompt text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("knowledge json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub robot_id: String,
    pub room_names: Vec<String>,
    /// Per-room place words, most probable first.
    pub place_vocab: Vec<Vec<String>>,
    /// Object label → presence probability per room, aligned with `room_names`.
    pub presence_table: IndexMap<String, Vec<f64>>,
}

impl KnowledgeBase {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let expected = self.room_names.len();
        for (object, row) in &self.presence_table {
            if row.len() != expected {
                return Err(KnowledgeError::RowLength { object: object.clone(), len: row.len(), expected });
            }
        }
        Ok(())
    }

    /// Highest presence probability for `object` and the room holding it.
    /// `None` when the object is not in this robot's table.
    pub fn best_room(&self, object: &str) -> Option<(&str, f64)> {
        let row = self.presence_table.get(object)?;
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in row.iter().enumerate() {
            if best.is_none_or(|(_, b)| *p > b) {
                best = Some((i, *p));
            }
        }
        best.map(|(i, p)| (self.room_names[i].as_str(), p))
    }

    /// Rooms sorted by descending presence probability of `object`, ties in
    /// table order.
    pub fn room_order(&self, object: &str) -> Option<Vec<String>> {
        let row = self.presence_table.get(object)?;
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        Some(idx.into_iter().map(|i| self.room_names[i].clone()).collect())
    }

    pub fn to_json(&self) -> Result<String, KnowledgeError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, KnowledgeError> {
        let kb: KnowledgeBase = serde_json::from_str(text)?;
        kb.validate()?;
        Ok(kb)
    }
}

/// Builds a knowledge base from a learned model. `room_names[r]` labels
/// region `r`.
pub fn extract_knowledge(
    model: &SpatialConceptModel,
    robot_id: &str,
    room_names: &[String],
    vocab_threshold: f64,
) -> Result<KnowledgeBase, KnowledgeError> {
    if room_names.len() != model.num_regions() {
        return Err(KnowledgeError::RoomCount { given: room_names.len(), regions: model.num_regions() });
    }
    if !(vocab_threshold > 0.0 && vocab_threshold < 1.0) {
        return Err(KnowledgeError::Threshold(vocab_threshold));
    }
    let mut place_vocab = Vec::with_capacity(room_names.len());
    for r in 0..room_names.len() {
        let post = model.word_posterior(r)?;
        let mut words: Vec<(usize, f64)> = post
            .probs
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, p)| *p >= vocab_threshold)
            .collect();
        words.sort_by(|a, b| b.1.total_cmp(&a.1));
        place_vocab.push(words.into_iter().map(|(i, _)| model.vocab_places[i].clone()).collect());
    }
    let mut presence_table = IndexMap::new();
    for object in &model.vocab_objects {
        presence_table.insert(object.clone(), model.object_location_posterior(object)?.probs);
    }
    Ok(KnowledgeBase {
        robot_id: robot_id.to_string(),
        room_names: room_names.to_vec(),
        place_vocab,
        presence_table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    PlaceVocab,
    PresenceTable,
    Skills,
    Objects,
    AllocationRule,
    Behaviors,
    DialogueExample,
    DecompositionExample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptComponent {
    pub kind: PromptKind,
    pub text: String,
}

impl PromptComponent {
    fn new(kind: PromptKind, text: String) -> Self {
        PromptComponent { kind, text }
    }
}

fn count_word(n: usize) -> String {
    const WORDS: [&str; 13] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve",
    ];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

/// Probability with at most four decimals, trailing zeros trimmed but
/// always keeping one digit after the point (`0.01`, `0.848`, `0.0`).
pub fn format_probability(p: f64) -> String {
    let mut s = format!("{p:.4}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.push('0');
    }
    s
}

fn bracket_list<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> String {
    let parts: Vec<String> = items.into_iter().map(|s| s.as_ref().to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn parse_bracket_list(s: &str, line: usize) -> Result<Vec<String>, KnowledgeError> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| KnowledgeError::Parse { line, reason: format!("expected a bracketed list, got `{s}`") })?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    Ok(inner.split(',').map(|p| p.trim().to_string()).collect())
}

pub fn render_place_vocab(kb: &KnowledgeBase) -> PromptComponent {
    let n = kb.room_names.len();
    let mut text = String::new();
    if n == 1 {
        text.push_str("There is one location area in a home environment.\n");
        text.push_str("Your initial position is outside of the room.\n");
    } else {
        let w = count_word(n);
        let _ = writeln!(text, "There are {w} location areas in a home environment.");
        let _ = writeln!(text, "Your initial position is outside of the {w} rooms.");
    }
    text.push_str("In each region, words related to the following locations are likely to be observed.\n");
    for (i, words) in kb.place_vocab.iter().enumerate() {
        let _ = writeln!(text, "place{}: {}", i + 1, bracket_list(words));
    }
    PromptComponent::new(PromptKind::PlaceVocab, text)
}

/// Inverse of [`render_place_vocab`]: the per-region word lists.
pub fn parse_place_vocab(text: &str) -> Result<Vec<Vec<String>>, KnowledgeError> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix("place") else { continue };
        let Some((num, list)) = rest.split_once(':') else { continue };
        let idx: usize = num
            .parse()
            .map_err(|_| KnowledgeError::Parse { line: ln + 1, reason: format!("bad region number `{num}`") })?;
        if idx != out.len() + 1 {
            return Err(KnowledgeError::Parse {
                line: ln + 1,
                reason: format!("expected place{}, found place{idx}", out.len() + 1),
            });
        }
        out.push(parse_bracket_list(list, ln + 1)?);
    }
    Ok(out)
}

pub fn render_presence_table(kbs: &[KnowledgeBase]) -> PromptComponent {
    let mut text = String::new();
    for (i, kb) in kbs.iter().enumerate() {
        if i > 0 {
            text.push_str(DIVIDER);
            text.push('\n');
        }
        let _ = writeln!(text, "{}", kb.robot_id);
        let _ = writeln!(text, "{PRESENCE_TITLE}");
        let _ = writeln!(text, "{}", bracket_list(&kb.room_names));
        for (object, row) in &kb.presence_table {
            let _ = writeln!(text, "{object} = {}", bracket_list(row.iter().map(|p| format_probability(*p))));
        }
    }
    PromptComponent::new(PromptKind::PresenceTable, text)
}

/// Inverse of [`render_presence_table`]. Place vocabularies are not part
/// of that block, so each recovered base carries empty word lists.
pub fn parse_presence_table(text: &str) -> Result<Vec<KnowledgeBase>, KnowledgeError> {
    let mut out: Vec<KnowledgeBase> = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((ln, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() || line == DIVIDER {
            continue;
        }
        let robot_id = line.to_string();
        let (tl, title) = lines.next().ok_or(KnowledgeError::Parse { line: ln + 1, reason: "truncated block".into() })?;
        if title.trim() != PRESENCE_TITLE {
            return Err(KnowledgeError::Parse { line: tl + 1, reason: "missing list title".into() });
        }
        let (rl, rooms) = lines.next().ok_or(KnowledgeError::Parse { line: tl + 1, reason: "missing room list".into() })?;
        let room_names = parse_bracket_list(rooms, rl + 1)?;
        let mut presence_table = IndexMap::new();
        while let Some((_, next)) = lines.peek() {
            if next.trim().is_empty() || next.trim() == DIVIDER {
                break;
            }
            let (ol, row_line) = lines.next().expect("peeked");
            let (object, row) = row_line.split_once(" = ").ok_or_else(|| KnowledgeError::Parse {
                line: ol + 1,
                reason: format!("expected `object = [...]`, got `{row_line}`"),
            })?;
            let values = parse_bracket_list(row, ol + 1)?
                .iter()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| KnowledgeError::Parse {
                        line: ol + 1,
                        reason: format!("bad probability `{v}`"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            presence_table.insert(object.trim().to_string(), values);
        }
        let kb = KnowledgeBase {
            robot_id,
            place_vocab: vec![Vec::new(); room_names.len()],
            room_names,
            presence_table,
        };
        kb.validate()?;
        out.push(kb);
    }
    Ok(out)
}

pub const SKILLS: [&str; 4] = ["navigation", "object_detection", "pick", "place"];

pub fn render_skills() -> PromptComponent {
    PromptComponent::new(PromptKind::Skills, format!("{}\n", SKILLS.join(", ")))
}

pub fn render_objects<S: AsRef<str>>(objects: &[S]) -> PromptComponent {
    let names: Vec<&str> = objects.iter().map(|o| o.as_ref()).collect();
    PromptComponent::new(PromptKind::Objects, format!("{}\n", names.join(", ")))
}

pub fn render_allocation_rule() -> PromptComponent {
    PromptComponent::new(
        PromptKind::AllocationRule,
        format!(
            "# IMPORTANT: Subtasks are assigned taking into consideration the objects listed in the \
             {} that each robot has.\n",
            "\"List of probabilities that an object exists\""
        ),
    )
}

pub fn render_behaviors() -> PromptComponent {
    PromptComponent::new(
        PromptKind::Behaviors,
        "navigation (location_name): move to location_name\n\
         object_detection (object_name): detect an object_name and its position from a captured image\n\
         pick (object_name): pick up an object_name\n\
         place (location_name): place an object to the location_name\n\
         \n\
         These behaviors return \"succeeded\" or \"failed\". If \"failed\" is returned, try the same or another behavior again.\n\
         Do not ask back anything about the user's instructions.\n"
            .to_string(),
    )
}

pub fn render_dialogue_example() -> PromptComponent {
    PromptComponent::new(
        PromptKind::DialogueExample,
        "USER : bring the cup to the kitchen\n\
         ASSISTANT : navigation (living_room)\n\
         USER : succeeded\n\
         ASSISTANT : object_detection (cup)\n\
         USER : succeeded\n\
         ASSISTANT : pick (cup)\n\
         USER : failed\n\
         ASSISTANT : pick (cup)\n\
         USER : succeeded\n\
         ASSISTANT : navigation (kitchen)\n\
         USER : succeeded\n"
            .to_string(),
    )
}

/// Few-shot example pairing a vague task with the items it implies.
pub fn render_decomposition_example(task: &str, items: &[&str]) -> PromptComponent {
    let mut text = String::from("Task Description:\n");
    let _ = writeln!(text, "{task}");
    text.push('\n');
    for (i, item) in items.iter().enumerate() {
        let _ = writeln!(text, "SubTask {}: Bring a {item}.", i + 1);
    }
    PromptComponent::new(PromptKind::DecompositionExample, text)
}
