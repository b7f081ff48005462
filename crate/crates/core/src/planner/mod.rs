//! Instruction decomposition and subtask allocation.
//!
//! Every entry point takes a [`PlannerBackend`]. The rule-based backend
//! keeps everything deterministic and offline; the remote and replay
//! backends go through rendered prompt text and parse the reply.

mod allocate;
mod backend;
mod decompose;
pub mod tables;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use allocate::{
    allocate, allocate_commonsense, allocate_random, parse_allocation_response,
    parse_commonsense_response, render_allocation_prompt, render_commonsense_prompt,
    room_to_robot,
};
pub use backend::{
    request_hash, BackendKind, PlannerBackend, RemoteChatBackend, RemoteConfig, ReplayBackend,
    RuleBasedBackend, API_KEY_ENV,
};
pub use decompose::{decompose, find_object_mentions, parse_subtask_lines, render_decomposition_prompt};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("no recognizable or inferable target object in `{0}`")]
    EmptyDecomposition(String),
    #[error("object vocabulary is empty")]
    EmptyVocabulary,
    #[error("no knowledge base or robot to allocate to")]
    NoRobots,
    #[error("no robot can be allocated: {}", .0.join(", "))]
    Unallocatable(Vec<String>),
    #[error("no replay response recorded for request {0}")]
    ReplayMiss(String),
    #[error("remote backend: {0}")]
    Remote(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionCategory {
    Random,
    HardToPredict,
    CommonSense,
    Mixed,
    Ambiguous,
}

impl InstructionCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            InstructionCategory::Random => "random",
            InstructionCategory::HardToPredict => "hard_to_predict",
            InstructionCategory::CommonSense => "common_sense",
            InstructionCategory::Mixed => "mixed",
            InstructionCategory::Ambiguous => "ambiguous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub category: InstructionCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_objects: Option<Vec<String>>,
}

impl Instruction {
    pub fn new(text: impl Into<String>, category: InstructionCategory) -> Self {
        Instruction { text: text.into(), category, gold_objects: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Bring,
    Find,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub verb: Verb,
    pub target_object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<String>,
}

impl Subtask {
    pub fn find(object: impl Into<String>) -> Self {
        Subtask { verb: Verb::Find, target_object: object.into(), destination: None }
    }

    pub fn bring(object: impl Into<String>) -> Self {
        Subtask { verb: Verb::Bring, target_object: object.into(), destination: None }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verb = match self.verb {
            Verb::Bring => "bring",
            Verb::Find => "find",
        };
        write!(f, "{verb} {}", self.target_object)?;
        if let Some(d) = &self.destination {
            write!(f, " to {d}")?;
        }
        Ok(())
    }
}

/// The room (and, for knowledge-grounded choices, its presence
/// probability) that motivated an assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Justification {
    pub room: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub subtask: Subtask,
    pub robot_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<Justification>,
}
