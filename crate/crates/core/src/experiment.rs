//! Instruction suites, allocation strategies and scoring.

use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{extract_knowledge, KnowledgeBase, KnowledgeError, DEFAULT_VOCAB_THRESHOLD};
use crate::planner::{
    allocate, allocate_commonsense, allocate_random, decompose, room_to_robot, tables, Assignment,
    Instruction, InstructionCategory, PlannerBackend, PlannerError, Subtask,
};
use crate::spatial::{learn_fixed_lag_with_vocab, Hyperparameters, SpatialConceptModel, SpatialError};
use crate::world::{
    default_robots, floor_protocol_sessions, Category, Environment, RobotState, SkillProbabilities, World,
    WorldError,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Sentence templates, cycled by instruction index.
pub const TEMPLATES: [&str; 3] = ["Could you please find {o}.", "I need you to locate {o}.", "Please search for {o}."];

/// Visits per room in the learning protocol.
pub const DEFAULT_VISITS_PER_ROOM: usize = 30;

/// The four scored categories, in report order.
pub const SCORED_CATEGORIES: [InstructionCategory; 4] = [
    InstructionCategory::Random,
    InstructionCategory::HardToPredict,
    InstructionCategory::CommonSense,
    InstructionCategory::Mixed,
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no {category} object on floor {floor}")]
    EmptyCategory { category: String, floor: String },
    #[error("instructions of category {0} are not generated")]
    NotGenerated(String),
    #[error("object `{0}` has no placement")]
    Unplaced(String),
    #[error("robot `{0}` has no floor")]
    UnknownRobot(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

/// Independent sub-seed for `(tag, index)` under `seed`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng.next_u64()
}

/// Hyperparameters with one concept and one region per room on `floor`.
pub fn floor_hyperparameters(env: &Environment, floor: &str, base: &Hyperparameters) -> Hyperparameters {
    let rooms = env.rooms_on(floor).count().max(1);
    Hyperparameters { num_concepts: rooms, num_regions: rooms, ..base.clone() }
}

/// Simulates the learning protocol for `robot`, learns its model and
/// extracts its knowledge base. Regions are named after the floor's rooms
/// in visiting order; the object vocabulary is every object on the floor.
pub fn learn_robot_knowledge(
    env: &Environment,
    robot: &RobotState,
    visits_per_room: usize,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<(SpatialConceptModel, KnowledgeBase), ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sessions = floor_protocol_sessions(env, robot, visits_per_room, &mut rng)?;
    let mut places: Vec<String> = Vec::new();
    for w in sessions.iter().flat_map(|s| &s.place_words) {
        if !places.contains(w) {
            places.push(w.clone());
        }
    }
    let objects: Vec<String> = env.objects_on(&robot.floor).map(String::from).collect();
    let hp = floor_hyperparameters(env, &robot.floor, hp);
    let model = learn_fixed_lag_with_vocab(&sessions, &hp, seed, places, objects)?;
    let rooms: Vec<String> = env.rooms_on(&robot.floor).map(|r| r.name.clone()).collect();
    let kb = extract_knowledge(&model, &robot.robot_id, &rooms, DEFAULT_VOCAB_THRESHOLD)?;
    Ok((model, kb))
}

/// One knowledge base per robot, each learned from its own seed.
pub fn learn_team_knowledge(
    env: &Environment,
    robots: &[RobotState],
    visits_per_room: usize,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<Vec<KnowledgeBase>, ExperimentError> {
    robots
        .iter()
        .enumerate()
        .map(|(i, r)| {
            learn_robot_knowledge(env, r, visits_per_room, hp, derive_seed(seed, 1, i as u64)).map(|(_, kb)| kb)
        })
        .collect()
}

fn category_of(env: &Environment, object: &str) -> Category {
    env.categories.get(object).copied().unwrap_or(Category::CommonSense)
}

fn pick_on_floor(
    env: &Environment,
    floor: &str,
    category: Option<Category>,
    rng: &mut ChaCha8Rng,
) -> Result<String, ExperimentError> {
    let pool: Vec<&str> = env
        .objects_on(floor)
        .filter(|o| category.is_none_or(|c| category_of(env, o) == c))
        .collect();
    pool.choose(rng).map(|o| o.to_string()).ok_or_else(|| ExperimentError::EmptyCategory {
        category: match category {
            None => "placed".into(),
            Some(Category::HardToPredict) => "hard_to_predict".into(),
            Some(Category::CommonSense) => "common_sense".into(),
        },
        floor: floor.to_string(),
    })
}

/// Renders an instruction naming `objects` with template `index % 3`.
pub fn instruction_text(objects: &[String], index: usize) -> String {
    let names: Vec<String> = objects.iter().map(|o| o.replace('_', " ")).collect();
    TEMPLATES[index % TEMPLATES.len()].replace("{o}", &names.join(" and "))
}

/// `count` instructions naming one object per floor. Random draws any
/// object; hard_to_predict and common_sense draw from that category;
/// mixed gives one floor a hard-to-predict object and the others
/// common-sense ones, the hard floor chosen at random.
pub fn generate_instructions(
    category: InstructionCategory,
    env: &Environment,
    count: usize,
    seed: u64,
) -> Result<Vec<Instruction>, ExperimentError> {
    let tag = match category {
        InstructionCategory::Random => 11,
        InstructionCategory::HardToPredict => 12,
        InstructionCategory::CommonSense => 13,
        InstructionCategory::Mixed => 14,
        InstructionCategory::Ambiguous => {
            return Err(ExperimentError::NotGenerated(category.as_str().into()))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, 0));
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let hard_floor = rng.random_range(0..env.floors.len().max(1));
        let mut objects = Vec::with_capacity(env.floors.len());
        for (f, floor) in env.floors.iter().enumerate() {
            let wanted = match category {
                InstructionCategory::HardToPredict => Some(Category::HardToPredict),
                InstructionCategory::CommonSense => Some(Category::CommonSense),
                InstructionCategory::Mixed if f == hard_floor => Some(Category::HardToPredict),
                InstructionCategory::Mixed => Some(Category::CommonSense),
                _ => None,
            };
            objects.push(pick_on_floor(env, floor, wanted, &mut rng)?);
        }
        out.push(Instruction {
            text: instruction_text(&objects, i),
            category,
            gold_objects: Some(objects),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub successes: usize,
    pub attempts: usize,
    pub flags: Vec<bool>,
}

/// A subtask succeeds when its robot works the floor that holds the
/// object. Presence probabilities play no part.
pub fn score_allocations(
    assignments: &[Assignment],
    env: &Environment,
    floor_of_robot: &IndexMap<String, String>,
) -> Result<Score, ExperimentError> {
    let mut flags = Vec::with_capacity(assignments.len());
    for a in assignments {
        let object = &a.subtask.target_object;
        let floor = env.floor_of_object(object).ok_or_else(|| ExperimentError::Unplaced(object.clone()))?;
        let robot_floor =
            floor_of_robot.get(&a.robot_id).ok_or_else(|| ExperimentError::UnknownRobot(a.robot_id.clone()))?;
        flags.push(robot_floor == floor);
    }
    Ok(Score { successes: flags.iter().filter(|f| **f).count(), attempts: flags.len(), flags })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Proposed,
    Random,
    Commonsense,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Proposed, Strategy::Random, Strategy::Commonsense];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Proposed => "proposed",
            Strategy::Random => "random",
            Strategy::Commonsense => "commonsense",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum KnowledgeSource {
    /// Learn every robot's table from simulated sessions.
    Learn { visits_per_room: usize },
    Provided { knowledge: Vec<KnowledgeBase> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    /// Builtin environment name or path to an environment file.
    pub env: String,
    pub seed: u64,
    /// Instructions per category; each names one object per floor.
    pub counts: IndexMap<InstructionCategory, usize>,
    pub strategies: Vec<Strategy>,
    pub knowledge: KnowledgeSource,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    /// Typical-room table for the commonsense strategy; the bundled one
    /// for the environment when absent.
    #[serde(default)]
    pub commonsense_table: Option<IndexMap<String, String>>,
}

impl SuiteConfig {
    /// 10 random instructions and 5 of each other category: 20 + 3 × 10
    /// subtasks on a two-floor environment.
    pub fn standard(env: impl Into<String>, seed: u64) -> Self {
        let counts = SCORED_CATEGORIES
            .iter()
            .map(|&c| (c, if c == InstructionCategory::Random { 10 } else { 5 }))
            .collect();
        SuiteConfig {
            env: env.into(),
            seed,
            counts,
            strategies: Strategy::ALL.to_vec(),
            knowledge: KnowledgeSource::Learn { visits_per_room: DEFAULT_VISITS_PER_ROOM },
            hyperparameters: Hyperparameters::default(),
            commonsense_table: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub successes: usize,
    pub attempts: usize,
}

impl Cell {
    fn add(&mut self, successes: usize, attempts: usize) {
        self.successes += successes;
        self.attempts += attempts;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub categories: IndexMap<InstructionCategory, Cell>,
    pub total: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub strategy: Strategy,
    pub category: InstructionCategory,
    pub instruction: String,
    pub gold_objects: Vec<String>,
    pub gold_floors: Vec<String>,
    pub subtasks: Vec<Subtask>,
    pub assignments: Vec<Assignment>,
    pub correct: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Published success counts for the three strategies, carried verbatim for
/// comparison. They came from a live chat model and are never recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub note: String,
    pub grid: IndexMap<Strategy, StrategyRow>,
}

impl ReferenceRow {
    pub fn published() -> Self {
        let row = |cells: [(usize, usize); 4]| {
            let categories: IndexMap<_, _> = SCORED_CATEGORIES
                .iter()
                .zip(cells)
                .map(|(&c, (s, a))| (c, Cell { successes: s, attempts: a }))
                .collect();
            let mut total = Cell::default();
            for cell in categories.values() {
                total.add(cell.successes, cell.attempts);
            }
            StrategyRow { categories, total }
        };
        let grid = [
            (Strategy::Proposed, row([(17, 20), (10, 10), (10, 10), (10, 10)])),
            (Strategy::Random, row([(11, 20), (6, 10), (4, 10), (7, 10)])),
            (Strategy::Commonsense, row([(10, 20), (3, 10), (6, 10), (7, 10)])),
        ]
        .into_iter()
        .collect();
        ReferenceRow {
            note: "published reference counts obtained with a GPT-4 planner; cited, not recomputed".into(),
            grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub env: String,
    pub seed: u64,
    pub backend: String,
    pub grid: IndexMap<Strategy, StrategyRow>,
    pub reference: ReferenceRow,
    pub trials: Vec<Trial>,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Plain-text grid: one row per strategy, then the reference rows.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = SCORED_CATEGORIES.iter().map(|c| c.as_str()).collect();
        let _ = writeln!(out, "{:<24}{:>12}{:>18}{:>15}{:>10}{:>10}", "strategy", header[0], header[1], header[2], header[3], "total");
        let mut rows = |label: String, row: &StrategyRow| {
            let cells: Vec<String> = SCORED_CATEGORIES
                .iter()
                .map(|c| row.categories.get(c).map(|x| format!("{}/{}", x.successes, x.attempts)).unwrap_or("-".into()))
                .collect();
            let _ = writeln!(
                out,
                "{label:<24}{:>12}{:>18}{:>15}{:>10}{:>10}",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                format!("{}/{}", row.total.successes, row.total.attempts)
            );
        };
        for (s, row) in &self.grid {
            rows(s.as_str().to_string(), row);
        }
        for (s, row) in &self.reference.grid {
            rows(format!("{} (reference)", s.as_str()), row);
        }
        out
    }
}

fn knowledge_for(cfg: &SuiteConfig, env: &Environment, robots: &[RobotState]) -> Result<Vec<KnowledgeBase>, ExperimentError> {
    match &cfg.knowledge {
        KnowledgeSource::Learn { visits_per_room } => {
            learn_team_knowledge(env, robots, *visits_per_room, &cfg.hyperparameters, cfg.seed)
        }
        KnowledgeSource::Provided { knowledge } => Ok(knowledge.clone()),
    }
}

/// Decomposes, allocates and scores every generated instruction under each
/// configured strategy.
pub fn run_suite(cfg: &SuiteConfig, backend: &dyn PlannerBackend) -> Result<SuiteReport, ExperimentError> {
    if cfg.strategies.is_empty() {
        return Err(ExperimentError::Config("at least one strategy is required".into()));
    }
    let env = crate::world::load_environment(&cfg.env)?;
    let robots = default_robots(&env);
    let floor_of_robot: IndexMap<String, String> =
        robots.iter().map(|r| (r.robot_id.clone(), r.floor.clone())).collect();
    let robot_ids: Vec<&str> = robots.iter().map(|r| r.robot_id.as_str()).collect();

    let kbs = if cfg.strategies.contains(&Strategy::Proposed) {
        let kbs = knowledge_for(cfg, &env, &robots)?;
        if kbs.is_empty() {
            return Err(ExperimentError::Config("the proposed strategy needs knowledge bases".into()));
        }
        kbs
    } else {
        Vec::new()
    };
    let commonsense = if cfg.strategies.contains(&Strategy::Commonsense) {
        cfg.commonsense_table
            .clone()
            .or_else(|| tables::commonsense_rooms(&cfg.env))
            .ok_or_else(|| ExperimentError::Config(format!("no typical-room table for `{}`", cfg.env)))?
    } else {
        IndexMap::new()
    };
    let routes = room_to_robot(&env, &robots);
    let vocab: Vec<&str> = env.objects().collect();

    let mut suites = Vec::new();
    for (&category, &count) in &cfg.counts {
        suites.push(generate_instructions(category, &env, count, cfg.seed)?);
    }

    let mut grid = IndexMap::new();
    let mut trials = Vec::new();
    for &strategy in &cfg.strategies {
        let mut row = StrategyRow {
            categories: cfg.counts.keys().map(|&c| (c, Cell::default())).collect(),
            total: Cell::default(),
        };
        for (trial_index, instr) in suites.iter().flatten().enumerate() {
            let gold = instr.gold_objects.clone().unwrap_or_default();
            let gold_floors =
                gold.iter().map(|o| env.floor_of_object(o).unwrap_or_default().to_string()).collect();
            let outcome = decompose(instr, &vocab, backend).and_then(|subtasks| {
                let assignments = match strategy {
                    Strategy::Proposed => allocate(&subtasks, &kbs, backend)?,
                    Strategy::Random => allocate_random(
                        &subtasks,
                        &robot_ids,
                        derive_seed(cfg.seed, 2, trial_index as u64),
                    )?,
                    Strategy::Commonsense => allocate_commonsense(&subtasks, &commonsense, &routes, backend)?,
                };
                Ok((subtasks, assignments))
            });
            let mut trial = Trial {
                strategy,
                category: instr.category,
                instruction: instr.text.clone(),
                gold_objects: gold.clone(),
                gold_floors,
                subtasks: Vec::new(),
                assignments: Vec::new(),
                correct: Vec::new(),
                error: None,
            };
            let (successes, attempts) = match outcome {
                Ok((subtasks, assignments)) => {
                    let score = score_allocations(&assignments, &env, &floor_of_robot)?;
                    trial.subtasks = subtasks;
                    trial.assignments = assignments;
                    trial.correct = score.flags;
                    (score.successes, score.attempts)
                }
                // A planning failure scores every gold object as missed.
                Err(e) => {
                    trial.error = Some(e.to_string());
                    trial.correct = vec![false; gold.len()];
                    (0, gold.len())
                }
            };
            row.categories.entry(instr.category).or_default().add(successes, attempts);
            row.total.add(successes, attempts);
            trials.push(trial);
        }
        grid.insert(strategy, row);
    }
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION,
        env: cfg.env.clone(),
        seed: cfg.seed,
        backend: serde_json::to_value(backend.kind())
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        grid,
        reference: ReferenceRow::published(),
        trials,
    })
}

/// The two-robot field-trip demonstration: Robot1 on zone1, Robot2 on
/// zone2 parking in the kitchen, every skill certain to succeed, and the
/// fetches as they were logged (Robot2: cup then water_bottle, Robot1: bag).
pub struct FieldTrip {
    pub world: World,
    pub knowledge: Vec<KnowledgeBase>,
    pub assignments: Vec<Assignment>,
}

pub fn field_trip_scenario(seed: u64) -> Result<FieldTrip, ExperimentError> {
    let env = Environment::builtin("robocup_arena").expect("bundled environment");
    let robots = vec![
        RobotState::new("Robot1", "zone1").with_probabilities(SkillProbabilities::certain()),
        RobotState::new("Robot2", "zone2")
            .with_probabilities(SkillProbabilities::certain())
            .with_standby("kitchen"),
    ];
    let knowledge =
        learn_team_knowledge(&env, &robots, DEFAULT_VISITS_PER_ROOM, &Hyperparameters::default(), seed)?;
    let fetch = |object: &str, robot: &str| Assignment {
        subtask: Subtask::bring(object),
        robot_id: robot.to_string(),
        justification: None,
    };
    let assignments = vec![fetch("cup", "Robot2"), fetch("water_bottle", "Robot2"), fetch("bag", "Robot1")];
    Ok(FieldTrip { world: World::new(env, robots), knowledge, assignments })
}
