//! Closed-loop execution of assigned subtasks.
//!
//! A [`SubtaskMachine`] owns the control flow of one fetch subtask and
//! never touches the world; the drivers below feed it outcomes, either
//! from the stochastic [`World`] or from a fixed script.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::KnowledgeBase;
use crate::planner::{Assignment, Subtask};
use crate::world::{Skill, SkillOutcome, SkillProbabilities, Status, World, WorldError};

/// Delivery point used when a subtask names no destination.
pub const DEFAULT_DESTINATION: &str = "gather";

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("unknown destination `{0}`")]
    UnknownDestination(String),
    #[error("robot `{0}` has no knowledge base and no room order was given")]
    NoRoomOrder(String),
    #[error("room `{room}` in the search order is not on {robot}'s floor")]
    ForeignRoom { robot: String, room: String },
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPolicy {
    pub max_retries_per_skill: usize,
    /// Rooms to try after the first one; `None` allows every remaining room.
    pub max_room_fallbacks: Option<usize>,
    /// Search order used when the target has no row in the robot's table.
    pub room_order: Option<Vec<String>>,
}

impl Default for ExecutionPolicy {
    fn default() -> Self {
        ExecutionPolicy { max_retries_per_skill: 2, max_room_fallbacks: None, room_order: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskResult {
    SubtaskSucceeded,
    SubtaskFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    #[serde(flatten)]
    pub skill: Skill,
    pub outcome: SkillOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub robot_id: String,
    pub subtask: Subtask,
    pub steps: Vec<TraceStep>,
    pub result: SubtaskResult,
    pub rooms_visited: Vec<String>,
}

impl ExecutionTrace {
    pub fn succeeded(&self) -> bool {
        self.result == SubtaskResult::SubtaskSucceeded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Search,
    Detect,
    Pick,
    Deliver,
    Place,
    Done(bool),
}

/// navigate(room) → detect → pick → navigate(destination) → place, with
/// per-skill retries. Exhausting navigation or detection moves on to the
/// next room; exhausting pick, delivery or place fails the subtask.
#[derive(Debug, Clone)]
pub struct SubtaskMachine {
    object: String,
    destination: String,
    rooms: Vec<String>,
    room: usize,
    last_room: usize,
    max_retries: usize,
    failures: usize,
    phase: Phase,
    visited: Vec<String>,
}

impl SubtaskMachine {
    pub fn new(
        object: impl Into<String>,
        destination: impl Into<String>,
        rooms: Vec<String>,
        policy: &ExecutionPolicy,
    ) -> Self {
        let fallbacks = policy.max_room_fallbacks.unwrap_or(usize::MAX);
        let last_room = rooms.len().saturating_sub(1).min(fallbacks);
        let phase = if rooms.is_empty() { Phase::Done(false) } else { Phase::Search };
        SubtaskMachine {
            object: object.into(),
            destination: destination.into(),
            rooms,
            room: 0,
            last_room,
            max_retries: policy.max_retries_per_skill,
            failures: 0,
            phase,
            visited: Vec::new(),
        }
    }

    /// The next skill to run, or `None` once the subtask is over.
    pub fn next_skill(&self) -> Option<Skill> {
        Some(match self.phase {
            Phase::Search => Skill::Navigation(self.rooms[self.room].clone()),
            Phase::Detect => Skill::ObjectDetection(self.object.clone()),
            Phase::Pick => Skill::Pick(self.object.clone()),
            Phase::Deliver => Skill::Navigation(self.destination.clone()),
            Phase::Place => Skill::Place(self.destination.clone()),
            Phase::Done(_) => return None,
        })
    }

    pub fn feed(&mut self, status: Status) {
        if status == Status::Succeeded {
            self.failures = 0;
            self.phase = match self.phase {
                Phase::Search => {
                    self.visited.push(self.rooms[self.room].clone());
                    Phase::Detect
                }
                Phase::Detect => Phase::Pick,
                Phase::Pick => Phase::Deliver,
                Phase::Deliver => {
                    self.visited.push(self.destination.clone());
                    Phase::Place
                }
                Phase::Place => Phase::Done(true),
                done => done,
            };
            return;
        }
        self.failures += 1;
        if self.failures <= self.max_retries {
            return;
        }
        self.failures = 0;
        self.phase = match self.phase {
            Phase::Search | Phase::Detect if self.room < self.last_room => {
                self.room += 1;
                Phase::Search
            }
            Phase::Done(ok) => Phase::Done(ok),
            _ => Phase::Done(false),
        };
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done(_))
    }

    pub fn result(&self) -> Option<SubtaskResult> {
        match self.phase {
            Phase::Done(true) => Some(SubtaskResult::SubtaskSucceeded),
            Phase::Done(false) => Some(SubtaskResult::SubtaskFailed),
            _ => None,
        }
    }

    pub fn rooms_visited(&self) -> &[String] {
        &self.visited
    }
}

/// Skill sequence the machine emits for a given outcome sequence. Stops
/// when the machine finishes or the outcomes run out.
pub fn replay_outcomes(mut machine: SubtaskMachine, outcomes: &[Status]) -> Vec<Skill> {
    let mut skills = Vec::new();
    for &status in outcomes {
        let Some(skill) = machine.next_skill() else { break };
        skills.push(skill);
        machine.feed(status);
    }
    skills
}

/// Rooms to search for `object`: the table's descending order when the
/// object has a row, else the policy's order, else the table's room list.
pub fn search_order(
    object: &str,
    robot_id: &str,
    kb: Option<&KnowledgeBase>,
    policy: &ExecutionPolicy,
) -> Result<Vec<String>, ExecutorError> {
    if let Some(order) = kb.and_then(|kb| kb.room_order(object)) {
        return Ok(order);
    }
    if let Some(order) = &policy.room_order {
        return Ok(order.clone());
    }
    kb.map(|kb| kb.room_names.clone())
        .ok_or_else(|| ExecutorError::NoRoomOrder(robot_id.to_string()))
}

fn prepare(
    world: &World,
    assignment: &Assignment,
    kb: Option<&KnowledgeBase>,
    policy: &ExecutionPolicy,
) -> Result<SubtaskMachine, ExecutorError> {
    let robot = world.robot(&assignment.robot_id)?;
    let subtask = &assignment.subtask;
    if world.object_place(&subtask.target_object).is_none() {
        return Err(WorldError::UnknownObject(subtask.target_object.clone()).into());
    }
    let destination = subtask.destination.as_deref().unwrap_or(DEFAULT_DESTINATION);
    if !world.env.is_location(destination) {
        return Err(ExecutorError::UnknownDestination(destination.to_string()));
    }
    let rooms = search_order(&subtask.target_object, &robot.robot_id, kb, policy)?;
    if let Some(room) = rooms.iter().find(|r| !world.env.floors_of_location(r).contains(&robot.floor.as_str())) {
        return Err(ExecutorError::ForeignRoom { robot: robot.robot_id.clone(), room: room.clone() });
    }
    Ok(SubtaskMachine::new(subtask.target_object.clone(), destination, rooms, policy))
}

/// Where skill outcomes come from.
trait Outcomes {
    fn step(&mut self, world: &mut World, robot: usize, skill: &Skill) -> Result<SkillOutcome, WorldError>;
}

/// Samples outcomes from the world, one independent stream per robot.
struct Simulated {
    rngs: Vec<ChaCha8Rng>,
}

impl Simulated {
    fn new(seed: u64, robots: usize) -> Self {
        let rngs = (0..robots)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Simulated { rngs }
    }
}

impl Outcomes for Simulated {
    fn step(&mut self, world: &mut World, robot: usize, skill: &Skill) -> Result<SkillOutcome, WorldError> {
        let id = world.robots[robot].robot_id.clone();
        world.step_skill(&id, skill, &mut self.rngs[robot])
    }
}

/// Scripted statuses per robot. A scripted failure is reported without
/// touching the world; anything else runs with certain skill
/// probabilities, so the world still decides physically impossible steps.
struct Scripted {
    scripts: Vec<VecDeque<Status>>,
    rng: ChaCha8Rng,
}

impl Outcomes for Scripted {
    fn step(&mut self, world: &mut World, robot: usize, skill: &Skill) -> Result<SkillOutcome, WorldError> {
        if self.scripts[robot].pop_front() == Some(Status::Failed) {
            return Ok(SkillOutcome::failed("scripted"));
        }
        let id = world.robots[robot].robot_id.clone();
        let saved = std::mem::replace(&mut world.robots[robot].probabilities, SkillProbabilities::certain());
        let out = world.step_skill(&id, skill, &mut self.rng);
        world.robots[robot].probabilities = saved;
        out
    }
}

struct Active {
    slot: usize,
    machine: SubtaskMachine,
    steps: Vec<TraceStep>,
}

struct Park {
    location: String,
    failures: usize,
}

#[derive(Default)]
struct Agent {
    queue: VecDeque<usize>,
    active: Option<Active>,
    park: Option<Park>,
    last_trace: Option<usize>,
}

fn drive(
    world: &mut World,
    assignments: &[Assignment],
    kbs: &[KnowledgeBase],
    policy: &ExecutionPolicy,
    outcomes: &mut dyn Outcomes,
) -> Vec<Result<ExecutionTrace, ExecutorError>> {
    let mut results: Vec<Option<Result<ExecutionTrace, ExecutorError>>> =
        assignments.iter().map(|_| None).collect();
    let mut agents: Vec<Agent> = world.robots.iter().map(|_| Agent::default()).collect();
    for (slot, a) in assignments.iter().enumerate() {
        match world.robot_index(&a.robot_id) {
            Ok(i) => agents[i].queue.push_back(slot),
            Err(e) => results[slot] = Some(Err(e.into())),
        }
    }
    let mut parked = vec![false; agents.len()];
    loop {
        let mut progressed = false;
        for ri in 0..agents.len() {
            // Fetch the next runnable subtask; bad assignments fail here
            // without using a turn.
            while agents[ri].active.is_none() {
                let Some(slot) = agents[ri].queue.pop_front() else { break };
                let a = &assignments[slot];
                let kb = kbs.iter().find(|kb| kb.robot_id == a.robot_id);
                match prepare(world, a, kb, policy) {
                    Ok(machine) => agents[ri].active = Some(Active { slot, machine, steps: Vec::new() }),
                    Err(e) => results[slot] = Some(Err(e)),
                }
            }
            if let Some(active) = agents[ri].active.as_mut() {
                let skill = active.machine.next_skill();
                if let Some(skill) = skill {
                    match outcomes.step(world, ri, &skill) {
                        Ok(outcome) => {
                            active.machine.feed(outcome.status);
                            active.steps.push(TraceStep { skill, outcome });
                        }
                        Err(e) => {
                            let slot = active.slot;
                            results[slot] = Some(Err(e.into()));
                            agents[ri].active = None;
                            progressed = true;
                            continue;
                        }
                    }
                    progressed = true;
                }
                let active = agents[ri].active.as_ref().expect("still active");
                if active.machine.is_done() {
                    let active = agents[ri].active.take().expect("still active");
                    let a = &assignments[active.slot];
                    results[active.slot] = Some(Ok(ExecutionTrace {
                        robot_id: a.robot_id.clone(),
                        subtask: a.subtask.clone(),
                        result: active.machine.result().expect("done"),
                        rooms_visited: active.machine.rooms_visited().to_vec(),
                        steps: active.steps,
                    }));
                    agents[ri].last_trace = Some(active.slot);
                }
                continue;
            }
            // Queue drained: park at the standby location, once.
            if parked[ri] {
                continue;
            }
            let Some(last) = agents[ri].last_trace else {
                parked[ri] = true;
                continue;
            };
            if agents[ri].park.is_none() {
                let robot = &world.robots[ri];
                match &robot.standby {
                    Some(s) if robot.location.as_ref() != Some(s) => {
                        agents[ri].park = Some(Park { location: s.clone(), failures: 0 });
                    }
                    _ => {
                        parked[ri] = true;
                        continue;
                    }
                }
            }
            let park = agents[ri].park.as_mut().expect("set above");
            let skill = Skill::Navigation(park.location.clone());
            let Ok(outcome) = outcomes.step(world, ri, &skill) else {
                parked[ri] = true;
                continue;
            };
            progressed = true;
            if outcome.is_success() {
                parked[ri] = true;
            } else {
                park.failures += 1;
                parked[ri] = park.failures > policy.max_retries_per_skill;
            }
            if let Some(Ok(trace)) = results[last].as_mut() {
                trace.steps.push(TraceStep { skill, outcome });
            }
        }
        if !progressed {
            break;
        }
    }
    results.into_iter().map(|r| r.expect("every assignment resolved")).collect()
}

/// Runs one subtask to completion on the simulated world.
pub fn run_subtask(
    world: &mut World,
    assignment: &Assignment,
    kb: Option<&KnowledgeBase>,
    policy: &ExecutionPolicy,
    seed: u64,
) -> Result<ExecutionTrace, ExecutorError> {
    let ri = world.robot_index(&assignment.robot_id)?;
    let machine = prepare(world, assignment, kb, policy)?;
    let mut outcomes = Simulated::new(seed, world.robots.len());
    run_machine(world, ri, assignment, machine, &mut outcomes)
}

/// Like [`run_subtask`], but the first skills resolve to `script` in
/// order; see [`run_assignments_scripted`] for the exact semantics.
pub fn run_subtask_scripted(
    world: &mut World,
    assignment: &Assignment,
    kb: Option<&KnowledgeBase>,
    policy: &ExecutionPolicy,
    script: &[Status],
) -> Result<ExecutionTrace, ExecutorError> {
    let ri = world.robot_index(&assignment.robot_id)?;
    let machine = prepare(world, assignment, kb, policy)?;
    let mut scripts = vec![VecDeque::new(); world.robots.len()];
    scripts[ri] = script.iter().copied().collect();
    let mut outcomes = Scripted { scripts, rng: ChaCha8Rng::seed_from_u64(0) };
    run_machine(world, ri, assignment, machine, &mut outcomes)
}

fn run_machine(
    world: &mut World,
    ri: usize,
    assignment: &Assignment,
    mut machine: SubtaskMachine,
    outcomes: &mut dyn Outcomes,
) -> Result<ExecutionTrace, ExecutorError> {
    let mut steps = Vec::new();
    while let Some(skill) = machine.next_skill() {
        let outcome = outcomes.step(world, ri, &skill)?;
        machine.feed(outcome.status);
        steps.push(TraceStep { skill, outcome });
    }
    Ok(ExecutionTrace {
        robot_id: assignment.robot_id.clone(),
        subtask: assignment.subtask.clone(),
        steps,
        result: machine.result().expect("machine finished"),
        rooms_visited: machine.rooms_visited().to_vec(),
    })
}

/// Executes all assignments, robots taking one skill per turn in robot
/// order. Each robot works through its own assignments in the given
/// order and, when done, navigates to its standby location (appended to
/// its last trace). Results line up with `assignments`; a failing
/// assignment does not stop the others.
pub fn run_assignments(
    world: &mut World,
    assignments: &[Assignment],
    kbs: &[KnowledgeBase],
    policy: &ExecutionPolicy,
    seed: u64,
) -> Vec<Result<ExecutionTrace, ExecutorError>> {
    let mut outcomes = Simulated::new(seed, world.robots.len());
    drive(world, assignments, kbs, policy, &mut outcomes)
}

/// Deterministic variant: each robot's skills resolve to its script in
/// order. A scripted failure is reported as failed without changing the
/// world. Scripted successes, and every step after the script runs out,
/// are executed with all skill probabilities set to 1.
pub fn run_assignments_scripted(
    world: &mut World,
    assignments: &[Assignment],
    kbs: &[KnowledgeBase],
    policy: &ExecutionPolicy,
    scripts: &[(&str, &[Status])],
) -> Vec<Result<ExecutionTrace, ExecutorError>> {
    let mut queues = vec![VecDeque::new(); world.robots.len()];
    for (robot, script) in scripts {
        if let Ok(i) = world.robot_index(robot) {
            queues[i] = script.iter().copied().collect();
        }
    }
    let mut outcomes = Scripted { scripts: queues, rng: ChaCha8Rng::seed_from_u64(0) };
    drive(world, assignments, kbs, policy, &mut outcomes)
}

/// One JSON-lines record per trace step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLine {
    pub robot_id: String,
    /// 1-based position in the robot's concatenated trace.
    pub index: usize,
    pub skill: String,
    pub argument: String,
    pub status: Status,
    #[serde(default)]
    pub detail: Option<String>,
}

pub fn trace_lines(traces: &[ExecutionTrace]) -> Vec<TraceLine> {
    let mut counters: Vec<(&str, usize)> = Vec::new();
    let mut out = Vec::new();
    for t in traces {
        let pos = match counters.iter().position(|(r, _)| *r == t.robot_id) {
            Some(p) => p,
            None => {
                counters.push((&t.robot_id, 0));
                counters.len() - 1
            }
        };
        for step in &t.steps {
            counters[pos].1 += 1;
            out.push(TraceLine {
                robot_id: t.robot_id.clone(),
                index: counters[pos].1,
                skill: step.skill.name().to_string(),
                argument: step.skill.argument().to_string(),
                status: step.outcome.status,
                detail: step.outcome.detail.clone(),
            });
        }
    }
    out
}

pub fn traces_to_jsonl(traces: &[ExecutionTrace]) -> String {
    trace_lines(traces)
        .iter()
        .map(|l| serde_json::to_string(l).expect("trace lines serialize") + "\n")
        .collect()
}
