use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Assignment, BackendKind, Justification, PlannerBackend, PlannerError, Subtask,
};
use crate::knowledge::{
    render_allocation_rule, render_objects, render_presence_table, render_skills, KnowledgeBase,
};
use crate::world::{Environment, RobotState};

/// Rule-based choice for one subtask: the robot whose table gives the
/// target its highest single-room probability. Objects missing from a
/// table score 0; ties go to the earlier knowledge base.
fn best_robot(subtask: &Subtask, kbs: &[KnowledgeBase]) -> Option<Assignment> {
    let mut best: Option<(usize, &str, f64)> = None;
    for (i, kb) in kbs.iter().enumerate() {
        let (room, p) = kb.best_room(&subtask.target_object).unwrap_or(("", 0.0));
        if best.is_none_or(|(_, _, b)| p > b) {
            best = Some((i, room, p));
        }
    }
    let (i, room, p) = best?;
    let kb = &kbs[i];
    let justification = kb
        .presence_table
        .contains_key(&subtask.target_object)
        .then(|| Justification { room: room.to_string(), probability: Some(p) });
    Some(Assignment { subtask: subtask.clone(), robot_id: kb.robot_id.clone(), justification })
}

fn unknown_to_all(subtasks: &[Subtask], kbs: &[KnowledgeBase]) -> Vec<String> {
    let mut missing: Vec<String> = Vec::new();
    for s in subtasks {
        let known = kbs.iter().any(|kb| kb.presence_table.contains_key(&s.target_object));
        if !known && !missing.contains(&s.target_object) {
            missing.push(s.target_object.clone());
        }
    }
    missing
}

fn render_subtask_list(subtasks: &[Subtask]) -> String {
    subtasks
        .iter()
        .enumerate()
        .map(|(i, s)| format!("SubTask {}: {s}\n", i + 1))
        .collect()
}

pub fn render_allocation_prompt(subtasks: &[Subtask], kbs: &[KnowledgeBase]) -> String {
    let mut objects: Vec<&str> = Vec::new();
    for kb in kbs {
        for o in kb.presence_table.keys() {
            if !objects.contains(&o.as_str()) {
                objects.push(o);
            }
        }
    }
    let mut text = String::new();
    let _ = write!(text, "(a) Skills\n{}\n", render_skills().text);
    let _ = write!(text, "(b) Objects in the environment\n{}\n", render_objects(&objects).text);
    let _ = write!(
        text,
        "(c) room-wise object presence probabilities observed by robots\n{}\n",
        render_presence_table(kbs).text
    );
    let _ = write!(text, "(d) Rule for assigning subtasks\n{}\n", render_allocation_rule().text);
    let _ = write!(text, "(e) Subtasks\n{}\n", render_subtask_list(subtasks));
    text.push_str("Answer with one line per subtask in the form \"SubTask k: <subtask> -> <robot>\".\n");
    text
}

/// Parses `SubTask k: ... -> RobotN` lines into `(k - 1, robot)` pairs.
/// Lines that do not fit the pattern are skipped.
pub fn parse_allocation_response(reply: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for line in reply.lines() {
        let clean = line.replace("**", "");
        let clean = clean.trim();
        let Some(rest) = clean
            .get(..7)
            .filter(|p| p.eq_ignore_ascii_case("subtask"))
            .map(|_| &clean[7..])
        else {
            continue;
        };
        let Some((num, body)) = rest.split_once(':') else { continue };
        let Ok(k) = num.trim().parse::<usize>() else { continue };
        let Some((_, robot)) = body.rsplit_once("->") else { continue };
        let robot = robot.trim().trim_end_matches('.').trim();
        if k == 0 || robot.is_empty() || robot.contains(char::is_whitespace) {
            continue;
        }
        out.push((k - 1, robot.to_string()));
    }
    out
}

/// Assigns each subtask to a robot using the robots' knowledge bases.
///
/// With the rule-based backend the choice is the argmax described on
/// `best_robot`. Other backends receive the rendered allocation prompt;
/// subtasks whose reply line is missing, malformed or names an unknown
/// robot fall back to the rule-based choice.
pub fn allocate(
    subtasks: &[Subtask],
    kbs: &[KnowledgeBase],
    backend: &dyn PlannerBackend,
) -> Result<Vec<Assignment>, PlannerError> {
    if kbs.is_empty() {
        return Err(PlannerError::NoRobots);
    }
    let missing = unknown_to_all(subtasks, kbs);
    if !missing.is_empty() {
        return Err(PlannerError::Unallocatable(missing));
    }
    let rule: Vec<Assignment> = subtasks
        .iter()
        .map(|s| best_robot(s, kbs).expect("kbs non-empty"))
        .collect();
    if backend.kind() == BackendKind::RuleBased || subtasks.is_empty() {
        return Ok(rule);
    }
    let reply = backend.complete(&render_allocation_prompt(subtasks, kbs))?;
    let mut chosen: Vec<Option<String>> = vec![None; subtasks.len()];
    for (k, robot) in parse_allocation_response(&reply) {
        if k < subtasks.len() && chosen[k].is_none() && kbs.iter().any(|kb| kb.robot_id == robot) {
            chosen[k] = Some(robot);
        }
    }
    Ok(rule
        .into_iter()
        .zip(chosen)
        .map(|(fallback, pick)| match pick {
            Some(robot) if robot != fallback.robot_id => {
                let kb = kbs.iter().find(|kb| kb.robot_id == robot).expect("checked above");
                let justification = kb.best_room(&fallback.subtask.target_object).map(|(room, p)| {
                    Justification { room: room.to_string(), probability: Some(p) }
                });
                Assignment { subtask: fallback.subtask, robot_id: robot, justification }
            }
            _ => fallback,
        })
        .collect())
}

/// Uniform random robot per subtask, independent across subtasks.
pub fn allocate_random<S: AsRef<str>>(
    subtasks: &[Subtask],
    robot_ids: &[S],
    seed: u64,
) -> Result<Vec<Assignment>, PlannerError> {
    if robot_ids.is_empty() {
        return Err(PlannerError::NoRobots);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(subtasks
        .iter()
        .map(|s| Assignment {
            subtask: s.clone(),
            robot_id: robot_ids[rng.random_range(0..robot_ids.len())].as_ref().to_string(),
            justification: None,
        })
        .collect())
}

/// Maps every room to the robot confined to its floor.
pub fn room_to_robot(env: &Environment, robots: &[RobotState]) -> IndexMap<String, String> {
    env.rooms
        .iter()
        .filter_map(|r| {
            robots
                .iter()
                .find(|rb| rb.floor == r.floor)
                .map(|rb| (r.name.clone(), rb.robot_id.clone()))
        })
        .collect()
}

pub fn render_commonsense_prompt(subtasks: &[Subtask], rooms: &[&str]) -> String {
    let mut text = String::new();
    let _ = write!(text, "(a) Rooms in the environment\n{}\n", rooms.join(", "));
    let _ = write!(text, "(b) Subtasks\n{}\n", render_subtask_list(subtasks));
    text.push_str(
        "For each object, name the single room where it is most typically found. \
         Answer with one line per object in the form \"<object> -> <room>\".\n",
    );
    text
}

/// Parses `object -> room` lines.
pub fn parse_commonsense_response(reply: &str) -> IndexMap<String, String> {
    reply
        .lines()
        .filter_map(|line| {
            let (o, r) = line.split_once("->")?;
            let o = o.trim().trim_start_matches(['-', '*', ' ']).trim();
            let r = r.trim().trim_end_matches('.').trim();
            (!o.is_empty() && !r.is_empty()).then(|| (o.to_string(), r.to_string()))
        })
        .collect()
}

/// Routes each subtask by the typical room of its object alone.
///
/// The rule-based backend reads `commonsense_map` directly. Other backends
/// are asked for typical rooms (without any presence tables); answers that
/// are missing or name unknown rooms fall back to the map.
pub fn allocate_commonsense(
    subtasks: &[Subtask],
    commonsense_map: &IndexMap<String, String>,
    room_to_robot: &IndexMap<String, String>,
    backend: &dyn PlannerBackend,
) -> Result<Vec<Assignment>, PlannerError> {
    if subtasks.is_empty() {
        return Ok(Vec::new());
    }
    let answers = if backend.kind() == BackendKind::RuleBased {
        IndexMap::new()
    } else {
        let rooms: Vec<&str> = room_to_robot.keys().map(String::as_str).collect();
        parse_commonsense_response(&backend.complete(&render_commonsense_prompt(subtasks, &rooms))?)
    };
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(subtasks.len());
    for s in subtasks {
        let object = &s.target_object;
        let room = answers
            .get(object)
            .filter(|r| room_to_robot.contains_key(*r))
            .or_else(|| commonsense_map.get(object));
        match room.and_then(|r| room_to_robot.get(r).map(|robot| (r, robot))) {
            Some((room, robot)) => out.push(Assignment {
                subtask: s.clone(),
                robot_id: robot.clone(),
                justification: Some(Justification { room: room.clone(), probability: None }),
            }),
            None => {
                if !missing.contains(object) {
                    missing.push(object.clone());
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(PlannerError::Unallocatable(missing));
    }
    Ok(out)
}
