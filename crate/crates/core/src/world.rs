//! Household simulator: floors, rooms, object placements and robots that
//! are confined to one floor. Skills succeed or fail stochastically.

use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial::{Mat2, Session, Vec2};

const PAPER_HOME: &str = include_str!("../assets/paper_home.json");
const ROBOCUP_ARENA: &str = include_str!("../assets/robocup_arena.json");

pub const BUILTIN_ENVIRONMENTS: [&str; 2] = ["paper_home", "robocup_arena"];

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("environment schema violation: {}", .0.join("; "))]
    Schema(Vec<String>),
    #[error("unknown location `{0}`")]
    UnknownLocation(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("unknown robot `{0}`")]
    UnknownRobot(String),
    #[error("room `{room}` is on floor {room_floor}, robot `{robot}` is confined to {robot_floor}")]
    CrossFloor { robot: String, robot_floor: String, room: String, room_floor: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    CommonSense,
    HardToPredict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub name: String,
    pub floor: String,
    pub center: Vec2,
    pub scatter: Mat2,
}

/// A drop-off spot such as `gather`. Names may repeat across floors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeliveryPoint {
    pub name: String,
    pub floor: String,
    pub center: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub floors: Vec<String>,
    pub rooms: Vec<Room>,
    #[serde(default)]
    pub delivery_points: Vec<DeliveryPoint>,
    pub placements: IndexMap<String, String>,
    pub categories: IndexMap<String, Category>,
    #[serde(default)]
    pub place_words: IndexMap<String, Vec<String>>,
}

impl Environment {
    pub fn builtin(name: &str) -> Option<Environment> {
        let text = match name {
            "paper_home" => PAPER_HOME,
            "robocup_arena" => ROBOCUP_ARENA,
            _ => return None,
        };
        Some(Environment::from_json(text).expect("bundled environment is valid"))
    }

    pub fn from_json(text: &str) -> Result<Environment, WorldError> {
        let env: Environment =
            serde_json::from_str(text).map_err(|e| WorldError::Schema(vec![e.to_string()]))?;
        env.validate()?;
        Ok(env)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let mut problems = Vec::new();
        if self.floors.is_empty() {
            problems.push("floors: must not be empty".to_string());
        }
        if self.rooms.is_empty() {
            problems.push("rooms: must not be empty".to_string());
        }
        for (i, f) in self.floors.iter().enumerate() {
            if self.floors[..i].contains(f) {
                problems.push(format!("floors: duplicate floor `{f}`"));
            }
        }
        for (i, r) in self.rooms.iter().enumerate() {
            if !self.floors.contains(&r.floor) {
                problems.push(format!("rooms[{i}].floor: unknown floor `{}`", r.floor));
            }
            if self.rooms[..i].iter().any(|o| o.name == r.name) {
                problems.push(format!("rooms[{i}].name: duplicate room `{}`", r.name));
            }
            let s = &r.scatter;
            let psd = s[0][1] == s[1][0]
                && s[0][0] >= 0.0
                && s[1][1] >= 0.0
                && s[0][0] * s[1][1] - s[0][1] * s[1][0] >= 0.0;
            if !psd {
                problems.push(format!("rooms[{i}].scatter: not symmetric positive semi-definite"));
            }
        }
        for (i, d) in self.delivery_points.iter().enumerate() {
            if !self.floors.contains(&d.floor) {
                problems.push(format!("delivery_points[{i}].floor: unknown floor `{}`", d.floor));
            }
            if self.rooms.iter().any(|r| r.name == d.name) {
                problems.push(format!("delivery_points[{i}].name: `{}` clashes with a room", d.name));
            }
            if self.delivery_points[..i].iter().any(|o| o.name == d.name && o.floor == d.floor) {
                problems.push(format!(
                    "delivery_points[{i}]: duplicate `{}` on floor `{}`",
                    d.name, d.floor
                ));
            }
        }
        for (obj, room) in &self.placements {
            if self.room(room).is_none() {
                problems.push(format!("placements.{obj}: unknown room `{room}`"));
            }
            if !self.categories.contains_key(obj) {
                problems.push(format!("categories.{obj}: missing category for placed object"));
            }
        }
        for obj in self.categories.keys() {
            if !self.placements.contains_key(obj) {
                problems.push(format!("categories.{obj}: object is not placed"));
            }
        }
        for room in self.place_words.keys() {
            if self.room(room).is_none() {
                problems.push(format!("place_words.{room}: unknown room"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(WorldError::Schema(problems))
        }
    }

    pub fn room(&self, name: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.name == name)
    }

    pub fn rooms_on<'a>(&'a self, floor: &'a str) -> impl Iterator<Item = &'a Room> + 'a {
        self.rooms.iter().filter(move |r| r.floor == floor)
    }

    pub fn objects(&self) -> impl Iterator<Item = &str> {
        self.placements.keys().map(String::as_str)
    }

    /// Objects placed in rooms on `floor`, in placement-table order.
    pub fn objects_on<'a>(&'a self, floor: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.placements
            .iter()
            .filter(move |(_, room)| self.room(room).is_some_and(|r| r.floor == floor))
            .map(|(o, _)| o.as_str())
    }

    pub fn floor_of_object(&self, object: &str) -> Option<&str> {
        let room = self.placements.get(object)?;
        self.room(room).map(|r| r.floor.as_str())
    }

    /// Floors on which `name` is a room or delivery point.
    pub fn floors_of_location(&self, name: &str) -> Vec<&str> {
        if let Some(r) = self.room(name) {
            return vec![r.floor.as_str()];
        }
        self.delivery_points
            .iter()
            .filter(|d| d.name == name)
            .map(|d| d.floor.as_str())
            .collect()
    }

    pub fn is_location(&self, name: &str) -> bool {
        !self.floors_of_location(name).is_empty()
    }

    /// Room name → floor, for routing room-keyed decisions to robots.
    pub fn room_floors(&self) -> IndexMap<String, String> {
        self.rooms.iter().map(|r| (r.name.clone(), r.floor.clone())).collect()
    }
}

/// Resolves a builtin environment name or a path to a JSON file.
pub fn load_environment(name_or_path: &str) -> Result<Environment, WorldError> {
    if let Some(env) = Environment::builtin(name_or_path) {
        return Ok(env);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(WorldError::Schema(vec![format!(
            "`{name_or_path}` is neither a builtin ({}) nor an existing file",
            BUILTIN_ENVIRONMENTS.join(", ")
        )]));
    }
    Environment::from_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillProbabilities {
    pub p_navigate: f64,
    pub p_detect_present: f64,
    pub p_detect_absent_false_positive: f64,
    pub p_pick: f64,
    pub p_place: f64,
}

impl Default for SkillProbabilities {
    fn default() -> Self {
        Self {
            p_navigate: 1.0,
            p_detect_present: 0.9,
            p_detect_absent_false_positive: 0.0,
            p_pick: 0.8,
            p_place: 0.95,
        }
    }
}

impl SkillProbabilities {
    pub fn certain() -> Self {
        Self {
            p_navigate: 1.0,
            p_detect_present: 1.0,
            p_detect_absent_false_positive: 0.0,
            p_pick: 1.0,
            p_place: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub robot_id: String,
    pub floor: String,
    /// `None` until the first successful navigation.
    pub location: Option<String>,
    pub held: Option<String>,
    /// Object seen by the last successful detection during the current visit.
    pub detected: Option<String>,
    /// Where the robot parks once its queue is empty.
    pub standby: Option<String>,
    pub probabilities: SkillProbabilities,
}

impl RobotState {
    pub fn new(robot_id: impl Into<String>, floor: impl Into<String>) -> Self {
        RobotState {
            robot_id: robot_id.into(),
            floor: floor.into(),
            location: None,
            held: None,
            detected: None,
            standby: None,
            probabilities: SkillProbabilities::default(),
        }
    }

    pub fn with_probabilities(mut self, p: SkillProbabilities) -> Self {
        self.probabilities = p;
        self
    }

    pub fn with_standby(mut self, location: impl Into<String>) -> Self {
        self.standby = Some(location.into());
        self
    }
}

/// One robot per floor, named `Robot1`, `Robot2`, ... in floor order.
pub fn default_robots(env: &Environment) -> Vec<RobotState> {
    env.floors
        .iter()
        .enumerate()
        .map(|(i, f)| RobotState::new(format!("Robot{}", i + 1), f.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "skill", content = "argument", rename_all = "snake_case")]
pub enum Skill {
    Navigation(String),
    ObjectDetection(String),
    Pick(String),
    Place(String),
}

impl Skill {
    pub fn name(&self) -> &'static str {
        match self {
            Skill::Navigation(_) => "navigation",
            Skill::ObjectDetection(_) => "object_detection",
            Skill::Pick(_) => "pick",
            Skill::Place(_) => "place",
        }
    }

    pub fn argument(&self) -> &str {
        match self {
            Skill::Navigation(a) | Skill::ObjectDetection(a) | Skill::Pick(a) | Skill::Place(a) => a,
        }
    }
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name(), self.argument())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Succeeded,
    Failed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Succeeded => "succeeded",
            Status::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillOutcome {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl SkillOutcome {
    pub fn succeeded() -> Self {
        SkillOutcome { status: Status::Succeeded, detail: None }
    }

    pub fn failed(reason: &str) -> Self {
        SkillOutcome { status: Status::Failed, detail: Some(reason.to_string()) }
    }

    pub fn is_success(&self) -> bool {
        self.status == Status::Succeeded
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectPlace {
    At { location: String, floor: String },
    Held { robot_id: String },
}

/// Mutable simulation state: the static environment plus where every
/// object and robot currently is.
#[derive(Debug, Clone)]
pub struct World {
    pub env: Environment,
    pub robots: Vec<RobotState>,
    objects: IndexMap<String, ObjectPlace>,
}

impl World {
    pub fn new(env: Environment, robots: Vec<RobotState>) -> Self {
        let objects = env
            .placements
            .iter()
            .map(|(o, room)| {
                let floor = env.room(room).map(|r| r.floor.clone()).unwrap_or_default();
                (o.clone(), ObjectPlace::At { location: room.clone(), floor })
            })
            .collect();
        World { env, robots, objects }
    }

    pub fn robot(&self, robot_id: &str) -> Result<&RobotState, WorldError> {
        self.robots
            .iter()
            .find(|r| r.robot_id == robot_id)
            .ok_or_else(|| WorldError::UnknownRobot(robot_id.to_string()))
    }

    pub fn robot_index(&self, robot_id: &str) -> Result<usize, WorldError> {
        self.robots
            .iter()
            .position(|r| r.robot_id == robot_id)
            .ok_or_else(|| WorldError::UnknownRobot(robot_id.to_string()))
    }

    pub fn object_place(&self, object: &str) -> Option<&ObjectPlace> {
        self.objects.get(object)
    }

    pub fn object_places(&self) -> &IndexMap<String, ObjectPlace> {
        &self.objects
    }

    /// Executes one skill for one robot. Environmental failures come back as
    /// a failed outcome; references to unknown rooms or objects are errors.
    pub fn step_skill<R: Rng + ?Sized>(
        &mut self,
        robot_id: &str,
        skill: &Skill,
        rng: &mut R,
    ) -> Result<SkillOutcome, WorldError> {
        let ri = self.robot_index(robot_id)?;
        match skill {
            Skill::Navigation(loc) => {
                let floors = self.env.floors_of_location(loc);
                if floors.is_empty() {
                    return Err(WorldError::UnknownLocation(loc.clone()));
                }
                let robot = &mut self.robots[ri];
                if !floors.contains(&robot.floor.as_str()) {
                    return Ok(SkillOutcome::failed("floor_barrier"));
                }
                if rng.random::<f64>() < robot.probabilities.p_navigate {
                    robot.location = Some(loc.clone());
                    robot.detected = None;
                    Ok(SkillOutcome::succeeded())
                } else {
                    Ok(SkillOutcome::failed("navigation_failed"))
                }
            }
            Skill::ObjectDetection(obj) => {
                let place = self
                    .objects
                    .get(obj)
                    .ok_or_else(|| WorldError::UnknownObject(obj.clone()))?;
                let robot = &mut self.robots[ri];
                let Some(here) = robot.location.clone() else {
                    return Ok(SkillOutcome::failed("not_at_location"));
                };
                let present = matches!(place, ObjectPlace::At { location, floor }
                    if *location == here && *floor == robot.floor);
                let u = rng.random::<f64>();
                let p = &robot.probabilities;
                if present && u < p.p_detect_present {
                    robot.detected = Some(obj.clone());
                    Ok(SkillOutcome::succeeded())
                } else if !present && u < p.p_detect_absent_false_positive {
                    robot.detected = Some(obj.clone());
                    Ok(SkillOutcome { status: Status::Succeeded, detail: Some("false_positive".into()) })
                } else {
                    Ok(SkillOutcome::failed("not_detected"))
                }
            }
            Skill::Pick(obj) => {
                let place = self
                    .objects
                    .get(obj)
                    .ok_or_else(|| WorldError::UnknownObject(obj.clone()))?
                    .clone();
                let robot = &mut self.robots[ri];
                if robot.held.is_some() {
                    return Ok(SkillOutcome::failed("gripper_full"));
                }
                if robot.detected.as_deref() != Some(obj.as_str()) {
                    return Ok(SkillOutcome::failed("not_detected"));
                }
                let present = matches!(&place, ObjectPlace::At { location, floor }
                    if Some(location) == robot.location.as_ref() && *floor == robot.floor);
                if !present {
                    return Ok(SkillOutcome::failed("object_not_present"));
                }
                if rng.random::<f64>() < robot.probabilities.p_pick {
                    robot.held = Some(obj.clone());
                    self.objects
                        .insert(obj.clone(), ObjectPlace::Held { robot_id: robot_id.to_string() });
                    Ok(SkillOutcome::succeeded())
                } else {
                    Ok(SkillOutcome::failed("grasp_failed"))
                }
            }
            Skill::Place(loc) => {
                if !self.env.is_location(loc) {
                    return Err(WorldError::UnknownLocation(loc.clone()));
                }
                let robot = &mut self.robots[ri];
                let Some(obj) = robot.held.clone() else {
                    return Ok(SkillOutcome::failed("empty_gripper"));
                };
                if robot.location.as_deref() != Some(loc.as_str()) {
                    return Ok(SkillOutcome::failed("wrong_location"));
                }
                if rng.random::<f64>() < robot.probabilities.p_place {
                    robot.held = None;
                    let floor = robot.floor.clone();
                    self.objects.insert(obj, ObjectPlace::At { location: loc.clone(), floor });
                    Ok(SkillOutcome::succeeded())
                } else {
                    Ok(SkillOutcome::failed("place_failed"))
                }
            }
        }
    }
}

fn sample_position<R: Rng + ?Sized>(center: Vec2, scatter: &Mat2, rng: &mut R) -> Vec2 {
    // Cholesky factor of a PSD 2x2 matrix; degenerate directions collapse to 0.
    let l00 = scatter[0][0].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { scatter[1][0] / l00 } else { 0.0 };
    let l11 = (scatter[1][1] - l10 * l10).max(0.0).sqrt();
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    [center[0] + l00 * z0, center[1] + l10 * z0 + l11 * z1]
}

/// Simulates one learning session in `room`: a noisy pose, the detector's
/// view of the objects placed there, and one to three place words.
pub fn observe_session<R: Rng + ?Sized>(
    env: &Environment,
    robot: &RobotState,
    room: &str,
    rng: &mut R,
) -> Result<Session, WorldError> {
    let r = env.room(room).ok_or_else(|| WorldError::UnknownLocation(room.to_string()))?;
    if r.floor != robot.floor {
        return Err(WorldError::CrossFloor {
            robot: robot.robot_id.clone(),
            robot_floor: robot.floor.clone(),
            room: room.to_string(),
            room_floor: r.floor.clone(),
        });
    }
    let position = sample_position(r.center, &r.scatter, rng);
    let object_labels = env
        .placements
        .iter()
        .filter(|(_, at)| at.as_str() == room)
        .filter(|_| rng.random::<f64>() < robot.probabilities.p_detect_present)
        .map(|(o, _)| o.clone())
        .collect();
    let mut pool: Vec<String> = env.place_words.get(room).cloned().unwrap_or_default();
    let mut place_words = Vec::new();
    if !pool.is_empty() {
        let n = rng.random_range(1..=3usize).min(pool.len());
        for _ in 0..n {
            let i = rng.random_range(0..pool.len());
            place_words.push(pool.swap_remove(i));
        }
    }
    Ok(Session { position, object_labels, place_words, room_hint: Some(room.to_string()) })
}

/// The learning protocol: every room on the robot's floor, in environment
/// order, visited `visits_per_room` times in a row.
pub fn floor_protocol_sessions<R: Rng + ?Sized>(
    env: &Environment,
    robot: &RobotState,
    visits_per_room: usize,
    rng: &mut R,
) -> Result<Vec<Session>, WorldError> {
    let mut sessions = Vec::new();
    for room in env.rooms_on(&robot.floor) {
        for _ in 0..visits_per_room {
            sessions.push(observe_session(env, robot, &room.name, rng)?);
        }
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world_certain() -> World {
        let env = Environment::builtin("paper_home").unwrap();
        let robots = default_robots(&env)
            .into_iter()
            .map(|r| r.with_probabilities(SkillProbabilities::certain()))
            .collect();
        World::new(env, robots)
    }

    #[test]
    fn paper_home_shape() {
        let env = Environment::builtin("paper_home").unwrap();
        assert_eq!(env.floors.len(), 2);
        assert_eq!(env.rooms.len(), 10);
        assert_eq!(env.placements.len(), 24);
        assert_eq!(env.objects_on("1F").count(), 13);
        assert_eq!(env.objects_on("2F").count(), 11);
        assert_eq!(env.placements["apple"], "kitchen");
        assert_eq!(env.placements["banana"], "parent_room");
        assert_eq!(env.placements["car_toy"], "front_of_stairs");
    }

    #[test]
    fn builtin_round_trip() {
        for name in BUILTIN_ENVIRONMENTS {
            let env = Environment::builtin(name).unwrap();
            assert_eq!(Environment::from_json(&env.to_json()).unwrap(), env);
        }
    }

    #[test]
    fn empty_rooms_is_schema_error() {
        let text = r#"{"floors":["1F"],"rooms":[],"placements":{},"categories":{}}"#;
        let err = Environment::from_json(text).unwrap_err();
        assert!(err.to_string().contains("rooms"), "{err}");
    }

    #[test]
    fn schema_error_lists_offending_keys() {
        let mut env = Environment::builtin("paper_home").unwrap();
        env.placements.insert("ghost".into(), "attic".into());
        let err = env.validate().unwrap_err().to_string();
        assert!(err.contains("placements.ghost"), "{err}");
        assert!(err.contains("categories.ghost"), "{err}");
        let unknown_key = r#"{"floors":["1F"],"rooms":[],"placements":{},"categories":{},"bogus":1}"#;
        assert!(Environment::from_json(unknown_key).unwrap_err().to_string().contains("bogus"));
    }

    #[test]
    fn deterministic_detection() {
        let mut w = world_certain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let nav = w.step_skill("Robot1", &Skill::Navigation("kitchen".into()), &mut rng).unwrap();
        assert!(nav.is_success());
        let det = w.step_skill("Robot1", &Skill::ObjectDetection("apple".into()), &mut rng).unwrap();
        assert!(det.is_success());
    }

    #[test]
    fn floor_barrier() {
        let mut w = world_certain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = w.step_skill("Robot1", &Skill::Navigation("parent_room".into()), &mut rng).unwrap();
        assert_eq!(out, SkillOutcome::failed("floor_barrier"));
        assert_eq!(w.robot("Robot1").unwrap().location, None);
    }

    #[test]
    fn unknown_references_are_errors() {
        let mut w = world_certain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            w.step_skill("Robot1", &Skill::Navigation("attic".into()), &mut rng),
            Err(WorldError::UnknownLocation(_))
        ));
        assert!(matches!(
            w.step_skill("Robot1", &Skill::ObjectDetection("unicorn".into()), &mut rng),
            Err(WorldError::UnknownObject(_))
        ));
        assert!(matches!(
            w.step_skill("Robot9", &Skill::Navigation("kitchen".into()), &mut rng),
            Err(WorldError::UnknownRobot(_))
        ));
    }

    #[test]
    fn pick_requires_detection_and_place_requires_object() {
        let mut w = world_certain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        w.step_skill("Robot1", &Skill::Navigation("kitchen".into()), &mut rng).unwrap();
        let pick = w.step_skill("Robot1", &Skill::Pick("apple".into()), &mut rng).unwrap();
        assert_eq!(pick, SkillOutcome::failed("not_detected"));
        let place = w.step_skill("Robot1", &Skill::Place("kitchen".into()), &mut rng).unwrap();
        assert_eq!(place, SkillOutcome::failed("empty_gripper"));
    }

    #[test]
    fn canonical_fetch_moves_object() {
        let mut w = world_certain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for skill in [
            Skill::Navigation("kitchen".into()),
            Skill::ObjectDetection("apple".into()),
            Skill::Pick("apple".into()),
            Skill::Navigation("gather".into()),
            Skill::Place("gather".into()),
        ] {
            assert!(w.step_skill("Robot1", &skill, &mut rng).unwrap().is_success(), "{skill}");
        }
        assert_eq!(
            w.object_place("apple"),
            Some(&ObjectPlace::At { location: "gather".into(), floor: "1F".into() })
        );
        // A subsequent detection in the kitchen finds nothing.
        w.step_skill("Robot1", &Skill::Navigation("kitchen".into()), &mut rng).unwrap();
        let det = w.step_skill("Robot1", &Skill::ObjectDetection("apple".into()), &mut rng).unwrap();
        assert!(!det.is_success());
    }

    #[test]
    fn pick_success_rate_is_binomial() {
        let env = Environment::builtin("paper_home").unwrap();
        let p = SkillProbabilities { p_pick: 0.5, ..SkillProbabilities::certain() };
        let mut w = World::new(env, vec![RobotState::new("Robot1", "1F").with_probabilities(p)]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        w.step_skill("Robot1", &Skill::Navigation("kitchen".into()), &mut rng).unwrap();
        w.step_skill("Robot1", &Skill::ObjectDetection("apple".into()), &mut rng).unwrap();
        let mut successes = 0;
        let n = 10_000;
        for _ in 0..n {
            if w.step_skill("Robot1", &Skill::Pick("apple".into()), &mut rng).unwrap().is_success() {
                successes += 1;
                // Put it back so the next attempt starts from the same state.
                w.step_skill("Robot1", &Skill::Place("kitchen".into()), &mut rng).unwrap();
                w.step_skill("Robot1", &Skill::ObjectDetection("apple".into()), &mut rng).unwrap();
            }
        }
        let rate = successes as f64 / n as f64;
        assert!((0.48..=0.52).contains(&rate), "rate = {rate}");
    }

    #[test]
    fn session_zero_scatter_is_exact() {
        let mut env = Environment::builtin("paper_home").unwrap();
        for r in &mut env.rooms {
            r.scatter = [[0.0, 0.0], [0.0, 0.0]];
        }
        let robot = RobotState::new("Robot1", "1F").with_probabilities(SkillProbabilities::certain());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = observe_session(&env, &robot, "kitchen", &mut rng).unwrap();
        assert_eq!(s.position, env.room("kitchen").unwrap().center);
        assert_eq!(s.object_labels, vec!["tooth_paste", "apple", "orange", "muscat"]);
        assert!((1..=3).contains(&s.place_words.len()));
        assert!(s.place_words.iter().all(|w| env.place_words["kitchen"].contains(w)));
    }

    #[test]
    fn session_positions_centered() {
        let env = Environment::builtin("paper_home").unwrap();
        let robot = RobotState::new("Robot1", "1F");
        let room = env.room("office_room").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let mut sum = [0.0, 0.0];
        for _ in 0..n {
            let s = observe_session(&env, &robot, "office_room", &mut rng).unwrap();
            sum[0] += s.position[0];
            sum[1] += s.position[1];
        }
        for d in 0..2 {
            let mean = sum[d] / n as f64;
            let bound = 3.0 * room.scatter[d][d].sqrt() / (n as f64).sqrt();
            assert!((mean - room.center[d]).abs() < bound, "axis {d}: {mean}");
        }
    }

    #[test]
    fn protocol_and_cross_floor() {
        let env = Environment::builtin("paper_home").unwrap();
        let robot = RobotState::new("Robot1", "1F");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sessions = floor_protocol_sessions(&env, &robot, 30, &mut rng).unwrap();
        assert_eq!(sessions.len(), 150);
        assert_eq!(sessions[0].room_hint.as_deref(), Some("entrance"));
        assert_eq!(sessions[149].room_hint.as_deref(), Some("kitchen"));
        assert!(matches!(
            observe_session(&env, &robot, "bathroom", &mut rng),
            Err(WorldError::CrossFloor { .. })
        ));
    }
}
