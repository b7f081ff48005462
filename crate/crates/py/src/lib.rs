//! Python bindings. Structured results (assignments, traces, reports) cross
//! the boundary as plain dicts and lists built from their JSON form.

use homeplan::executor::{run_assignments, trace_lines, ExecutionPolicy};
use homeplan::experiment::{field_trip_scenario, learn_robot_knowledge, run_suite, SuiteConfig};
use homeplan::knowledge::{self, DEFAULT_VOCAB_THRESHOLD};
use homeplan::planner::{self, Instruction, InstructionCategory, RuleBasedBackend};
use homeplan::spatial::{self, Hyperparameters, Session};
use homeplan::world::{default_robots, load_environment, Environment};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn environment(name: &str) -> PyResult<Environment> {
    load_environment(name).map_err(err)
}

#[pyclass(name = "SpatialConceptModel", module = "homeplan_py", from_py_object)]
#[derive(Clone)]
struct PyModel(spatial::SpatialConceptModel);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        spatial::SpatialConceptModel::from_json(text).map(PyModel).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn num_concepts(&self) -> usize {
        self.0.num_concepts()
    }

    #[getter]
    fn num_regions(&self) -> usize {
        self.0.num_regions()
    }

    #[getter]
    fn vocab_places(&self) -> Vec<String> {
        self.0.vocab_places.clone()
    }

    #[getter]
    fn vocab_objects(&self) -> Vec<String> {
        self.0.vocab_objects.clone()
    }

    /// Returns `(probabilities, zero_evidence)`.
    fn word_posterior(&self, region: usize) -> PyResult<(Vec<f64>, bool)> {
        let p = self.0.word_posterior(region).map_err(err)?;
        Ok((p.probs, p.zero_evidence))
    }

    /// Returns `(probabilities, zero_evidence)`.
    fn object_location_posterior(&self, object: &str) -> PyResult<(Vec<f64>, bool)> {
        let p = self.0.object_location_posterior(object).map_err(err)?;
        Ok((p.probs, p.zero_evidence))
    }

    fn assign_region(&self, x: f64, y: f64) -> usize {
        self.0.assign_region([x, y])
    }

    fn __repr__(&self) -> String {
        format!("SpatialConceptModel(concepts={}, regions={})", self.0.num_concepts(), self.0.num_regions())
    }
}

#[pyclass(name = "KnowledgeBase", module = "homeplan_py", from_py_object)]
#[derive(Clone)]
struct PyKnowledgeBase(knowledge::KnowledgeBase);

#[pymethods]
impl PyKnowledgeBase {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        knowledge::KnowledgeBase::from_json(text).map(PyKnowledgeBase).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn robot_id(&self) -> String {
        self.0.robot_id.clone()
    }

    #[getter]
    fn room_names(&self) -> Vec<String> {
        self.0.room_names.clone()
    }

    #[getter]
    fn objects(&self) -> Vec<String> {
        self.0.presence_table.keys().cloned().collect()
    }

    /// Presence probabilities over `room_names`, or None for an unknown object.
    fn presence(&self, object: &str) -> Option<Vec<f64>> {
        self.0.presence_table.get(object).cloned()
    }

    fn best_room(&self, object: &str) -> Option<(String, f64)> {
        self.0.best_room(object).map(|(r, p)| (r.to_string(), p))
    }

    fn __repr__(&self) -> String {
        format!("KnowledgeBase(robot_id={:?}, rooms={})", self.0.robot_id, self.0.room_names.len())
    }
}

fn unwrap_kbs(kbs: Vec<PyKnowledgeBase>) -> Vec<knowledge::KnowledgeBase> {
    kbs.into_iter().map(|k| k.0).collect()
}

/// Simulates the floor survey for one robot and learns its model and
/// knowledge base.
#[pyfunction]
#[pyo3(signature = (env, robot_id, visits_per_room = 30, seed = 0))]
fn learn(env: &str, robot_id: &str, visits_per_room: usize, seed: u64) -> PyResult<(PyModel, PyKnowledgeBase)> {
    let env = environment(env)?;
    let robot = default_robots(&env)
        .into_iter()
        .find(|r| r.robot_id == robot_id)
        .ok_or_else(|| err(format!("unknown robot `{robot_id}`")))?;
    let (model, kb) =
        learn_robot_knowledge(&env, &robot, visits_per_room, &Hyperparameters::default(), seed).map_err(err)?;
    Ok((PyModel(model), PyKnowledgeBase(kb)))
}

/// Learns a model from a JSON array of observation sessions.
#[pyfunction]
#[pyo3(signature = (sessions_json, seed = 0))]
fn learn_sessions(sessions_json: &str, seed: u64) -> PyResult<PyModel> {
    let sessions: Vec<Session> = serde_json::from_str(sessions_json).map_err(err)?;
    spatial::learn_fixed_lag(&sessions, &Hyperparameters::default(), seed).map(PyModel).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (model, robot_id, room_names, threshold = DEFAULT_VOCAB_THRESHOLD))]
fn extract_knowledge(
    model: &PyModel,
    robot_id: &str,
    room_names: Vec<String>,
    threshold: f64,
) -> PyResult<PyKnowledgeBase> {
    knowledge::extract_knowledge(&model.0, robot_id, &room_names, threshold).map(PyKnowledgeBase).map_err(err)
}

#[pyfunction]
fn render_presence_table(kbs: Vec<PyKnowledgeBase>) -> String {
    knowledge::render_presence_table(&unwrap_kbs(kbs)).text
}

#[pyfunction]
#[pyo3(signature = (instruction, env = "paper_home"))]
fn decompose<'py>(py: Python<'py>, instruction: &str, env: &str) -> PyResult<Bound<'py, PyAny>> {
    let env = environment(env)?;
    let vocab: Vec<&str> = env.objects().collect();
    let instr = Instruction::new(instruction, InstructionCategory::Ambiguous);
    let subtasks = planner::decompose(&instr, &vocab, &RuleBasedBackend).map_err(err)?;
    to_py(py, &subtasks)
}

/// Decomposes the instruction and assigns each subtask with the rule-based
/// planner.
#[pyfunction]
#[pyo3(signature = (instruction, kbs, env = "paper_home"))]
fn allocate<'py>(
    py: Python<'py>,
    instruction: &str,
    kbs: Vec<PyKnowledgeBase>,
    env: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let env = environment(env)?;
    let vocab: Vec<&str> = env.objects().collect();
    let instr = Instruction::new(instruction, InstructionCategory::Ambiguous);
    let subtasks = planner::decompose(&instr, &vocab, &RuleBasedBackend).map_err(err)?;
    let assignments = planner::allocate(&subtasks, &unwrap_kbs(kbs), &RuleBasedBackend).map_err(err)?;
    to_py(py, &assignments)
}

/// Runs the two-robot demonstration and returns its trace lines.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn field_trip(py: Python<'_>, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    let mut s = field_trip_scenario(seed).map_err(err)?;
    let traces: Vec<_> =
        run_assignments(&mut s.world, &s.assignments, &s.knowledge, &ExecutionPolicy::default(), seed)
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(err)?;
    to_py(py, &trace_lines(&traces))
}

/// Runs the standard allocation experiment and returns the report.
#[pyfunction]
#[pyo3(signature = (env = "paper_home", seed = 0))]
fn suite<'py>(py: Python<'py>, env: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let report = run_suite(&SuiteConfig::standard(env, seed), &RuleBasedBackend).map_err(err)?;
    py.import("json")?.call_method1("loads", (report.to_json(),))
}

#[pymodule]
fn homeplan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyKnowledgeBase>()?;
    m.add_function(wrap_pyfunction!(learn, m)?)?;
    m.add_function(wrap_pyfunction!(learn_sessions, m)?)?;
    m.add_function(wrap_pyfunction!(extract_knowledge, m)?)?;
    m.add_function(wrap_pyfunction!(render_presence_table, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(field_trip, m)?)?;
    m.add_function(wrap_pyfunction!(suite, m)?)?;
    m.add("SCHEMA_VERSION", homeplan::experiment::SCHEMA_VERSION)?;
    Ok(())
}
