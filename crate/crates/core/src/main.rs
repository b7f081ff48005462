use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use homeplan::executor::{run_assignments, traces_to_jsonl, ExecutionPolicy, ExecutionTrace};
use homeplan::experiment::{
    field_trip_scenario, learn_robot_knowledge, learn_team_knowledge, run_suite, SuiteConfig,
    DEFAULT_VISITS_PER_ROOM,
};
use homeplan::knowledge::{
    extract_knowledge, render_behaviors, render_dialogue_example, render_place_vocab, render_presence_table,
    render_skills, KnowledgeBase, DEFAULT_VOCAB_THRESHOLD,
};
use homeplan::planner::{
    allocate, allocate_commonsense, allocate_random, decompose, render_allocation_prompt,
    render_decomposition_prompt, room_to_robot, tables, BackendKind, Instruction, InstructionCategory,
    PlannerBackend, PlannerError, RemoteChatBackend, RemoteConfig, ReplayBackend, RuleBasedBackend,
};
use homeplan::spatial::{learn_fixed_lag, Hyperparameters, Session, SpatialConceptModel};
use homeplan::world::{default_robots, load_environment, Environment, RobotState, World};

type Error = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "homeplan", version, about = "Spatial-knowledge task allocation for multi-robot households")]
struct Cli {
    /// Builtin environment name or path to an environment JSON file.
    #[arg(long, global = true, default_value = "paper_home")]
    env: String,
    #[arg(long, global = true, env = "HOMEPLAN_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Backend::Rule)]
    backend: Backend,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory of canned responses for the replay backend (and for --record).
    #[arg(long, global = true, default_value = "replay")]
    replay_dir: PathBuf,
    /// Chat-completions endpoint for the remote backend.
    #[arg(long, global = true, env = "HOMEPLAN_LLM_ENDPOINT")]
    endpoint: Option<String>,
    /// Model name sent to the remote backend.
    #[arg(long, global = true, env = "HOMEPLAN_LLM_MODEL", default_value = "gpt-4")]
    llm_model: String,
    /// Save every remote response into --replay-dir.
    #[arg(long, global = true)]
    record: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Rule,
    Remote,
    Replay,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Part {
    Vocab,
    Presence,
    Skills,
    Behaviors,
    Dialogue,
    Decomposition,
    Allocation,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Proposed,
    Random,
    Commonsense,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a spatial concept model from sessions (simulated when no file is given).
    Learn {
        #[arg(long, default_value = "Robot1")]
        robot: String,
        /// JSON array of sessions.
        #[arg(long)]
        sessions: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_VISITS_PER_ROOM)]
        visits: usize,
    },
    /// Extract a knowledge base from a learned model.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "Robot1")]
        robot: String,
        /// Room names for regions 0..R, comma separated. Defaults to the robot's floor.
        #[arg(long, value_delimiter = ',')]
        rooms: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_VOCAB_THRESHOLD)]
        threshold: f64,
    },
    /// Render prompt text from knowledge bases.
    Prompt {
        #[arg(long = "kb")]
        kbs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Part::Presence)]
        part: Part,
        /// Instruction for the decomposition and allocation parts.
        #[arg(long)]
        instruction: Option<String>,
    },
    /// Split an instruction into subtasks.
    Decompose { instruction: String },
    /// Decompose an instruction and assign its subtasks to robots.
    Allocate {
        instruction: String,
        #[arg(long = "kb")]
        kbs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = StrategyArg::Proposed)]
        strategy: StrategyArg,
    },
    /// Plan and execute an instruction in the simulator; prints JSON-lines traces.
    Run {
        instruction: Option<String>,
        #[arg(long = "kb")]
        kbs: Vec<PathBuf>,
        /// Run the two-robot field-trip demonstration instead.
        #[arg(long)]
        field_trip: bool,
    },
    /// Run the allocation experiment and report success counts.
    Suite {
        /// Suite configuration JSON; defaults to the standard 50-subtask suite.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Passes calls through to `inner` and stores each response for replay.
struct Recording<B> {
    inner: B,
    store: ReplayBackend,
}

impl<B: PlannerBackend> PlannerBackend for Recording<B> {
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn complete(&self, prompt: &str) -> Result<String, PlannerError> {
        let reply = self.inner.complete(prompt)?;
        self.store.record(prompt, &reply)?;
        Ok(reply)
    }
}

fn backend(cli: &Cli) -> Result<Box<dyn PlannerBackend>, Error> {
    Ok(match cli.backend {
        Backend::Rule => Box::new(RuleBasedBackend),
        Backend::Replay => Box::new(ReplayBackend::new(&cli.replay_dir)),
        Backend::Remote => {
            let endpoint = cli.endpoint.clone().ok_or("the remote backend needs --endpoint or HOMEPLAN_LLM_ENDPOINT")?;
            let remote = RemoteChatBackend::new(RemoteConfig::new(endpoint, cli.llm_model.clone()));
            if cli.record {
                Box::new(Recording { inner: remote, store: ReplayBackend::new(&cli.replay_dir) })
            } else {
                Box::new(remote)
            }
        }
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn robot<'a>(robots: &'a [RobotState], id: &str) -> Result<&'a RobotState, Error> {
    robots.iter().find(|r| r.robot_id == id).ok_or_else(|| format!("no robot `{id}` in this environment").into())
}

fn read_kbs(paths: &[PathBuf]) -> Result<Vec<KnowledgeBase>, Error> {
    paths.iter().map(|p| Ok(KnowledgeBase::from_json(&fs::read_to_string(p)?)?)).collect()
}

/// Knowledge bases from files, or learned from simulated sessions.
fn kbs_or_learn(cli: &Cli, env: &Environment, paths: &[PathBuf]) -> Result<Vec<KnowledgeBase>, Error> {
    if paths.is_empty() {
        Ok(learn_team_knowledge(env, &default_robots(env), DEFAULT_VISITS_PER_ROOM, &Hyperparameters::default(), cli.seed)?)
    } else {
        read_kbs(paths)
    }
}

fn vocab(env: &Environment) -> Vec<&str> {
    env.objects().collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Learn { robot: id, sessions, visits } => {
            let env = load_environment(&cli.env)?;
            let robots = default_robots(&env);
            let r = robot(&robots, id)?;
            let model = match sessions {
                Some(path) => {
                    let sessions: Vec<Session> = serde_json::from_str(&fs::read_to_string(path)?)?;
                    learn_fixed_lag(&sessions, &Hyperparameters::default(), cli.seed)?
                }
                None => learn_robot_knowledge(&env, r, *visits, &Hyperparameters::default(), cli.seed)?.0,
            };
            emit(out, &model.to_json()?)
        }
        Command::Extract { model, robot: id, rooms, threshold } => {
            let model = SpatialConceptModel::from_json(&fs::read_to_string(model)?)?;
            let rooms = if rooms.is_empty() {
                let env = load_environment(&cli.env)?;
                let robots = default_robots(&env);
                let floor = &robot(&robots, id)?.floor;
                env.rooms_on(floor).map(|r| r.name.clone()).collect()
            } else {
                rooms.clone()
            };
            let kb = extract_knowledge(&model, id, &rooms, *threshold)?;
            emit(out, &kb.to_json()?)
        }
        Command::Prompt { kbs, part, instruction } => {
            let env = load_environment(&cli.env)?;
            let kbs = kbs_or_learn(cli, &env, kbs)?;
            let text = match part {
                Part::Vocab => kbs.iter().map(|kb| render_place_vocab(kb).text).collect::<Vec<_>>().join("\n"),
                Part::Presence => render_presence_table(&kbs).text,
                Part::Skills => render_skills().text,
                Part::Behaviors => render_behaviors().text,
                Part::Dialogue => render_dialogue_example().text,
                Part::Decomposition => {
                    let task = instruction.as_deref().ok_or("--instruction is required for this part")?;
                    render_decomposition_prompt(task, &vocab(&env))
                }
                Part::Allocation => {
                    let task = instruction.as_deref().ok_or("--instruction is required for this part")?;
                    let instr = Instruction::new(task, InstructionCategory::Ambiguous);
                    let subtasks = decompose(&instr, &vocab(&env), backend(cli)?.as_ref())?;
                    render_allocation_prompt(&subtasks, &kbs)
                }
            };
            emit(out, &text)
        }
        Command::Decompose { instruction } => {
            let env = load_environment(&cli.env)?;
            let instr = Instruction::new(instruction.clone(), InstructionCategory::Ambiguous);
            let subtasks = decompose(&instr, &vocab(&env), backend(cli)?.as_ref())?;
            emit(out, &(serde_json::to_string_pretty(&subtasks)? + "\n"))
        }
        Command::Allocate { instruction, kbs, strategy } => {
            let env = load_environment(&cli.env)?;
            let backend = backend(cli)?;
            let instr = Instruction::new(instruction.clone(), InstructionCategory::Ambiguous);
            let subtasks = decompose(&instr, &vocab(&env), backend.as_ref())?;
            let robots = default_robots(&env);
            let assignments = match strategy {
                StrategyArg::Proposed => allocate(&subtasks, &kbs_or_learn(cli, &env, kbs)?, backend.as_ref())?,
                StrategyArg::Random => {
                    let ids: Vec<&str> = robots.iter().map(|r| r.robot_id.as_str()).collect();
                    allocate_random(&subtasks, &ids, cli.seed)?
                }
                StrategyArg::Commonsense => {
                    let table = tables::commonsense_rooms(&cli.env)
                        .ok_or_else(|| format!("no typical-room table for `{}`", cli.env))?;
                    allocate_commonsense(&subtasks, &table, &room_to_robot(&env, &robots), backend.as_ref())?
                }
            };
            emit(out, &(serde_json::to_string_pretty(&assignments)? + "\n"))
        }
        Command::Run { instruction, kbs, field_trip } => {
            let policy = ExecutionPolicy::default();
            let results = if *field_trip {
                let mut scenario = field_trip_scenario(cli.seed)?;
                run_assignments(&mut scenario.world, &scenario.assignments, &scenario.knowledge, &policy, cli.seed)
            } else {
                let task = instruction.as_deref().ok_or("give an instruction or --field-trip")?;
                let env = load_environment(&cli.env)?;
                let kbs = kbs_or_learn(cli, &env, kbs)?;
                let backend = backend(cli)?;
                let subtasks =
                    decompose(&Instruction::new(task, InstructionCategory::Ambiguous), &vocab(&env), backend.as_ref())?;
                let assignments = allocate(&subtasks, &kbs, backend.as_ref())?;
                let mut world = World::new(env.clone(), default_robots(&env));
                run_assignments(&mut world, &assignments, &kbs, &policy, cli.seed)
            };
            let mut traces: Vec<ExecutionTrace> = Vec::new();
            for r in results {
                match r {
                    Ok(t) => traces.push(t),
                    Err(e) => eprintln!("subtask not executed: {e}"),
                }
            }
            for t in &traces {
                eprintln!("{} {}: {:?}", t.robot_id, t.subtask, t.result);
            }
            emit(out, &traces_to_jsonl(&traces))
        }
        Command::Suite { config } => {
            let cfg = match config {
                Some(path) => serde_json::from_str::<SuiteConfig>(&fs::read_to_string(path)?)?,
                None => SuiteConfig::standard(cli.env.clone(), cli.seed),
            };
            let report = run_suite(&cfg, backend(cli)?.as_ref())?;
            match out {
                Some(path) => {
                    fs::write(path, report.to_json() + "\n")?;
                    print!("{}", report.table());
                }
                None => {
                    println!("{}", report.to_json());
                    eprint!("{}", report.table());
                }
            }
            Ok(())
        }
    }
}
