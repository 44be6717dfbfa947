//! Lever pulling, traffic junction and combat.

mod combat;
mod lever;
mod traffic;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use combat::{Combat, CombatConfig, CombatStepRecord, Fighter};
pub use lever::{lever_reward, lever_supervised_target, LeverConfig, LeverGame};
pub use traffic::{
    build_junction, count_collisions, Car, Junction, TrafficConfig, TrafficJunction,
    TrafficStepRecord, TrafficVariant, BRAKE, GAS,
};

use crate::error::{Error, Result};
pub use crate::model::{AgentView, Observation};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    /// Episode over with no success notion (lever).
    Finished,
    Success,
    Failure,
    Win,
    Loss,
    Draw,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    pub outcome: Option<Outcome>,
}

/// A multi-agent episode. Agents are the entries of [`Environment::views`];
/// `step` takes one action per view, in view order.
pub trait Environment: Send {
    fn reset(&mut self, rng: &mut Rng) -> Result<()>;

    /// Live agents, ordered by slot. Empty once the episode is over.
    fn views(&self) -> Vec<AgentView>;

    /// Upper bound on slots.
    fn capacity(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn num_actions(&self) -> usize;

    fn step(&mut self, actions: &[usize], rng: &mut Rng) -> Result<StepResult>;

    fn is_done(&self) -> bool;

    /// Per-episode evaluation metric: lever ratio, traffic failure, combat win.
    fn metric(&self) -> f64;

    /// Structured record of the most recent step.
    fn step_record(&self) -> serde_json::Value;

    fn grid(&self) -> Option<(usize, usize)> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum TaskConfig {
    Lever(LeverConfig),
    Traffic(TrafficConfig),
    Combat(CombatConfig),
}

impl TaskConfig {
    /// Parses `lever`, `traffic-easy`, `traffic-medium`, `traffic-hard` or `combat`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "lever" => Ok(Self::Lever(LeverConfig::default())),
            "combat" => Ok(Self::Combat(CombatConfig::default())),
            other => match other.strip_prefix("traffic-") {
                Some(v) => Ok(Self::Traffic(TrafficConfig::new(v.parse()?))),
                None => Err(Error::InvalidArgument(format!("unknown task {other}"))),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Lever(_) => "lever".into(),
            Self::Combat(_) => "combat".into(),
            Self::Traffic(c) => format!(
                "traffic-{}",
                serde_json::to_value(c.variant)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default()
            ),
        }
    }

    /// Sets a numeric task parameter by name; used by configs and curricula.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be a count, got {v}"
                )))
            }
        };
        match (self, name) {
            (Self::Lever(c), "levers") => c.levers = as_count(value)?,
            (Self::Lever(c), "pool") => c.pool = as_count(value)?,
            (Self::Traffic(c), "p_arrive") => c.p_arrive = value,
            (Self::Traffic(c), "car_limit") => c.car_limit = as_count(value.round())?,
            (Self::Traffic(c), "max_cars") => c.max_cars = as_count(value)?,
            (Self::Traffic(c), "r_coll") => c.r_coll = value,
            (Self::Traffic(c), "r_time") => c.r_time = value,
            (Self::Traffic(c), "max_steps") => c.max_steps = as_count(value)?,
            (Self::Traffic(c), "vision") => {
                c.vision = if value < 0.0 {
                    None
                } else {
                    Some(as_count(value)?)
                }
            }
            (Self::Combat(c), "team_size") => c.team_size = as_count(value)?,
            (Self::Combat(c), "bot_vision") => c.bot_vision = as_count(value)?,
            (Self::Combat(c), "vision") => c.vision = as_count(value)?,
            (Self::Combat(c), "max_steps") => c.max_steps = as_count(value)?,
            (Self::Combat(c), "health") => c.health = as_count(value)? as u8,
            (_, other) => {
                return Err(Error::InvalidArgument(format!(
                    "unknown task parameter {other}"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Lever(c) => c.validate(),
            Self::Traffic(c) => c.validate(),
            Self::Combat(c) => c.validate(),
        }
    }
}

/// Constructor for environments outside the built-in tasks.
pub type EnvBuilder = Arc<dyn Fn() -> Result<Box<dyn Environment>> + Send + Sync>;

#[derive(Clone)]
enum Source {
    Task {
        task: TaskConfig,
        junction: Option<Arc<Junction>>,
    },
    Custom {
        name: String,
        build: EnvBuilder,
    },
}

/// Builds fresh environments for a task; the traffic road layout is shared.
#[derive(Clone)]
pub struct EnvFactory {
    source: Source,
}

impl std::fmt::Debug for EnvFactory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.source {
            Source::Task { task, .. } => f.debug_tuple("EnvFactory").field(task).finish(),
            Source::Custom { name, .. } => f.debug_tuple("EnvFactory").field(name).finish(),
        }
    }
}

impl EnvFactory {
    pub fn new(task: TaskConfig) -> Result<Self> {
        task.validate()?;
        let junction = match &task {
            TaskConfig::Traffic(c) => Some(Arc::new(build_junction(c.variant))),
            _ => None,
        };
        Ok(Self {
            source: Source::Task { task, junction },
        })
    }

    pub fn custom(name: impl Into<String>, build: EnvBuilder) -> Self {
        Self {
            source: Source::Custom {
                name: name.into(),
                build,
            },
        }
    }

    /// The built-in task, if any.
    pub fn task(&self) -> Option<&TaskConfig> {
        match &self.source {
            Source::Task { task, .. } => Some(task),
            Source::Custom { .. } => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.source {
            Source::Task { task, .. } => task.name(),
            Source::Custom { name, .. } => name.clone(),
        }
    }

    pub fn junction(&self) -> Option<&Arc<Junction>> {
        match &self.source {
            Source::Task { junction, .. } => junction.as_ref(),
            Source::Custom { .. } => None,
        }
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let Source::Task { task, .. } = &mut self.source else {
            return Err(Error::InvalidArgument(format!(
                "custom environments have no parameter {name}"
            )));
        };
        let mut next = task.clone();
        next.set_param(name, value)?;
        next.validate()?;
        *task = next;
        Ok(())
    }

    pub fn make(&self) -> Result<Box<dyn Environment>> {
        let (task, junction) = match &self.source {
            Source::Custom { build, .. } => return build(),
            Source::Task { task, junction } => (task, junction),
        };
        Ok(match task {
            TaskConfig::Lever(c) => Box::new(LeverGame::new(c.clone())?),
            TaskConfig::Combat(c) => Box::new(Combat::new(c.clone())?),
            TaskConfig::Traffic(c) => Box::new(TrafficJunction::new(
                c.clone(),
                junction.clone().expect("traffic factory has a junction"),
            )?),
        })
    }

    /// `(input width, actions, slot capacity)` read from a probe environment.
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        let env = self.make()?;
        Ok((env.input_dim(), env.num_actions(), env.capacity()))
    }
}

/// One line of an exported episode trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub episode: usize,
    pub step: usize,
    pub live: Vec<usize>,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub record: serde_json::Value,
}

/// Writes trace lines as line-delimited JSON.
pub fn write_trace_lines<W: Write>(mut out: W, lines: &[TraceLine]) -> Result<()> {
    for line in lines {
        serde_json::to_writer(&mut out, line)
            .map_err(|e| Error::Format(format!("trace line: {e}")))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace_lines(text: &str) -> Result<Vec<TraceLine>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(format!("trace line: {e}"))))
        .collect()
}
