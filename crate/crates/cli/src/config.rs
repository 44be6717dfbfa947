//! Flat `key = value` run configuration.
//!
//! Files hold one `section.key = value` pair per line; `#` starts a
//! comment. Flags are applied after the file, so they win. Every key has a
//! default that depends on the task, and the resolved configuration is
//! rendered back in the same format for the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use commnet::envs::{EnvFactory, TaskConfig};
use commnet::model::{CellKind, ControllerConfig, ControllerKind, EncoderKind};
use commnet::numerics::Activation;
use commnet::training::{traffic_curriculum, Objective, OptimizerKind, Parallelism, TrainConfig};

use crate::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
    Analyze,
    Selftest,
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "eval" => Ok(Self::Eval),
            "analyze" => Ok(Self::Analyze),
            "selftest" => Ok(Self::Selftest),
            other => Err(CliError::Value {
                key: "mode".into(),
                value: other.into(),
                expected: "train, eval, analyze or selftest",
            }),
        }
    }
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Eval => "eval",
            Self::Analyze => "analyze",
            Self::Selftest => "selftest",
        }
    }
}

/// Controller structure without the task-dependent widths.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ControllerKind,
    pub cell: CellKind,
    pub hidden: usize,
    pub comm_steps: usize,
    pub skip: bool,
    pub local_range: Option<usize>,
    pub encoder: EncoderKind,
    pub mlp_depth: usize,
    pub activation: Activation,
    pub vocab: Option<usize>,
    pub fc_width: Option<usize>,
    pub init_std: f64,
}

impl ModelSpec {
    /// Defaults for a task. Lever uses a 128-wide ID lookup with two-layer
    /// cells and a smaller initial scale; the grid tasks use single-layer
    /// cells of width 50.
    pub fn for_task(task: &TaskConfig, kind: ControllerKind, cell: CellKind) -> Self {
        let base = ControllerConfig::new(kind, cell, 1, 1);
        let lever = matches!(task, TaskConfig::Lever(_));
        Self {
            kind,
            cell,
            hidden: if lever { 128 } else { base.hidden },
            comm_steps: base.comm_steps,
            skip: base.skip,
            local_range: None,
            encoder: if lever {
                EncoderKind::Lookup
            } else {
                EncoderKind::OneHotLinear
            },
            mlp_depth: if lever { 2 } else { base.mlp_depth },
            activation: base.activation,
            vocab: None,
            fc_width: None,
            // Keeps the untrained lever policy close to uniform.
            init_std: if lever { 0.1 } else { base.init_std },
        }
    }

    /// Full controller configuration for an environment of the given shape.
    pub fn controller(
        &self,
        input_dim: usize,
        actions: usize,
        capacity: usize,
    ) -> ControllerConfig {
        let mut c = ControllerConfig::new(self.kind, self.cell, input_dim, actions);
        c.hidden = self.hidden;
        c.comm_steps = self.comm_steps;
        c.skip = self.skip;
        c.local_range = self.local_range;
        c.encoder = self.encoder;
        c.mlp_depth = self.mlp_depth;
        c.activation = self.activation;
        c.vocab = self.vocab;
        c.fc_width = self.fc_width;
        c.init_std = self.init_std;
        c.agents = capacity;
        c
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub task: TaskConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Apply the task's standard curriculum over the configured epochs.
    pub curriculum: bool,
    pub eval_trials: usize,
    pub analysis_episodes: usize,
    pub probe_episodes: usize,
}

/// Raw key/value pairs before resolution.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Syntax {
                line: n + 1,
                text: line.into(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Syntax {
                    line: n + 1,
                    text: line.into(),
                });
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::File {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Overlays `other`, whose values win.
    pub fn merge(&mut self, other: RawConfig) {
        self.entries.extend(other.entries);
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(self)
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T> {
    value.parse().map_err(|_| CliError::Value {
        key: key.into(),
        value: value.into(),
        expected,
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Value {
            key: key.into(),
            value: value.into(),
            expected: "a boolean",
        }),
    }
}

fn parse_optional<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse_value(key, value, expected).map(Some)
    }
}

pub fn parse_kind(value: &str) -> Result<ControllerKind> {
    match value {
        "independent" => Ok(ControllerKind::Independent),
        "fully-connected" | "fc" => Ok(ControllerKind::FullyConnected),
        "discrete" => Ok(ControllerKind::DiscreteComm),
        "commnet" => Ok(ControllerKind::CommNet),
        other => Err(CliError::Value {
            key: "model.controller".into(),
            value: other.into(),
            expected: "independent, fully-connected, discrete or commnet",
        }),
    }
}

pub fn kind_name(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Independent => "independent",
        ControllerKind::FullyConnected => "fully-connected",
        ControllerKind::DiscreteComm => "discrete",
        ControllerKind::CommNet => "commnet",
    }
}

pub fn parse_cell(value: &str) -> Result<CellKind> {
    match value {
        "mlp" => Ok(CellKind::Mlp),
        "rnn" => Ok(CellKind::Rnn),
        "lstm" => Ok(CellKind::Lstm),
        other => Err(CliError::Value {
            key: "model.cell".into(),
            value: other.into(),
            expected: "mlp, rnn or lstm",
        }),
    }
}

pub fn cell_name(cell: CellKind) -> &'static str {
    match cell {
        CellKind::Mlp => "mlp",
        CellKind::Rnn => "rnn",
        CellKind::Lstm => "lstm",
    }
}

fn parse_encoder(value: &str) -> Result<EncoderKind> {
    match value {
        "lookup" => Ok(EncoderKind::Lookup),
        "onehot" => Ok(EncoderKind::OneHotLinear),
        other => Err(CliError::Value {
            key: "model.encoder".into(),
            value: other.into(),
            expected: "lookup or onehot",
        }),
    }
}

fn encoder_name(e: EncoderKind) -> &'static str {
    match e {
        EncoderKind::Lookup => "lookup",
        EncoderKind::OneHotLinear => "onehot",
    }
}

fn parse_activation(value: &str) -> Result<Activation> {
    match value {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        "sigmoid" => Ok(Activation::Sigmoid),
        "identity" => Ok(Activation::Identity),
        other => Err(CliError::Value {
            key: "model.activation".into(),
            value: other.into(),
            expected: "relu, tanh, sigmoid or identity",
        }),
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
        Activation::Sigmoid => "sigmoid",
        Activation::Identity => "identity",
    }
}

fn objective_name(o: Objective) -> &'static str {
    match o {
        Objective::Reinforce => "reinforce",
        Objective::Supervised => "supervised",
    }
}

fn optimizer_name(o: OptimizerKind) -> &'static str {
    match o {
        OptimizerKind::RmsProp => "rmsprop",
        OptimizerKind::Adam => "adam",
    }
}

/// Numeric task parameters accepted under `env.`, in manifest order.
fn env_keys(task: &TaskConfig) -> Vec<(&'static str, f64)> {
    match task {
        TaskConfig::Lever(c) => vec![("levers", c.levers as f64), ("pool", c.pool as f64)],
        TaskConfig::Traffic(c) => vec![
            ("p_arrive", c.p_arrive),
            ("car_limit", c.car_limit as f64),
            ("max_cars", c.max_cars as f64),
            ("r_coll", c.r_coll),
            ("r_time", c.r_time),
            ("max_steps", c.max_steps as f64),
            ("vision", c.vision.map_or(-1.0, |v| v as f64)),
        ],
        TaskConfig::Combat(c) => vec![
            ("team_size", c.team_size as f64),
            ("health", c.health as f64),
            ("vision", c.vision as f64),
            ("bot_vision", c.bot_vision as f64),
            ("max_steps", c.max_steps as f64),
        ],
    }
}

fn opt_text<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

impl RunConfig {
    fn resolve(raw: &RawConfig) -> Result<Self> {
        let task_name = raw.get("task").unwrap_or("lever");
        let mut task = TaskConfig::from_name(task_name)?;
        let kind = parse_kind(raw.get("model.controller").unwrap_or("commnet"))?;
        let cell = parse_cell(raw.get("model.cell").unwrap_or("mlp"))?;
        let mut model = ModelSpec::for_task(&task, kind, cell);
        let mut train = TrainConfig::default();
        let lever = matches!(task, TaskConfig::Lever(_));
        if lever {
            train.objective = Objective::Supervised;
            train.batch = 64;
            train.epochs = 500;
            train.optimizer = OptimizerKind::Adam;
            train.lr = 0.001;
        }
        let mut cfg = RunConfig {
            mode: Mode::Train,
            seed: 1,
            out: PathBuf::from("run"),
            checkpoint: None,
            curriculum: matches!(task, TaskConfig::Traffic(_)),
            eval_trials: 500,
            analysis_episodes: 100,
            probe_episodes: 200,
            task: task.clone(),
            model: model.clone(),
            train: train.clone(),
        };

        for (key, value) in &raw.entries {
            let v = value.as_str();
            let k = key.as_str();
            match k {
                "task" | "model.controller" | "model.cell" => {}
                "mode" => cfg.mode = v.parse()?,
                "seed" => cfg.seed = parse_value(k, v, "an unsigned integer")?,
                "out" => cfg.out = PathBuf::from(v),
                "checkpoint" => {
                    cfg.checkpoint = (v != "none").then(|| PathBuf::from(v));
                }
                "model.hidden" => model.hidden = parse_value(k, v, "a count")?,
                "model.comm_steps" => model.comm_steps = parse_value(k, v, "a count")?,
                "model.skip" => model.skip = parse_bool(k, v)?,
                "model.local_range" => model.local_range = parse_optional(k, v, "a count or none")?,
                "model.encoder" => model.encoder = parse_encoder(v)?,
                "model.mlp_depth" => model.mlp_depth = parse_value(k, v, "1 or 2")?,
                "model.activation" => model.activation = parse_activation(v)?,
                "model.vocab" => model.vocab = parse_optional(k, v, "a count or none")?,
                "model.fc_width" => model.fc_width = parse_optional(k, v, "a count or none")?,
                "model.init_std" => model.init_std = parse_value(k, v, "a real")?,
                "train.objective" => train.objective = v.parse()?,
                "train.alpha" => train.alpha = parse_value(k, v, "a real")?,
                "train.lr" => train.lr = parse_value(k, v, "a real")?,
                "train.batch" => train.batch = parse_value(k, v, "a count")?,
                "train.epochs" => train.epochs = parse_value(k, v, "a count")?,
                "train.updates" => train.updates = parse_value(k, v, "a count")?,
                "train.optimizer" => train.optimizer = v.parse()?,
                "train.max_grad_norm" => {
                    train.max_grad_norm = parse_optional(k, v, "a real or none")?
                }
                "train.workers" => train.parallel.workers = parse_value(k, v, "a count")?,
                "train.chunk" => train.parallel.chunk = parse_value(k, v, "a count")?,
                "train.curriculum" => cfg.curriculum = parse_bool(k, v)?,
                "eval.trials" => cfg.eval_trials = parse_value(k, v, "a count")?,
                "analysis.episodes" => cfg.analysis_episodes = parse_value(k, v, "a count")?,
                "analysis.probe_episodes" => cfg.probe_episodes = parse_value(k, v, "a count")?,
                _ => match k.strip_prefix("env.") {
                    Some(param) if env_keys(&task).iter().any(|(n, _)| *n == param) => {
                        let x: f64 = parse_value(k, v, "a number")?;
                        task.set_param(param, x).map_err(|e| CliError::Value {
                            key: k.into(),
                            value: format!("{v} ({e})"),
                            expected: "a valid task parameter",
                        })?;
                    }
                    _ => return Err(CliError::UnknownKey(k.into())),
                },
            }
        }
        if cfg.curriculum && !matches!(task, TaskConfig::Traffic(_)) {
            return Err(CliError::Invalid(format!(
                "train.curriculum is only defined for traffic tasks, not {}",
                task.name()
            )));
        }
        if train.objective == Objective::Supervised && !matches!(task, TaskConfig::Lever(_)) {
            return Err(CliError::Invalid(
                "supervised training needs the lever task".into(),
            ));
        }
        task.validate()?;
        train.validate()?;
        if cfg.curriculum {
            train.curriculum = traffic_curriculum(&task, train.epochs)?;
        }
        cfg.task = task;
        cfg.model = model;
        cfg.train = train;
        cfg.controller_config()?.validate()?;
        if matches!(cfg.mode, Mode::Eval | Mode::Analyze) {
            match &cfg.checkpoint {
                None => {
                    return Err(CliError::Invalid(format!(
                        "{} mode needs a checkpoint",
                        cfg.mode.as_str()
                    )))
                }
                Some(p) if !p.is_file() => {
                    return Err(CliError::Invalid(format!(
                        "checkpoint {} does not exist",
                        p.display()
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(cfg)
    }

    /// Environment factory for the configured task, before any curriculum.
    pub fn factory(&self) -> Result<EnvFactory> {
        Ok(EnvFactory::new(self.task.clone())?)
    }

    /// Final environment: curriculum parameters at their last-epoch values.
    pub fn final_factory(&self) -> Result<EnvFactory> {
        let mut f = self.factory()?;
        for s in &self.train.curriculum {
            f.set_param(&s.param, s.value(self.train.epochs.saturating_sub(1)))?;
        }
        Ok(f)
    }

    pub fn controller_config(&self) -> Result<ControllerConfig> {
        let (dim, actions, cap) = self.factory()?.dims()?;
        Ok(self.model.controller(dim, actions, cap))
    }

    pub fn parallel(&self) -> Parallelism {
        self.train.parallel
    }

    /// Renders every key in the file format; parsing the text back yields
    /// the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let t = &self.train;
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("mode", self.mode.as_str().into());
        line("task", self.task.name());
        line("seed", self.seed.to_string());
        line("out", self.out.display().to_string());
        line(
            "checkpoint",
            opt_text(self.checkpoint.as_ref().map(|p| p.display())),
        );
        for (name, value) in env_keys(&self.task) {
            line(&format!("env.{name}"), value.to_string());
        }
        line("model.controller", kind_name(m.kind).into());
        line("model.cell", cell_name(m.cell).into());
        line("model.hidden", m.hidden.to_string());
        line("model.comm_steps", m.comm_steps.to_string());
        line("model.skip", m.skip.to_string());
        line("model.local_range", opt_text(m.local_range));
        line("model.encoder", encoder_name(m.encoder).into());
        line("model.mlp_depth", m.mlp_depth.to_string());
        line("model.activation", activation_name(m.activation).into());
        line("model.vocab", opt_text(m.vocab));
        line("model.fc_width", opt_text(m.fc_width));
        line("model.init_std", m.init_std.to_string());
        line("train.objective", objective_name(t.objective).into());
        line("train.alpha", t.alpha.to_string());
        line("train.lr", t.lr.to_string());
        line("train.batch", t.batch.to_string());
        line("train.epochs", t.epochs.to_string());
        line("train.updates", t.updates.to_string());
        line("train.optimizer", optimizer_name(t.optimizer).into());
        line("train.max_grad_norm", opt_text(t.max_grad_norm));
        line("train.workers", t.parallel.workers.to_string());
        line("train.chunk", t.parallel.chunk.to_string());
        line("train.curriculum", self.curriculum.to_string());
        line("eval.trials", self.eval_trials.to_string());
        line("analysis.episodes", self.analysis_episodes.to_string());
        line("analysis.probe_episodes", self.probe_episodes.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_lever_config_has_defaults() {
        let cfg = RawConfig::default().resolve().unwrap();
        let TaskConfig::Lever(lever) = &cfg.task else {
            panic!("default task is lever");
        };
        assert_eq!((lever.levers, lever.pool), (5, 500));
        assert_eq!(cfg.model.hidden, 128);
        assert_eq!(cfg.model.encoder, EncoderKind::Lookup);
        assert_eq!(cfg.model.comm_steps, 2);
        assert_eq!(cfg.model.mlp_depth, 2);
        assert!(cfg.model.skip);
        assert_eq!(
            cfg.train.batch * cfg.train.epochs * cfg.train.updates,
            64 * 50_000
        );
        assert_eq!(cfg.mode, Mode::Train);
        assert!(cfg.train.curriculum.is_empty());
    }

    #[test]
    fn traffic_defaults() {
        let mut raw = RawConfig::default();
        raw.set("task", "traffic-easy");
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.model.hidden, 50);
        assert_eq!(cfg.model.mlp_depth, 1);
        assert_eq!(cfg.train.batch, 288);
        assert_eq!(cfg.train.epochs, 300);
        assert_eq!(cfg.train.optimizer, OptimizerKind::RmsProp);
        assert_eq!(cfg.train.curriculum.len(), 2);
    }

    #[test]
    fn later_values_win() {
        let mut file = RawConfig::parse("task = combat\ntrain.epochs = 7 # short\n").unwrap();
        let mut flags = RawConfig::default();
        flags.set("train.epochs", "3");
        file.merge(flags);
        let cfg = file.resolve().unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert!(cfg.to_text().contains("train.epochs = 3\n"));
    }

    #[test]
    fn unknown_keys_are_named() {
        let raw = RawConfig::parse("train.epoch = 3").unwrap();
        match raw.resolve() {
            Err(CliError::UnknownKey(k)) => assert_eq!(k, "train.epoch"),
            other => panic!("{other:?}"),
        }
        let raw = RawConfig::parse("task = lever\nenv.p_arrive = 0.1").unwrap();
        assert!(matches!(raw.resolve(), Err(CliError::UnknownKey(_))));
    }

    #[test]
    fn bad_values() {
        for text in [
            "train.epochs = many",
            "model.skip = maybe",
            "model.cell = gru",
            "task = chess",
            "no equals sign",
            "task = combat\ntrain.curriculum = true",
            "task = combat\ntrain.objective = supervised",
            "task = traffic-easy\nenv.p_arrive = 2",
            "mode = eval",
            "mode = eval\ncheckpoint = /nonexistent/ckpt.bin",
        ] {
            assert!(
                RawConfig::parse(text).and_then(|r| r.resolve()).is_err(),
                "{text}"
            );
        }
    }

    #[test]
    fn rendering_round_trips() {
        for task in ["lever", "traffic-medium", "traffic-hard", "combat"] {
            let mut raw = RawConfig::default();
            raw.set("task", task);
            raw.set("model.cell", "lstm");
            raw.set("train.workers", "3");
            let cfg = raw.resolve().unwrap();
            let text = cfg.to_text();
            let again = RawConfig::parse(&text).unwrap().resolve().unwrap();
            assert_eq!(again.to_text(), text);
            assert_eq!(again.task, cfg.task);
            assert_eq!(again.model, cfg.model);
            assert_eq!(again.train, cfg.train);
        }
    }

    #[test]
    fn env_overrides_reach_the_task() {
        let raw =
            RawConfig::parse("task = traffic-easy\nenv.vision = -1\nenv.p_arrive = 0.25").unwrap();
        let cfg = raw.resolve().unwrap();
        let TaskConfig::Traffic(t) = &cfg.task else {
            panic!()
        };
        assert_eq!(t.vision, None);
        assert_eq!(t.p_arrive, 0.25);
    }
}
