//! Experiment configuration: a flat `key = value` text format with
//! `[section]` headers.
//!
//! ```text
//! [run]
//! command = bounds        # plan | qlearn | overest | marl-overest | bounds | contract | sweep
//! seed = 0
//! samples = 100000
//! out = results.csv
//! svg = curve.svg
//!
//! [operator]
//! kind = sm2              # max | mean | boltzmann | mellowmax | sm2 (inferred when omitted)
//! alpha = 10
//! omega = 5
//!
//! [model]
//! gamma = 0.9
//! r_max = 1
//! n_actions = 10
//! n_agents = 1
//! epsilon = 1
//! weights = 0.5, 1, 2     # mixer weights; overrides n_agents
//!
//! [mdp]
//! file = mdp.json         # or generator = random | chain
//! n_states = 20
//! branching = 3
//! seed = 0
//! length = 10
//! slip = 0
//!
//! [solver]
//! tol = 1e-10
//! max_iters = 200000
//!
//! [qlearn]
//! target = sm2            # max | double | mellowmax | sm2 (defaults to the operator)
//! steps = 200000
//! lr = 0.1
//! epsilon_start = 1
//! epsilon_end = 0.1
//! epsilon_decay_steps = 50000
//! sync_period = 100
//!
//! [contract]
//! c = 4                   # defaults to 2 r_max / (1 - gamma)
//! trials = 100000         # defaults to run.samples
//! inject_q1 = 50, 1
//! inject_q2 = 5, 1
//!
//! [sweep]
//! target = overest
//! alpha = 1, 5, 10
//! omega = 5
//! n_actions = 2, 10
//! n_agents = 1, 2
//! ```
//!
//! Keys may also be written fully qualified (`operator.alpha = 10`) outside
//! any section. Later assignments win. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::operators::OperatorSpec;
use crate::solve::{EpsilonSchedule, QLearningConfig, TargetRule, DEFAULT_MAX_ITERS, DEFAULT_TOL};

pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 0;

const KNOWN_KEYS: &[&str] = &[
    "run.command",
    "run.seed",
    "run.samples",
    "run.out",
    "run.svg",
    "operator.kind",
    "operator.alpha",
    "operator.omega",
    "model.gamma",
    "model.r_max",
    "model.n_actions",
    "model.n_agents",
    "model.epsilon",
    "model.weights",
    "mdp.file",
    "mdp.generator",
    "mdp.n_states",
    "mdp.branching",
    "mdp.seed",
    "mdp.length",
    "mdp.slip",
    "solver.tol",
    "solver.max_iters",
    "qlearn.target",
    "qlearn.steps",
    "qlearn.lr",
    "qlearn.epsilon_start",
    "qlearn.epsilon_end",
    "qlearn.epsilon_decay_steps",
    "qlearn.sync_period",
    "contract.c",
    "contract.trials",
    "contract.inject_q1",
    "contract.inject_q2",
    "sweep.target",
    "sweep.alpha",
    "sweep.omega",
    "sweep.n_actions",
    "sweep.n_agents",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Plan,
    Qlearn,
    Overest,
    MarlOverest,
    Bounds,
    Contract,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Plan,
        Command::Qlearn,
        Command::Overest,
        Command::MarlOverest,
        Command::Bounds,
        Command::Contract,
        Command::Sweep,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Plan => "plan",
            Command::Qlearn => "qlearn",
            Command::Overest => "overest",
            Command::MarlOverest => "marl-overest",
            Command::Bounds => "bounds",
            Command::Contract => "contract",
            Command::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MdpSource {
    File(PathBuf),
    Random {
        n_states: usize,
        branching: usize,
        seed: u64,
    },
    Chain {
        length: usize,
        slip: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gamma: f64,
    pub r_max: f64,
    pub n_actions: usize,
    pub n_agents: usize,
    pub epsilon: f64,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractParams {
    pub c: Option<f64>,
    pub trials: u64,
    pub injected: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Max,
    Double,
    Mellowmax,
    Sm2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QLearnParams {
    pub target: Option<TargetKind>,
    pub config: QLearningConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub target: Command,
    pub alpha: Option<Vec<f64>>,
    pub omega: Option<Vec<f64>>,
    pub n_actions: Option<Vec<usize>>,
    pub n_agents: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub operator: OperatorSpec,
    pub model: ModelParams,
    pub mdp: MdpSource,
    pub tol: f64,
    pub max_iters: usize,
    pub qlearn: QLearnParams,
    pub samples: u64,
    pub seed: u64,
    pub contract: ContractParams,
    pub sweep: Option<SweepGrid>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

impl ExperimentConfig {
    /// The target rule for `qlearn`, defaulting to the rule matching the
    /// configured operator.
    pub fn target_rule(&self) -> Result<TargetRule> {
        let kind = match self.qlearn.target {
            Some(k) => k,
            None => match self.operator {
                OperatorSpec::Max => TargetKind::Max,
                OperatorSpec::Mellowmax { .. } => TargetKind::Mellowmax,
                OperatorSpec::Sm2 { .. } => TargetKind::Sm2,
                other => {
                    return Err(Error::Config(format!(
                        "qlearn has no target rule for operator {}; set qlearn.target",
                        other.name()
                    )))
                }
            },
        };
        let omega = || {
            self.operator
                .omega()
                .ok_or_else(|| Error::Config("missing required key operator.omega".into()))
        };
        Ok(match kind {
            TargetKind::Max => TargetRule::MaxTarget,
            TargetKind::Double => TargetRule::DoubleTarget,
            TargetKind::Mellowmax => TargetRule::MellowmaxTarget { omega: omega()? },
            TargetKind::Sm2 => TargetRule::Sm2Target {
                alpha: self
                    .operator
                    .alpha()
                    .ok_or_else(|| Error::Config("missing required key operator.alpha".into()))?,
                omega: omega()?,
            },
        })
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: Option<usize>,
}

/// Parsed but uninterpreted `section.key -> value` assignments.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut section: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::ConfigLine {
                    line: lineno,
                    message: format!("malformed section header `{content}`"),
                })?;
                let name = name.trim();
                if !KNOWN_KEYS
                    .iter()
                    .any(|k| k.starts_with(&format!("{name}.")))
                {
                    return Err(Error::ConfigLine {
                        line: lineno,
                        message: format!("unknown section `[{name}]`"),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigLine {
                line: lineno,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::ConfigLine {
                    line: lineno,
                    message: "empty key".into(),
                });
            }
            let full = match &section {
                Some(s) if !key.contains('.') => format!("{s}.{key}"),
                _ => key.to_string(),
            };
            if !KNOWN_KEYS.contains(&full.as_str()) {
                return Err(Error::ConfigLine {
                    line: lineno,
                    message: format!("unknown key `{full}`"),
                });
            }
            raw.entries.insert(
                full,
                Entry {
                    value: value.trim().to_string(),
                    line: Some(lineno),
                },
            );
        }
        Ok(raw)
    }

    /// Sets `key` (fully qualified) as if it had been written in the file.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.into(),
                line: None,
            },
        );
        Ok(())
    }

    fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn err(&self, key: &str, message: String) -> Error {
        match self.entries.get(key).and_then(|e| e.line) {
            Some(line) => Error::ConfigLine {
                line,
                message: format!("{key}: {message}"),
            },
            None => Error::Config(format!("{key}: {message}")),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| self.err(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        let Some(v) = self.get_str(key) else {
            return Ok(None);
        };
        let items: Vec<&str> = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return Err(self.err(key, "list is empty".into()));
        }
        items
            .into_iter()
            .map(|s| {
                s.parse()
                    .map_err(|e| self.err(key, format!("cannot parse `{s}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get_str(key)
            .ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    /// Turns the raw assignments into a validated configuration.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let command: Command = {
            let v = self.require("run.command")?;
            v.parse().map_err(|e: String| self.err("run.command", e))?
        };
        let operator = self.resolve_operator()?;
        let model = self.resolve_model()?;
        let mdp = self.resolve_mdp()?;

        let tol = self.get_or("solver.tol", DEFAULT_TOL)?;
        if !(tol.is_finite() && tol > 0.0) {
            return Err(self.err("solver.tol", "must be finite and > 0".into()));
        }
        let max_iters = self.get_or("solver.max_iters", DEFAULT_MAX_ITERS)?;
        let samples = self.get_or("run.samples", DEFAULT_SAMPLES)?;
        if samples == 0 {
            return Err(self.err("run.samples", "must be >= 1".into()));
        }
        let seed = self.get_or("run.seed", DEFAULT_SEED)?;

        let qlearn = self.resolve_qlearn(seed)?;
        let contract = self.resolve_contract(samples)?;
        let sweep = if command == Command::Sweep {
            Some(self.resolve_sweep()?)
        } else {
            None
        };

        Ok(ExperimentConfig {
            command,
            operator,
            model,
            mdp,
            tol,
            max_iters,
            qlearn,
            samples,
            seed,
            contract,
            sweep,
            out: self.get_str("run.out").map(PathBuf::from),
            svg: self.get_str("run.svg").map(PathBuf::from),
        })
    }

    fn resolve_operator(&self) -> Result<OperatorSpec> {
        let alpha: Option<f64> = self.get("operator.alpha")?;
        let omega: Option<f64> = self.get("operator.omega")?;
        let kind = match self.get_str("operator.kind") {
            Some(k) => k.to_string(),
            None => match (alpha, omega) {
                (Some(_), _) => "sm2".into(),
                (None, Some(_)) => "mellowmax".into(),
                (None, None) => "max".into(),
            },
        };
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| Error::Config(format!("missing required key {key}")))
        };
        let spec = match kind.as_str() {
            "max" => OperatorSpec::Max,
            "mean" => OperatorSpec::Mean,
            "boltzmann" => OperatorSpec::Boltzmann {
                omega: need(omega, "operator.omega")?,
            },
            "mellowmax" => OperatorSpec::Mellowmax {
                omega: need(omega, "operator.omega")?,
            },
            "sm2" => OperatorSpec::Sm2 {
                alpha: need(alpha, "operator.alpha")?,
                omega: need(omega, "operator.omega")?,
            },
            other => {
                return Err(self.err("operator.kind", format!("unknown operator `{other}`")));
            }
        };
        spec.validate().map_err(|e| match e {
            Error::Parameter { name, .. } => self.err(&format!("operator.{name}"), e.to_string()),
            other => other,
        })?;
        Ok(spec)
    }

    fn resolve_model(&self) -> Result<ModelParams> {
        let gamma = self.get_or("model.gamma", 0.9)?;
        if !(0.0..1.0).contains(&gamma) {
            return Err(self.err("model.gamma", "must lie in [0, 1)".into()));
        }
        let r_max = self.get_or("model.r_max", 1.0)?;
        if !(r_max > 0.0 && f64::is_finite(r_max)) {
            return Err(self.err("model.r_max", "must be finite and > 0".into()));
        }
        let n_actions = self.get_or("model.n_actions", 5usize)?;
        if n_actions == 0 {
            return Err(self.err("model.n_actions", "must be >= 1".into()));
        }
        let weights: Option<Vec<f64>> = self.get_list("model.weights")?;
        let explicit_agents: Option<usize> = self.get("model.n_agents")?;
        let n_agents = match (&weights, explicit_agents) {
            (Some(w), Some(k)) if w.len() != k => {
                return Err(self.err(
                    "model.n_agents",
                    format!("{k} agents but model.weights lists {}", w.len()),
                ))
            }
            (Some(w), _) => w.len(),
            (None, k) => k.unwrap_or(1),
        };
        if n_agents == 0 {
            return Err(self.err("model.n_agents", "must be >= 1".into()));
        }
        let epsilon = self.get_or("model.epsilon", 1.0)?;
        if !(epsilon > 0.0 && f64::is_finite(epsilon)) {
            return Err(self.err("model.epsilon", "must be finite and > 0".into()));
        }
        Ok(ModelParams {
            gamma,
            r_max,
            n_actions,
            n_agents,
            epsilon,
            weights,
        })
    }

    fn resolve_mdp(&self) -> Result<MdpSource> {
        if let Some(file) = self.get_str("mdp.file") {
            let path = PathBuf::from(file);
            if !path.is_file() {
                return Err(self.err("mdp.file", format!("file `{file}` does not exist")));
            }
            return Ok(MdpSource::File(path));
        }
        match self.get_str("mdp.generator").unwrap_or("random") {
            "random" => Ok(MdpSource::Random {
                n_states: self.get_or("mdp.n_states", 20)?,
                branching: self.get_or("mdp.branching", 3)?,
                seed: match self.get("mdp.seed")? {
                    Some(s) => s,
                    None => self.get_or("run.seed", DEFAULT_SEED)?,
                },
            }),
            "chain" => Ok(MdpSource::Chain {
                length: self.get_or("mdp.length", 10)?,
                slip: self.get_or("mdp.slip", 0.0)?,
            }),
            other => Err(self.err("mdp.generator", format!("unknown generator `{other}`"))),
        }
    }

    fn resolve_qlearn(&self, seed: u64) -> Result<QLearnParams> {
        let target = match self.get_str("qlearn.target") {
            None => None,
            Some("max") => Some(TargetKind::Max),
            Some("double") => Some(TargetKind::Double),
            Some("mellowmax") => Some(TargetKind::Mellowmax),
            Some("sm2") => Some(TargetKind::Sm2),
            Some(other) => {
                return Err(self.err("qlearn.target", format!("unknown target rule `{other}`")))
            }
        };
        let d = QLearningConfig::default();
        Ok(QLearnParams {
            target,
            config: QLearningConfig {
                steps: self.get_or("qlearn.steps", d.steps)?,
                lr: self.get_or("qlearn.lr", d.lr)?,
                epsilon: EpsilonSchedule {
                    start: self.get_or("qlearn.epsilon_start", d.epsilon.start)?,
                    end: self.get_or("qlearn.epsilon_end", d.epsilon.end)?,
                    decay_steps: self
                        .get_or("qlearn.epsilon_decay_steps", d.epsilon.decay_steps)?,
                },
                target_sync_period: self.get_or("qlearn.sync_period", d.target_sync_period)?,
                seed,
            },
        })
    }

    fn resolve_contract(&self, samples: u64) -> Result<ContractParams> {
        let q1: Option<Vec<f64>> = self.get_list("contract.inject_q1")?;
        let q2: Option<Vec<f64>> = self.get_list("contract.inject_q2")?;
        let injected = match (q1, q2) {
            (None, None) => None,
            (Some(a), Some(b)) if a.len() == b.len() => Some((a, b)),
            (Some(_), Some(_)) => {
                return Err(self.err("contract.inject_q2", "length differs from inject_q1".into()))
            }
            (Some(_), None) => {
                return Err(Error::Config(
                    "missing required key contract.inject_q2".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::Config(
                    "missing required key contract.inject_q1".into(),
                ))
            }
        };
        Ok(ContractParams {
            c: self.get("contract.c")?,
            trials: self.get_or("contract.trials", samples)?,
            injected,
        })
    }

    fn resolve_sweep(&self) -> Result<SweepGrid> {
        let target: Command = match self.get_str("sweep.target") {
            None => Command::Overest,
            Some(t) => t.parse().map_err(|e: String| self.err("sweep.target", e))?,
        };
        if target == Command::Sweep {
            return Err(self.err("sweep.target", "a sweep cannot target itself".into()));
        }
        let grid = SweepGrid {
            target,
            alpha: self.get_list("sweep.alpha")?,
            omega: self.get_list("sweep.omega")?,
            n_actions: self.get_list("sweep.n_actions")?,
            n_agents: self.get_list("sweep.n_agents")?,
        };
        if grid.alpha.is_none()
            && grid.omega.is_none()
            && grid.n_actions.is_none()
            && grid.n_agents.is_none()
        {
            return Err(Error::Config(
                "sweep needs at least one grid (sweep.alpha, sweep.omega, sweep.n_actions or sweep.n_agents)"
                    .into(),
            ));
        }
        Ok(grid)
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    RawConfig::parse(text)?.resolve()
}
