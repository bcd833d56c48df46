use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use smx::harness::{self, emit_svg, write_csv, write_csv_to, RawConfig};
use smx::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Plan,
    Qlearn,
    Overest,
    MarlOverest,
    Bounds,
    Contract,
    Sweep,
}

/// Soft Mellowmax operators: bounds, planning, Q-learning and overestimation experiments.
///
/// Results go to CSV (stdout unless --out is given). Flags override the
/// matching config-file keys. Exit status: 0 ok, 1 usage or config error,
/// 2 numerical failure, 3 a checked result failed.
#[derive(Debug, Parser)]
#[command(name = "smx", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Config file in `key = value` format with `[section]` headers.
    #[arg(long)]
    config: Option<PathBuf>,
    /// operator.alpha
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// operator.omega
    #[arg(long, allow_negative_numbers = true)]
    omega: Option<f64>,
    /// model.gamma
    #[arg(long)]
    gamma: Option<f64>,
    /// model.r_max
    #[arg(long)]
    rmax: Option<f64>,
    /// model.n_actions
    #[arg(long)]
    n_actions: Option<usize>,
    /// model.n_agents
    #[arg(long)]
    n_agents: Option<usize>,
    /// model.epsilon
    #[arg(long)]
    epsilon: Option<f64>,
    /// run.samples
    #[arg(long)]
    samples: Option<u64>,
    /// run.seed
    #[arg(long)]
    seed: Option<u64>,
    /// solver.tol
    #[arg(long)]
    tol: Option<f64>,
    /// mdp.file
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// run.out
    #[arg(long)]
    out: Option<PathBuf>,
    /// run.svg
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Any other config key, fully qualified: `--set qlearn.steps=50000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Cli {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut o = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        let s = |x: Option<f64>| x.map(|v| v.to_string());
        put("operator.alpha", s(self.alpha));
        put("operator.omega", s(self.omega));
        put("model.gamma", s(self.gamma));
        put("model.r_max", s(self.rmax));
        put("model.n_actions", self.n_actions.map(|v| v.to_string()));
        put("model.n_agents", self.n_agents.map(|v| v.to_string()));
        put("model.epsilon", s(self.epsilon));
        put("run.samples", self.samples.map(|v| v.to_string()));
        put("run.seed", self.seed.map(|v| v.to_string()));
        put("solver.tol", s(self.tol));
        put(
            "mdp.file",
            self.mdp.as_ref().map(|p| p.display().to_string()),
        );
        put(
            "run.out",
            self.out.as_ref().map(|p| p.display().to_string()),
        );
        put(
            "run.svg",
            self.svg.as_ref().map(|p| p.display().to_string()),
        );
        o
    }

    fn command_name(&self) -> &'static str {
        match self.command {
            Cmd::Plan => "plan",
            Cmd::Qlearn => "qlearn",
            Cmd::Overest => "overest",
            Cmd::MarlOverest => "marl-overest",
            Cmd::Bounds => "bounds",
            Cmd::Contract => "contract",
            Cmd::Sweep => "sweep",
        }
    }
}

fn load(cli: &Cli) -> Result<harness::ExperimentConfig, Error> {
    let mut raw = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    raw.set("run.command", cli.command_name())?;
    for (k, v) in cli.overrides() {
        raw.set(&k, v)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        raw.set(k.trim(), v.trim())?;
    }
    raw.resolve()
}

fn execute(cli: &Cli) -> Result<bool, Error> {
    let config = load(cli)?;
    let output = harness::run_experiment(&config)?;
    match &config.out {
        Some(path) => write_csv(&output.records, path)?,
        None => {
            let stdout = std::io::stdout().lock();
            write_csv_to(&output.records, stdout)
                .map_err(|e| Error::Numerical(format!("writing CSV to stdout: {e}")))?;
        }
    }
    if let Some(path) = &config.svg {
        let curves = output.curves.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "command {} produces no curves for --svg",
                config.command
            ))
        })?;
        emit_svg(&curves.series, &curves.x_label, &curves.y_label, path)?;
    }
    Ok(output.records.iter().all(|r| !r.failed()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            let _ = writeln!(std::io::stderr(), "smx: one or more checks failed");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "smx: {e}");
            if e.is_usage() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_NUMERICAL)
            }
        }
    }
}
