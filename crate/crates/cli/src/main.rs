use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use commnet_cli::{run, RawConfig};

/// Train, evaluate and analyze communicating multi-agent controllers.
#[derive(Debug, Parser)]
#[command(name = "commnet", version)]
struct Args {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// lever, traffic-easy, traffic-medium, traffic-hard or combat.
    #[arg(long)]
    task: Option<String>,
    /// independent, fully-connected, discrete or commnet.
    #[arg(long)]
    controller: Option<String>,
    /// mlp, rnn or lstm.
    #[arg(long)]
    cell: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// train, eval, analyze or selftest.
    #[arg(long)]
    mode: Option<String>,
    /// Parameters to load for eval and analyze.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Threads for rollouts; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Evaluation episodes.
    #[arg(long)]
    trials: Option<usize>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Args {
    fn raw_config(&self) -> commnet_cli::Result<RawConfig> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::read(path)?,
            None => RawConfig::default(),
        };
        let mut flags = RawConfig::default();
        for pair in &self.set {
            let (k, v) = pair.split_once('=').ok_or_else(|| {
                commnet_cli::CliError::Invalid(format!("--set expects key=value, got `{pair}`"))
            })?;
            flags.set(k.trim(), v.trim());
        }
        let mut put = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                flags.set(key, v);
            }
        };
        put("task", self.task.clone());
        put("model.controller", self.controller.clone());
        put("model.cell", self.cell.clone());
        put("seed", self.seed.map(|v| v.to_string()));
        put("train.epochs", self.epochs.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("mode", self.mode.clone());
        put(
            "checkpoint",
            self.checkpoint.as_ref().map(|p| p.display().to_string()),
        );
        put("train.workers", self.workers.map(|v| v.to_string()));
        put("eval.trials", self.trials.map(|v| v.to_string()));
        raw.merge(flags);
        Ok(raw)
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = args
        .raw_config()
        .and_then(|raw| raw.resolve())
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
