//! Command implementations behind the `rgbt` binary.

pub mod ablate;
pub mod args;
pub mod harness;
pub mod plot;
pub mod projection;
pub mod synth;

use std::path::Path;

use thiserror::Error;

use rgbt::config::Config;

pub use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<rgbt::Error> for CliError {
    fn from(e: rgbt::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else if e.is_data() {
            CliError::Data(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Config file, then `--seed`, then each `--set` in order.
pub fn build_config(cli: &Cli) -> CliResult<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("backbone.seed", &seed.to_string())?;
    }
    for pair in &cli.set {
        cfg.apply_override(pair)?;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = build_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let out = cli.out.as_deref().unwrap_or(Path::new("out"));
    pool.install(|| match &cli.command {
        Command::Track { dataset } => harness::cmd_track(&cfg, dataset, out, cli.single),
        Command::Eval { dataset } => harness::cmd_eval(&cfg, dataset, out, cli.single),
        Command::Ablate { dataset, axis, values } => {
            ablate::cmd_ablate(&cfg, dataset, out, *axis, values.as_deref(), cli.single)
        }
        Command::Synth { n, bias, count } => synth::cmd_synth(&cfg, cli.seed.unwrap_or(0), *n, *bias, *count, out),
        Command::FuseImage {
            rgb,
            tir,
            level,
            pairing,
        } => projection::cmd_fuse_image(&cfg, rgb, tir, *level, pairing, out),
        Command::Plotdata { results } => plot::cmd_plotdata(results, out),
    })
}
