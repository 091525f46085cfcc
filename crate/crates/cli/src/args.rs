use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rgbt", version, about = "RGB + thermal fusion tracking toolkit")]
pub struct Cli {
    /// Config file of `key=value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Seed for the network weights and the synthetic generator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Run the tracker in single precision (double by default).
    #[arg(long, global = true)]
    pub single: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track every sequence in one pass and write per-frame results.
    Track { dataset: PathBuf },
    /// Run the configured benchmark protocol (`eval.protocol`).
    Eval { dataset: PathBuf },
    /// Sweep one configuration axis and tabulate the metrics.
    Ablate {
        dataset: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated grid values; a default grid per axis otherwise.
        #[arg(long)]
        values: Option<String>,
    },
    /// Write synthetic paired sequences in the on-disk sequence layout.
    Synth {
        /// Frames per sequence.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Score advantage of the RGB target.
        #[arg(long, default_value_t = 0.0)]
        bias: f64,
        /// Number of sequences; more than one writes the biased challenge suite.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Fuse one RGB/thermal image pair at pixel level.
    FuseImage {
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        tir: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        level: Option<u8>,
        /// `fused_fused` or `fused_tir`.
        #[arg(long)]
        pairing: Option<String>,
    },
    /// Turn a results directory into plot-ready CSV and SVG.
    Plotdata { results: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    #[value(name = "s")]
    S,
    #[value(name = "fusion.mode")]
    FusionMode,
    #[value(name = "feat.grid")]
    FeatGrid,
    #[value(name = "pixel.level")]
    PixelLevel,
}
