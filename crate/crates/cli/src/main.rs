//! `pano`: run the panoramic inverse-rendering pipeline stage by stage.
//!
//! Every numeric option can also be set through a `PANO_*` environment
//! variable (listed in `--help`); flags take precedence.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "pano",
    version,
    about = "Inverse rendering from a top-bottom 360° stereo pair"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PANO_THREADS")]
    threads: Option<usize>,
    /// Seed for stochastic choices (the synthetic texture).
    #[arg(long, global = true, env = "PANO_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a box room stereo pair with full ground truth.
    Synth(commands::SynthArgs),
    /// Match the stereo pair and triangulate depth.
    Depth(commands::DepthArgs),
    /// Lift the reference image to a point-light field.
    Lightfield(commands::LightfieldArgs),
    /// Reconstruct the illumination map at a point, optionally with a mirror sphere.
    Probe(commands::ProbeArgs),
    /// Estimate normals, shading and initial reflectance.
    Decompose(commands::DecomposeArgs),
    /// Jointly refine reflectance and shading.
    Refine(commands::RefineArgs),
    /// Compare a prediction with ground truth; prints CSV.
    Metrics(commands::MetricsArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match &cli.command {
        Command::Synth(a) => commands::synth(a, cli.seed),
        Command::Depth(a) => commands::depth(a),
        Command::Lightfield(a) => commands::lightfield(a),
        Command::Probe(a) => commands::probe(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Refine(a) => commands::refine(a),
        Command::Metrics(a) => commands::metrics(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
