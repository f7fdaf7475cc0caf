mod commands;
mod output;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "sepnet",
    version,
    about = "Separated nets, moduli of continuity and distortion experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Global {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the class-M properties of a modulus on a grid.
    ModuliCheck(commands::ModuliCheckArgs),
    /// Level parameters and the iteration count r.
    Params(commands::ParamsArgs),
    /// Nested tiled families and their overlap report.
    Families(commands::FamiliesArgs),
    /// Chessboard perturbation over nested families.
    Chessboard(commands::FamiliesArgs),
    /// Separated nets.
    Net {
        #[command(subcommand)]
        op: NetOp,
    },
    /// Distortion of pairings between point sets.
    Distort {
        #[command(subcommand)]
        op: DistortOp,
    },
    /// Best Lipschitz constant onto the grid {1..n}^d.
    FeigeLs(commands::FeigeLsArgs),
    /// Windowed maximum of L_S over n^d-subsets.
    FeigeCn(commands::FeigeCnArgs),
    /// Translation/stretch dichotomy on a slab.
    Dichotomy(commands::DichotomyArgs),
    /// Recentering iteration over a schedule.
    B1Trace(commands::B1Args),
    /// Volume difference of adjacent slab cubes against its bound.
    VolumeCheck(commands::VolumeArgs),
    /// Symmetric difference of two images against the boundary collar.
    Symdiff(commands::SymdiffArgs),
    /// Measure of boundary neighbourhoods of an image of the unit square.
    BoundaryMeasure(commands::BoundaryArgs),
}

#[derive(Subcommand, Debug)]
pub enum NetOp {
    Build(commands::NetBuildArgs),
    Audit(commands::NetAuditArgs),
    Discrepancy(commands::NetDiscrepancyArgs),
}

#[derive(Subcommand, Debug)]
pub enum DistortOp {
    Exact(commands::DistortArgs),
    Heuristic(commands::DistortArgs),
    Profile(commands::ProfileArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sepnet: {e}");
            ExitCode::from(e.code())
        }
    }
}
