mod artifacts;
mod commands;
mod error;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{RenderArgs, Run};
use error::{CliError, CliResult};

/// Frontier exploration and semantic mapping in a simulated world.
#[derive(Parser)]
#[command(name = "semmap", version)]
struct Cli {
    /// Scenario file; required by every command except `render`.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Run directory holding every artifact.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore the world; writes map.pgm, map.yaml and trajectory.txt.
    Explore,
    /// Sample waypoints and build the greedy tour; writes tour.txt.
    Plan,
    /// Drive the tour and build the semantic map from scratch.
    Construct,
    /// Drive the tour through a changed world and update the semantic map.
    Update {
        /// Update phase defined in the world file.
        #[arg(long)]
        phase: String,
    },
    /// Score every semantic map in the run directory.
    Eval,
    /// Draw a semantic map as a PNG.
    Render {
        /// Map base path (without extension); defaults to <out>/semantic.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Tour file to overlay; defaults to <out>/tour.txt when present.
        #[arg(long)]
        tour: Option<PathBuf>,
        /// Skip the tour overlay.
        #[arg(long, conflicts_with = "tour")]
        no_tour: bool,
        /// Output file; defaults to the map base with a .png extension.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Pixels per grid cell.
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=32))]
        scale: u32,
    },
    /// Run the scenario's phase list and render the results.
    RunAll,
}

fn load_run(cli: &Cli) -> CliResult<Run> {
    let path = cli
        .scenario
        .as_deref()
        .ok_or_else(|| CliError::Usage("--scenario <file> is required for this command".into()))?;
    Run::load(path, cli.seed, &cli.out)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Render {
            map,
            tour,
            no_tour,
            output,
            scale,
        } => {
            let map = map.clone().unwrap_or_else(|| cli.out.join("semantic"));
            let default_tour = cli.out.join("tour.txt");
            let tour = match (tour, no_tour) {
                (_, true) => None,
                (Some(t), _) => Some(t.clone()),
                (None, false) => default_tour.exists().then_some(default_tour),
            };
            let output = output.clone().unwrap_or_else(|| map.with_extension("png"));
            commands::cmd_render(&RenderArgs {
                map: &map,
                tour: tour.as_deref(),
                output: &output,
                scale: *scale,
            })
        }
        command => {
            let run = load_run(cli)?;
            match command {
                Command::Explore => commands::cmd_explore(&run),
                Command::Plan => commands::cmd_plan(&run),
                Command::Construct => commands::cmd_construct(&run),
                Command::Update { phase } => commands::cmd_update(&run, phase),
                Command::Eval => commands::cmd_eval(&run),
                Command::RunAll => commands::cmd_run_all(&run),
                Command::Render { .. } => unreachable!("handled above"),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEMMAP_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
