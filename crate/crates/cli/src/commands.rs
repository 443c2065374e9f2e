//! One function per subcommand. Each reads its inputs from the run directory
//! and writes its outputs back there.

use std::path::Path;

use log::info;
use serde::Serialize;

use semmap::evaluation::{evaluate, EvalReport};
use semmap::exploration::{coverage, explore, Trajectory};
use semmap::occupancy::{load_map, save_map};
use semmap::scenario::{Scenario, BUILTIN_PHASES};
use semmap::semantic::{construct, update_pass, write_change_log, ChangeKind, MapChange, SemanticMap};
use semmap::traversal::{build_graph, greedy_tsp, sample_waypoints, Tour};

use crate::artifacts::{require, write, Layout};
use crate::error::{CliError, CliResult};
use crate::render::{encode_png, render};

/// A loaded scenario plus the seed in effect for this invocation.
pub struct Run {
    pub scenario: Scenario,
    pub seed: u64,
    pub layout: Layout,
}

impl Run {
    pub fn load(path: &Path, seed: Option<u64>, out: &Path) -> CliResult<Self> {
        let scenario = Scenario::load(path).map_err(CliError::Config)?;
        let seed = seed.unwrap_or(scenario.config.seed);
        let layout = Layout::new(out);
        layout.create()?;
        Ok(Self { scenario, seed, layout })
    }
}

#[derive(Serialize)]
struct ExploreSummary {
    seed: u64,
    termination: String,
    coverage: f64,
    sim_time: f64,
    steps: usize,
    frontiers_at_termination: usize,
    recorded_poses: usize,
}

pub fn cmd_explore(run: &Run) -> CliResult<()> {
    let s = &run.scenario;
    let params = &s.config.exploration;
    let out = explore(&s.world, s.world_spec.start, params, run.seed)?;
    let trinary = out.grid.to_trinary(&params.mapping);
    save_map(&trinary, &run.layout.map_pgm(), &run.layout.map_yaml())?;
    out.trajectory.save(&run.layout.trajectory())?;
    let summary = ExploreSummary {
        seed: run.seed,
        termination: format!("{:?}", out.termination),
        coverage: coverage(&trinary, &s.world, s.world_spec.start.position()),
        sim_time: out.sim_time,
        steps: out.steps,
        frontiers_at_termination: out.frontier_history.last().copied().unwrap_or(0),
        recorded_poses: out.trajectory.len(),
    };
    write(&run.layout.explore_summary(), to_json(&summary))?;
    println!(
        "explore: coverage {:.1}%, sim time {:.1} s, {} frontiers at termination ({}), {} poses recorded",
        summary.coverage * 100.0,
        summary.sim_time,
        summary.frontiers_at_termination,
        summary.termination,
        summary.recorded_poses
    );
    Ok(())
}

pub fn cmd_plan(run: &Run) -> CliResult<()> {
    let path = run.layout.trajectory();
    require(&path, "explore")?;
    let trajectory = Trajectory::load(&path)?;
    let waypoints = sample_waypoints(&trajectory, run.scenario.config.traversal.min_separation)?;
    let tour = greedy_tsp(&build_graph(&waypoints))?;
    tour.save(&run.layout.tour())?;
    println!(
        "plan: {} waypoints, tour length {:.1} m",
        waypoints.len(),
        tour.total_length
    );
    Ok(())
}

fn load_tour(layout: &Layout) -> CliResult<Tour> {
    let path = layout.tour();
    require(&path, "plan")?;
    Ok(Tour::load(&path)?)
}

fn save_stage(layout: &Layout, stage: &str, map: &SemanticMap, changes: &[MapChange]) -> CliResult<()> {
    map.save(&layout.semantic_base(stage))?;
    write(&layout.change_log(stage), write_change_log(changes))
}

fn tally(changes: &[MapChange], kind: ChangeKind) -> usize {
    changes.iter().filter(|c| c.kind == kind).count()
}

fn format_counts(map: &SemanticMap) -> String {
    map.topo
        .counts()
        .iter()
        .map(|(c, n)| format!("{c} {n}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn cmd_construct(run: &Run) -> CliResult<()> {
    let yaml = run.layout.map_yaml();
    require(&yaml, "explore")?;
    let occupancy = load_map(&yaml)?;
    let tour = load_tour(&run.layout)?;
    let s = &run.scenario;
    let out = construct(&s.world, &occupancy, &tour, &s.config.semantic, run.seed)?;
    save_stage(&run.layout, "construct", &out.map, &out.changes)?;
    println!(
        "construct: {} nodes ({}), {} tour legs skipped",
        out.map.topo.len(),
        format_counts(&out.map),
        out.skipped_legs
    );
    Ok(())
}

pub fn cmd_update(run: &Run, phase: &str) -> CliResult<()> {
    let s = &run.scenario;
    if BUILTIN_PHASES.contains(&phase) {
        return Err(CliError::Config(semmap::Error::UnknownPhase {
            name: phase.to_string(),
            defined: s.update_phase_names().join(", "),
        }));
    }
    let world = s.world_for_phase(phase)?;
    let base = run.layout.semantic_base("construct");
    require(&base.with_extension("json"), "construct")?;
    let map = SemanticMap::load(&base)?;
    let tour = load_tour(&run.layout)?;
    let out = update_pass(&world, map, &tour, &s.config.semantic, run.seed, phase)?;
    save_stage(&run.layout, phase, &out.map, &out.changes)?;
    println!(
        "update {phase}: {} removed, {} added, {} nodes ({})",
        tally(&out.changes, ChangeKind::Removed),
        tally(&out.changes, ChangeKind::Added),
        out.map.topo.len(),
        format_counts(&out.map)
    );
    Ok(())
}

#[derive(Serialize)]
struct StageReport {
    stage: String,
    #[serde(flatten)]
    report: EvalReport,
}

/// Evaluates the constructed map and every update stage that has been run,
/// each against its own version of the world.
pub fn cmd_eval(run: &Run) -> CliResult<()> {
    let s = &run.scenario;
    let construct_json = run.layout.semantic_base("construct").with_extension("json");
    require(&construct_json, "construct")?;
    let radii = s.config.evaluation.match_radius.as_ref();
    let mut stages = Vec::new();
    for stage in std::iter::once("construct".to_string()).chain(s.update_phase_names()) {
        let base = run.layout.semantic_base(&stage);
        if !base.with_extension("json").exists() {
            continue;
        }
        let world = if stage == "construct" {
            s.world.clone()
        } else {
            s.world_for_phase(&stage)?
        };
        let map = SemanticMap::load(&base)?;
        let report = evaluate(&map, &world, radii)?;
        info!("{stage}: mAP {:.3}", report.mean_ap);
        stages.push(StageReport { stage, report });
    }
    write(&run.layout.report_json(), to_json(&stages))?;
    let mut text = String::new();
    for st in &stages {
        text.push_str(&format!("== {} ==\n{}\n", st.stage, st.report.to_table()));
    }
    write(&run.layout.report_text(), &text)?;
    print!("{text}");
    Ok(())
}

pub struct RenderArgs<'a> {
    pub map: &'a Path,
    pub tour: Option<&'a Path>,
    pub output: &'a Path,
    pub scale: u32,
}

/// Renders `<map>.json` with its grid, or just the grid when only
/// `<map>.yaml` exists.
pub fn cmd_render(args: &RenderArgs) -> CliResult<()> {
    let json = args.map.with_extension("json");
    let map = if json.exists() {
        SemanticMap::load(args.map)?
    } else {
        let yaml = args.map.with_extension("yaml");
        require(&yaml, "explore")?;
        SemanticMap::new(load_map(&yaml)?, Default::default())
    };
    let tour = match args.tour {
        Some(path) => {
            require(path, "plan")?;
            Some(Tour::load(path)?)
        }
        None => None,
    };
    let img = render(&map, tour.as_ref(), args.scale);
    let bytes = encode_png(&img).map_err(|e| CliError::Output {
        context: format!("encoding {}", args.output.display()),
        source: Box::new(e),
    })?;
    write(args.output, bytes)?;
    println!(
        "render: wrote {} ({}x{})",
        args.output.display(),
        img.width(),
        img.height()
    );
    Ok(())
}

/// Runs the scenario's phase list, then renders every semantic map produced.
pub fn cmd_run_all(run: &Run) -> CliResult<()> {
    for phase in run.scenario.phases() {
        match phase.as_str() {
            "explore" => cmd_explore(run)?,
            "plan" => cmd_plan(run)?,
            "construct" => cmd_construct(run)?,
            "eval" => cmd_eval(run)?,
            update => cmd_update(run, update)?,
        }
    }
    let tour = run.layout.tour();
    let tour = tour.exists().then_some(tour.as_path());
    for stage in std::iter::once("construct".to_string()).chain(run.scenario.update_phase_names()) {
        let base = run.layout.semantic_base(&stage);
        if base.with_extension("json").exists() {
            cmd_render(&RenderArgs {
                map: &base,
                tour,
                output: &run.layout.render(&stage),
                scale: 4,
            })?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}
