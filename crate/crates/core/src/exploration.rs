//! Frontier exploration with a dynamic local/global search window.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path as FsPath;

use log::{debug, info};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, GridMeta, Point2, Pose2D};
use crate::navigation::{distance_field, escape_to_free, follow_path, plan_path, MotionParams};
use crate::occupancy::{inflate, CellState, MappingParams, OccupancyGrid, TrinaryGrid};
use crate::rng;
use crate::simworld::{simulate_lidar, LidarParams, WorldModel};

const NEIGHBORS_8: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// 8-connected component of frontier cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierCluster {
    /// Member cells in row-major order.
    pub cells: Vec<Cell>,
    pub centroid: Point2,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    pub local_radius: f64,
    pub local_count_threshold: usize,
    /// `None` covers the whole map.
    pub global_radius: Option<f64>,
    pub termination_frontier_threshold: usize,
    /// Simulated seconds.
    pub time_budget: f64,
    pub min_cluster_size: usize,
    pub record_period: f64,
    /// How far from a cluster centroid to look for a plannable goal cell.
    pub goal_search_radius: f64,
    /// Standard deviations of the pose estimate used for mapping.
    pub pose_noise_xy: f64,
    pub pose_noise_theta: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            local_radius: 5.0,
            local_count_threshold: 1,
            global_radius: None,
            termination_frontier_threshold: 0,
            time_budget: 3600.0,
            min_cluster_size: 3,
            record_period: 4.0,
            goal_search_radius: 1.5,
            pose_noise_xy: 0.0,
            pose_noise_theta: 0.0,
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<()> {
        let global = self.global_radius.unwrap_or(f64::INFINITY);
        let ok = self.local_radius >= 0.0
            && self.local_radius <= global
            && self.time_budget >= 0.0
            && self.time_budget.is_finite()
            && self.min_cluster_size >= 1
            && self.record_period > 0.0
            && self.goal_search_radius >= 0.0
            && self.pose_noise_xy >= 0.0
            && self.pose_noise_theta >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid exploration config {self:?}")))
        }
    }

    fn global_radius(&self) -> f64 {
        self.global_radius.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose2D,
}

/// Poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<TimedPose>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: Vec<TimedPose>) -> Result<Self> {
        let mut traj = Self::new();
        for s in samples {
            traj.push(s.t, s.pose)?;
        }
        Ok(traj)
    }

    pub fn push(&mut self, t: f64, pose: Pose2D) -> Result<()> {
        if !t.is_finite() || !pose.is_finite() {
            return Err(Error::InvalidParam(format!("non-finite trajectory sample at t={t}")));
        }
        if let Some(last) = self.samples.last() {
            if t <= last.t {
                return Err(Error::InvalidParam(format!(
                    "trajectory timestamps must increase: {t} after {}",
                    last.t
                )));
            }
        }
        self.samples.push(TimedPose { t, pose });
        Ok(())
    }

    pub fn samples(&self) -> &[TimedPose] {
        &self.samples
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose2D> + '_ {
        self.samples.iter().map(|s| &s.pose)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One `t x y theta` record per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let _ = writeln!(out, "{} {} {} {}", s.t, s.pose.x, s.pose.y, s.pose.theta);
        }
        out
    }

    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut traj = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = format!("line {}", lineno + 1);
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(name, &loc, format!("{e}")))?;
            let [t, x, y, theta] = fields[..] else {
                return Err(Error::parse(
                    name,
                    &loc,
                    format!("expected 4 fields, found {}", fields.len()),
                ));
            };
            traj.push(t, Pose2D { x, y, theta })
                .map_err(|e| Error::parse(name, &loc, e.to_string()))?;
        }
        Ok(traj)
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

fn is_frontier(t: &TrinaryGrid, cell: Cell) -> bool {
    t.get(cell) == CellState::Free
        && NEIGHBORS_8
            .iter()
            .any(|&(dc, dr)| t.get_signed(cell.col as i64 + dc, cell.row as i64 + dr) == Some(CellState::Unknown))
}

/// Clusters of Free cells bordering Unknown space, largest first.
pub fn detect_frontiers(t: &TrinaryGrid, min_cluster_size: usize) -> Vec<FrontierCluster> {
    let meta = *t.meta();
    let frontier: Vec<bool> = (0..meta.len()).map(|i| is_frontier(t, meta.cell_at(i))).collect();
    let mut seen = vec![false; meta.len()];
    let mut clusters = Vec::new();
    for start in 0..meta.len() {
        if !frontier[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut members = Vec::new();
        let mut queue = VecDeque::from([meta.cell_at(start)]);
        while let Some(cell) = queue.pop_front() {
            members.push(cell);
            for &(dc, dr) in &NEIGHBORS_8 {
                if let Some(n) = meta.checked_cell(cell.col as i64 + dc, cell.row as i64 + dr) {
                    let ni = meta.index(n);
                    if frontier[ni] && !seen[ni] {
                        seen[ni] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        if members.len() >= min_cluster_size.max(1) {
            members.sort();
            clusters.push(make_cluster(&meta, members));
        }
    }
    clusters.sort_by(|a, b| {
        let (ac, ar) = meta.continuous_coords(a.centroid);
        let (bc, br) = meta.continuous_coords(b.centroid);
        b.size.cmp(&a.size).then(ar.total_cmp(&br)).then(ac.total_cmp(&bc))
    });
    clusters
}

fn make_cluster(meta: &GridMeta, cells: Vec<Cell>) -> FrontierCluster {
    let n = cells.len() as f64;
    let (sx, sy) = cells.iter().fold((0.0, 0.0), |(sx, sy), &c| {
        let p = meta.grid_to_world(c);
        (sx + p.x, sy + p.y)
    });
    FrontierCluster {
        centroid: Point2::new(sx / n, sy / n),
        size: cells.len(),
        cells,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierTarget {
    /// Index into the cluster list passed to [`select_frontier`].
    pub cluster: usize,
    /// Center of the Free goal cell.
    pub goal: Point2,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Selection {
    /// `None` means no candidate was reachable.
    pub target: Option<FrontierTarget>,
    /// Candidate clusters that had no reachable goal cell.
    pub unreachable: Vec<usize>,
}

/// Goal for a cluster: the reachable Free cell nearest its centroid within
/// `radius`, else the nearest reachable member cell. Cells whose path cost is
/// below `min_cost` are skipped, since the robot already scans from there.
/// Ties go to the smaller (row, col).
fn goal_cell(
    inflated: &TrinaryGrid,
    field: &[f64],
    cluster: &FrontierCluster,
    radius: f64,
    min_cost: f64,
) -> Option<Cell> {
    let meta = inflated.meta();
    let centroid = cluster.centroid;
    let usable = |cell: Cell| {
        let cost = field[meta.index(cell)];
        inflated.is_free(cell) && cost.is_finite() && cost >= min_cost
    };
    let nearest = |cells: &mut dyn Iterator<Item = Cell>| {
        cells
            .filter(|&c| usable(c))
            .map(|c| (meta.grid_to_world(c).distance(&centroid), c))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, c)| c)
    };
    let (col, row) = meta.signed_cell(centroid);
    let reach = (radius / meta.resolution).ceil() as i64 + 1;
    let mut window = (row - reach..=row + reach)
        .flat_map(|r| (col - reach..=col + reach).map(move |c| (c, r)))
        .filter_map(|(c, r)| meta.checked_cell(c, r))
        .filter(|&c| meta.grid_to_world(c).distance(&centroid) <= radius + meta.resolution);
    nearest(&mut window).or_else(|| nearest(&mut cluster.cells.iter().copied()))
}

/// Picks the cheapest reachable frontier inside the dynamic search window.
pub fn select_frontier(
    clusters: &[FrontierCluster],
    pose: &Pose2D,
    inflated: &TrinaryGrid,
    cfg: &ExplorationConfig,
) -> Selection {
    let meta = *inflated.meta();
    let here = pose.position();
    let within = |radius: f64| -> Vec<usize> {
        (0..clusters.len())
            .filter(|&i| clusters[i].centroid.distance(&here) <= radius)
            .collect()
    };
    let mut candidates = within(cfg.local_radius);
    if candidates.len() < cfg.local_count_threshold {
        candidates = within(cfg.global_radius());
    }
    let mut selection = Selection::default();
    if candidates.is_empty() {
        return selection;
    }
    let field = match meta.world_to_grid(here) {
        Ok(cell) => distance_field(inflated, cell),
        Err(_) => vec![f64::INFINITY; meta.len()],
    };
    for i in candidates {
        let Some(goal) = goal_cell(
            inflated,
            &field,
            &clusters[i],
            cfg.goal_search_radius,
            2.0 * meta.resolution,
        ) else {
            selection.unreachable.push(i);
            continue;
        };
        let cost = field[meta.index(goal)];
        let better = match &selection.target {
            None => true,
            Some(t) => cost < t.cost || (cost == t.cost && clusters[i].size > clusters[t.cluster].size),
        };
        if better {
            selection.target = Some(FrontierTarget {
                cluster: i,
                goal: meta.grid_to_world(goal),
                cost,
            });
        }
    }
    selection
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FrontiersExhausted,
    TimeBudget,
}

/// Everything `explore` needs besides the world.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploreParams {
    pub exploration: ExplorationConfig,
    pub mapping: MappingParams,
    pub lidar: LidarParams,
    pub motion: MotionParams,
}

impl ExploreParams {
    pub fn validate(&self) -> Result<()> {
        self.exploration.validate()?;
        self.mapping.validate()?;
        self.lidar.validate()?;
        self.motion.validate()
    }
}

#[derive(Debug, Clone)]
pub struct ExploreOutcome {
    pub grid: OccupancyGrid,
    pub trajectory: Trajectory,
    pub termination: Termination,
    /// Simulated seconds at termination.
    pub sim_time: f64,
    pub steps: usize,
    /// Non-blacklisted cluster count at each replanning instant.
    pub frontier_history: Vec<usize>,
    /// Goal points in selection order.
    pub targets: Vec<Point2>,
}

/// Cells with more than half their members blacklisted are skipped.
fn is_blacklisted(cluster: &FrontierCluster, blacklist: &HashSet<Cell>) -> bool {
    let hits = cluster.cells.iter().filter(|c| blacklist.contains(c)).count();
    2 * hits > cluster.size
}

struct PoseNoise {
    xy: Option<Normal<f64>>,
    theta: Option<Normal<f64>>,
}

impl PoseNoise {
    fn new(cfg: &ExplorationConfig) -> Result<Self> {
        let make = |sigma: f64| -> Result<Option<Normal<f64>>> {
            if sigma > 0.0 {
                Normal::new(0.0, sigma)
                    .map(Some)
                    .map_err(|e| Error::InvalidParam(e.to_string()))
            } else {
                Ok(None)
            }
        };
        Ok(Self {
            xy: make(cfg.pose_noise_xy)?,
            theta: make(cfg.pose_noise_theta)?,
        })
    }

    fn estimate<R: Rng + ?Sized>(&self, pose: &Pose2D, rng: &mut R) -> Pose2D {
        let mut est = *pose;
        if let Some(n) = &self.xy {
            est.x += n.sample(rng);
            est.y += n.sample(rng);
        }
        if let Some(n) = &self.theta {
            est = Pose2D::new(est.x, est.y, est.theta + n.sample(rng));
        }
        est
    }
}

/// Drives the simulated robot from `start` until frontiers run out or the
/// time budget is spent. Streams are derived from `seed`, so equal inputs give
/// identical outcomes.
pub fn explore(world: &WorldModel, start: Pose2D, params: &ExploreParams, seed: u64) -> Result<ExploreOutcome> {
    params.validate()?;
    let cfg = &params.exploration;
    let motion = &params.motion;
    let meta = *world.meta();
    let start_cell = meta.world_to_grid(start.position())?;
    if world.ground_truth().get(start_cell) != CellState::Free {
        return Err(Error::InvalidParam(format!(
            "start pose {start:?} is not in free space"
        )));
    }

    let mut lidar_rng = rng::stream(seed, "explore/lidar");
    let mut pose_rng = rng::stream(seed, "explore/pose");
    let noise = PoseNoise::new(cfg)?;

    let mut grid = OccupancyGrid::new(meta);
    let mut pose = start;
    let scan = simulate_lidar(world, &pose, &params.lidar, &mut lidar_rng)?;
    let estimate = noise.estimate(&pose, &mut pose_rng);
    grid.integrate_scan(&estimate, &scan, &params.mapping)?;

    let mut trajectory = Trajectory::new();
    trajectory.push(0.0, estimate)?;
    let mut last_record = 0.0;

    let mut outcome = ExploreOutcome {
        grid: OccupancyGrid::new(meta),
        trajectory: Trajectory::new(),
        termination: Termination::TimeBudget,
        sim_time: 0.0,
        steps: 0,
        frontier_history: Vec::new(),
        targets: Vec::new(),
    };
    if cfg.time_budget <= 0.0 {
        outcome.grid = grid;
        outcome.trajectory = trajectory;
        return Ok(outcome);
    }

    let mut blacklist: HashSet<Cell> = HashSet::new();
    let mut path: Vec<Point2> = Vec::new();
    let mut since_replan = motion.replan_period;
    let mut escape_failures = 0;
    let mut reached: Vec<Point2> = Vec::new();
    let mut committed: Option<Point2> = None;
    let mut step = 0usize;

    let termination = loop {
        if since_replan >= motion.replan_period || path.is_empty() {
            since_replan = 0;
            let trinary = grid.to_trinary(&params.mapping);
            let inflated = inflate(&trinary, motion.inflation_radius);
            let mut clusters: Vec<FrontierCluster> = detect_frontiers(&trinary, cfg.min_cluster_size)
                .into_iter()
                .filter(|c| !is_blacklisted(c, &blacklist))
                .collect();

            // Plan from the nearest Free cell when inflation has grown over the robot.
            let mut plan_from = pose;
            let mut prefix = Vec::new();
            if !inflated.state_at(pose.position()).is_some_and(|s| s == CellState::Free) {
                match escape_to_free(&inflated, pose.position(), 20) {
                    Some(cell) => {
                        let p = meta.grid_to_world(cell);
                        plan_from = Pose2D::new(p.x, p.y, pose.theta);
                        prefix.push(p);
                        escape_failures = 0;
                    }
                    None => {
                        escape_failures += 1;
                        if escape_failures >= 2 {
                            return Err(Error::Stuck(format!("no free cell near {pose:?}")));
                        }
                    }
                }
            }

            path.clear();
            loop {
                if clusters.len() <= cfg.termination_frontier_threshold {
                    break;
                }
                let selection = select_frontier(&clusters, &plan_from, &inflated, cfg);
                let mut drop: Vec<usize> = selection.unreachable.clone();
                if let Some(mut target) = selection.target {
                    // Keep heading for the current goal while it serves the same cluster.
                    if let Some(goal) = committed {
                        let centroid = clusters[target.cluster].centroid;
                        if goal.distance(&centroid) <= cfg.goal_search_radius + meta.resolution
                            && inflated.state_at(goal) == Some(CellState::Free)
                        {
                            target.goal = goal;
                        }
                    }
                    // a goal reached before did not resolve its frontier
                    let revisit = reached.iter().any(|g| g.distance(&target.goal) < meta.resolution);
                    let planned = if revisit {
                        None
                    } else {
                        plan_path(&inflated, &plan_from, target.goal).ok()
                    };
                    match planned {
                        Some(p) => {
                            debug!(
                                "t={:.1} target {:?} cost {:.2}",
                                step as f64 * motion.dt,
                                target.goal,
                                target.cost
                            );
                            outcome.targets.push(target.goal);
                            committed = Some(target.goal);
                            path = prefix.iter().copied().chain(p.points).collect();
                            break;
                        }
                        None => {
                            committed = None;
                            drop.push(target.cluster);
                        }
                    }
                } else if drop.is_empty() {
                    // Every candidate sits outside the search window.
                    break;
                }
                drop.sort_unstable();
                drop.dedup();
                for &i in drop.iter().rev() {
                    blacklist.extend(clusters[i].cells.iter().copied());
                    clusters.remove(i);
                }
            }
            outcome.frontier_history.push(clusters.len());
            if clusters.len() <= cfg.termination_frontier_threshold {
                break Termination::FrontiersExhausted;
            }
        }

        let next = follow_path(&pose, &path, motion);
        path.drain(..next.consumed);
        if next.consumed > 0 && path.is_empty() {
            reached.push(next.pose.position());
            committed = None;
        }
        pose = next.pose;
        step += 1;
        since_replan += 1;
        let t = step as f64 * motion.dt;

        let scan = simulate_lidar(world, &pose, &params.lidar, &mut lidar_rng)?;
        let estimate = noise.estimate(&pose, &mut pose_rng);
        grid.integrate_scan(&estimate, &scan, &params.mapping)?;
        if t - last_record >= cfg.record_period - 1e-9 {
            trajectory.push(t, estimate)?;
            last_record = t;
        }
        if t > cfg.time_budget {
            break Termination::TimeBudget;
        }
    };

    outcome.sim_time = step as f64 * motion.dt;
    outcome.steps = step;
    outcome.termination = termination;
    info!(
        "exploration ended ({termination:?}) after {:.1} s, {} recorded poses",
        outcome.sim_time,
        trajectory.len()
    );
    outcome.grid = grid;
    outcome.trajectory = trajectory;
    Ok(outcome)
}

/// Ground-truth free cells 8-connected to `start` without corner cutting.
pub fn reachable_free_cells(world: &WorldModel, start: Point2) -> Vec<Cell> {
    let truth = world.ground_truth();
    let meta = *truth.meta();
    let Ok(start) = meta.world_to_grid(start) else {
        return Vec::new();
    };
    if !truth.is_free(start) {
        return Vec::new();
    }
    let mut seen = vec![false; meta.len()];
    seen[meta.index(start)] = true;
    let mut queue = VecDeque::from([start]);
    let mut out = Vec::new();
    while let Some(cell) = queue.pop_front() {
        out.push(cell);
        for (n, _) in crate::navigation::free_neighbors(truth, cell) {
            let ni = meta.index(n);
            if !seen[ni] {
                seen[ni] = true;
                queue.push_back(n);
            }
        }
    }
    out.sort();
    out
}

/// Fraction of reachable ground-truth free cells classified Free in `mapped`.
pub fn coverage(mapped: &TrinaryGrid, world: &WorldModel, start: Point2) -> f64 {
    let reachable = reachable_free_cells(world, start);
    if reachable.is_empty() {
        return 0.0;
    }
    let hit = reachable.iter().filter(|&&c| mapped.is_free(c)).count();
    hit as f64 / reachable.len() as f64
}
