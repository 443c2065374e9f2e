//! A* planning on the inflated grid and a kinematic point-robot follower.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, GridMeta, Point2, Pose2D};
use crate::occupancy::{CellState, TrinaryGrid};

/// 8-connected moves as `(dcol, drow)`.
const MOVES: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    pub max_speed: f64,
    pub dt: f64,
    /// Control steps between replans.
    pub replan_period: usize,
    /// Obstacle inflation applied to maps before planning, meters.
    pub inflation_radius: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            max_speed: 0.6,
            dt: 0.2,
            replan_period: 10,
            inflation_radius: 0.7,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_speed > 0.0 && self.dt > 0.0 && self.replan_period >= 1 && self.inflation_radius >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid motion params {self:?}")))
        }
    }
}

/// Cell-center waypoints from start to goal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Path {
    pub cells: Vec<Cell>,
    pub points: Vec<Point2>,
    /// Straight and diagonal step counts; the cost is
    /// `resolution * (straight + diagonal·√2)`.
    pub straight_steps: usize,
    pub diagonal_steps: usize,
    resolution: f64,
}

impl Path {
    fn from_cells(meta: &GridMeta, cells: Vec<Cell>) -> Self {
        let mut straight_steps = 0;
        let mut diagonal_steps = 0;
        for w in cells.windows(2) {
            if w[0].row != w[1].row && w[0].col != w[1].col {
                diagonal_steps += 1;
            } else {
                straight_steps += 1;
            }
        }
        Self {
            points: cells.iter().map(|&c| meta.grid_to_world(c)).collect(),
            cells,
            straight_steps,
            diagonal_steps,
            resolution: meta.resolution,
        }
    }

    pub fn cost(&self) -> f64 {
        self.resolution * (self.straight_steps as f64 + self.diagonal_steps as f64 * SQRT_2)
    }

    pub fn goal(&self) -> Option<Point2> {
        self.points.last().copied()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct OpenEntry {
    f: f64,
    g: f64,
    cell: Cell,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    // min-heap on (f, row, col)
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.col.abs_diff(b.col) as f64;
    let dy = a.row.abs_diff(b.row) as f64;
    dx.max(dy) + (SQRT_2 - 1.0) * dx.min(dy)
}

/// Neighbors of `cell` reachable in one move. Diagonals may not cut the
/// corner of a non-free cell.
pub fn free_neighbors(grid: &TrinaryGrid, cell: Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
    let meta = *grid.meta();
    MOVES.iter().filter_map(move |&(dc, dr)| {
        let (c, r) = (cell.col as i64, cell.row as i64);
        let n = meta.checked_cell(c + dc, r + dr)?;
        if !grid.is_free(n) {
            return None;
        }
        let diagonal = dc != 0 && dr != 0;
        if diagonal {
            let side_a = grid.get_signed(c + dc, r)?;
            let side_b = grid.get_signed(c, r + dr)?;
            if side_a != CellState::Free || side_b != CellState::Free {
                return None;
            }
        }
        Some((n, diagonal))
    })
}

/// Cost-optimal 8-connected path between the cells containing `start` and
/// `goal`, over Free cells only.
pub fn plan_path(inflated: &TrinaryGrid, start: &Pose2D, goal: Point2) -> Result<Path> {
    let meta = *inflated.meta();
    let start_cell = meta.world_to_grid(start.position())?;
    let goal_cell = meta
        .world_to_grid(goal)
        .map_err(|_| Error::NoPath("goal outside the map".into()))?;
    if !inflated.is_free(start_cell) {
        return Err(Error::NoPath(format!("start cell {start_cell:?} is not free")));
    }
    if !inflated.is_free(goal_cell) {
        return Err(Error::NoPath(format!("goal cell {goal_cell:?} is not free")));
    }
    plan_cells(inflated, start_cell, goal_cell)
        .map(|cells| Path::from_cells(&meta, cells))
        .ok_or_else(|| Error::NoPath(format!("goal cell {goal_cell:?} unreachable")))
}

fn plan_cells(grid: &TrinaryGrid, start: Cell, goal: Cell) -> Option<Vec<Cell>> {
    let meta = grid.meta();
    let mut g_score = vec![f64::INFINITY; meta.len()];
    let mut parent = vec![usize::MAX; meta.len()];
    let mut closed = vec![false; meta.len()];
    let mut open = BinaryHeap::new();
    g_score[meta.index(start)] = 0.0;
    open.push(OpenEntry {
        f: octile(start, goal),
        g: 0.0,
        cell: start,
    });

    while let Some(OpenEntry { g, cell, .. }) = open.pop() {
        let ci = meta.index(cell);
        if closed[ci] || g > g_score[ci] {
            continue;
        }
        closed[ci] = true;
        if cell == goal {
            let mut cells = vec![goal];
            let mut i = ci;
            while parent[i] != usize::MAX {
                i = parent[i];
                cells.push(meta.cell_at(i));
            }
            cells.reverse();
            return Some(cells);
        }
        for (n, diagonal) in free_neighbors(grid, cell) {
            let ni = meta.index(n);
            if closed[ni] {
                continue;
            }
            let tentative = g + if diagonal { SQRT_2 } else { 1.0 };
            if tentative < g_score[ni] {
                g_score[ni] = tentative;
                parent[ni] = ci;
                open.push(OpenEntry {
                    f: tentative + octile(n, goal),
                    g: tentative,
                    cell: n,
                });
            }
        }
    }
    None
}

/// Optimal path cost in meters from `start` to every cell, over the same
/// move set as [`plan_path`]. Unreachable cells are infinite.
pub fn distance_field(grid: &TrinaryGrid, start: Cell) -> Vec<f64> {
    let meta = grid.meta();
    let mut dist = vec![f64::INFINITY; meta.len()];
    if !grid.is_free(start) {
        return dist;
    }
    let mut open = BinaryHeap::new();
    dist[meta.index(start)] = 0.0;
    open.push(OpenEntry {
        f: 0.0,
        g: 0.0,
        cell: start,
    });
    while let Some(OpenEntry { g, cell, .. }) = open.pop() {
        let ci = meta.index(cell);
        if g > dist[ci] {
            continue;
        }
        for (n, diagonal) in free_neighbors(grid, cell) {
            let ni = meta.index(n);
            let tentative = g + if diagonal { SQRT_2 } else { 1.0 };
            if tentative < dist[ni] {
                dist[ni] = tentative;
                open.push(OpenEntry {
                    f: tentative,
                    g: tentative,
                    cell: n,
                });
            }
        }
    }
    for d in dist.iter_mut() {
        *d *= meta.resolution;
    }
    dist
}

/// Nearest Free cell reachable from `from` by moving through cells that are
/// not `Occupied` or `Unknown` (inflated margins may be crossed). Used to
/// recover when map updates inflate obstacles over the robot.
pub fn escape_to_free(inflated: &TrinaryGrid, from: Point2, max_cells: usize) -> Option<Cell> {
    let meta = *inflated.meta();
    let start = meta.world_to_grid(from).ok()?;
    if inflated.is_free(start) {
        return Some(start);
    }
    let mut seen = vec![false; meta.len()];
    let mut queue = VecDeque::from([(start, 0usize)]);
    seen[meta.index(start)] = true;
    while let Some((cell, depth)) = queue.pop_front() {
        if depth >= max_cells {
            continue;
        }
        for &(dc, dr) in &MOVES[..4] {
            let Some(n) = meta.checked_cell(cell.col as i64 + dc, cell.row as i64 + dr) else {
                continue;
            };
            let ni = meta.index(n);
            if seen[ni] {
                continue;
            }
            seen[ni] = true;
            match inflated.get(n) {
                CellState::Free => return Some(n),
                CellState::Inflated => queue.push_back((n, depth + 1)),
                CellState::Occupied | CellState::Unknown => {}
            }
        }
    }
    None
}

/// Result of one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowStep {
    pub pose: Pose2D,
    /// Leading path points reached during this step.
    pub consumed: usize,
}

/// Advances from `pose` along `pose → path[0] → path[1] → …` by at most
/// `max_speed·dt`. Heading follows the direction of travel; the final point
/// is snapped to once within reach.
pub fn follow_path(pose: &Pose2D, path: &[Point2], params: &MotionParams) -> FollowStep {
    let mut budget = params.max_speed * params.dt;
    let mut here = pose.position();
    let mut heading = pose.theta;
    let mut consumed = 0;
    if budget <= 0.0 {
        return FollowStep { pose: *pose, consumed };
    }
    for target in path {
        let d = here.distance(target);
        if d <= budget {
            if d > 0.0 {
                heading = (target.y - here.y).atan2(target.x - here.x);
            }
            budget -= d;
            here = *target;
            consumed += 1;
            continue;
        }
        heading = (target.y - here.y).atan2(target.x - here.x);
        here = Point2::new(here.x + budget * heading.cos(), here.y + budget * heading.sin());
        break;
    }
    FollowStep {
        pose: Pose2D::new(here.x, here.y, heading),
        consumed,
    }
}
