//! Tour-driven construction and update passes.

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::{insert_detection, mean_position, points_to_map_frame, update_step, AddDecision, AssociationThresholds};
use super::{ChangeKind, MapChange, Observation, SemanticMap};
use crate::error::{Error, Result};
use crate::geometry::{lift_pose, Point2, Pose2D};
use crate::navigation::{escape_to_free, follow_path, plan_path, MotionParams};
use crate::occupancy::{inflate, TrinaryGrid};
use crate::rng;
use crate::simworld::{default_categories, simulate_detections, CameraParams, Detection, DetectorParams, WorldModel};
use crate::traversal::Tour;

/// How far the robot may be moved out of an inflated margin, in cells.
const ESCAPE_CELLS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateParams {
    /// Consecutive expected-but-missed frames before a node is removed.
    pub miss_limit: u32,
    /// Clearance from the view-cone edges and range limit for a node to be
    /// expected, meters.
    pub fov_margin: f64,
}

impl Default for UpdateParams {
    fn default() -> Self {
        Self {
            miss_limit: 3,
            fov_margin: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticParams {
    pub camera: CameraParams,
    pub detector: DetectorParams,
    pub thresholds: AssociationThresholds,
    pub motion: MotionParams,
    pub update: UpdateParams,
}

impl Default for SemanticParams {
    fn default() -> Self {
        Self {
            camera: CameraParams::default(),
            detector: DetectorParams::perfect(&default_categories()),
            thresholds: AssociationThresholds::default(),
            motion: MotionParams::default(),
            update: UpdateParams::default(),
        }
    }
}

impl SemanticParams {
    pub fn validate(&self, world: &WorldModel) -> Result<()> {
        self.camera.validate()?;
        self.detector.validate()?;
        self.thresholds.validate()?;
        self.thresholds.covers(world.categories())?;
        let uncovered: Vec<&String> = self
            .detector
            .0
            .keys()
            .filter(|c| self.thresholds.get(c).is_none())
            .collect();
        if !uncovered.is_empty() {
            return Err(Error::InvalidParam(format!(
                "detector categories without thresholds: {uncovered:?}"
            )));
        }
        self.motion.validate()?;
        if self.update.miss_limit == 0 || self.update.fov_margin.is_nan() || self.update.fov_margin < 0.0 {
            return Err(Error::InvalidParam(format!("invalid update params {:?}", self.update)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PassOutcome {
    pub map: SemanticMap,
    /// Changes in the order they happened.
    pub changes: Vec<MapChange>,
    /// Tour legs that could not be planned and were skipped.
    pub skipped_legs: usize,
    pub steps: usize,
    pub sim_time: f64,
}

fn observe(det: &Detection, camera: &CameraParams, pose: &Pose2D) -> Result<Observation> {
    let cloud = points_to_map_frame(&det.cloud_camera, &camera.mount(), &lift_pose(pose, 0.0));
    Ok(Observation {
        category: det.category.clone(),
        position: mean_position(&cloud)?,
        confidence: det.confidence,
    })
}

/// Path from `pose` to the Free cell at or nearest `goal`, stepping out of
/// inflated margins first when needed.
fn plan_leg(inflated: &TrinaryGrid, pose: &Pose2D, goal: Point2) -> Result<Vec<Point2>> {
    let meta = inflated.meta();
    let mut from = *pose;
    let mut points = Vec::new();
    if !inflated.is_free(meta.world_to_grid(pose.position())?) {
        let cell = escape_to_free(inflated, pose.position(), ESCAPE_CELLS)
            .ok_or_else(|| Error::NoPath(format!("no free cell near {pose:?}")))?;
        let p = meta.grid_to_world(cell);
        from = Pose2D::new(p.x, p.y, pose.theta);
        points.push(p);
    }
    let goal_cell = meta
        .world_to_grid(goal)
        .map_err(|_| Error::NoPath(format!("waypoint {goal:?} outside the map")))?;
    let goal = if inflated.is_free(goal_cell) {
        goal
    } else {
        let cell = escape_to_free(inflated, goal, ESCAPE_CELLS)
            .ok_or_else(|| Error::NoPath(format!("no free cell near waypoint {goal:?}")))?;
        meta.grid_to_world(cell)
    };
    points.extend(plan_path(inflated, &from, goal)?.points);
    Ok(points)
}

struct DriveStats {
    skipped_legs: usize,
    steps: usize,
    sim_time: f64,
}

/// Drives the closed tour, calling `frame` at the start pose and after every
/// control step. Unplannable legs are logged and skipped.
fn drive_tour(
    occupancy: &TrinaryGrid,
    tour: &Tour,
    motion: &MotionParams,
    mut frame: impl FnMut(&Pose2D, f64) -> Result<()>,
) -> Result<DriveStats> {
    let Some(&first) = tour.points.first() else {
        return Err(Error::InvalidParam("tour is empty".into()));
    };
    let inflated = inflate(occupancy, motion.inflation_radius);
    let heading = tour
        .points
        .iter()
        .find(|p| p.distance(&first) > 0.0)
        .map_or(0.0, |p| (p.y - first.y).atan2(p.x - first.x));
    let mut pose = Pose2D::new(first.x, first.y, heading);
    let mut stats = DriveStats {
        skipped_legs: 0,
        steps: 0,
        sim_time: 0.0,
    };
    frame(&pose, 0.0)?;
    for (leg, goal) in tour.points.iter().enumerate().skip(1) {
        let mut path = match plan_leg(&inflated, &pose, *goal) {
            Ok(path) => path,
            Err(Error::NoPath(why)) => {
                warn!("skipping tour leg {leg} to {goal:?}: {why}");
                stats.skipped_legs += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        while !path.is_empty() {
            let step = follow_path(&pose, &path, motion);
            path.drain(..step.consumed);
            pose = step.pose;
            stats.steps += 1;
            stats.sim_time = stats.steps as f64 * motion.dt;
            frame(&pose, stats.sim_time)?;
        }
        debug!("reached tour leg {leg} at t={:.1}", stats.sim_time);
    }
    Ok(stats)
}

/// Builds the object layer from scratch by driving the tour over `occupancy`.
/// Every new node is reported as an `Added` change.
pub fn construct(
    world: &WorldModel,
    occupancy: &TrinaryGrid,
    tour: &Tour,
    params: &SemanticParams,
    seed: u64,
) -> Result<PassOutcome> {
    params.validate(world)?;
    let mut map = SemanticMap::new(occupancy.clone(), params.thresholds.clone());
    let mut changes = Vec::new();
    let mut rng = rng::stream(seed, "construct/detector");
    let stats = drive_tour(occupancy, tour, &params.motion, |pose, time| {
        for det in simulate_detections(world, pose, &params.camera, &params.detector, &mut rng) {
            let obs = observe(&det, &params.camera, pose)?;
            if let AddDecision::AddedNew(id) = insert_detection(&mut map.topo, &obs, &map.thresholds)? {
                changes.push(MapChange {
                    kind: ChangeKind::Added,
                    time,
                    pose: *pose,
                    node: map.topo.node(id).expect("node just added").clone(),
                });
            }
        }
        Ok(())
    })?;
    info!(
        "construction added {} nodes over {:.1} s",
        map.topo.len(),
        stats.sim_time
    );
    Ok(PassOutcome {
        map,
        changes,
        skipped_legs: stats.skipped_legs,
        steps: stats.steps,
        sim_time: stats.sim_time,
    })
}

/// Drives the tour through a possibly changed `world`, applying the update
/// rule at every control step. `label` separates the random streams of
/// different passes that share a seed.
pub fn update_pass(
    world: &WorldModel,
    mut map: SemanticMap,
    tour: &Tour,
    params: &SemanticParams,
    seed: u64,
    label: &str,
) -> Result<PassOutcome> {
    params.validate(world)?;
    map.topo.reset_misses();
    let occupancy = map.occupancy.clone();
    let mut changes = Vec::new();
    let mut rng = rng::stream(seed, &format!("update/{label}/detector"));
    let stats = drive_tour(&occupancy, tour, &params.motion, |pose, time| {
        let observations = simulate_detections(world, pose, &params.camera, &params.detector, &mut rng)
            .iter()
            .map(|d| observe(d, &params.camera, pose))
            .collect::<Result<Vec<_>>>()?;
        changes.extend(update_step(
            &mut map,
            pose,
            time,
            &observations,
            &params.camera,
            &params.update,
        )?);
        Ok(())
    })?;
    info!(
        "update pass {label}: {} changes, {} nodes over {:.1} s",
        changes.len(),
        map.topo.len(),
        stats.sim_time
    );
    Ok(PassOutcome {
        map,
        changes,
        skipped_legs: stats.skipped_legs,
        steps: stats.steps,
        sim_time: stats.sim_time,
    })
}
