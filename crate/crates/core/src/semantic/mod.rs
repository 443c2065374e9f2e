//! Topological object map layered on the occupancy grid: detection fusion,
//! distance-threshold association and the miss-count update rule.

mod io;
mod runner;

pub use io::{load_change_log, map_paths, read_change_log, write_change_log};
pub use runner::{construct, update_pass, PassOutcome, SemanticParams, UpdateParams};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3, PointCloud, Pose2D, Transform3D};
use crate::occupancy::{CellState, TrinaryGrid};
use crate::simworld::CameraParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectNode {
    pub id: u64,
    pub category: String,
    pub position: Point3,
    pub confidence: f64,
    /// Consecutive frames in which the node was expected but not detected.
    #[serde(skip)]
    pub miss_count: u32,
}

/// Node set with ids that are never reused.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopologicalMap {
    nodes: Vec<ObjectNode>,
    next_id: u64,
}

impl TopologicalMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a map from stored nodes; ids must be unique.
    pub fn from_nodes(mut nodes: Vec<ObjectNode>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        for w in nodes.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::DuplicateId(w[0].id.to_string()));
            }
        }
        let next_id = nodes.last().map_or(0, |n| n.id + 1);
        Ok(Self { nodes, next_id })
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> &[ObjectNode] {
        &self.nodes
    }

    pub fn node(&self, id: u64) -> Option<&ObjectNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn count(&self, category: &str) -> usize {
        self.nodes.iter().filter(|n| n.category == category).count()
    }

    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for n in &self.nodes {
            *out.entry(n.category.clone()).or_insert(0) += 1;
        }
        out
    }

    fn push(&mut self, category: &str, position: Point3, confidence: f64) -> &ObjectNode {
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.push(ObjectNode {
            id,
            category: category.to_string(),
            position,
            confidence,
            miss_count: 0,
        });
        self.nodes.last().expect("just pushed")
    }

    fn node_mut(&mut self, id: u64) -> Option<&mut ObjectNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    fn remove(&mut self, id: u64) -> Option<ObjectNode> {
        let i = self.nodes.iter().position(|n| n.id == id)?;
        Some(self.nodes.remove(i))
    }

    fn reset_misses(&mut self) {
        for n in &mut self.nodes {
            n.miss_count = 0;
        }
    }
}

/// Per-category association distance δ, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssociationThresholds(pub BTreeMap<String, f64>);

impl Default for AssociationThresholds {
    fn default() -> Self {
        Self(BTreeMap::from([
            ("chair".to_string(), 0.75),
            ("door".to_string(), 1.0),
            ("table".to_string(), 1.5),
        ]))
    }
}

impl AssociationThresholds {
    pub fn get(&self, category: &str) -> Option<f64> {
        self.0.get(category).copied()
    }

    pub fn validate(&self) -> Result<()> {
        match self.0.iter().find(|(_, &d)| !(d > 0.0 && d.is_finite())) {
            Some((c, d)) => Err(Error::InvalidParam(format!(
                "threshold for {c} must be positive, got {d}"
            ))),
            None => Ok(()),
        }
    }

    /// Errors unless every category in `categories` has a threshold.
    pub fn covers(&self, categories: &[String]) -> Result<()> {
        match categories.iter().find(|c| !self.0.contains_key(*c)) {
            Some(c) => Err(Error::InvalidParam(format!(
                "no association threshold for category {c}"
            ))),
            None => Ok(()),
        }
    }
}

/// Occupancy layer plus object layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub occupancy: TrinaryGrid,
    pub topo: TopologicalMap,
    pub thresholds: AssociationThresholds,
}

impl SemanticMap {
    pub fn new(occupancy: TrinaryGrid, thresholds: AssociationThresholds) -> Self {
        Self {
            occupancy,
            topo: TopologicalMap::new(),
            thresholds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapChange {
    pub kind: ChangeKind,
    /// Simulated seconds since the start of the pass.
    pub time: f64,
    pub pose: Pose2D,
    pub node: ObjectNode,
}

/// A detection reduced to what the map stores.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub category: String,
    pub position: Point3,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddDecision {
    AddedNew(u64),
    MatchedExisting(u64),
}

/// Camera-frame points to the map frame: `T_robot · T_camera · p`.
pub fn points_to_map_frame(cloud_camera: &PointCloud, t_camera: &Transform3D, t_robot: &Transform3D) -> PointCloud {
    t_robot.compose(t_camera).transform_points(cloud_camera)
}

pub fn mean_position(cloud: &PointCloud) -> Result<Point3> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = cloud.len() as f64;
    let (sx, sy, sz) = cloud
        .iter()
        .fold((0.0, 0.0, 0.0), |(sx, sy, sz), p| (sx + p.x, sy + p.y, sz + p.z));
    Ok(Point3::new(sx / n, sy / n, sz / n))
}

/// Nearest same-category node by planar distance, if strictly closer than δ.
pub fn associate(
    topo: &TopologicalMap,
    category: &str,
    position: Point3,
    thresholds: &AssociationThresholds,
) -> Option<u64> {
    let delta = thresholds.get(category)?;
    let here = position.xy();
    topo.nodes
        .iter()
        .filter(|n| n.category == category)
        .map(|n| (n.position.xy().distance(&here), n.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .filter(|&(d, _)| d < delta)
        .map(|(_, id)| id)
}

/// Adds a node unless one of the same category is within δ; a match keeps
/// its position, takes the larger confidence and clears its miss count.
pub fn insert_detection(
    topo: &mut TopologicalMap,
    obs: &Observation,
    thresholds: &AssociationThresholds,
) -> Result<AddDecision> {
    if thresholds.get(&obs.category).is_none() {
        return Err(Error::InvalidParam(format!(
            "no association threshold for category {}",
            obs.category
        )));
    }
    if !obs.position.is_finite() || !(0.0..=1.0).contains(&obs.confidence) {
        return Err(Error::InvalidParam(format!("invalid observation {obs:?}")));
    }
    if let Some(id) = associate(topo, &obs.category, obs.position, thresholds) {
        let node = topo.node_mut(id).expect("associated node exists");
        node.confidence = node.confidence.max(obs.confidence);
        node.miss_count = 0;
        return Ok(AddDecision::MatchedExisting(id));
    }
    Ok(AddDecision::AddedNew(
        topo.push(&obs.category, obs.position, obs.confidence).id,
    ))
}

/// Whether `p` sits inside the camera's view cone with at least `margin`
/// meters to both cone edges and to the range limit.
fn inside_view(eye: Point2, heading: f64, camera: &CameraParams, p: Point2, margin: f64) -> bool {
    let d = eye.distance(&p);
    if d > camera.max_range - margin {
        return false;
    }
    if margin <= 0.0 && d == 0.0 {
        return true;
    }
    let bearing = crate::geometry::wrap_angle((p.y - eye.y).atan2(p.x - eye.x) - heading).abs();
    let half = camera.hfov / 2.0;
    if bearing > half {
        return false;
    }
    let to_edge = half - bearing;
    let edge_distance = if to_edge >= std::f64::consts::FRAC_PI_2 {
        d
    } else {
        d * to_edge.sin()
    };
    edge_distance >= margin
}

/// Whether the segment from `eye` to `p` crosses no Occupied or Unknown cell,
/// ignoring cells within `margin` of `p` (the object's own footprint).
fn clear_line(occ: &TrinaryGrid, eye: Point2, p: Point2, margin: f64) -> bool {
    let meta = occ.meta();
    let length = eye.distance(&p);
    let heading = (p.y - eye.y).atan2(p.x - eye.x);
    let (tc, tr) = meta.signed_cell(p);
    for step in meta.ray(eye, heading) {
        if step.t_enter > length {
            return true;
        }
        let Some(cell) = meta.checked_cell(step.col, step.row) else {
            return true;
        };
        let opaque = matches!(occ.get(cell), CellState::Occupied | CellState::Unknown);
        if opaque && meta.grid_to_world(cell).distance(&p) > margin {
            return false;
        }
        if (step.col, step.row) == (tc, tr) {
            return true;
        }
    }
    unreachable!("grid rays are unbounded")
}

/// Nodes the camera should see from `pose` according to the occupancy layer.
/// Unknown cells count as occluders, since they may hide walls.
/// `margin` keeps nodes away from the cone edges and range limit, and
/// excludes Occupied cells that close to a node from the occlusion test.
pub fn expected_nodes_in_fov(
    topo: &TopologicalMap,
    pose: &Pose2D,
    camera: &CameraParams,
    occ: &TrinaryGrid,
    margin: f64,
) -> Vec<u64> {
    let (eye, heading) = camera.planar_view(pose);
    topo.nodes
        .iter()
        .filter(|n| {
            let p = n.position.xy();
            inside_view(eye, heading, camera, p, margin) && clear_line(occ, eye, p, margin)
        })
        .map(|n| n.id)
        .collect()
}

/// One update frame: insert every observation, then count a miss for each
/// expected node that no same-category observation came within δ of, and
/// remove nodes that reach `miss_limit` misses.
pub fn update_step(
    map: &mut SemanticMap,
    pose: &Pose2D,
    time: f64,
    observations: &[Observation],
    camera: &CameraParams,
    params: &UpdateParams,
) -> Result<Vec<MapChange>> {
    let expected = expected_nodes_in_fov(&map.topo, pose, camera, &map.occupancy, params.fov_margin);
    let mut changes = Vec::new();
    for obs in observations {
        if let AddDecision::AddedNew(id) = insert_detection(&mut map.topo, obs, &map.thresholds)? {
            changes.push(MapChange {
                kind: ChangeKind::Added,
                time,
                pose: *pose,
                node: map.topo.node(id).expect("node just added").clone(),
            });
        }
    }
    for id in expected {
        let node = map.topo.node_mut(id).expect("expected nodes exist");
        let delta = map.thresholds.get(&node.category).unwrap_or(0.0);
        let seen = observations
            .iter()
            .any(|o| o.category == node.category && o.position.xy().distance(&node.position.xy()) < delta);
        if seen {
            node.miss_count = 0;
            continue;
        }
        node.miss_count += 1;
        if node.miss_count >= params.miss_limit {
            let removed = map.topo.remove(id).expect("node exists");
            changes.push(MapChange {
                kind: ChangeKind::Removed,
                time,
                pose: *pose,
                node: removed,
            });
        }
    }
    Ok(changes)
}
