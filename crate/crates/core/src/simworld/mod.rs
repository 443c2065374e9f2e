//! Ground-truth world, scripted environment changes and simulated sensors.
//!
//! The world is a rectangle `[0, width] × [0, height]` meters rasterized at a
//! fixed resolution. Walls and furniture block the raster; doors do not.

mod sensors;

pub use sensors::{
    line_of_sight, raycast, simulate_detections, simulate_lidar, visible_fraction, CameraParams, CategoryDetector,
    Detection, DetectorParams, LidarParams, VISIBILITY_SAMPLES,
};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, GridMeta, Point2, Pose2D};
use crate::occupancy::{CellState, TrinaryGrid};

pub const DEFAULT_CATEGORIES: [&str; 3] = ["table", "chair", "door"];

const NO_OBJECT: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    /// Solid axis-aligned rectangle.
    Rect { min: Point2, max: Point2 },
    /// Polyline wall of the given thickness.
    Wall {
        points: Vec<Point2>,
        #[serde(default = "default_wall_thickness")]
        thickness: f64,
    },
}

fn default_wall_thickness() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtObject {
    pub id: String,
    pub category: String,
    pub center: Point2,
    pub radius: f64,
    #[serde(default = "default_height")]
    pub height: f64,
    /// Defaults to `true` for everything except doors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupies_grid: Option<bool>,
}

fn default_height() -> f64 {
    0.8
}

impl GtObject {
    pub fn blocks(&self) -> bool {
        self.occupies_grid.unwrap_or(self.category != "door")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioEvent {
    Remove(String),
    Add(GtObject),
    Move { id: String, to: Point2 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub name: String,
    pub events: Vec<ScenarioEvent>,
}

/// On-disk world description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    /// `[width, height]` in meters.
    pub bounds: [f64; 2],
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    pub start: Pose2D,
    #[serde(default = "default_categories")]
    pub categories: Vec<String>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub objects: Vec<GtObject>,
    #[serde(default)]
    pub phases: Vec<PhaseSpec>,
}

fn default_resolution() -> f64 {
    0.1
}

pub fn default_categories() -> Vec<String> {
    DEFAULT_CATEGORIES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone)]
pub struct WorldModel {
    width: f64,
    height: f64,
    categories: Vec<String>,
    obstacles: Vec<Obstacle>,
    objects: Vec<GtObject>,
    meta: GridMeta,
    static_mask: Vec<bool>,
    object_mask: Vec<u32>,
    truth: TrinaryGrid,
}

impl WorldModel {
    pub fn new(
        bounds: [f64; 2],
        resolution: f64,
        categories: Vec<String>,
        obstacles: Vec<Obstacle>,
        objects: Vec<GtObject>,
    ) -> Result<Self> {
        let [width, height] = bounds;
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "world bounds must be positive, got {bounds:?}"
            )));
        }
        let meta = GridMeta::new(
            resolution,
            Pose2D::default(),
            (width / resolution - 1e-9).ceil().max(1.0) as usize,
            (height / resolution - 1e-9).ceil().max(1.0) as usize,
        )?;
        let mut world = Self {
            width,
            height,
            categories,
            obstacles,
            objects,
            meta,
            static_mask: Vec::new(),
            object_mask: Vec::new(),
            truth: TrinaryGrid::filled(meta, CellState::Free),
        };
        world.validate()?;
        world.rebuild_raster();
        Ok(world)
    }

    pub fn from_spec(spec: &WorldSpec) -> Result<Self> {
        let world = Self::new(
            spec.bounds,
            spec.resolution,
            spec.categories.clone(),
            spec.obstacles.clone(),
            spec.objects.clone(),
        )?;
        if !world.in_bounds(spec.start.position()) {
            return Err(Error::InvalidParam("start pose lies outside the world".into()));
        }
        for phase in &spec.phases {
            // surfaces bad ids at load time rather than mid-run
            world.apply_events(&phase.events)?;
        }
        Ok(world)
    }

    fn in_bounds(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    fn validate(&self) -> Result<()> {
        for obstacle in &self.obstacles {
            let points: Vec<Point2> = match obstacle {
                Obstacle::Rect { min, max } => {
                    if min.x > max.x || min.y > max.y {
                        return Err(Error::InvalidParam(format!("rect min {min:?} exceeds max {max:?}")));
                    }
                    vec![*min, *max]
                }
                Obstacle::Wall { points, thickness } => {
                    if points.is_empty() || thickness.is_nan() || *thickness <= 0.0 {
                        return Err(Error::InvalidParam("walls need points and a positive thickness".into()));
                    }
                    points.clone()
                }
            };
            if let Some(p) = points.iter().find(|p| !self.in_bounds(**p)) {
                return Err(Error::InvalidParam(format!(
                    "obstacle point {p:?} outside world bounds"
                )));
            }
        }
        let mut ids = HashSet::new();
        for obj in &self.objects {
            self.validate_object(obj)?;
            if !ids.insert(obj.id.as_str()) {
                return Err(Error::DuplicateId(obj.id.clone()));
            }
        }
        Ok(())
    }

    fn validate_object(&self, obj: &GtObject) -> Result<()> {
        if obj.radius.is_nan() || obj.radius <= 0.0 || obj.height.is_nan() || obj.height < 0.0 {
            return Err(Error::InvalidParam(format!(
                "object `{}` needs radius > 0 and height >= 0",
                obj.id
            )));
        }
        if !self.categories.contains(&obj.category) {
            return Err(Error::InvalidParam(format!(
                "object `{}` has unconfigured category `{}`",
                obj.id, obj.category
            )));
        }
        let c = obj.center;
        let r = obj.radius;
        if !(self.in_bounds(Point2::new(c.x - r, c.y - r)) && self.in_bounds(Point2::new(c.x + r, c.y + r))) {
            return Err(Error::InvalidParam(format!(
                "object `{}` footprint leaves the world",
                obj.id
            )));
        }
        Ok(())
    }

    fn rebuild_raster(&mut self) {
        let meta = self.meta;
        let res = meta.resolution;
        let mut static_mask = vec![false; meta.len()];
        for obstacle in &self.obstacles {
            match obstacle {
                Obstacle::Rect { min, max } => {
                    // cells overlapping the open rectangle, at least one per axis
                    let c0 = (min.x / res + 1e-9).floor() as i64;
                    let r0 = (min.y / res + 1e-9).floor() as i64;
                    let c1 = ((max.x / res - 1e-9).ceil() as i64 - 1).max(c0);
                    let r1 = ((max.y / res - 1e-9).ceil() as i64 - 1).max(r0);
                    for row in r0..=r1 {
                        for col in c0..=c1 {
                            if let Some(cell) = meta.checked_cell(col, row) {
                                static_mask[meta.index(cell)] = true;
                            }
                        }
                    }
                }
                Obstacle::Wall { points, thickness } => {
                    let half = (thickness / 2.0).max(res * std::f64::consts::FRAC_1_SQRT_2);
                    let segments: Vec<(Point2, Point2)> = if points.len() == 1 {
                        vec![(points[0], points[0])]
                    } else {
                        points.windows(2).map(|w| (w[0], w[1])).collect()
                    };
                    for (a, b) in segments {
                        for_cells_near_segment(&meta, a, b, half, |i| static_mask[i] = true);
                    }
                }
            }
        }
        let mut object_mask = vec![NO_OBJECT; meta.len()];
        for (idx, obj) in self.objects.iter().enumerate() {
            if !obj.blocks() {
                continue;
            }
            let mut claim = |i: usize| {
                if object_mask[i] == NO_OBJECT {
                    object_mask[i] = idx as u32;
                }
            };
            let mut stamped = false;
            for_cells_near_segment(&meta, obj.center, obj.center, obj.radius, |i| {
                stamped = true;
                claim(i);
            });
            if !stamped {
                if let Ok(cell) = meta.world_to_grid(obj.center) {
                    claim(meta.index(cell));
                }
            }
        }
        let cells = static_mask
            .iter()
            .zip(&object_mask)
            .map(|(&s, &o)| {
                if s || o != NO_OBJECT {
                    CellState::Occupied
                } else {
                    CellState::Free
                }
            })
            .collect();
        self.truth = TrinaryGrid::from_cells(meta, cells).expect("raster matches meta");
        self.static_mask = static_mask;
        self.object_mask = object_mask;
    }

    pub fn bounds(&self) -> [f64; 2] {
        [self.width, self.height]
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn objects(&self) -> &[GtObject] {
        &self.objects
    }

    pub fn object(&self, id: &str) -> Option<&GtObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub(crate) fn object_index(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    /// Ground-truth raster: Occupied where walls or blocking objects are,
    /// Free elsewhere.
    pub fn ground_truth(&self) -> &TrinaryGrid {
        &self.truth
    }

    /// Whether `cell` blocks rays, ignoring the footprint of object `exclude`.
    pub(crate) fn blocks(&self, cell: Cell, exclude: Option<usize>) -> bool {
        let i = self.meta.index(cell);
        if self.static_mask[i] {
            return true;
        }
        let owner = self.object_mask[i];
        owner != NO_OBJECT && Some(owner as usize) != exclude
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.in_bounds(p) && self.meta.contains(p)
    }

    /// Returns a new world with `events` applied in order.
    pub fn apply_events(&self, events: &[ScenarioEvent]) -> Result<WorldModel> {
        let mut objects = self.objects.clone();
        for event in events {
            match event {
                ScenarioEvent::Remove(id) => {
                    let i = objects
                        .iter()
                        .position(|o| &o.id == id)
                        .ok_or_else(|| Error::UnknownId(id.clone()))?;
                    objects.remove(i);
                }
                ScenarioEvent::Add(obj) => {
                    if objects.iter().any(|o| o.id == obj.id) {
                        return Err(Error::DuplicateId(obj.id.clone()));
                    }
                    self.validate_object(obj)?;
                    objects.push(obj.clone());
                }
                ScenarioEvent::Move { id, to } => {
                    let obj = objects
                        .iter_mut()
                        .find(|o| &o.id == id)
                        .ok_or_else(|| Error::UnknownId(id.clone()))?;
                    obj.center = *to;
                    self.validate_object(obj)?;
                }
            }
        }
        WorldModel::new(
            [self.width, self.height],
            self.meta.resolution,
            self.categories.clone(),
            self.obstacles.clone(),
            objects,
        )
    }
}

/// Looks up `phase` in `phases` and applies its events to `world`.
pub fn apply_scenario_events(world: &WorldModel, phases: &[PhaseSpec], phase: &str) -> Result<WorldModel> {
    let spec = phases
        .iter()
        .find(|p| p.name == phase)
        .ok_or_else(|| Error::UnknownPhase {
            name: phase.to_string(),
            defined: phases.iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join(", "),
        })?;
    world.apply_events(&spec.events)
}

/// Calls `visit` with the index of every cell whose center lies within
/// `half_width` of segment `a`–`b`.
fn for_cells_near_segment(meta: &GridMeta, a: Point2, b: Point2, half_width: f64, mut visit: impl FnMut(usize)) {
    let lo = Point2::new(a.x.min(b.x) - half_width, a.y.min(b.y) - half_width);
    let hi = Point2::new(a.x.max(b.x) + half_width, a.y.max(b.y) + half_width);
    let (c0, r0) = meta.signed_cell(lo);
    let (c1, r1) = meta.signed_cell(hi);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let Some(cell) = meta.checked_cell(col, row) else {
                continue;
            };
            if segment_distance(meta.grid_to_world(cell), a, b) <= half_width + 1e-9 {
                visit(meta.index(cell));
            }
        }
    }
}

pub(crate) fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(&a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&Point2::new(a.x + t * dx, a.y + t * dy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chair(id: &str, x: f64, y: f64) -> GtObject {
        GtObject {
            id: id.into(),
            category: "chair".into(),
            center: Point2::new(x, y),
            radius: 0.25,
            height: 0.9,
            occupies_grid: None,
        }
    }

    fn world(objects: Vec<GtObject>) -> WorldModel {
        WorldModel::new([6.0, 4.0], 0.1, default_categories(), vec![], objects).unwrap()
    }

    #[test]
    fn raster_marks_rects_walls_and_blocking_objects() {
        let door = GtObject {
            id: "d".into(),
            category: "door".into(),
            center: Point2::new(5.0, 3.0),
            radius: 0.4,
            height: 2.0,
            occupies_grid: None,
        };
        let w = WorldModel::new(
            [6.0, 4.0],
            0.1,
            default_categories(),
            vec![
                Obstacle::Rect {
                    min: Point2::new(1.0, 1.0),
                    max: Point2::new(1.5, 1.2),
                },
                Obstacle::Wall {
                    points: vec![Point2::new(3.0, 0.0), Point2::new(3.0, 4.0)],
                    thickness: 0.2,
                },
            ],
            vec![chair("c", 4.5, 1.0), door],
        )
        .unwrap();
        let gt = w.ground_truth();
        assert_eq!(gt.state_at(Point2::new(1.25, 1.15)), Some(CellState::Occupied));
        assert_eq!(gt.state_at(Point2::new(1.55, 1.1)), Some(CellState::Free));
        // rect [1.0,1.5]x[1.0,1.2] covers 5x2 cells
        let rect_cells = (0..60)
            .flat_map(|c| (0..40).map(move |r| Cell::new(r, c)))
            .filter(|&c| c.col < 25 && gt.get(c) == CellState::Occupied)
            .count();
        assert_eq!(rect_cells, 10);
        assert_eq!(gt.state_at(Point2::new(3.02, 2.0)), Some(CellState::Occupied));
        assert_eq!(gt.state_at(Point2::new(4.5, 1.0)), Some(CellState::Occupied));
        assert_eq!(gt.state_at(Point2::new(5.0, 3.0)), Some(CellState::Free));
        let ci = w.object_index("c").unwrap();
        let cell = w.meta().world_to_grid(Point2::new(4.5, 1.0)).unwrap();
        assert!(w.blocks(cell, None));
        assert!(!w.blocks(cell, Some(ci)));
    }

    #[test]
    fn events_remove_move_add() {
        let w = world(vec![chair("a", 1.0, 1.0), chair("b", 2.0, 1.0)]);
        let removed = w.apply_events(&[ScenarioEvent::Remove("a".into())]).unwrap();
        assert_eq!(removed.objects().len(), 1);

        let moved = w
            .apply_events(&[ScenarioEvent::Move {
                id: "b".into(),
                to: Point2::new(4.0, 3.0),
            }])
            .unwrap();
        assert_eq!(moved.object("b").unwrap().center, Point2::new(4.0, 3.0));
        assert_eq!(
            moved.ground_truth().state_at(Point2::new(2.0, 1.0)),
            Some(CellState::Free)
        );
        assert_eq!(
            moved.ground_truth().state_at(Point2::new(4.0, 3.0)),
            Some(CellState::Occupied)
        );

        let net = w
            .apply_events(&[
                ScenarioEvent::Add(chair("c", 3.0, 2.0)),
                ScenarioEvent::Remove("c".into()),
            ])
            .unwrap();
        assert_eq!(net.objects().len(), 2);
    }

    #[test]
    fn event_errors() {
        let w = world(vec![chair("a", 1.0, 1.0)]);
        assert!(matches!(
            w.apply_events(&[ScenarioEvent::Remove("zz".into())]),
            Err(Error::UnknownId(_))
        ));
        assert!(matches!(
            w.apply_events(&[ScenarioEvent::Add(chair("a", 3.0, 3.0))]),
            Err(Error::DuplicateId(_))
        ));
        assert!(matches!(
            w.apply_events(&[ScenarioEvent::Move {
                id: "q".into(),
                to: Point2::new(1.0, 1.0)
            }]),
            Err(Error::UnknownId(_))
        ));
        let phases = vec![PhaseSpec {
            name: "update1".into(),
            events: vec![],
        }];
        let err = apply_scenario_events(&w, &phases, "nope").unwrap_err();
        assert!(err.to_string().contains("update1"));
    }

    #[test]
    fn rejects_out_of_bounds_and_duplicates() {
        assert!(WorldModel::new(
            [6.0, 4.0],
            0.1,
            default_categories(),
            vec![],
            vec![chair("a", 5.9, 1.0)]
        )
        .is_err());
        assert!(matches!(
            WorldModel::new(
                [6.0, 4.0],
                0.1,
                default_categories(),
                vec![],
                vec![chair("a", 1.0, 1.0), chair("a", 2.0, 2.0)]
            ),
            Err(Error::DuplicateId(_))
        ));
        let mut lamp = chair("l", 1.0, 1.0);
        lamp.category = "lamp".into();
        assert!(WorldModel::new([6.0, 4.0], 0.1, default_categories(), vec![], vec![lamp]).is_err());
    }
}
