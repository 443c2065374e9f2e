//! Simulated LiDAR and object detector.
//!
//! The detector is parametric: each category has a detection probability,
//! a false-positive rate, position noise and confidence ranges. It emits
//! segment point clouds in the camera frame, the same data a depth camera
//! plus segmenter would hand to the mapper.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::WorldModel;
use crate::error::{Error, Result};
use crate::geometry::{lift_pose, wrap_angle, Point2, Point3, PointCloud, Pose2D, Transform3D};
use crate::occupancy::{Beam, LaserScan};

/// Number of footprint samples used by [`visible_fraction`]: the center
/// plus eight points on the boundary circle.
pub const VISIBILITY_SAMPLES: usize = 9;

const FALSE_POSITIVE_RADIUS: f64 = 0.25;
const FALSE_POSITIVE_HEIGHT: f64 = 0.5;
const FALSE_POSITIVE_MIN_RANGE: f64 = 0.5;
const FALSE_POSITIVE_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarParams {
    pub n_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        Self {
            n_beams: 360,
            fov: TAU,
            max_range: 10.0,
            range_noise_sigma: 0.01,
        }
    }
}

impl LidarParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_beams >= 1
            && self.fov > 0.0
            && self.fov <= TAU
            && self.max_range > 0.0
            && self.range_noise_sigma >= 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid lidar params {self:?}")))
        }
    }

    /// Beam bearings relative to the robot heading.
    pub fn bearings(&self) -> impl Iterator<Item = f64> + '_ {
        let step = self.fov / self.n_beams as f64;
        (0..self.n_beams).map(move |i| -self.fov / 2.0 + (i as f64 + 0.5) * step)
    }
}

/// Forward-looking camera. The camera frame is x-forward, z-up; `mount_*`
/// place it in the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraParams {
    pub hfov: f64,
    pub max_range: f64,
    pub mount_translation: [f64; 3],
    pub mount_rpy: [f64; 3],
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            hfov: 90f64.to_radians(),
            max_range: 5.0,
            mount_translation: [0.1, 0.0, 1.1],
            mount_rpy: [0.0, 0.0, 0.0],
        }
    }
}

impl CameraParams {
    pub fn validate(&self) -> Result<()> {
        if self.hfov > 0.0 && self.hfov < PI && self.max_range > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid camera params {self:?}")))
        }
    }

    /// T_camera: camera frame to robot base frame.
    pub fn mount(&self) -> Transform3D {
        Transform3D::from_rpy(self.mount_translation, self.mount_rpy)
    }

    /// Camera frame to map frame for a robot at `pose`.
    pub fn camera_to_map(&self, pose: &Pose2D) -> Transform3D {
        lift_pose(pose, 0.0).compose(&self.mount())
    }

    /// Planar camera position and viewing direction for a robot at `pose`.
    pub fn planar_view(&self, pose: &Pose2D) -> (Point2, f64) {
        let t = self.camera_to_map(pose);
        let [x, y, _] = t.translation();
        (Point2::new(x, y), t.planar_heading())
    }

    /// Whether `p` is inside the horizontal field of view and range.
    pub fn sees(&self, eye: Point2, heading: f64, p: Point2) -> bool {
        let d = eye.distance(&p);
        if d > self.max_range {
            return false;
        }
        if d == 0.0 {
            return true;
        }
        let bearing = wrap_angle((p.y - eye.y).atan2(p.x - eye.x) - heading);
        bearing.abs() <= self.hfov / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CategoryDetector {
    pub detect_prob: f64,
    pub fp_rate_per_frame: f64,
    pub position_noise_sigma: f64,
    pub confidence_range_tp: [f64; 2],
    pub confidence_range_fp: [f64; 2],
    pub min_visible_fraction: f64,
    pub points_per_segment: usize,
}

impl Default for CategoryDetector {
    fn default() -> Self {
        Self::perfect()
    }
}

impl CategoryDetector {
    /// Always detects visible objects, never hallucinates, no noise.
    pub fn perfect() -> Self {
        Self {
            detect_prob: 1.0,
            fp_rate_per_frame: 0.0,
            position_noise_sigma: 0.0,
            confidence_range_tp: [0.9, 0.9],
            confidence_range_fp: [0.3, 0.3],
            min_visible_fraction: 0.1,
            points_per_segment: 200,
        }
    }

    pub fn validate(&self, category: &str) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let range = |r: [f64; 2]| unit(r[0]) && unit(r[1]) && r[0] <= r[1];
        let ok = unit(self.detect_prob)
            && self.fp_rate_per_frame >= 0.0
            && self.fp_rate_per_frame.is_finite()
            && self.position_noise_sigma >= 0.0
            && range(self.confidence_range_tp)
            && range(self.confidence_range_fp)
            && unit(self.min_visible_fraction)
            && self.points_per_segment >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!(
                "invalid detector params for `{category}`: {self:?}"
            )))
        }
    }
}

/// Per-category detector behaviour, keyed by category label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectorParams(pub BTreeMap<String, CategoryDetector>);

impl DetectorParams {
    pub fn perfect(categories: &[String]) -> Self {
        Self(
            categories
                .iter()
                .map(|c| (c.clone(), CategoryDetector::perfect()))
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.0.iter().try_for_each(|(c, d)| d.validate(c))
    }

    pub fn get(&self, category: &str) -> Option<&CategoryDetector> {
        self.0.get(category)
    }
}

/// One simulated segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub category: String,
    pub confidence: f64,
    pub cloud_camera: PointCloud,
    /// Ground-truth source object; `None` for false positives. For
    /// evaluation and tests only, the mapper never reads it.
    pub truth_id: Option<String>,
}

/// Distance from `origin` along `heading` to the first blocked cell, capped
/// at `max_range`. Zero when `origin` itself is blocked. Rays that leave the
/// raster without hitting anything report `max_range`.
pub fn raycast(world: &WorldModel, origin: Point2, heading: f64, max_range: f64) -> Result<f64> {
    raycast_excluding(world, origin, heading, max_range, None)
}

pub(crate) fn raycast_excluding(
    world: &WorldModel,
    origin: Point2,
    heading: f64,
    max_range: f64,
    exclude: Option<usize>,
) -> Result<f64> {
    if !world.contains(origin) {
        return Err(Error::OutOfBounds {
            x: origin.x,
            y: origin.y,
        });
    }
    let meta = world.meta();
    for step in meta.ray(origin, heading) {
        if step.t_enter >= max_range {
            return Ok(max_range);
        }
        let Some(cell) = meta.checked_cell(step.col, step.row) else {
            return Ok(max_range);
        };
        if world.blocks(cell, exclude) {
            return Ok(step.t_enter);
        }
    }
    unreachable!("grid rays are unbounded")
}

/// Lidar return along a ray: the midpoint of the ray's passage through the
/// first blocked cell, so that small range noise keeps the endpoint inside
/// the obstacle cell. `max_range` when nothing is hit before it.
fn beam_return(world: &WorldModel, origin: Point2, heading: f64, max_range: f64) -> Result<f64> {
    if !world.contains(origin) {
        return Err(Error::OutOfBounds {
            x: origin.x,
            y: origin.y,
        });
    }
    let meta = world.meta();
    for step in meta.ray(origin, heading) {
        if step.t_enter >= max_range {
            return Ok(max_range);
        }
        let Some(cell) = meta.checked_cell(step.col, step.row) else {
            return Ok(max_range);
        };
        if world.blocks(cell, None) {
            return Ok((0.5 * (step.t_enter + step.t_exit)).min(max_range));
        }
    }
    unreachable!("grid rays are unbounded")
}

/// True when the straight line from `from` reaches the cell containing `to`
/// without crossing a blocked cell (ignoring object `exclude`).
pub fn line_of_sight(world: &WorldModel, from: Point2, to: Point2, exclude: Option<&str>) -> bool {
    let exclude = exclude.and_then(|id| world.object_index(id));
    line_of_sight_idx(world, from, to, exclude)
}

fn line_of_sight_idx(world: &WorldModel, from: Point2, to: Point2, exclude: Option<usize>) -> bool {
    let meta = world.meta();
    let (target_col, target_row) = meta.signed_cell(to);
    let dist = from.distance(&to);
    let heading = (to.y - from.y).atan2(to.x - from.x);
    for step in meta.ray(from, heading) {
        if step.col == target_col && step.row == target_row {
            return true;
        }
        if step.t_enter > dist + meta.resolution {
            // numerically slid past the target cell without touching it
            return true;
        }
        let Some(cell) = meta.checked_cell(step.col, step.row) else {
            return false;
        };
        if world.blocks(cell, exclude) {
            return false;
        }
    }
    unreachable!("grid rays are unbounded")
}

pub fn simulate_lidar<R: Rng + ?Sized>(
    world: &WorldModel,
    pose: &Pose2D,
    params: &LidarParams,
    rng: &mut R,
) -> Result<LaserScan> {
    let noise = if params.range_noise_sigma > 0.0 {
        Some(Normal::new(0.0, params.range_noise_sigma).map_err(|e| Error::InvalidParam(e.to_string()))?)
    } else {
        None
    };
    let mut beams = Vec::with_capacity(params.n_beams);
    for angle in params.bearings() {
        let truth = beam_return(world, pose.position(), pose.theta + angle, params.max_range)?;
        // beams without a return stay at max_range so noise cannot invent a hit
        let range = match &noise {
            Some(n) if truth < params.max_range => (truth + n.sample(rng)).clamp(0.0, params.max_range),
            _ => truth,
        };
        beams.push(Beam { angle, range });
    }
    Ok(LaserScan {
        max_range: params.max_range,
        beams,
    })
}

fn footprint_samples(center: Point2, radius: f64) -> [Point2; VISIBILITY_SAMPLES] {
    let mut out = [center; VISIBILITY_SAMPLES];
    for (k, p) in out.iter_mut().skip(1).enumerate() {
        let a = k as f64 * PI / 4.0;
        *p = Point2::new(center.x + radius * a.cos(), center.y + radius * a.sin());
    }
    out
}

/// Fraction of footprint samples (center plus eight boundary points) that
/// are in the camera's view cone, within range, and in line of sight.
pub fn visible_fraction(world: &WorldModel, pose: &Pose2D, camera: &CameraParams, object_id: &str) -> f64 {
    let Some(index) = world.object_index(object_id) else {
        return 0.0;
    };
    visible_fraction_idx(world, pose, camera, index)
}

fn visible_fraction_idx(world: &WorldModel, pose: &Pose2D, camera: &CameraParams, index: usize) -> f64 {
    let obj = &world.objects()[index];
    let (eye, heading) = camera.planar_view(pose);
    if !world.contains(eye) {
        return 0.0;
    }
    let visible = footprint_samples(obj.center, obj.radius)
        .iter()
        .filter(|&&p| camera.sees(eye, heading, p) && line_of_sight_idx(world, eye, p, Some(index)))
        .count();
    visible as f64 / VISIBILITY_SAMPLES as f64
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// Uniform samples over a cylinder footprint, expressed in the camera frame.
fn sample_segment<R: Rng + ?Sized>(
    rng: &mut R,
    center: Point2,
    radius: f64,
    height: f64,
    noise: Option<&Normal<f64>>,
    map_to_camera: &Transform3D,
    count: usize,
) -> PointCloud {
    (0..count)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let a = rng.random::<f64>() * TAU;
            let z = height * rng.random::<f64>();
            let mut p = Point3::new(center.x + r * a.cos(), center.y + r * a.sin(), z);
            if let Some(n) = noise {
                p.x += n.sample(rng);
                p.y += n.sample(rng);
                p.z += n.sample(rng);
            }
            map_to_camera.apply(&p)
        })
        .collect()
}

/// One detector frame from `pose`. Deterministic for a given rng state.
pub fn simulate_detections<R: Rng + ?Sized>(
    world: &WorldModel,
    pose: &Pose2D,
    camera: &CameraParams,
    detector: &DetectorParams,
    rng: &mut R,
) -> Vec<Detection> {
    let map_to_camera = camera.camera_to_map(pose).inverse();
    let mut out = Vec::new();
    for (index, obj) in world.objects().iter().enumerate() {
        let Some(params) = detector.get(&obj.category) else {
            continue;
        };
        let fraction = visible_fraction_idx(world, pose, camera, index);
        if fraction == 0.0 || fraction < params.min_visible_fraction {
            continue;
        }
        if rng.random::<f64>() >= params.detect_prob {
            continue;
        }
        let noise = (params.position_noise_sigma > 0.0)
            .then(|| Normal::new(0.0, params.position_noise_sigma).expect("sigma validated"));
        let cloud = sample_segment(
            rng,
            obj.center,
            obj.radius,
            obj.height,
            noise.as_ref(),
            &map_to_camera,
            params.points_per_segment,
        );
        out.push(Detection {
            category: obj.category.clone(),
            confidence: uniform(rng, params.confidence_range_tp),
            cloud_camera: cloud,
            truth_id: Some(obj.id.clone()),
        });
    }

    let (eye, heading) = camera.planar_view(pose);
    if !world.contains(eye) {
        return out;
    }
    for (category, params) in &detector.0 {
        if params.fp_rate_per_frame <= 0.0 {
            continue;
        }
        let count = Poisson::new(params.fp_rate_per_frame)
            .map(|d| d.sample(rng) as usize)
            .unwrap_or(0);
        for _ in 0..count {
            let Some(spot) = free_spot_in_view(world, eye, heading, camera, rng) else {
                continue;
            };
            let cloud = sample_segment(
                rng,
                spot,
                FALSE_POSITIVE_RADIUS,
                FALSE_POSITIVE_HEIGHT,
                None,
                &map_to_camera,
                params.points_per_segment,
            );
            out.push(Detection {
                category: category.clone(),
                confidence: uniform(rng, params.confidence_range_fp),
                cloud_camera: cloud,
                truth_id: None,
            });
        }
    }
    out
}

fn free_spot_in_view<R: Rng + ?Sized>(
    world: &WorldModel,
    eye: Point2,
    heading: f64,
    camera: &CameraParams,
    rng: &mut R,
) -> Option<Point2> {
    let lo = FALSE_POSITIVE_MIN_RANGE.min(camera.max_range);
    for _ in 0..FALSE_POSITIVE_ATTEMPTS {
        let bearing = heading + rng.random_range(-camera.hfov / 2.0..=camera.hfov / 2.0);
        let dist = rng.random_range(lo..=camera.max_range);
        let p = Point2::new(eye.x + dist * bearing.cos(), eye.y + dist * bearing.sin());
        let Ok(cell) = world.meta().world_to_grid(p) else {
            continue;
        };
        if !world.blocks(cell, None) && line_of_sight_idx(world, eye, p, None) {
            return Some(p);
        }
    }
    None
}
