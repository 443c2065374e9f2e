//! Planar poses, rigid 3D transforms, point clouds and grid/world coordinate
//! conversion.
//!
//! Frames follow the usual mobile-robot convention: x forward, y left, z up.
//! A [`Transform3D`] maps points from its child frame into its parent frame,
//! and `a.compose(&b)` is the transform that applies `b` first, then `a`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Wraps an angle into (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let a = theta.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Planar point; serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// Planar robot pose. `theta` is always wrapped to (-π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "RawPose")]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Deserialize)]
struct RawPose {
    x: f64,
    y: f64,
    #[serde(default)]
    theta: f64,
}

impl From<RawPose> for Pose2D {
    fn from(raw: RawPose) -> Self {
        Pose2D::new(raw.x, raw.y, raw.theta)
    }
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        self.position().distance(&other.position())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn xy(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

impl From<[f64; 3]> for Point3 {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Self { x, y, z }
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

/// An ordered list of points, all expressed in the same frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud(pub Vec<Point3>);

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self(points)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.0.iter()
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Rigid transform in SE(3): `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform3D {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Transform3D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform3D {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform from a row-major rotation matrix and a translation,
    /// rejecting matrices that are not proper rotations.
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        let r = Matrix3::from_fn(|i, j| rotation[i][j]);
        let t = Vector3::from(translation);
        if !r.iter().chain(t.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidParam("transform has non-finite entries".into()));
        }
        let gram = r.transpose() * r - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > ORTHONORMAL_TOL) {
            return Err(Error::InvalidParam("rotation is not orthonormal".into()));
        }
        if (r.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidParam("rotation determinant is not +1".into()));
        }
        Ok(Self {
            rotation: r,
            translation: t,
        })
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn rot_z(angle: f64) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// Roll/pitch/yaw (extrinsic x, y, z) plus translation.
    pub fn from_rpy(translation: [f64; 3], rpy: [f64; 3]) -> Self {
        Self {
            rotation: *Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]).matrix(),
            translation: Vector3::from(translation),
        }
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let r = &self.rotation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ]
    }

    pub fn translation(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Transform3D) -> Transform3D {
        Transform3D {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform3D {
        let rt = self.rotation.transpose();
        Transform3D {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(self.rotation * p.to_vector() + self.translation)
    }

    pub fn transform_points(&self, cloud: &PointCloud) -> PointCloud {
        cloud.iter().map(|p| self.apply(p)).collect()
    }

    /// Heading of this frame's x axis projected onto the world plane.
    pub fn planar_heading(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }
}

/// Embeds a planar pose into SE(3): yaw about z, translation `(x, y, z_offset)`.
pub fn lift_pose(pose: &Pose2D, z_offset: f64) -> Transform3D {
    let mut t = Transform3D::rot_z(pose.theta);
    t.translation = Vector3::new(pose.x, pose.y, z_offset);
    t
}

/// Integer cell coordinates; `row` grows with map-frame y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Raster metadata shared by every grid in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub resolution: f64,
    /// Map-frame pose of the outer corner of cell (0, 0).
    pub origin: Pose2D,
    pub width: usize,
    pub height: usize,
}

impl GridMeta {
    pub fn new(resolution: f64, origin: Pose2D, width: usize, height: usize) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidParam(format!("resolution must be > 0, got {resolution}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam("grid must be at least 1x1".into()));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidParam("grid origin must be finite".into()));
        }
        Ok(Self {
            resolution,
            origin,
            width,
            height,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    fn local_coords(&self, p: Point2) -> (f64, f64) {
        let dx = p.x - self.origin.x;
        let dy = p.y - self.origin.y;
        if self.origin.theta == 0.0 {
            return (dx, dy);
        }
        let (s, c) = self.origin.theta.sin_cos();
        (c * dx + s * dy, -s * dx + c * dy)
    }

    fn local_to_world(&self, lx: f64, ly: f64) -> Point2 {
        if self.origin.theta == 0.0 {
            return Point2::new(lx + self.origin.x, ly + self.origin.y);
        }
        let (s, c) = self.origin.theta.sin_cos();
        Point2::new(c * lx - s * ly + self.origin.x, s * lx + c * ly + self.origin.y)
    }

    /// Continuous cell coordinates `(col, row)`; not bounds checked.
    pub fn continuous_coords(&self, p: Point2) -> (f64, f64) {
        let (lx, ly) = self.local_coords(p);
        (lx / self.resolution, ly / self.resolution)
    }

    /// Signed integer cell coordinates `(col, row)`; not bounds checked.
    pub fn signed_cell(&self, p: Point2) -> (i64, i64) {
        let (cx, cy) = self.continuous_coords(p);
        (cx.floor() as i64, cy.floor() as i64)
    }

    pub fn checked_cell(&self, col: i64, row: i64) -> Option<Cell> {
        if col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height {
            Some(Cell::new(row as usize, col as usize))
        } else {
            None
        }
    }

    pub fn world_to_grid(&self, p: Point2) -> Result<Cell> {
        let (col, row) = self.signed_cell(p);
        self.checked_cell(col, row).ok_or(Error::OutOfBounds { x: p.x, y: p.y })
    }

    /// Map-frame center of `cell`.
    pub fn grid_to_world(&self, cell: Cell) -> Point2 {
        self.local_to_world(
            (cell.col as f64 + 0.5) * self.resolution,
            (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.world_to_grid(p).is_ok()
    }

    /// Cells along a ray, in traversal order; see [`GridRay`].
    pub fn ray(&self, start: Point2, heading: f64) -> GridRay {
        GridRay::new(self, start, heading)
    }
}

/// One step of a grid traversal: the cell and the ray parameter (meters
/// from the start) at which the ray enters and leaves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCell {
    pub col: i64,
    pub row: i64,
    pub t_enter: f64,
    pub t_exit: f64,
}

/// Amanatides–Woo voxel traversal over a grid. Yields 4-connected cells
/// forever; callers stop on distance or bounds.
#[derive(Debug, Clone)]
pub struct GridRay {
    col: i64,
    row: i64,
    step_col: i64,
    step_row: i64,
    t_max_col: f64,
    t_max_row: f64,
    t_delta_col: f64,
    t_delta_row: f64,
    t_current: f64,
}

impl GridRay {
    pub fn new(meta: &GridMeta, start: Point2, heading: f64) -> Self {
        let (cx, cy) = meta.continuous_coords(start);
        let local_heading = heading - meta.origin.theta;
        let (dy, dx) = local_heading.sin_cos();
        let res = meta.resolution;
        let col = cx.floor() as i64;
        let row = cy.floor() as i64;

        let axis = |c: f64, cell: i64, d: f64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, ((cell + 1) as f64 - c) * res / d, res / d)
            } else if d < 0.0 {
                (-1, (c - cell as f64) * res / -d, res / -d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_col, t_max_col, t_delta_col) = axis(cx, col, dx);
        let (step_row, t_max_row, t_delta_row) = axis(cy, row, dy);
        Self {
            col,
            row,
            step_col,
            step_row,
            t_max_col,
            t_max_row,
            t_delta_col,
            t_delta_row,
            t_current: 0.0,
        }
    }
}

impl Iterator for GridRay {
    type Item = RayCell;

    fn next(&mut self) -> Option<RayCell> {
        let t_exit = self.t_max_col.min(self.t_max_row);
        let out = RayCell {
            col: self.col,
            row: self.row,
            t_enter: self.t_current,
            t_exit,
        };
        if self.t_max_col <= self.t_max_row {
            self.col += self.step_col;
            self.t_current = self.t_max_col;
            self.t_max_col += self.t_delta_col;
        } else {
            self.row += self.step_row;
            self.t_current = self.t_max_row;
            self.t_max_row += self.t_delta_row;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Point3, b: Point3) -> bool {
        (a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12 && (a.z - b.z).abs() < 1e-12
    }

    #[test]
    fn wrap_angle_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-FRAC_PI_2) + FRAC_PI_2).abs() < 1e-15);
        assert_eq!(wrap_angle(-1e-20), -1e-20);
        assert_eq!(wrap_angle(-0.5), -0.5);
        assert_eq!(Pose2D::new(0.0, 0.0, TAU).theta, 0.0);
    }

    #[test]
    fn compose_identity_and_translations() {
        let i = Transform3D::identity();
        assert_eq!(i.compose(&i), i);
        let a = Transform3D::from_translation(1.0, 0.0, 0.0);
        let b = Transform3D::from_translation(0.0, 2.0, 0.0);
        assert_eq!(a.compose(&b), Transform3D::from_translation(1.0, 2.0, 0.0));
    }

    #[test]
    fn compose_rotation_after_translation() {
        // Rz(90°)·(0 + (1,0,0)) = (0,1,0)
        let t = Transform3D::rot_z(FRAC_PI_2).compose(&Transform3D::from_translation(1.0, 0.0, 0.0));
        assert!(close(t.apply(&Point3::default()), Point3::new(0.0, 1.0, 0.0)));
        // Rz(90°)·((1,0,0) + (1,0,0)) = (0,2,0)
        let out = t.transform_points(&PointCloud::new(vec![Point3::new(1.0, 0.0, 0.0)]));
        assert_eq!(out.len(), 1);
        assert!(close(out.0[0], Point3::new(0.0, 2.0, 0.0)));
    }

    #[test]
    fn transform_points_trivial_cases() {
        let p = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]);
        assert_eq!(Transform3D::identity().transform_points(&p), p);
        let up = Transform3D::from_translation(0.0, 0.0, 5.0);
        assert_eq!(
            up.transform_points(&PointCloud::new(vec![Point3::default()])).0[0],
            Point3::new(0.0, 0.0, 5.0)
        );
        assert!(up.transform_points(&PointCloud::default()).is_empty());
    }

    #[test]
    fn lift_pose_examples() {
        assert_eq!(lift_pose(&Pose2D::new(0.0, 0.0, 0.0), 0.0), Transform3D::identity());
        let t = lift_pose(&Pose2D::new(1.0, 2.0, FRAC_PI_2), 0.0);
        assert_eq!(t.translation(), [1.0, 2.0, 0.0]);
        let r = t.rotation();
        assert!((r[0][1] + 1.0).abs() < 1e-12 && (r[1][0] - 1.0).abs() < 1e-12);
        assert!(close(t.apply(&Point3::new(1.0, 0.0, 0.0)), Point3::new(1.0, 3.0, 0.0)));
    }

    #[test]
    fn rejects_improper_rotations() {
        let reflect = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(Transform3D::new(reflect, [0.0; 3]).is_err());
        let scaled = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Transform3D::new(scaled, [0.0; 3]).is_err());
        let ok = Transform3D::rot_z(0.3).rotation();
        assert!(Transform3D::new(ok, [1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn world_to_grid_examples() {
        let meta = GridMeta::new(0.1, Pose2D::default(), 20, 20).unwrap();
        assert_eq!(meta.world_to_grid(Point2::new(0.05, 0.05)).unwrap(), Cell::new(0, 0));
        assert_eq!(meta.world_to_grid(Point2::new(1.0, 0.0)).unwrap(), Cell::new(0, 10));
        assert!(matches!(
            meta.world_to_grid(Point2::new(-0.01, 0.0)),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(meta.world_to_grid(Point2::new(2.0, 0.5)).is_err());
    }

    #[test]
    fn rotated_origin_round_trip() {
        let meta = GridMeta::new(0.25, Pose2D::new(3.0, -1.0, 0.7), 13, 9).unwrap();
        for index in 0..meta.len() {
            let cell = meta.cell_at(index);
            assert_eq!(meta.world_to_grid(meta.grid_to_world(cell)).unwrap(), cell);
        }
    }

    #[test]
    fn ray_walks_cells_in_order() {
        let meta = GridMeta::new(1.0, Pose2D::default(), 10, 10).unwrap();
        let cells: Vec<_> = meta
            .ray(Point2::new(0.5, 0.5), 0.0)
            .take(4)
            .map(|c| (c.col, c.row, c.t_enter))
            .collect();
        assert_eq!(cells, vec![(0, 0, 0.0), (1, 0, 0.5), (2, 0, 1.5), (3, 0, 2.5)]);
        // diagonal rays stay 4-connected
        let diag: Vec<_> = meta.ray(Point2::new(0.5, 0.2), 0.9).take(12).collect();
        for w in diag.windows(2) {
            let d = (w[1].col - w[0].col).abs() + (w[1].row - w[0].row).abs();
            assert_eq!(d, 1);
            assert!(w[1].t_enter >= w[0].t_enter);
        }
    }
}
