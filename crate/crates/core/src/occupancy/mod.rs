//! Log-odds occupancy grid built from laser scans, its three-state
//! thresholded view, and obstacle inflation for planning.

mod io;

pub use io::{load_map, read_pgm, save_map, write_pgm, MapYaml};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, GridMeta, Point2, Pose2D};

/// Tolerance used when deciding which cell a beam endpoint falls into.
const RANGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    /// Bearing relative to the robot heading, radians.
    pub angle: f64,
    pub range: f64,
}

/// One planar laser sweep. A beam whose range equals `max_range` had no return.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan {
    pub max_range: f64,
    pub beams: Vec<Beam>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingParams {
    pub l_occ: f64,
    pub l_free: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub occ_thresh: f64,
    pub free_thresh: f64,
}

impl Default for MappingParams {
    fn default() -> Self {
        Self {
            l_occ: 0.85,
            l_free: -0.4,
            l_min: -10.0,
            l_max: 10.0,
            occ_thresh: 2.0,
            free_thresh: -2.0,
        }
    }
}

impl MappingParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.l_occ > 0.0
            && self.l_free < 0.0
            && self.l_min < self.free_thresh
            && self.free_thresh <= 0.0
            && 0.0 <= self.occ_thresh
            && self.occ_thresh < self.l_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!(
                "mapping params must satisfy l_occ > 0 > l_free and \
                 l_min < free_thresh <= 0 <= occ_thresh < l_max: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
    /// Free space within the inflation radius of an obstacle. Produced only
    /// by [`inflate`]; blocks planning like `Occupied` but never seeds
    /// further inflation.
    Inflated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    meta: GridMeta,
    cells: Vec<f64>,
}

impl OccupancyGrid {
    pub fn new(meta: GridMeta) -> Self {
        Self {
            meta,
            cells: vec![0.0; meta.len()],
        }
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn value(&self, cell: Cell) -> f64 {
        self.cells[self.meta.index(cell)]
    }

    pub fn values(&self) -> &[f64] {
        &self.cells
    }

    /// Fuses one scan taken from `pose`. Cells a beam passes through get
    /// `l_free`; the cell a beam ends in gets `l_occ` if the beam returned.
    pub fn integrate_scan(&mut self, pose: &Pose2D, scan: &LaserScan, params: &MappingParams) -> Result<()> {
        let origin = pose.position();
        self.meta.world_to_grid(origin)?;
        for beam in &scan.beams {
            let range = beam.range.clamp(0.0, scan.max_range);
            let returned = range < scan.max_range;
            for step in self.meta.ray(origin, pose.theta + beam.angle) {
                let Some(cell) = self.meta.checked_cell(step.col, step.row) else {
                    break;
                };
                let index = self.meta.index(cell);
                if returned && step.t_exit > range + RANGE_EPS {
                    self.cells[index] = (self.cells[index] + params.l_occ).clamp(params.l_min, params.l_max);
                    break;
                }
                if !returned && step.t_enter >= range {
                    break;
                }
                self.cells[index] = (self.cells[index] + params.l_free).clamp(params.l_min, params.l_max);
            }
        }
        Ok(())
    }

    pub fn to_trinary(&self, params: &MappingParams) -> TrinaryGrid {
        let cells = self
            .cells
            .iter()
            .map(|&l| {
                if l > params.occ_thresh {
                    CellState::Occupied
                } else if l < params.free_thresh {
                    CellState::Free
                } else {
                    CellState::Unknown
                }
            })
            .collect();
        TrinaryGrid { meta: self.meta, cells }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrinaryGrid {
    meta: GridMeta,
    cells: Vec<CellState>,
}

impl TrinaryGrid {
    pub fn filled(meta: GridMeta, state: CellState) -> Self {
        Self {
            meta,
            cells: vec![state; meta.len()],
        }
    }

    pub fn from_cells(meta: GridMeta, cells: Vec<CellState>) -> Result<Self> {
        if cells.len() != meta.len() {
            return Err(Error::InvalidParam(format!(
                "expected {} cells, got {}",
                meta.len(),
                cells.len()
            )));
        }
        Ok(Self { meta, cells })
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn get(&self, cell: Cell) -> CellState {
        self.cells[self.meta.index(cell)]
    }

    /// State at signed coordinates, `None` outside the grid.
    pub fn get_signed(&self, col: i64, row: i64) -> Option<CellState> {
        self.meta.checked_cell(col, row).map(|c| self.get(c))
    }

    pub fn set(&mut self, cell: Cell, state: CellState) {
        let index = self.meta.index(cell);
        self.cells[index] = state;
    }

    pub fn state_at(&self, p: Point2) -> Option<CellState> {
        self.meta.world_to_grid(p).ok().map(|c| self.get(c))
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.get(cell) == CellState::Free
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&s| s == state).count()
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (Cell, CellState)> + '_ {
        self.cells.iter().enumerate().map(|(i, &s)| (self.meta.cell_at(i), s))
    }
}

/// Offsets `(dcol, drow)` of all cells whose center lies within `radius`
/// meters of the origin cell's center.
pub fn disk_offsets(radius: f64, resolution: f64) -> Vec<(i64, i64)> {
    let r = radius / resolution;
    let reach = (r + 1e-9).floor() as i64;
    let limit = r * r + 1e-9;
    let mut out = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if ((dc * dc + dr * dr) as f64) <= limit {
                out.push((dc, dr));
            }
        }
    }
    out
}

/// Marks every Free cell within `radius` of an Occupied cell as Inflated.
/// Only `Occupied` cells seed the dilation, so the operation is idempotent.
pub fn inflate(grid: &TrinaryGrid, radius: f64) -> TrinaryGrid {
    let mut out = grid.clone();
    if radius <= 0.0 {
        return out;
    }
    let meta = grid.meta;
    let offsets = disk_offsets(radius, meta.resolution);
    for (index, &state) in grid.cells.iter().enumerate() {
        if state != CellState::Occupied {
            continue;
        }
        let c = meta.cell_at(index);
        for &(dc, dr) in &offsets {
            if let Some(n) = meta.checked_cell(c.col as i64 + dc, c.row as i64 + dr) {
                let ni = meta.index(n);
                if out.cells[ni] == CellState::Free {
                    out.cells[ni] = CellState::Inflated;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(w: usize, h: usize) -> GridMeta {
        GridMeta::new(0.1, Pose2D::default(), w, h).unwrap()
    }

    fn single_beam(range: f64, max_range: f64) -> LaserScan {
        LaserScan {
            max_range,
            beams: vec![Beam { angle: 0.0, range }],
        }
    }

    #[test]
    fn one_beam_hit_and_free_cells() {
        let p = MappingParams::default();
        let mut g = OccupancyGrid::new(meta(20, 3));
        let pose = Pose2D::new(0.05, 0.15, 0.0);
        // beam ends exactly on the boundary of column 10 (x = 1.0)
        g.integrate_scan(&pose, &single_beam(0.95, 5.0), &p).unwrap();
        for col in 0..10 {
            assert_eq!(g.value(Cell::new(1, col)), p.l_free, "col {col}");
        }
        assert_eq!(g.value(Cell::new(1, 10)), p.l_occ);
        assert_eq!(g.value(Cell::new(1, 11)), 0.0);
        assert_eq!(g.value(Cell::new(0, 5)), 0.0);
    }

    #[test]
    fn repeated_hits_accumulate_then_clamp() {
        let p = MappingParams::default();
        let pose = Pose2D::new(0.05, 0.15, 0.0);
        for n in [1usize, 5, 11, 12, 30] {
            let mut g = OccupancyGrid::new(meta(20, 3));
            for _ in 0..n {
                g.integrate_scan(&pose, &single_beam(0.5, 5.0), &p).unwrap();
            }
            let mut expected = 0.0f64;
            for _ in 0..n {
                expected = (expected + p.l_occ).min(p.l_max);
            }
            assert_eq!(g.value(Cell::new(1, 5)), expected);
            assert!((expected - (n as f64 * p.l_occ).min(p.l_max)).abs() < 1e-12);
        }
    }

    #[test]
    fn max_range_beam_marks_nothing_occupied() {
        let p = MappingParams::default();
        let mut g = OccupancyGrid::new(meta(30, 3));
        g.integrate_scan(&Pose2D::new(0.05, 0.15, 0.0), &single_beam(1.2, 1.2), &p)
            .unwrap();
        assert!(g.values().iter().all(|&v| v <= 0.0));
        // the beam ends inside column 12 (x = 1.25)
        assert_eq!(g.value(Cell::new(1, 12)), p.l_free);
        assert_eq!(g.value(Cell::new(1, 13)), 0.0);
    }

    #[test]
    fn pose_outside_grid_is_rejected() {
        let mut g = OccupancyGrid::new(meta(5, 5));
        let r = g.integrate_scan(
            &Pose2D::new(-1.0, 0.2, 0.0),
            &single_beam(1.0, 2.0),
            &MappingParams::default(),
        );
        assert!(matches!(r, Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn trinary_thresholds_are_strict() {
        let p = MappingParams::default();
        let mut g = OccupancyGrid::new(meta(4, 1));
        assert!(g.to_trinary(&p).cells().iter().all(|&s| s == CellState::Unknown));
        g.cells = vec![p.l_max, p.occ_thresh, p.free_thresh, p.free_thresh - 1e-12];
        let t = g.to_trinary(&p);
        assert_eq!(
            t.cells(),
            &[
                CellState::Occupied,
                CellState::Unknown,
                CellState::Unknown,
                CellState::Free
            ]
        );
    }

    #[test]
    fn inflate_single_cell_disk() {
        let m = meta(11, 11);
        let mut t = TrinaryGrid::filled(m, CellState::Free);
        t.set(Cell::new(5, 5), CellState::Occupied);
        assert_eq!(inflate(&t, 0.0), t);
        let out = inflate(&t, 0.2);
        // enumerate cells whose center is within 0.2 m of the seed center
        let mut expected = 0;
        for row in 0..11i64 {
            for col in 0..11i64 {
                let d2 = (row - 5).pow(2) + (col - 5).pow(2);
                let blocked = out.get(Cell::new(row as usize, col as usize)) != CellState::Free;
                assert_eq!(blocked, d2 <= 4, "({row},{col})");
                if d2 <= 4 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 13);
        assert_eq!(out.count(CellState::Inflated), 12);
    }

    #[test]
    fn inflate_leaves_unknown_and_all_free_untouched() {
        let m = meta(6, 6);
        let free = TrinaryGrid::filled(m, CellState::Free);
        assert_eq!(inflate(&free, 0.7), free);
        let mut t = TrinaryGrid::filled(m, CellState::Unknown);
        t.set(Cell::new(2, 2), CellState::Occupied);
        assert_eq!(inflate(&t, 0.3), t);
    }

    #[test]
    fn validate_rejects_bad_ordering() {
        assert!(MappingParams::default().validate().is_ok());
        let bad = MappingParams {
            free_thresh: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
