//! Autonomous exploration, occupancy mapping and updatable topological
//! semantic maps, driven by a deterministic 2D simulator.
//!
//! The pipeline runs in phases:
//!
//! 1. [`exploration`] drives a simulated robot to frontiers while
//!    [`occupancy`] fuses LiDAR scans into a log-odds grid, recording the
//!    trajectory.
//! 2. [`traversal`] thins the trajectory into waypoints and orders them with
//!    a greedy nearest-neighbour tour.
//! 3. [`semantic`] follows the tour, fuses simulated detections into a
//!    topological object map layered on the grid, and later updates it when
//!    the world changes.
//! 4. [`evaluation`] compares the map against ground truth.

pub mod error;
pub mod evaluation;
pub mod exploration;
pub mod geometry;
pub mod navigation;
pub mod occupancy;
pub mod rng;
pub mod scenario;
pub mod semantic;
pub mod simworld;
pub mod traversal;

pub use error::{Error, Result};
