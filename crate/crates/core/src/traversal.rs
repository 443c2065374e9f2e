//! Waypoint sampling and greedy nearest-neighbour tours over the recorded
//! exploration trajectory.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::exploration::Trajectory;
use crate::geometry::{Point2, Pose2D};

/// Waypoints in trajectory order; the first is the trajectory start.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointSet {
    poses: Vec<Pose2D>,
}

impl WaypointSet {
    /// Rejects empty sets and pairs closer than `min_sep`.
    pub fn new(poses: Vec<Pose2D>, min_sep: f64) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::InvalidParam("waypoint set is empty".into()));
        }
        for (i, a) in poses.iter().enumerate() {
            for b in &poses[i + 1..] {
                if a.distance(b) < min_sep {
                    return Err(Error::InvalidParam(format!(
                        "waypoints {a:?} and {b:?} are closer than {min_sep}"
                    )));
                }
            }
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose2D] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Keeps the first pose, then every pose at least `min_sep` from all poses
/// kept so far.
pub fn sample_waypoints(traj: &Trajectory, min_sep: f64) -> Result<WaypointSet> {
    if traj.is_empty() {
        return Err(Error::InvalidParam(
            "cannot sample waypoints from an empty trajectory".into(),
        ));
    }
    if min_sep.is_nan() || min_sep < 0.0 {
        return Err(Error::InvalidParam(format!(
            "min_sep must be non-negative, got {min_sep}"
        )));
    }
    let mut kept: Vec<Pose2D> = Vec::new();
    for pose in traj.poses() {
        if kept.iter().all(|k| k.distance(pose) >= min_sep) {
            kept.push(*pose);
        }
    }
    Ok(WaypointSet { poses: kept })
}

/// Complete graph with planar Euclidean edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    nodes: Vec<Pose2D>,
    weights: Vec<Vec<f64>>,
}

impl WeightedGraph {
    pub fn nodes(&self) -> &[Pose2D] {
        &self.nodes
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i][j]
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

pub fn build_graph(waypoints: &WaypointSet) -> WeightedGraph {
    let nodes = waypoints.poses().to_vec();
    let n = nodes.len();
    let mut weights = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = nodes[i].distance(&nodes[j]);
            weights[i][j] = w;
            weights[j][i] = w;
        }
    }
    WeightedGraph { nodes, weights }
}

/// Closed walk over all waypoints, starting and ending at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tour {
    /// Waypoint indices; `order.len() == n + 1`.
    pub order: Vec<usize>,
    pub points: Vec<Point2>,
    pub total_length: f64,
}

impl Tour {
    /// One `index x y` record per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.order.iter().zip(&self.points) {
            let _ = writeln!(out, "{i} {} {}", p.x, p.y);
        }
        out
    }

    /// Rebuilds a tour from text; the length is recomputed from the points.
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut order = Vec::new();
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = format!("line {}", lineno + 1);
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [i, x, y] = fields[..] else {
                return Err(Error::parse(
                    name,
                    &loc,
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            };
            let bad = |e: &dyn std::fmt::Display| Error::parse(name, &loc, e.to_string());
            order.push(i.parse::<usize>().map_err(|e| bad(&e))?);
            points.push(Point2::new(
                x.parse().map_err(|e| bad(&e))?,
                y.parse().map_err(|e| bad(&e))?,
            ));
        }
        let total_length = points.windows(2).map(|w| w[0].distance(&w[1])).sum();
        Ok(Self {
            order,
            points,
            total_length,
        })
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Nearest-unvisited tour from node 0, ties to the smaller index, closed back
/// at node 0.
pub fn greedy_tsp(g: &WeightedGraph) -> Result<Tour> {
    let n = g.len();
    if n == 0 {
        return Err(Error::InvalidParam("greedy tour needs at least one waypoint".into()));
    }
    let mut visited = vec![false; n];
    visited[0] = true;
    let mut order = Vec::with_capacity(n + 1);
    order.push(0);
    let mut total_length = 0.0;
    for _ in 1..n {
        let last = *order.last().expect("tour starts at node 0");
        let mut best: Option<usize> = None;
        for (j, _) in visited.iter().enumerate().filter(|(_, v)| !**v) {
            // strict comparison keeps the smaller index on ties
            if best.is_none_or(|b| g.weight(last, j) < g.weight(last, b)) {
                best = Some(j);
            }
        }
        let next = best.expect("an unvisited node remains");
        visited[next] = true;
        total_length += g.weight(last, next);
        order.push(next);
    }
    total_length += g.weight(*order.last().expect("non-empty"), 0);
    order.push(0);
    let points = order.iter().map(|&i| g.nodes()[i].position()).collect();
    Ok(Tour {
        order,
        points,
        total_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exploration::TimedPose;
    use proptest::prelude::*;

    fn line_traj(xs: &[f64]) -> Trajectory {
        Trajectory::from_samples(
            xs.iter()
                .enumerate()
                .map(|(i, &x)| TimedPose {
                    t: i as f64 * 4.0,
                    pose: Pose2D::new(x, 0.0, 0.0),
                })
                .collect(),
        )
        .unwrap()
    }

    fn xs(w: &WaypointSet) -> Vec<f64> {
        w.poses().iter().map(|p| p.x).collect()
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(xs(&sample_waypoints(&line_traj(&[3.0]), 2.0).unwrap()), vec![3.0]);
        assert_eq!(
            xs(&sample_waypoints(&line_traj(&[0.0, 1.0, 2.0, 3.0, 4.0]), 2.0).unwrap()),
            vec![0.0, 2.0, 4.0]
        );
        assert_eq!(
            xs(&sample_waypoints(&line_traj(&[0.0, 0.5, 1.9, -1.5]), 2.0).unwrap()),
            vec![0.0]
        );
        assert!(sample_waypoints(&Trajectory::new(), 2.0).is_err());
    }

    fn graph_of(points: &[(f64, f64)]) -> WeightedGraph {
        let poses = points.iter().map(|&(x, y)| Pose2D::new(x, y, 0.0)).collect();
        build_graph(&WaypointSet::new(poses, 0.0).unwrap())
    }

    #[test]
    fn graph_examples() {
        let g = graph_of(&[(0.0, 0.0), (3.0, 0.0)]);
        assert_eq!(g.weight(0, 1), 3.0);
        assert_eq!(g.weight(1, 0), 3.0);
        assert_eq!(g.weight(0, 0), 0.0);
        let g = graph_of(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        assert_eq!(g.weight(1, 2), std::f64::consts::SQRT_2);
    }

    #[test]
    fn tour_examples() {
        let single = greedy_tsp(&graph_of(&[(1.0, 1.0)])).unwrap();
        assert_eq!(single.order, vec![0, 0]);
        assert_eq!(single.total_length, 0.0);

        let t = greedy_tsp(&graph_of(&[(0.0, 0.0), (2.0, 0.0), (5.0, 0.0)])).unwrap();
        assert_eq!(t.order, vec![0, 1, 2, 0]);
        assert_eq!(t.total_length, 10.0);
    }

    #[test]
    fn ties_go_to_smaller_index() {
        let t = greedy_tsp(&graph_of(&[(0.0, 0.0), (2.0, 0.0), (-2.0, 0.0)])).unwrap();
        assert_eq!(t.order, vec![0, 1, 2, 0]);
    }

    #[test]
    fn tour_text_round_trip() {
        let t = greedy_tsp(&graph_of(&[(0.0, 0.0), (2.0, 0.5), (5.0, -1.25)])).unwrap();
        let back = Tour::parse(&t.to_text(), "mem").unwrap();
        assert_eq!(back.order, t.order);
        assert_eq!(back.points, t.points);
        assert!((back.total_length - t.total_length).abs() < 1e-9);
        assert!(Tour::parse("0 1\n", "mem").is_err());
    }

    #[test]
    fn waypoint_set_checks_separation() {
        let poses = vec![Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(1.0, 0.0, 0.0)];
        assert!(WaypointSet::new(poses.clone(), 2.0).is_err());
        assert!(WaypointSet::new(poses, 1.0).is_ok());
        assert!(WaypointSet::new(vec![], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn sampled_waypoints_are_separated(
            steps in prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5), 1..200),
            min_sep in 0.5f64..4.0,
        ) {
            let mut x = 0.0;
            let mut y = 0.0;
            let mut samples = Vec::new();
            for (i, (dx, dy)) in steps.iter().enumerate() {
                samples.push(TimedPose { t: i as f64, pose: Pose2D::new(x, y, 0.0) });
                x += dx;
                y += dy;
            }
            let traj = Trajectory::from_samples(samples).unwrap();
            let w = sample_waypoints(&traj, min_sep).unwrap();
            prop_assert_eq!(w.poses()[0], traj.samples()[0].pose);
            for (i, a) in w.poses().iter().enumerate() {
                for b in &w.poses()[i + 1..] {
                    prop_assert!(a.distance(b) >= min_sep);
                }
            }
        }

        #[test]
        fn tour_is_closed_permutation(points in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..15)) {
            let g = graph_of(&points);
            let t = greedy_tsp(&g).unwrap();
            prop_assert_eq!(t.order.len(), points.len() + 1);
            prop_assert_eq!(t.order[0], 0);
            prop_assert_eq!(*t.order.last().unwrap(), 0);
            let mut interior = t.order[..points.len()].to_vec();
            interior.sort_unstable();
            prop_assert_eq!(interior, (0..points.len()).collect::<Vec<_>>());
            let sum: f64 = t.order.windows(2).map(|w| g.weight(w[0], w[1])).sum();
            prop_assert!((sum - t.total_length).abs() < 1e-9);
        }
    }
}
