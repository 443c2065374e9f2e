#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use semmap::exploration::{explore, ExploreOutcome};
use semmap::occupancy::TrinaryGrid;
use semmap::scenario::Scenario;
use semmap::semantic::{construct, PassOutcome};
use semmap::simworld::WorldModel;
use semmap::traversal::{build_graph, greedy_tsp, sample_waypoints, Tour};

pub fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("golden scenario loads")
}

/// Exploration, tour and construction outputs of one scenario.
pub struct Pipeline {
    pub explored: ExploreOutcome,
    pub occupancy: TrinaryGrid,
    pub tour: Tour,
    pub built: PassOutcome,
}

pub fn run_pipeline(s: &Scenario) -> Pipeline {
    let c = &s.config;
    let explored = explore(&s.world, s.world_spec.start, &c.exploration, c.seed).expect("exploration runs");
    let occupancy = explored.grid.to_trinary(&c.exploration.mapping);
    let waypoints = sample_waypoints(&explored.trajectory, c.traversal.min_separation).expect("waypoints");
    let tour = greedy_tsp(&build_graph(&waypoints)).expect("tour");
    let built = construct(&s.world, &occupancy, &tour, &c.semantic, c.seed).expect("construction runs");
    Pipeline {
        explored,
        occupancy,
        tour,
        built,
    }
}

pub fn world_counts(world: &WorldModel) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for o in world.objects() {
        *counts.entry(o.category.clone()).or_insert(0) += 1;
    }
    counts
}
