//! Scenario files: a world reference, parameter blocks for every phase and a
//! seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exploration::ExploreParams;
use crate::semantic::{AssociationThresholds, SemanticParams};
use crate::simworld::{WorldModel, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraversalParams {
    /// Minimum pairwise waypoint separation, meters.
    pub min_separation: f64,
}

impl Default for TraversalParams {
    fn default() -> Self {
        Self { min_separation: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Per-category match radius; the map's association thresholds when absent.
    pub match_radius: Option<AssociationThresholds>,
}

/// Phase names other than these refer to update phases of the world file.
pub const BUILTIN_PHASES: [&str; 4] = ["explore", "plan", "construct", "eval"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// World file, relative to the scenario file.
    pub world: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub exploration: ExploreParams,
    #[serde(default)]
    pub traversal: TraversalParams,
    #[serde(default)]
    pub semantic: SemanticParams,
    #[serde(default)]
    pub evaluation: EvalParams,
    /// Order used by `run-all`; defaults to explore, plan, construct, every
    /// world update phase, eval.
    #[serde(default)]
    pub phases: Option<Vec<String>>,
}

/// A parsed scenario with its world loaded and validated.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub path: PathBuf,
    pub config: ScenarioConfig,
    pub world_spec: WorldSpec,
    pub world: WorldModel,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::parse(
            path.display().to_string(),
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let config: ScenarioConfig = read_json(path)?;
        let world_path = path.parent().unwrap_or_else(|| Path::new(".")).join(&config.world);
        let world_spec: WorldSpec = read_json(&world_path)?;
        let world = WorldModel::from_spec(&world_spec)?;
        let scenario = Self {
            path: path.to_path_buf(),
            config,
            world_spec,
            world,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.exploration.validate()?;
        c.semantic.validate(&self.world)?;
        if c.traversal.min_separation.is_nan() || c.traversal.min_separation < 0.0 {
            return Err(Error::InvalidParam(
                "traversal.min_separation must be non-negative".into(),
            ));
        }
        if let Some(radii) = &c.evaluation.match_radius {
            radii.validate()?;
        }
        for phase in self.phases() {
            if !BUILTIN_PHASES.contains(&phase.as_str()) {
                self.phase_events_exist(&phase)?;
            }
        }
        Ok(())
    }

    fn phase_events_exist(&self, name: &str) -> Result<()> {
        if self.world_spec.phases.iter().any(|p| p.name == name) {
            Ok(())
        } else {
            Err(Error::UnknownPhase {
                name: name.to_string(),
                defined: self.update_phase_names().join(", "),
            })
        }
    }

    pub fn update_phase_names(&self) -> Vec<String> {
        self.world_spec.phases.iter().map(|p| p.name.clone()).collect()
    }

    pub fn phases(&self) -> Vec<String> {
        match &self.config.phases {
            Some(p) => p.clone(),
            None => ["explore", "plan", "construct"]
                .iter()
                .map(|s| s.to_string())
                .chain(self.update_phase_names())
                .chain(std::iter::once("eval".to_string()))
                .collect(),
        }
    }

    /// The world after applying the named update phase to the base world.
    pub fn world_for_phase(&self, phase: &str) -> Result<WorldModel> {
        crate::simworld::apply_scenario_events(&self.world, &self.world_spec.phases, phase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const WORLD: &str = r#"{
        "bounds": [6.0, 6.0],
        "start": {"x": 3.0, "y": 3.0},
        "obstacles": [{"type": "rect", "min": [0.0, 0.0], "max": [6.0, 0.2]}],
        "objects": [{"id": "c1", "category": "chair", "center": [2.0, 2.0], "radius": 0.25}],
        "phases": [{"name": "gone", "events": [{"remove": "c1"}]}]
    }"#;

    fn write_scenario(dir: &Path, body: &str) -> PathBuf {
        fs::write(dir.join("w.json"), WORLD).unwrap();
        let path = dir.join("s.json");
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn loads_and_lists_phases() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_scenario(dir.path(), r#"{"world": "w.json", "seed": 5}"#);
        let s = Scenario::load(&path).unwrap();
        assert_eq!(s.config.seed, 5);
        assert_eq!(s.phases(), vec!["explore", "plan", "construct", "gone", "eval"]);
        assert!(s.world_for_phase("gone").unwrap().objects().is_empty());
        assert!(matches!(s.world_for_phase("nope"), Err(Error::UnknownPhase { .. })));
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_scenario(dir.path(), r#"{"world": "w.json", "seed": 5, "colour": 1}"#);
        let err = Scenario::load(&path).unwrap_err();
        assert!(err.is_config_error(), "{err}");
        assert!(err.to_string().contains("colour"), "{err}");
        let path = write_scenario(
            dir.path(),
            r#"{"world": "w.json", "seed": 5, "exploration": {"mapping": {"l_oc": 1}}}"#,
        );
        assert!(Scenario::load(&path).is_err());
    }

    #[test]
    fn missing_world_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        fs::write(&path, r#"{"world": "absent.json", "seed": 1}"#).unwrap();
        let err = Scenario::load(&path).unwrap_err();
        assert!(err.to_string().contains("absent.json"), "{err}");
    }

    #[test]
    fn undefined_phase_in_list_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_scenario(
            dir.path(),
            r#"{"world": "w.json", "seed": 1, "phases": ["explore", "later"]}"#,
        );
        let err = Scenario::load(&path).unwrap_err();
        assert!(err.to_string().contains("gone"), "{err}");
    }

    #[test]
    fn invalid_parameters_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_scenario(
            dir.path(),
            r#"{"world": "w.json", "seed": 1, "exploration": {"exploration": {"record_period": 0}}}"#,
        );
        assert!(matches!(Scenario::load(&path), Err(Error::InvalidParam(_))));
    }
}
