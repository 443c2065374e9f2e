//! On-disk form of a semantic map: PGM + YAML for the grid, JSON for the
//! object layer, and a JSON-lines change log.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AssociationThresholds, MapChange, ObjectNode, SemanticMap, TopologicalMap};
use crate::error::{Error, Result};
use crate::occupancy::{load_map, save_map};

#[derive(Serialize)]
struct MapDocumentRef<'a> {
    thresholds: &'a AssociationThresholds,
    nodes: &'a [ObjectNode],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDocument {
    thresholds: AssociationThresholds,
    nodes: Vec<ObjectNode>,
}

/// `<base>.pgm`, `<base>.yaml` and `<base>.json`.
pub fn map_paths(base: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        base.with_extension("pgm"),
        base.with_extension("yaml"),
        base.with_extension("json"),
    )
}

fn json_error(path: &Path, e: &serde_json::Error) -> Error {
    Error::parse(
        path.display().to_string(),
        format!("line {} column {}", e.line(), e.column()),
        e.to_string(),
    )
}

impl SemanticMap {
    /// Object layer as pretty JSON, nodes sorted by id.
    pub fn to_json(&self) -> String {
        let doc = MapDocumentRef {
            thresholds: &self.thresholds,
            nodes: self.topo.nodes(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("map document serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, base: &Path) -> Result<()> {
        let (pgm, yaml, json) = map_paths(base);
        save_map(&self.occupancy, &pgm, &yaml)?;
        fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))
    }

    /// Reads the three files written by [`SemanticMap::save`]. Nothing is
    /// returned unless every file parses and validates.
    pub fn load(base: &Path) -> Result<Self> {
        let (_, yaml, json) = map_paths(base);
        let occupancy = load_map(&yaml)?;
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let doc: MapDocument = serde_json::from_str(&text).map_err(|e| json_error(&json, &e))?;
        let name = json.display().to_string();
        doc.thresholds
            .validate()
            .map_err(|e| Error::parse(&name, "thresholds", e.to_string()))?;
        for node in &doc.nodes {
            let loc = format!("node {}", node.id);
            if doc.thresholds.get(&node.category).is_none() {
                return Err(Error::parse(
                    &name,
                    &loc,
                    format!("category {} has no threshold", node.category),
                ));
            }
            if !(0.0..=1.0).contains(&node.confidence) || !node.position.is_finite() {
                return Err(Error::parse(
                    &name,
                    &loc,
                    "confidence must be in [0, 1] and position finite",
                ));
            }
            if !occupancy.meta().contains(node.position.xy()) {
                return Err(Error::parse(&name, &loc, "position lies outside the occupancy grid"));
            }
        }
        let topo = TopologicalMap::from_nodes(doc.nodes).map_err(|e| Error::parse(&name, "nodes", e.to_string()))?;
        Ok(Self {
            occupancy,
            topo,
            thresholds: doc.thresholds,
        })
    }
}

/// One JSON object per line.
pub fn write_change_log(changes: &[MapChange]) -> String {
    let mut out = String::new();
    for c in changes {
        let line = serde_json::to_string(c).expect("changes serialize");
        let _ = writeln!(out, "{line}");
    }
    out
}

pub fn read_change_log(text: &str, name: &str) -> Result<Vec<MapChange>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::parse(name, format!("line {} column {}", i + 1, e.column()), e.to_string()))
        })
        .collect()
}

pub fn load_change_log(path: &Path) -> Result<Vec<MapChange>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_change_log(&text, &path.display().to_string())
}
