//! Comparison of a semantic map against ground truth: node counts, one-to-one
//! matching, precision/recall and average precision.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantic::{AssociationThresholds, SemanticMap, TopologicalMap};
use crate::simworld::{GtObject, WorldModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub node_id: u64,
    pub gt_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryMatch {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// In the order they were admitted, i.e. ascending distance.
    pub pairs: Vec<MatchedPair>,
}

/// Per-category matching results, keyed by category.
pub type MatchReport = BTreeMap<String, CategoryMatch>;

/// Greedy one-to-one matching per category: pairs are admitted in ascending
/// planar distance (ties by node id, then ground-truth order) while both ends
/// are unmatched and the distance is within that category's radius.
pub fn match_to_gt(topo: &TopologicalMap, gt: &[GtObject], radii: &AssociationThresholds) -> Result<MatchReport> {
    let categories: BTreeSet<&str> = topo
        .nodes()
        .iter()
        .map(|n| n.category.as_str())
        .chain(gt.iter().map(|o| o.category.as_str()))
        .collect();
    let mut report = MatchReport::new();
    for category in categories {
        let radius = radii
            .get(category)
            .filter(|r| *r > 0.0)
            .ok_or_else(|| Error::InvalidParam(format!("no positive match radius for category {category}")))?;
        let nodes: Vec<_> = topo.nodes().iter().filter(|n| n.category == category).collect();
        let objects: Vec<_> = gt.iter().filter(|o| o.category == category).collect();
        let mut candidates = Vec::new();
        for (ni, node) in nodes.iter().enumerate() {
            for (gi, obj) in objects.iter().enumerate() {
                let d = node.position.xy().distance(&obj.center);
                if d <= radius {
                    candidates.push((d, node.id, gi, ni));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut node_used = vec![false; nodes.len()];
        let mut gt_used = vec![false; objects.len()];
        let mut entry = CategoryMatch::default();
        for (d, node_id, gi, ni) in candidates {
            if node_used[ni] || gt_used[gi] {
                continue;
            }
            node_used[ni] = true;
            gt_used[gi] = true;
            entry.pairs.push(MatchedPair {
                node_id,
                gt_id: objects[gi].id.clone(),
                distance: d,
            });
        }
        entry.tp = entry.pairs.len();
        entry.fp = nodes.len() - entry.tp;
        entry.fn_ = objects.len() - entry.tp;
        report.insert(category.to_string(), entry);
    }
    Ok(report)
}

/// `(tp/(tp+fp), tp/(tp+fn))`, each 0 when its denominator is 0.
pub fn precision_recall(tp: usize, fp: usize, fn_: usize) -> (f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    (ratio(tp, tp + fp), ratio(tp, tp + fn_))
}

/// Area under the monotone precision envelope of the ranked list. Records are
/// `(confidence, is_true_positive)`; they are ranked by descending confidence,
/// ties keeping input order. Zero when `gt_count` is 0.
pub fn average_precision(records: &[(f64, bool)], gt_count: usize) -> f64 {
    if gt_count == 0 {
        return 0.0;
    }
    let mut ranked = records.to_vec();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(ranked.len());
    for (k, &(_, hit)) in ranked.iter().enumerate() {
        tp += usize::from(hit);
        curve.push((tp as f64 / (k + 1) as f64, tp as f64 / gt_count as f64));
    }
    let mut envelope = 0.0f64;
    for point in curve.iter_mut().rev() {
        envelope = envelope.max(point.0);
        point.0 = envelope;
    }
    let mut ap = 0.0;
    let mut last_recall = 0.0;
    for (precision, recall) in curve {
        ap += (recall - last_recall) * precision;
        last_recall = recall;
    }
    ap.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub gt: usize,
    pub mapped: usize,
}

/// Ground-truth object count and node count per category.
pub fn count_report(map: &SemanticMap, world: &WorldModel) -> BTreeMap<String, CountRow> {
    let mut out: BTreeMap<String, CountRow> = world
        .categories()
        .iter()
        .map(|c| (c.clone(), CountRow { gt: 0, mapped: 0 }))
        .collect();
    for obj in world.objects() {
        out.entry(obj.category.clone())
            .or_insert(CountRow { gt: 0, mapped: 0 })
            .gt += 1;
    }
    for node in map.topo.nodes() {
        out.entry(node.category.clone())
            .or_insert(CountRow { gt: 0, mapped: 0 })
            .mapped += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEval {
    pub gt: usize,
    pub mapped: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub categories: BTreeMap<String, CategoryEval>,
    /// Mean AP over categories that have ground truth or nodes.
    #[serde(rename = "mAP")]
    pub mean_ap: f64,
    pub matches: MatchReport,
}

/// Full comparison of `map` against the objects of `world`. `radii` defaults
/// to the map's own association thresholds.
pub fn evaluate(map: &SemanticMap, world: &WorldModel, radii: Option<&AssociationThresholds>) -> Result<EvalReport> {
    let radii = radii.unwrap_or(&map.thresholds);
    let matches = match_to_gt(&map.topo, world.objects(), radii)?;
    let counts = count_report(map, world);
    let mut categories = BTreeMap::new();
    let mut ap_sum = 0.0;
    let mut ap_count = 0usize;
    for (category, row) in &counts {
        let m = matches.get(category).cloned().unwrap_or_default();
        let matched: BTreeSet<u64> = m.pairs.iter().map(|p| p.node_id).collect();
        let records: Vec<(f64, bool)> = map
            .topo
            .nodes()
            .iter()
            .filter(|n| &n.category == category)
            .map(|n| (n.confidence, matched.contains(&n.id)))
            .collect();
        let ap = average_precision(&records, row.gt);
        if row.gt > 0 || row.mapped > 0 {
            ap_sum += ap;
            ap_count += 1;
        }
        let (precision, recall) = precision_recall(m.tp, m.fp, m.fn_);
        categories.insert(
            category.clone(),
            CategoryEval {
                gt: row.gt,
                mapped: row.mapped,
                tp: m.tp,
                fp: m.fp,
                fn_: m.fn_,
                precision,
                recall,
                ap,
            },
        );
    }
    Ok(EvalReport {
        categories,
        mean_ap: if ap_count == 0 { 0.0 } else { ap_sum / ap_count as f64 },
        matches,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Aligned plain-text tables: object counts, then detection quality.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>6} {:>8}", "category", "gt", "mapped");
        for (c, e) in &self.categories {
            let _ = writeln!(out, "{:<10} {:>6} {:>8}", c, e.gt, e.mapped);
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>5} {:>5} {:>9} {:>7} {:>6}",
            "category", "TP", "FP", "FN", "precision", "recall", "AP"
        );
        for (c, e) in &self.categories {
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:>5} {:>5} {:>9.2} {:>7.2} {:>6.3}",
                c, e.tp, e.fp, e.fn_, e.precision, e.recall, e.ap
            );
        }
        let _ = writeln!(out, "mAP {:.3}", self.mean_ap);
        out
    }
}
