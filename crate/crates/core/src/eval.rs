//! Retrieval-style evaluation of a predicted scene graph against ground
//! truth: one-to-one node matching, level-wise node recall, and triplet
//! recall over the overall, hierarchical, and tabletop subsets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assign::max_weight_matching;
use crate::model::{
    distance, Aabb3, GroundTruthScene, GtNode, MapNode, NodeId, NodeKind, SceneGraph, Tag,
};

/// Label similarity in [0, 1]; symmetric, with `similarity(a, a) = 1`.
pub trait LabelScorer {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Text scorer: exact match, token overlap after synonym folding, and a
/// table of known label pairs.
#[derive(Debug, Clone)]
pub struct SynonymScorer {
    aliases: BTreeMap<String, String>,
    pairs: BTreeMap<(String, String), f64>,
}

fn normalize_label(s: &str) -> String {
    s.to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl Default for SynonymScorer {
    fn default() -> Self {
        let mut s = SynonymScorer {
            aliases: BTreeMap::new(),
            pairs: BTreeMap::new(),
        };
        for (word, canon) in [
            ("pull", "handle"),
            ("dial", "knob"),
            ("stove", "oven"),
            ("cupboard", "cabinet"),
        ] {
            s.aliases.insert(word.into(), canon.into());
        }
        for (a, b, v) in [
            ("handle", "drawer handle", 0.8),
            ("handle", "door handle", 0.8),
            ("handle", "pot handle", 0.8),
            ("knob", "drawer knob", 0.8),
            ("knob", "control knob", 0.8),
            ("cap", "bottle cap", 0.8),
            ("lid", "pot lid", 0.8),
            ("control panel", "panel", 0.8),
            ("switch", "power switch", 0.8),
            ("button", "push button", 0.8),
            ("chest", "chest of drawers", 0.8),
            ("chest", "dresser", 0.8),
        ] {
            s.add_pair(a, b, v);
        }
        s
    }
}

impl SynonymScorer {
    pub fn add_pair(&mut self, a: &str, b: &str, score: f64) {
        let (a, b) = (normalize_label(a), normalize_label(b));
        let key = if a <= b { (a, b) } else { (b, a) };
        self.pairs.insert(key, score.clamp(0.0, 1.0));
    }

    fn tokens(&self, s: &str) -> BTreeSet<String> {
        s.split_whitespace()
            .map(|t| {
                self.aliases
                    .get(t)
                    .cloned()
                    .unwrap_or_else(|| t.to_string())
            })
            .collect()
    }
}

impl LabelScorer for SynonymScorer {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        let (a, b) = (normalize_label(a), normalize_label(b));
        if a == b {
            return 1.0;
        }
        let ta = self.tokens(&a);
        let tb = self.tokens(&b);
        let union = ta.union(&tb).count();
        let overlap = if union == 0 {
            0.0
        } else {
            ta.intersection(&tb).count() as f64 / union as f64
        };
        let key = if a <= b { (a, b) } else { (b, a) };
        let table = self.pairs.get(&key).copied().unwrap_or(0.0);
        overlap.max(table)
    }
}

/// Similarity under the default scorer.
pub fn label_similarity(a: &str, b: &str) -> f64 {
    SynonymScorer::default().similarity(a, b)
}

/// When a matched pair counts as a hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "k")]
pub enum HitCriterion {
    /// Label similarity strictly above the level's threshold.
    Threshold,
    /// The true label ranks within the top `k` ground-truth labels.
    RecallAtK(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub node_threshold: f64,
    pub triplet_threshold: f64,
    pub criterion: HitCriterion,
    /// Weight of the spatial term in the matching objective; the label term
    /// takes the rest.
    pub spatial_weight: f64,
    /// Centroid distance under which boxes that do not overlap may still match.
    pub gate_distance: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            node_threshold: 0.75,
            triplet_threshold: 0.70,
            criterion: HitCriterion::Threshold,
            spatial_weight: 0.5,
            gate_distance: 0.25,
        }
    }
}

/// Geometry and label of a node as seen by the matcher.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    pub bbox: Aabb3,
}

impl From<&GtNode> for EvalNode {
    fn from(n: &GtNode) -> Self {
        EvalNode {
            id: n.id,
            kind: n.kind,
            label: n.category.clone(),
            bbox: n.bbox,
        }
    }
}

impl From<&MapNode> for EvalNode {
    fn from(n: &MapNode) -> Self {
        EvalNode {
            id: n.id,
            kind: n.kind,
            label: n.category.clone(),
            bbox: n.bbox3d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMatch {
    pub gt: NodeId,
    pub pred: NodeId,
    pub label_similarity: f64,
    pub spatial: f64,
}

fn spatial_score(gt: &Aabb3, pred: &Aabb3, gate_distance: f64) -> Option<f64> {
    let iou = gt.iou(pred);
    let d = distance(gt.center(), pred.center());
    if !(iou > 0.0 || d < gate_distance) {
        return None;
    }
    Some(iou.max(1.0 - d / gate_distance).clamp(0.0, 1.0))
}

fn is_hit(
    scorer: &dyn LabelScorer,
    pred_label: &str,
    gt_label: &str,
    gt_labels: &BTreeSet<&str>,
    criterion: HitCriterion,
    threshold: f64,
) -> Option<f64> {
    let sim = scorer.similarity(pred_label, gt_label);
    let hit = match criterion {
        HitCriterion::Threshold => sim > threshold,
        HitCriterion::RecallAtK(k) => {
            let better = gt_labels
                .iter()
                .filter(|l| scorer.similarity(pred_label, l) > sim)
                .count();
            better < k
        }
    };
    hit.then_some(sim)
}

/// Optimal one-to-one matching of ground-truth and predicted nodes. Only
/// pairs of the same level that pass the spatial gate and the hit criterion
/// are admissible, so every returned match is a hit.
pub fn match_nodes(
    gt: &[EvalNode],
    pred: &[EvalNode],
    threshold: f64,
    params: &EvalParams,
    scorer: &dyn LabelScorer,
) -> Vec<NodeMatch> {
    let gt_labels: BTreeSet<&str> = gt.iter().map(|n| n.label.as_str()).collect();
    let mut detail: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    let weights: Vec<Vec<Option<f64>>> = gt
        .iter()
        .enumerate()
        .map(|(i, g)| {
            pred.iter()
                .enumerate()
                .map(|(j, p)| {
                    if g.kind != p.kind {
                        return None;
                    }
                    let spatial = spatial_score(&g.bbox, &p.bbox, params.gate_distance)?;
                    let sim = is_hit(
                        scorer,
                        &p.label,
                        &g.label,
                        &gt_labels,
                        params.criterion,
                        threshold,
                    )?;
                    detail.insert((i, j), (sim, spatial));
                    let w = params.spatial_weight * spatial + (1.0 - params.spatial_weight) * sim;
                    Some(w + 1e-9)
                })
                .collect()
        })
        .collect();
    max_weight_matching(&weights)
        .into_iter()
        .map(|(i, j)| {
            let (label_similarity, spatial) = detail[&(i, j)];
            NodeMatch {
                gt: gt[i].id,
                pred: pred[j].id,
                label_similarity,
                spatial,
            }
        })
        .collect()
}

/// Hits over total; `recall` is `None` for an empty subset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: usize,
    pub total: usize,
    pub recall: Option<f64>,
}

impl Ratio {
    fn count(&mut self, hit: bool) {
        self.total += 1;
        self.hits += usize::from(hit);
        self.recall = Some(self.hits as f64 / self.total as f64);
    }

    /// Recall with empty subsets read as 0.
    pub fn value(&self) -> f64 {
        self.recall.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeRecall {
    pub objects: Ratio,
    pub carriers: Ratio,
    pub units: Ratio,
    pub tabletop: Ratio,
    pub overall: Ratio,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TripletRecall {
    pub overall: Ratio,
    pub hierarchical: Ratio,
    pub tabletop: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletOutcome {
    pub object: NodeId,
    pub carrier: Option<NodeId>,
    pub unit: NodeId,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nodes: NodeRecall,
    pub triplets: TripletRecall,
    pub node_matches: Vec<NodeMatch>,
    pub triplet_outcomes: Vec<TripletOutcome>,
}

fn gt_eval_nodes(gt: &GroundTruthScene) -> Vec<EvalNode> {
    gt.nodes.iter().map(EvalNode::from).collect()
}

fn pred_eval_nodes(pred: &SceneGraph) -> Vec<EvalNode> {
    pred.nodes.iter().map(EvalNode::from).collect()
}

/// Level-wise node recall from a match set.
pub fn node_recall(gt: &GroundTruthScene, matches: &[NodeMatch]) -> NodeRecall {
    let matched: BTreeSet<NodeId> = matches.iter().map(|m| m.gt).collect();
    let mut r = NodeRecall::default();
    for n in &gt.nodes {
        let hit = matched.contains(&n.id);
        match n.kind {
            NodeKind::Object => r.objects.count(hit),
            NodeKind::FunctionalCarrier => r.carriers.count(hit),
            NodeKind::InteractiveUnit => r.units.count(hit),
        }
        if n.tags.contains(&Tag::Tabletop) {
            r.tabletop.count(hit);
        }
        r.overall.count(hit);
    }
    r
}

/// A triplet is hit when all members are matched and the prediction holds
/// the same chain; a pair needs the direct `o ← u` edge.
pub fn triplet_recall(
    gt: &GroundTruthScene,
    pred: &SceneGraph,
    matches: &[NodeMatch],
) -> (TripletRecall, Vec<TripletOutcome>) {
    let map: BTreeMap<NodeId, NodeId> = matches.iter().map(|m| (m.gt, m.pred)).collect();
    let mut r = TripletRecall::default();
    let mut outcomes = Vec::new();
    let record = |tags: &BTreeSet<Tag>, hit: bool, r: &mut TripletRecall| {
        r.overall.count(hit);
        if tags.contains(&Tag::Hierarchical) {
            r.hierarchical.count(hit);
        }
        if tags.contains(&Tag::Tabletop) {
            r.tabletop.count(hit);
        }
    };
    for t in &gt.triplets {
        let hit = match (map.get(&t.object), map.get(&t.carrier), map.get(&t.unit)) {
            (Some(&o), Some(&c), Some(&u)) => pred.has_edge(o, c) && pred.has_edge(c, u),
            _ => false,
        };
        record(&t.tags, hit, &mut r);
        outcomes.push(TripletOutcome {
            object: t.object,
            carrier: Some(t.carrier),
            unit: t.unit,
            hit,
        });
    }
    for p in &gt.pairs {
        let hit = match (map.get(&p.object), map.get(&p.unit)) {
            (Some(&o), Some(&u)) => pred.has_edge(o, u),
            _ => false,
        };
        record(&p.tags, hit, &mut r);
        outcomes.push(TripletOutcome {
            object: p.object,
            carrier: None,
            unit: p.unit,
            hit,
        });
    }
    (r, outcomes)
}

/// Full evaluation with a custom label scorer.
pub fn evaluate_with(
    gt: &GroundTruthScene,
    pred: &SceneGraph,
    params: &EvalParams,
    scorer: &dyn LabelScorer,
) -> EvalReport {
    let g = gt_eval_nodes(gt);
    let p = pred_eval_nodes(pred);
    let node_matches = match_nodes(&g, &p, params.node_threshold, params, scorer);
    let triplet_matches = match_nodes(&g, &p, params.triplet_threshold, params, scorer);
    let (triplets, triplet_outcomes) = triplet_recall(gt, pred, &triplet_matches);
    EvalReport {
        nodes: node_recall(gt, &node_matches),
        triplets,
        node_matches,
        triplet_outcomes,
    }
}

pub fn evaluate(gt: &GroundTruthScene, pred: &SceneGraph, params: &EvalParams) -> EvalReport {
    evaluate_with(gt, pred, params, &SynonymScorer::default())
}

/// Checks that a prediction reproduces the ground truth exactly: one
/// predicted node per GT node, and the same edges with the same relations
/// under that correspondence. Returns a description of the first mismatch.
pub fn matches_ground_truth(
    gt: &GroundTruthScene,
    pred: &SceneGraph,
) -> std::result::Result<(), String> {
    if gt.nodes.len() != pred.nodes.len() {
        return Err(format!(
            "{} predicted nodes for {} ground-truth nodes",
            pred.nodes.len(),
            gt.nodes.len()
        ));
    }
    let params = EvalParams::default();
    let matches = match_nodes(
        &gt_eval_nodes(gt),
        &pred_eval_nodes(pred),
        params.node_threshold,
        &params,
        &SynonymScorer::default(),
    );
    if matches.len() != gt.nodes.len() {
        return Err(format!(
            "only {} of {} nodes matched",
            matches.len(),
            gt.nodes.len()
        ));
    }
    let to_pred: BTreeMap<NodeId, NodeId> = matches.iter().map(|m| (m.gt, m.pred)).collect();
    let mut expected: Vec<(NodeId, NodeId, crate::model::Relation)> = gt
        .edges()
        .into_iter()
        .map(|e| (to_pred[&e.parent], to_pred[&e.child], e.relation))
        .collect();
    let mut actual: Vec<_> = pred
        .edges
        .iter()
        .map(|e| (e.parent, e.child, e.relation))
        .collect();
    expected.sort_unstable();
    actual.sort_unstable();
    if expected != actual {
        let missing: Vec<_> = expected.iter().filter(|e| !actual.contains(e)).collect();
        let extra: Vec<_> = actual.iter().filter(|e| !expected.contains(e)).collect();
        return Err(format!(
            "edge sets differ: missing {missing:?}, extra {extra:?}"
        ));
    }
    Ok(())
}

pub const CSV_HEADER: &str = "scene,objects,carriers,units,tabletop_nodes,overall_nodes,triplets_overall,triplets_hierarchical,triplets_tabletop";

fn cell(r: &Ratio) -> String {
    r.recall.map_or(String::new(), |v| format!("{v:.4}"))
}

impl EvalReport {
    /// One CSV row in the column order of [`CSV_HEADER`].
    pub fn csv_row(&self, scene: &str) -> String {
        let n = &self.nodes;
        let t = &self.triplets;
        let mut s = scene.to_string();
        for r in [
            &n.objects,
            &n.carriers,
            &n.units,
            &n.tabletop,
            &n.overall,
            &t.overall,
            &t.hierarchical,
            &t.tabletop,
        ] {
            let _ = write!(s, ",{}", cell(r));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_similarity_examples() {
        assert_eq!(label_similarity("handle", "handle"), 1.0);
        assert_eq!(label_similarity("Drawer_Handle", "drawer handle"), 1.0);
        assert!(label_similarity("handle", "drawer handle") >= 0.75);
        assert_eq!(label_similarity("handle", "window"), 0.0);
        assert_eq!(label_similarity("pull", "handle"), 1.0);
        for (a, b) in [("knob", "drawer knob"), ("oven", "stove"), ("cap", "lid")] {
            assert_eq!(label_similarity(a, b), label_similarity(b, a));
        }
    }

    #[test]
    fn recall_at_k_ranks_gt_labels() {
        let scorer = SynonymScorer::default();
        let labels: BTreeSet<&str> = ["handle", "drawer handle", "knob"].into();
        // "drawer handle" ranks second for a prediction labelled "handle"
        assert!(is_hit(
            &scorer,
            "handle",
            "drawer handle",
            &labels,
            HitCriterion::RecallAtK(2),
            0.0
        )
        .is_some());
        assert!(is_hit(
            &scorer,
            "handle",
            "drawer handle",
            &labels,
            HitCriterion::RecallAtK(1),
            0.0
        )
        .is_none());
    }
}
