//! Frame-to-map node association: multi-cue pair score, scale-adaptive
//! gating, maximum-weight one-to-one matching, and node state updates.

use serde::{Deserialize, Serialize};

use crate::assign::max_weight_matching;
use crate::error::{Error, Result};
use crate::model::{
    cosine, distance, Aabb3, BBox2, Detection2D, Intrinsics, MapNode, NodeId, Pose,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationWeights {
    pub w_iou: f64,
    pub w_geo: f64,
    pub w_app: f64,
    pub w_sem: f64,
    /// Width of the Gaussian distance kernel, metres.
    pub sigma: f64,
}

impl Default for AssociationWeights {
    fn default() -> Self {
        AssociationWeights {
            w_iou: 0.5,
            w_geo: 0.5 / 3.0,
            w_app: 0.5 / 3.0,
            w_sem: 0.5 / 3.0,
            sigma: 0.10,
        }
    }
}

impl AssociationWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_iou, self.w_geo, self.w_app, self.w_sem];
        if w.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid(
                "association weights",
                "weights must be non-negative",
            ));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "association weights",
                format!("weights sum to {s}"),
            ));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid(
                "association weights",
                "sigma must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub tau_ass: f64,
    /// Absolute cap on the centroid distance gate, metres.
    pub dist_cap: f64,
    /// Fraction of the node's box diagonal used by the distance gate.
    pub dist_frac: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        GateParams {
            tau_ass: 0.45,
            dist_cap: 0.15,
            dist_frac: 0.5,
        }
    }
}

impl GateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_ass > 0.0 && self.tau_ass < 1.0) {
            return Err(Error::invalid("gate params", "tau_ass must lie in (0, 1)"));
        }
        if !(self.dist_cap > 0.0 && self.dist_frac > 0.0) {
            return Err(Error::invalid(
                "gate params",
                "distance gates must be positive",
            ));
        }
        Ok(())
    }

    /// Scale-adaptive distance threshold `min(cap, frac · diag)`.
    pub fn distance_threshold(&self, diag: f64) -> f64 {
        self.dist_cap.min(self.dist_frac * diag)
    }
}

/// Which pair score drives matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// Projection IoU + centroid kernel + appearance + semantics.
    #[default]
    MultiCue,
    /// 3D box IoU + semantic cosine, equal weights.
    Box3dBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationParams {
    pub weights: AssociationWeights,
    pub gates: GateParams,
    /// Appearance EMA factor.
    pub alpha: f64,
    pub mode: ScoreMode,
}

impl Default for AssociationParams {
    fn default() -> Self {
        AssociationParams {
            weights: AssociationWeights::default(),
            gates: GateParams::default(),
            alpha: 0.3,
            mode: ScoreMode::MultiCue,
        }
    }
}

/// Camera state of the frame being associated.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext<'a> {
    pub pose: &'a Pose,
    pub intrinsics: &'a Intrinsics,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

/// Projects a node's points into the frame and returns the box spanned by the
/// 5th–95th percentiles of the image coordinates, clipped to the image.
/// Points behind the camera are dropped; fewer than 3 projected points
/// yield `None`.
pub fn project_node(node: &MapNode, pose: &Pose, intrinsics: &Intrinsics) -> Option<BBox2> {
    let mut us = Vec::with_capacity(node.points.len());
    let mut vs = Vec::with_capacity(node.points.len());
    for p in &node.points {
        if let Some([u, v]) = intrinsics.project(pose.world_to_camera(*p)) {
            us.push(u);
            vs.push(v);
        }
    }
    if us.len() < 3 {
        return None;
    }
    us.sort_unstable_by(f64::total_cmp);
    vs.sort_unstable_by(f64::total_cmp);
    let raw = BBox2::new(
        percentile(&us, 0.05),
        percentile(&vs, 0.05),
        percentile(&us, 0.95),
        percentile(&vs, 0.95),
    );
    raw.intersect(&intrinsics.image_box())
}

/// Individual cues of the pair score, before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerms {
    pub iou: f64,
    /// Centroid distance, `None` when the detection has no 3D centre.
    pub distance: Option<f64>,
    pub appearance: f64,
    pub semantic: f64,
}

/// Semantic compatibility: embedding cosine when both sides carry
/// embeddings, exact category match otherwise. Clamped to [0, 1].
pub fn semantic_similarity(det: &Detection2D, node: &MapNode) -> f64 {
    match (&det.embedding, &node.embedding) {
        (Some(a), Some(b)) => cosine(a, b).clamp(0.0, 1.0),
        _ => {
            if det.category == node.category {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub fn pair_terms(det: &Detection2D, node: &MapNode, projection: Option<&BBox2>) -> PairTerms {
    PairTerms {
        iou: projection.map_or(0.0, |p| det.bbox.iou(p)),
        distance: det.centroid3d.map(|c| distance(c, node.centroid)),
        appearance: cosine(&det.appearance, &node.appearance).clamp(0.0, 1.0),
        semantic: semantic_similarity(det, node),
    }
}

pub fn combine(terms: &PairTerms, w: &AssociationWeights) -> f64 {
    let geo = terms
        .distance
        .map_or(0.0, |d| (-d * d / (2.0 * w.sigma * w.sigma)).exp());
    let s =
        w.w_iou * terms.iou + w.w_geo * geo + w.w_app * terms.appearance + w.w_sem * terms.semantic;
    s.clamp(0.0, 1.0)
}

/// Multi-cue association score of a detection against a map node.
pub fn association_score(
    det: &Detection2D,
    node: &MapNode,
    weights: &AssociationWeights,
    ctx: FrameContext<'_>,
) -> f64 {
    let proj = project_node(node, ctx.pose, ctx.intrinsics);
    combine(&pair_terms(det, node, proj.as_ref()), weights)
}

/// A pair is admissible when the centroid lies within the scale-adaptive
/// radius, the projected boxes overlap, and the score clears `tau_ass`.
pub fn gate(terms: &PairTerms, node: &MapNode, params: &GateParams, score: f64) -> bool {
    let Some(d) = terms.distance else {
        return false;
    };
    d < params.distance_threshold(node.diag) && terms.iou > 0.0 && score >= params.tau_ass
}

fn detection_box(det: &Detection2D) -> Option<Aabb3> {
    Aabb3::from_points(&det.points).or_else(|| det.centroid3d.map(|c| Aabb3 { min: c, max: c }))
}

/// Score and admissibility of one (detection, node) pair.
pub fn score_pair(
    det: &Detection2D,
    node: &MapNode,
    projection: Option<&BBox2>,
    params: &AssociationParams,
) -> Option<f64> {
    if det.kind != node.kind || det.centroid3d.is_none() {
        return None;
    }
    match params.mode {
        ScoreMode::MultiCue => {
            let terms = pair_terms(det, node, projection);
            let s = combine(&terms, &params.weights);
            gate(&terms, node, &params.gates, s).then_some(s)
        }
        ScoreMode::Box3dBaseline => {
            let iou = detection_box(det).map_or(0.0, |b| b.iou(&node.bbox3d));
            let s = 0.5 * iou + 0.5 * semantic_similarity(det, node);
            (iou > 0.0 && s >= params.gates.tau_ass).then_some(s)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatches {
    /// `(detection index, node index, score)`, sorted by detection index.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_dets: Vec<usize>,
    pub unmatched_nodes: Vec<usize>,
}

/// Gated score matrix, `None` for inadmissible pairs.
pub fn score_matrix(
    detections: &[Detection2D],
    nodes: &[MapNode],
    ctx: FrameContext<'_>,
    params: &AssociationParams,
) -> Vec<Vec<Option<f64>>> {
    let projections: Vec<Option<BBox2>> = match params.mode {
        ScoreMode::MultiCue => nodes
            .iter()
            .map(|n| project_node(n, ctx.pose, ctx.intrinsics))
            .collect(),
        ScoreMode::Box3dBaseline => vec![None; nodes.len()],
    };
    detections
        .iter()
        .map(|d| {
            nodes
                .iter()
                .zip(&projections)
                .map(|(n, p)| score_pair(d, n, p.as_ref(), params))
                .collect()
        })
        .collect()
}

/// Solves the one-to-one matching on an already gated score matrix.
pub fn match_scores(scores: &[Vec<Option<f64>>], n_nodes: usize) -> FrameMatches {
    let matched = max_weight_matching(scores);
    let mut det_used = vec![false; scores.len()];
    let mut node_used = vec![false; n_nodes];
    let pairs: Vec<(usize, usize, f64)> = matched
        .into_iter()
        .map(|(d, n)| {
            det_used[d] = true;
            node_used[n] = true;
            (d, n, scores[d][n].expect("matched pairs are admissible"))
        })
        .collect();
    FrameMatches {
        pairs,
        unmatched_dets: (0..scores.len()).filter(|&i| !det_used[i]).collect(),
        unmatched_nodes: (0..n_nodes).filter(|&j| !node_used[j]).collect(),
    }
}

/// Associates one frame's detections with the map.
pub fn match_frame(
    detections: &[Detection2D],
    nodes: &[MapNode],
    ctx: FrameContext<'_>,
    params: &AssociationParams,
) -> FrameMatches {
    let scores = score_matrix(detections, nodes, ctx, params);
    match_scores(&scores, nodes.len())
}

fn observation_points(det: &Detection2D) -> Vec<[f64; 3]> {
    if det.points.is_empty() {
        det.centroid3d.into_iter().collect()
    } else {
        det.points.clone()
    }
}

fn renormalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Folds a matched detection into its node.
pub fn update_node(node: &mut MapNode, det: &Detection2D, frame_id: u64, alpha: f64) {
    node.fuse_points(&observation_points(det));
    if node.appearance.len() == det.appearance.len() {
        for (h, x) in node.appearance.iter_mut().zip(&det.appearance) {
            *h = (1.0 - alpha) * *h + alpha * x;
        }
        renormalize(&mut node.appearance);
    } else {
        node.appearance = det.appearance.clone();
    }
    match (&mut node.embedding, &det.embedding) {
        (Some(e), Some(x)) if e.len() == x.len() => {
            let n = node.obs_count as f64;
            for (a, b) in e.iter_mut().zip(x) {
                *a = (*a * n + b) / (n + 1.0);
            }
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                e.iter_mut().for_each(|v| *v /= norm);
            }
        }
        (None, Some(x)) => node.embedding = Some(x.clone()),
        _ => {}
    }
    node.obs_count += 1;
    node.last_seen = frame_id;
}

/// Creates a map node from an unmatched detection. Returns `None` when the
/// detection carries no 3D evidence.
pub fn spawn_node(det: &Detection2D, id: NodeId) -> Option<MapNode> {
    det.centroid3d?;
    Some(MapNode::new(
        id,
        det.kind,
        det.category.clone(),
        &observation_points(det),
        det.appearance.clone(),
        det.embedding.clone(),
        det.frame_id,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Mask, NodeKind};

    fn intr() -> Intrinsics {
        Intrinsics {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }

    fn det_at(c: [f64; 3], category: &str) -> Detection2D {
        let bbox = BBox2::new(100.0, 100.0, 200.0, 200.0);
        Detection2D {
            id: 0,
            frame_id: 1,
            bbox,
            category: category.into(),
            confidence: 0.9,
            kind: NodeKind::InteractiveUnit,
            mask: Mask::from_rect(640, 480, &bbox),
            appearance: vec![0.5, 0.5, 0.0],
            embedding: None,
            centroid3d: Some(c),
            points: vec![c],
        }
    }

    fn node_at(c: [f64; 3], category: &str) -> MapNode {
        MapNode::new(
            7,
            NodeKind::InteractiveUnit,
            category,
            &[c],
            vec![0.5, 0.5, 0.0],
            None,
            0,
        )
    }

    #[test]
    fn single_point_does_not_project() {
        let n = node_at([0.0, 0.0, 1.0], "knob");
        assert!(project_node(&n, &Pose::identity(), &intr()).is_none());
    }

    #[test]
    fn points_behind_camera_are_dropped() {
        let pts: Vec<_> = (0..8).map(|i| [i as f64 * 0.1, 0.0, -1.0]).collect();
        let n = MapNode::new(0, NodeKind::Object, "x", &pts, vec![1.0], None, 0);
        assert!(project_node(&n, &Pose::identity(), &intr()).is_none());
    }

    #[test]
    fn weights_validate() {
        AssociationWeights::default().validate().unwrap();
        let bad = AssociationWeights {
            w_iou: 0.6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn score_reference_cases() {
        let w = AssociationWeights::default();
        let perfect = PairTerms {
            iou: 1.0,
            distance: Some(0.0),
            appearance: 1.0,
            semantic: 1.0,
        };
        assert!((combine(&perfect, &w) - 1.0).abs() < 1e-12);
        let no_iou = PairTerms {
            iou: 0.0,
            ..perfect
        };
        assert!((combine(&no_iou, &w) - 0.5).abs() < 1e-12);
        // kernel at d = sigma: (0.5/3)·e^{-1/2}
        let at_sigma = PairTerms {
            iou: 0.0,
            distance: Some(0.10),
            appearance: 0.0,
            semantic: 0.0,
        };
        assert!((combine(&at_sigma, &w) - 0.101_088_7).abs() < 1e-6);
    }

    #[test]
    fn negative_cosines_are_clamped() {
        let mut d = det_at([0.0; 3], "knob");
        d.embedding = Some(vec![1.0, 0.0]);
        let mut n = node_at([0.0; 3], "knob");
        n.embedding = Some(vec![-1.0, 0.0]);
        assert_eq!(semantic_similarity(&d, &n), 0.0);
    }

    #[test]
    fn gate_reference_cases() {
        let g = GateParams::default();
        let mut node = node_at([0.0; 3], "knob");
        node.diag = 0.4;
        let terms = PairTerms {
            iou: 0.3,
            distance: Some(0.05),
            appearance: 1.0,
            semantic: 1.0,
        };
        assert!(gate(&terms, &node, &g, 0.6));
        assert!(!gate(&terms, &node, &g, 0.44));
        node.diag = 0.1;
        let far = PairTerms {
            distance: Some(0.08),
            ..terms
        };
        assert!(!gate(&far, &node, &g, 0.6));
        let near = PairTerms {
            distance: Some(0.049),
            ..terms
        };
        assert!(gate(&near, &node, &g, 0.6));
        let no_overlap = PairTerms { iou: 0.0, ..terms };
        node.diag = 0.4;
        assert!(!gate(&no_overlap, &node, &g, 0.6));
    }

    #[test]
    fn ema_boundary_and_idempotent_merge() {
        let mut n = node_at([0.0; 3], "knob");
        let mut d = det_at([0.0; 3], "knob");
        d.appearance = vec![0.0, 0.25, 0.75];
        update_node(&mut n, &d, 3, 1.0);
        assert_eq!(n.appearance, vec![0.0, 0.25, 0.75]);
        assert_eq!(n.centroid, [0.0; 3]);
        assert_eq!(n.obs_count, 2);
        assert_eq!(n.last_seen, 3);
        n.check_invariants().unwrap();
    }

    #[test]
    fn spawn_requires_depth() {
        let mut d = det_at([0.1, 0.2, 0.3], "knob");
        let n = spawn_node(&d, 4).unwrap();
        assert_eq!(n.obs_count, 1);
        assert_eq!(n.appearance, d.appearance);
        n.check_invariants().unwrap();
        d.centroid3d = None;
        assert!(spawn_node(&d, 5).is_none());
    }

    #[test]
    fn kinds_never_match_across() {
        let d = det_at([0.0; 3], "knob");
        let mut n = node_at([0.0; 3], "knob");
        n.kind = NodeKind::FunctionalCarrier;
        assert!(score_pair(&d, &n, Some(&d.bbox), &AssociationParams::default()).is_none());
    }
}
