//! Incremental fusion engine: consumes frame packets in order, maintains the
//! node map and per-fine-node edge beliefs, and emits the final scene graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anchor::{mask_containment, scored_candidates, DilationRadius};
use crate::associate::{match_frame, project_node, spawn_node, update_node, FrameContext};
use crate::config::{AblationMode, EngineConfig};
use crate::edgeopt::{
    accumulate, optimize_step, select_by_count, select_edge, tally_top1, EdgeBelief,
};
use crate::error::{Error, Result};
use crate::hierarchy::{apply_pairing, shape_all, Pairing};
use crate::model::{
    Detection2D, Edge, FramePacket, InteractabilityMap, Intrinsics, MapNode, NodeId, NodeKind,
    Pose, Provenance, Relation, SceneGraph,
};

/// Structured record of a state change, written as one JSON line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Spawn {
        frame: u64,
        det: u32,
        node: NodeId,
    },
    Match {
        frame: u64,
        det: u32,
        node: NodeId,
        score: f64,
    },
    Pending {
        frame: u64,
        det: u32,
    },
    PendingResolved {
        frame: u64,
        det_frame: u64,
        det: u32,
        node: NodeId,
    },
    PendingDropped {
        frame: u64,
        det_frame: u64,
        det: u32,
    },
    Evidence {
        frame: u64,
        object: NodeId,
        fine: NodeId,
        s_2d: f64,
        logodds: f64,
    },
    Decision {
        frame: u64,
        fine: NodeId,
        object: Option<NodeId>,
    },
    Carrier2d {
        frame: u64,
        carrier: NodeId,
        unit: NodeId,
    },
    Pairing {
        object: NodeId,
        carrier: NodeId,
        unit: NodeId,
    },
}

/// 2D evidence a pending detection took part in, replayed once it resolves.
#[derive(Debug, Clone)]
struct HeldEvidence {
    partner: NodeId,
    /// True when the pending detection is the fine side of the candidate.
    pending_is_fine: bool,
    s_2d: f64,
}

#[derive(Debug, Clone)]
struct PendingDet {
    det: Detection2D,
    pose: Pose,
    intrinsics: Intrinsics,
    age: u32,
    evidence: Vec<HeldEvidence>,
}

/// Minimum share of a node's projection, taken in the pending detection's own
/// frame, that must fall inside the detection box for the two to merge.
/// Projections come from interior points and under-cover the box, so plain
/// IoU is a poor test here.
const PENDING_COVER: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    nodes: Vec<MapNode>,
    beliefs: BTreeMap<NodeId, EdgeBelief>,
    decisions: BTreeMap<NodeId, NodeId>,
    imap: InteractabilityMap,
    pending: Vec<PendingDet>,
    carrier_2d: BTreeMap<NodeId, NodeId>,
    events: Vec<Event>,
    next_id: NodeId,
    last_frame: Option<u64>,
    received: usize,
}

/// Final output of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub graph: SceneGraph,
    pub events: Vec<Event>,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Engine {
            config,
            nodes: Vec::new(),
            beliefs: BTreeMap::new(),
            decisions: BTreeMap::new(),
            imap: InteractabilityMap::default(),
            pending: Vec::new(),
            carrier_2d: BTreeMap::new(),
            events: Vec::new(),
            next_id: 0,
            last_frame: None,
            received: 0,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[MapNode] {
        &self.nodes
    }

    pub fn beliefs(&self) -> &BTreeMap<NodeId, EdgeBelief> {
        &self.beliefs
    }

    /// Current parent decision per fine node.
    pub fn decisions(&self) -> &BTreeMap<NodeId, NodeId> {
        &self.decisions
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Feeds one packet. Every packet is checked for ordering; only every
    /// `stride`-th one is processed.
    pub fn ingest(&mut self, packet: &FramePacket) -> Result<()> {
        if let Some(last) = self.last_frame {
            if packet.frame_id <= last {
                return Err(Error::OutOfOrder {
                    last,
                    got: packet.frame_id,
                });
            }
        }
        self.last_frame = Some(packet.frame_id);
        let index = self.received;
        self.received += 1;
        if !index.is_multiple_of(self.config.stride) {
            return Ok(());
        }
        packet.validate()?;
        self.process(packet)
    }

    fn node_index(&self, id: NodeId) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    fn process(&mut self, packet: &FramePacket) -> Result<()> {
        let frame = packet.frame_id;
        self.imap.merge(&packet.imap);

        self.age_pending(frame);

        let ctx = FrameContext {
            pose: &packet.pose,
            intrinsics: &packet.intrinsics,
        };
        let matches = match_frame(
            &packet.detections,
            &self.nodes,
            ctx,
            &self.config.association,
        );

        let mut det_node: BTreeMap<u32, NodeId> = BTreeMap::new();
        for &(d, n, score) in &matches.pairs {
            let det = &packet.detections[d];
            let node = &mut self.nodes[n];
            update_node(node, det, frame, self.config.association.alpha);
            det_node.insert(det.id, node.id);
            self.events.push(Event::Match {
                frame,
                det: det.id,
                node: node.id,
                score,
            });
        }
        let mut new_pending = Vec::new();
        for &d in &matches.unmatched_dets {
            let det = &packet.detections[d];
            match spawn_node(det, self.next_id) {
                Some(node) => {
                    self.events.push(Event::Spawn {
                        frame,
                        det: det.id,
                        node: node.id,
                    });
                    det_node.insert(det.id, node.id);
                    self.nodes.push(node);
                    self.next_id += 1;
                }
                None => {
                    self.events.push(Event::Pending { frame, det: det.id });
                    new_pending.push(PendingDet {
                        det: det.clone(),
                        pose: packet.pose,
                        intrinsics: packet.intrinsics,
                        age: 0,
                        evidence: Vec::new(),
                    });
                }
            }
        }

        let candidates = scored_candidates(packet, &self.config.prefilter);
        let mut touched: Vec<NodeId> = Vec::new();
        let mut frame_scores: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
        for c in &candidates {
            let s = c.s_2d.expect("scored candidates carry a score");
            match (det_node.get(&c.object_det), det_node.get(&c.fine_det)) {
                (Some(&o), Some(&f)) => {
                    if self.add_evidence(o, f, s, frame)? {
                        touched.push(f);
                        frame_scores.entry(f).or_default().push((o, s));
                    }
                }
                (Some(&o), None) => {
                    if let Some(p) = new_pending.iter_mut().find(|p| p.det.id == c.fine_det) {
                        p.evidence.push(HeldEvidence {
                            partner: o,
                            pending_is_fine: true,
                            s_2d: s,
                        });
                    }
                }
                (None, Some(&f)) => {
                    if let Some(p) = new_pending.iter_mut().find(|p| p.det.id == c.object_det) {
                        p.evidence.push(HeldEvidence {
                            partner: f,
                            pending_is_fine: false,
                            s_2d: s,
                        });
                    }
                }
                (None, None) => {}
            }
        }
        self.pending.extend(new_pending);
        self.tally(&frame_scores);
        self.decide(&mut touched, frame)?;

        if self.config.mode == AblationMode::Hierarchy2dOff {
            self.track_carriers_2d(packet, &det_node)?;
        }
        Ok(())
    }

    /// Adds one observation; returns false when the object is not yet
    /// eligible or the evidence is a duplicate.
    fn add_evidence(&mut self, object: NodeId, fine: NodeId, s: f64, frame: u64) -> Result<bool> {
        let Some(oi) = self.node_index(object) else {
            return Ok(false);
        };
        if self.nodes[oi].points.len() < self.config.min_object_points {
            return Ok(false);
        }
        let belief = self
            .beliefs
            .entry(fine)
            .or_insert_with(|| EdgeBelief::new(fine));
        match accumulate(belief, object, s, frame, &self.config.edgeopt) {
            Ok(()) => {}
            Err(Error::DuplicateEvidence { candidate, frame }) => {
                log::warn!("duplicate evidence for {candidate} ← {fine} in frame {frame}, ignored");
                return Ok(false);
            }
            Err(e) => return Err(e),
        }
        let logodds = belief.candidate(object).map_or(0.0, |c| c.logodds);
        self.events.push(Event::Evidence {
            frame,
            object,
            fine,
            s_2d: s,
            logodds,
        });
        Ok(true)
    }

    fn tally(&mut self, frame_scores: &BTreeMap<NodeId, Vec<(NodeId, f64)>>) {
        for (f, scores) in frame_scores {
            if let Some(b) = self.beliefs.get_mut(f) {
                tally_top1(b, scores);
            }
        }
    }

    fn decide(&mut self, touched: &mut Vec<NodeId>, frame: u64) -> Result<()> {
        touched.sort_unstable();
        touched.dedup();
        for &f in touched.iter() {
            let belief = self.beliefs.get_mut(&f).expect("touched beliefs exist");
            optimize_step(belief, &self.config.edgeopt)?;
            let choice = match self.config.mode {
                AblationMode::NoGoCount => select_by_count(belief, &self.config.edgeopt),
                _ => select_edge(belief, &self.config.edgeopt),
            };
            let previous = self.decisions.get(&f).copied();
            if choice != previous {
                match choice {
                    Some(o) => self.decisions.insert(f, o),
                    None => self.decisions.remove(&f),
                };
                self.events.push(Event::Decision {
                    frame,
                    fine: f,
                    object: choice,
                });
            }
        }
        Ok(())
    }

    /// Retries pending detections against the current map and expires the
    /// ones that have waited too long.
    fn age_pending(&mut self, frame: u64) {
        let pending = std::mem::take(&mut self.pending);
        let mut touched = Vec::new();
        let mut frame_scores: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
        for mut p in pending {
            if let Some(node) = self.resolve(&p) {
                let ni = self.node_index(node).expect("resolved node exists");
                update_node(
                    &mut self.nodes[ni],
                    &p.det,
                    p.det.frame_id,
                    self.config.association.alpha,
                );
                self.nodes[ni].last_seen = self.nodes[ni].last_seen.max(frame);
                self.events.push(Event::PendingResolved {
                    frame,
                    det_frame: p.det.frame_id,
                    det: p.det.id,
                    node,
                });
                for h in &p.evidence {
                    let (o, f) = if h.pending_is_fine {
                        (h.partner, node)
                    } else {
                        (node, h.partner)
                    };
                    if self
                        .add_evidence(o, f, h.s_2d, p.det.frame_id)
                        .unwrap_or(false)
                    {
                        touched.push(f);
                        if h.pending_is_fine {
                            frame_scores.entry(f).or_default().push((o, h.s_2d));
                        }
                    }
                }
                self.tally(&frame_scores);
                frame_scores.clear();
                continue;
            }
            p.age += 1;
            if p.age >= self.config.pending_ttl {
                self.events.push(Event::PendingDropped {
                    frame,
                    det_frame: p.det.frame_id,
                    det: p.det.id,
                });
            } else {
                self.pending.push(p);
            }
        }
        if let Err(e) = self.decide(&mut touched, frame) {
            log::warn!("edge update after pending resolution failed: {e}");
        }
    }

    fn resolve(&self, p: &PendingDet) -> Option<NodeId> {
        let mut best: Option<(NodeId, f64)> = None;
        for n in &self.nodes {
            if n.kind != p.det.kind || n.category != p.det.category {
                continue;
            }
            let Some(proj) = project_node(n, &p.pose, &p.intrinsics) else {
                continue;
            };
            let cover =
                proj.intersect(&p.det.bbox).map_or(0.0, |b| b.area()) / proj.area().max(1e-9);
            let iou = proj.iou(&p.det.bbox);
            if cover >= PENDING_COVER && best.is_none_or(|(_, b)| iou > b) {
                best = Some((n.id, iou));
            }
        }
        best.map(|(id, _)| id)
    }

    /// Per-frame 2D carrier choice for each visible unit: the carrier
    /// detection whose dilated mask best contains the unit, ranked by prior
    /// plus containment, ties to the earlier detection.
    fn track_carriers_2d(
        &mut self,
        packet: &FramePacket,
        det_node: &BTreeMap<u32, NodeId>,
    ) -> Result<()> {
        let w = packet.intrinsics.width;
        let h = packet.intrinsics.height;
        let delta = match self.config.prefilter.delta {
            Some(d) => DilationRadius::new(d, w, h)?,
            None => DilationRadius::default_for(w, h),
        };
        let dets = &packet.detections;
        for u in dets.iter().filter(|d| d.kind == NodeKind::InteractiveUnit) {
            let Some(&un) = det_node.get(&u.id) else {
                continue;
            };
            let mut best: Option<(NodeId, f64)> = None;
            for c in dets
                .iter()
                .filter(|d| d.kind == NodeKind::FunctionalCarrier)
            {
                let Some(&cn) = det_node.get(&c.id) else {
                    continue;
                };
                let prior = self.imap.prior(&c.category, &u.category);
                if prior <= 0.0 {
                    continue;
                }
                let g = match mask_containment(&u.mask, &c.mask, delta) {
                    Ok(g) => g,
                    Err(_) => continue,
                };
                if g <= self.config.prefilter.tau_geo {
                    continue;
                }
                let s = prior + g;
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((cn, s));
                }
            }
            if let Some((cn, _)) = best {
                self.carrier_2d.insert(un, cn);
                self.events.push(Event::Carrier2d {
                    frame: packet.frame_id,
                    carrier: cn,
                    unit: un,
                });
            }
        }
        Ok(())
    }

    /// Flat `object ← fine` graph from the current decisions.
    pub fn flat_graph(&self) -> SceneGraph {
        let mut edges = Vec::new();
        let mut provenance = Vec::new();
        for (&f, &o) in &self.decisions {
            let belief = &self.beliefs[&f];
            let c = belief.candidate(o).expect("decided candidate exists");
            edges.push(Edge {
                parent: o,
                child: f,
                relation: Relation::Functional,
            });
            provenance.push(Provenance {
                parent: o,
                child: f,
                score: c.logodds + c.z.max(f64::MIN_POSITIVE).ln(),
            });
        }
        edges.sort_unstable_by_key(|e| (e.parent, e.child));
        provenance.sort_unstable_by_key(|p| (p.parent, p.child));
        SceneGraph {
            nodes: self.nodes.clone(),
            edges,
            provenance,
        }
    }

    /// Ends the sequence: flushes pending detections, shapes the hierarchy
    /// and returns the validated graph with the event log.
    pub fn finish(mut self) -> Result<RunOutput> {
        for p in std::mem::take(&mut self.pending) {
            self.events.push(Event::PendingDropped {
                frame: self.last_frame.unwrap_or(0),
                det_frame: p.det.frame_id,
                det: p.det.id,
            });
        }
        let mut graph = self.flat_graph();
        let pairings: Vec<(NodeId, Pairing)> = match self.config.mode {
            AblationMode::Hierarchy2dOff => {
                let mut by_object: BTreeMap<NodeId, Pairing> = BTreeMap::new();
                for (&u, &c) in &self.carrier_2d {
                    let (Some(&ou), Some(&oc)) = (self.decisions.get(&u), self.decisions.get(&c))
                    else {
                        continue;
                    };
                    if ou == oc {
                        by_object.entry(ou).or_default().pairs.push((c, u));
                    }
                }
                for (&o, p) in &by_object {
                    apply_pairing(&mut graph, o, p);
                }
                graph.validate()?;
                by_object.into_iter().collect()
            }
            _ => shape_all(&mut graph, &self.imap, &self.config.hierarchy)?,
        };
        for (o, p) in pairings {
            for (c, u) in p.pairs {
                self.events.push(Event::Pairing {
                    object: o,
                    carrier: c,
                    unit: u,
                });
            }
        }
        Ok(RunOutput {
            graph,
            events: self.events,
        })
    }
}

/// Runs a whole packet sequence through a fresh engine.
pub fn run(packets: &[FramePacket], config: EngineConfig) -> Result<RunOutput> {
    let mut engine = Engine::new(config)?;
    for p in packets {
        engine.ingest(p)?;
    }
    engine.finish()
}
