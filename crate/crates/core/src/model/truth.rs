use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::geometry::{Aabb3, Intrinsics, Pose};
use super::graph::{Edge, NodeId, Relation};
use super::packet::InteractabilityMap;
use super::NodeKind;
use crate::error::{Error, Result};

/// Evaluation subsets a node or triplet may belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Tabletop,
    Hierarchical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub category: String,
    pub bbox: Aabb3,
    pub appearance: Vec<f64>,
    #[serde(default)]
    pub tags: BTreeSet<Tag>,
}

/// `(object, carrier, unit)` chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub object: NodeId,
    pub carrier: NodeId,
    pub unit: NodeId,
    #[serde(default)]
    pub tags: BTreeSet<Tag>,
}

/// `(object, unit)` pair with no carrier in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub object: NodeId,
    pub unit: NodeId,
    #[serde(default)]
    pub tags: BTreeSet<Tag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScene {
    pub recipe: String,
    pub seed: u64,
    pub intrinsics: Intrinsics,
    pub nodes: Vec<GtNode>,
    pub triplets: Vec<Triplet>,
    pub pairs: Vec<Pair>,
    pub imap: InteractabilityMap,
    pub orbit: Orbit,
    #[serde(default)]
    pub trajectory: Vec<Pose>,
}

impl GroundTruthScene {
    pub fn node(&self, id: NodeId) -> Option<&GtNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Expected graph edges: `o ← c ← u` for triplets, `o ← u` for pairs.
    pub fn edges(&self) -> Vec<Edge> {
        let mut edges: BTreeMap<(NodeId, NodeId), Relation> = BTreeMap::new();
        for t in &self.triplets {
            edges.insert((t.object, t.carrier), Relation::CarrierOf);
            edges.insert((t.carrier, t.unit), Relation::UnitOf);
        }
        for p in &self.pairs {
            edges.insert((p.object, p.unit), Relation::Functional);
        }
        edges
            .into_iter()
            .map(|((parent, child), relation)| Edge {
                parent,
                child,
                relation,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ids: BTreeSet<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        if ids.len() != self.nodes.len() {
            return Err(Error::invalid("ground truth", "duplicate node ids"));
        }
        let kind_of = |id: NodeId| self.node(id).map(|n| n.kind);
        let mut unit_uses: BTreeMap<NodeId, usize> = BTreeMap::new();
        for t in &self.triplets {
            if kind_of(t.object) != Some(NodeKind::Object)
                || kind_of(t.carrier) != Some(NodeKind::FunctionalCarrier)
                || kind_of(t.unit) != Some(NodeKind::InteractiveUnit)
            {
                return Err(Error::invalid(
                    "ground truth",
                    format!(
                        "triplet ({}, {}, {}) has bad members",
                        t.object, t.carrier, t.unit
                    ),
                ));
            }
            *unit_uses.entry(t.unit).or_default() += 1;
        }
        for p in &self.pairs {
            if kind_of(p.object) != Some(NodeKind::Object)
                || kind_of(p.unit) != Some(NodeKind::InteractiveUnit)
            {
                return Err(Error::invalid(
                    "ground truth",
                    format!("pair ({}, {}) has bad members", p.object, p.unit),
                ));
            }
            *unit_uses.entry(p.unit).or_default() += 1;
        }
        for n in self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::InteractiveUnit)
        {
            let uses = unit_uses.get(&n.id).copied().unwrap_or(0);
            if uses != 1 {
                return Err(Error::invalid(
                    "ground truth",
                    format!("unit {} belongs to {uses} triplets or pairs", n.id),
                ));
            }
        }
        Ok(())
    }
}

/// Camera path: a horizontal arc around `target` at fixed height, always
/// looking at the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub target: super::Point3,
    pub radius: f64,
    pub height: f64,
    /// Azimuth of the first frame in degrees; 0 looks along +y.
    pub start_deg: f64,
    pub sweep_deg: f64,
}

impl Orbit {
    /// Pose of frame `i` out of `n`, spread evenly over the sweep.
    pub fn pose(&self, i: usize, n: usize) -> Pose {
        let t = if n > 1 {
            i as f64 / (n - 1) as f64
        } else {
            0.5
        };
        let a = (self.start_deg + t * self.sweep_deg).to_radians();
        let eye = [
            self.target[0] + self.radius * a.sin(),
            self.target[1] - self.radius * a.cos(),
            self.height,
        ];
        Pose::look_at(eye, self.target, [0.0, 0.0, 1.0])
    }

    pub fn trajectory(&self, n: usize) -> Vec<Pose> {
        (0..n).map(|i| self.pose(i, n)).collect()
    }
}
