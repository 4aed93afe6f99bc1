use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::geometry::{mean, Aabb3, Point3};
use super::NodeKind;

pub type NodeId = u64;

/// Voxel edge length used to cap accumulated point sets.
pub const VOXEL_SIZE: f64 = 0.01;

/// A fused 3D node instance in the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub category: String,
    pub points: Vec<Point3>,
    pub centroid: Point3,
    pub bbox3d: Aabb3,
    pub diag: f64,
    pub appearance: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    pub obs_count: u32,
    pub last_seen: u64,
}

fn voxel_key(p: &Point3) -> [i64; 3] {
    [
        (p[0] / VOXEL_SIZE).floor() as i64,
        (p[1] / VOXEL_SIZE).floor() as i64,
        (p[2] / VOXEL_SIZE).floor() as i64,
    ]
}

/// Keeps the first point that falls into each voxel.
pub fn voxel_downsample(points: &[Point3]) -> Vec<Point3> {
    let mut seen = HashSet::with_capacity(points.len());
    points
        .iter()
        .filter(|p| seen.insert(voxel_key(p)))
        .copied()
        .collect()
}

impl MapNode {
    /// Builds a node from a point set; `points` must be non-empty.
    pub fn new(
        id: NodeId,
        kind: NodeKind,
        category: impl Into<String>,
        points: &[Point3],
        appearance: Vec<f64>,
        embedding: Option<Vec<f64>>,
        frame_id: u64,
    ) -> Self {
        let points = voxel_downsample(points);
        let mut node = MapNode {
            id,
            kind,
            category: category.into(),
            points,
            centroid: [0.0; 3],
            bbox3d: Aabb3 {
                min: [0.0; 3],
                max: [0.0; 3],
            },
            diag: 0.0,
            appearance,
            embedding,
            obs_count: 1,
            last_seen: frame_id,
        };
        node.refresh_geometry();
        node
    }

    /// Merges new observation points into the voxel-capped set and recomputes
    /// centroid, box and diagonal.
    pub fn fuse_points(&mut self, incoming: &[Point3]) {
        let mut seen: HashSet<[i64; 3]> = self.points.iter().map(voxel_key).collect();
        for p in incoming {
            if seen.insert(voxel_key(p)) {
                self.points.push(*p);
            }
        }
        self.refresh_geometry();
    }

    fn refresh_geometry(&mut self) {
        if let Some(c) = mean(&self.points) {
            self.centroid = c;
        }
        if let Some(b) = Aabb3::from_points(&self.points) {
            self.bbox3d = b;
            self.diag = b.diagonal();
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        if let Some(c) = mean(&self.points) {
            let d = super::geometry::distance(c, self.centroid);
            if d > 1e-6 {
                return Err(Error::Invariant(format!(
                    "node {}: centroid off the point mean by {d}",
                    self.id
                )));
            }
        }
        if (self.bbox3d.diagonal() - self.diag).abs() > 1e-9 {
            return Err(Error::Invariant(format!("node {}: diag mismatch", self.id)));
        }
        let s: f64 = self.appearance.iter().sum();
        if !self.appearance.is_empty() && (s - 1.0).abs() > 1e-6 {
            return Err(Error::Invariant(format!(
                "node {}: appearance sums to {s}",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// Object ← fine part edge decided from accumulated evidence, kept direct.
    Functional,
    /// Object ← carrier edge where the carrier received units.
    CarrierOf,
    /// Carrier ← unit edge created by hierarchy shaping.
    UnitOf,
}

/// Directed edge `parent ← child`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
    pub relation: Relation,
}

/// Final decision score attached to an object-level edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub parent: NodeId,
    pub child: NodeId,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub nodes: Vec<MapNode>,
    pub edges: Vec<Edge>,
    pub provenance: Vec<Provenance>,
}

impl SceneGraph {
    pub fn node(&self, id: NodeId) -> Option<&MapNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn parent_of(&self, child: NodeId) -> Option<NodeId> {
        self.edges
            .iter()
            .find(|e| e.child == child)
            .map(|e| e.parent)
    }

    pub fn has_edge(&self, parent: NodeId, child: NodeId) -> bool {
        self.edges
            .iter()
            .any(|e| e.parent == parent && e.child == child)
    }

    /// Checks the forest structure: single parent per node, roots are
    /// objects, objects are never children, and every chain has at most two
    /// hops to its object.
    pub fn validate(&self) -> Result<()> {
        let kinds: BTreeMap<NodeId, NodeKind> = self.nodes.iter().map(|n| (n.id, n.kind)).collect();
        if kinds.len() != self.nodes.len() {
            return Err(Error::Invariant("duplicate node ids".into()));
        }
        let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for e in &self.edges {
            for id in [e.parent, e.child] {
                if !kinds.contains_key(&id) {
                    return Err(Error::Invariant(format!(
                        "edge references unknown node {id}"
                    )));
                }
            }
            if e.parent == e.child {
                return Err(Error::Invariant(format!("self loop on node {}", e.child)));
            }
            if kinds[&e.child] == NodeKind::Object {
                return Err(Error::Invariant(format!(
                    "object node {} has a parent",
                    e.child
                )));
            }
            if parent.insert(e.child, e.parent).is_some() {
                return Err(Error::Invariant(format!(
                    "node {} has more than one parent",
                    e.child
                )));
            }
        }
        for &child in parent.keys() {
            let mut cur = child;
            let mut hops = 0;
            while let Some(&p) = parent.get(&cur) {
                hops += 1;
                if hops > 2 {
                    return Err(Error::Invariant(format!(
                        "node {child} is more than two hops from its root (or on a cycle)"
                    )));
                }
                cur = p;
            }
            if kinds[&cur] != NodeKind::Object {
                return Err(Error::Invariant(format!(
                    "node {child} is rooted at non-object {cur}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: NodeId, kind: NodeKind) -> MapNode {
        MapNode::new(id, kind, "x", &[[0.0; 3]], vec![1.0], None, 0)
    }

    fn edge(parent: NodeId, child: NodeId) -> Edge {
        Edge {
            parent,
            child,
            relation: Relation::Functional,
        }
    }

    #[test]
    fn validator_accepts_two_hop_chain() {
        let g = SceneGraph {
            nodes: vec![
                node(0, NodeKind::Object),
                node(1, NodeKind::FunctionalCarrier),
                node(2, NodeKind::InteractiveUnit),
            ],
            edges: vec![edge(0, 1), edge(1, 2)],
            provenance: vec![],
        };
        g.validate().unwrap();
    }

    #[test]
    fn validator_rejects_bad_shapes() {
        let nodes = vec![
            node(0, NodeKind::Object),
            node(1, NodeKind::FunctionalCarrier),
            node(2, NodeKind::InteractiveUnit),
            node(3, NodeKind::InteractiveUnit),
            node(4, NodeKind::Object),
        ];
        let bad = [
            vec![edge(0, 2), edge(4, 2)],             // two parents
            vec![edge(0, 1), edge(1, 2), edge(2, 3)], // three hops
            vec![edge(1, 2)],                         // rooted at a carrier
            vec![edge(2, 0)],                         // object as child
            vec![edge(2, 3), edge(3, 2)],             // cycle
        ];
        for edges in bad {
            let g = SceneGraph {
                nodes: nodes.clone(),
                edges,
                provenance: vec![],
            };
            assert!(g.validate().is_err());
        }
    }

    #[test]
    fn voxel_cap_keeps_first_point() {
        let pts = [[0.001, 0.0, 0.0], [0.004, 0.002, 0.0], [0.02, 0.0, 0.0]];
        let d = voxel_downsample(&pts);
        assert_eq!(d, vec![[0.001, 0.0, 0.0], [0.02, 0.0, 0.0]]);
    }
}
