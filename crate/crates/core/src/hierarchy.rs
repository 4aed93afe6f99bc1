//! Post-sequence hierarchy shaping: rewrites `o ← u` edges into
//! `o ← c ← u` chains by pairing each object's units with its carriers.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{distance, Edge, InteractabilityMap, MapNode, NodeId, Relation, SceneGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyParams {
    /// Pairs whose total score falls below this are never made.
    pub pairing_floor: f64,
    /// Exact search is used while `|C_o| · |U_o|` stays within this bound.
    pub exhaustive_limit: usize,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        HierarchyParams {
            pairing_floor: 0.5,
            exhaustive_limit: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingScore {
    pub c_prior: f64,
    pub g_near: f64,
    pub total: f64,
}

impl PairingScore {
    pub fn new(c_prior: f64, g_near: f64) -> Self {
        PairingScore {
            c_prior,
            g_near,
            total: c_prior + g_near,
        }
    }
}

/// Splits an object's children into carrier and unit candidates by role
/// feasibility. A role-ambiguous child lands in both sets; a child the map
/// does not list for this object lands in neither.
pub fn partition_roles(
    object: &MapNode,
    children: &[&MapNode],
    imap: &InteractabilityMap,
) -> (Vec<NodeId>, Vec<NodeId>) {
    let mut carriers = Vec::new();
    let mut units = Vec::new();
    for f in children {
        if imap.role_c(&f.category, &object.category) {
            carriers.push(f.id);
        }
        if imap.role_u(&f.category, &object.category) {
            units.push(f.id);
        }
    }
    (carriers, units)
}

/// Gaussian proximity of a unit to a carrier, with the kernel width set to a
/// quarter of the carrier's box diagonal.
pub fn geometric_proximity(carrier: &MapNode, unit: &MapNode) -> f64 {
    let width = 0.25 * carrier.diag;
    let d = distance(carrier.centroid, unit.centroid);
    if width <= 0.0 {
        return if d == 0.0 { 1.0 } else { 0.0 };
    }
    (-d * d / (2.0 * width * width)).exp()
}

pub fn pairing_score(carrier: &MapNode, unit: &MapNode, imap: &InteractabilityMap) -> PairingScore {
    PairingScore::new(
        imap.prior(&carrier.category, &unit.category),
        geometric_proximity(carrier, unit),
    )
}

/// Result of pairing one object's units with its carriers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pairing {
    /// `(carrier, unit)` pairs, sorted.
    pub pairs: Vec<(NodeId, NodeId)>,
    pub total: f64,
    /// True when the greedy fallback was used.
    pub greedy: bool,
}

/// Solves the carrier–unit pairing over `carriers × units`.
///
/// `score(c, u)` gives the pair's total score. A unit takes at most one
/// carrier, a carrier may take many units, a node never pairs with itself,
/// and a node in both sets either receives units or is itself paired, never
/// both. Pairs below `params.pairing_floor` are inadmissible.
///
/// For fixed roles of the dual-role nodes the problem separates per unit, so
/// the exact search enumerates role assignments of those nodes and lets each
/// unit take its best admissible carrier.
pub fn solve_pairing(
    carriers: &[NodeId],
    units: &[NodeId],
    score: impl Fn(NodeId, NodeId) -> f64,
    params: &HierarchyParams,
) -> Pairing {
    let admissible = |c: NodeId, u: NodeId| -> Option<f64> {
        if c == u {
            return None;
        }
        let s = score(c, u);
        (s >= params.pairing_floor).then_some(s)
    };
    if carriers.is_empty() || units.is_empty() {
        return Pairing::default();
    }
    if carriers.len() * units.len() > params.exhaustive_limit {
        log::info!(
            "hierarchy: {}×{} pairing exceeds the exact-search limit, using greedy",
            carriers.len(),
            units.len()
        );
        return greedy_pairing(carriers, units, admissible);
    }

    let duals: Vec<NodeId> = carriers
        .iter()
        .copied()
        .filter(|c| units.contains(c))
        .collect();
    let mut best = Pairing::default();
    let mut best_total = f64::NEG_INFINITY;
    // bit set → dual node acts as a carrier
    for mask in 0u64..(1u64 << duals.len()) {
        let is_carrier_mode = |id: NodeId| -> Option<bool> {
            duals
                .iter()
                .position(|d| *d == id)
                .map(|i| mask >> i & 1 == 1)
        };
        let mut pairs = Vec::new();
        let mut total = 0.0;
        for &u in units {
            if is_carrier_mode(u) == Some(true) {
                continue;
            }
            let mut pick: Option<(NodeId, f64)> = None;
            for &c in carriers {
                if is_carrier_mode(c) == Some(false) {
                    continue;
                }
                if let Some(s) = admissible(c, u) {
                    if pick.is_none_or(|(_, b)| s > b) {
                        pick = Some((c, s));
                    }
                }
            }
            if let Some((c, s)) = pick {
                pairs.push((c, u));
                total += s;
            }
        }
        if total > best_total {
            best_total = total;
            pairs.sort_unstable();
            best = Pairing {
                pairs,
                total,
                greedy: false,
            };
        }
    }
    best
}

fn greedy_pairing(
    carriers: &[NodeId],
    units: &[NodeId],
    admissible: impl Fn(NodeId, NodeId) -> Option<f64>,
) -> Pairing {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, &c) in carriers.iter().enumerate() {
        for (ui, &u) in units.iter().enumerate() {
            if let Some(s) = admissible(c, u) {
                cands.push((s, ci, ui));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut has_carrier: Vec<NodeId> = Vec::new();
    let mut receives: Vec<NodeId> = Vec::new();
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (s, ci, ui) in cands {
        let (c, u) = (carriers[ci], units[ui]);
        if has_carrier.contains(&u) || has_carrier.contains(&c) || receives.contains(&u) {
            continue;
        }
        has_carrier.push(u);
        receives.push(c);
        pairs.push((c, u));
        total += s;
    }
    pairs.sort_unstable();
    Pairing {
        pairs,
        total,
        greedy: true,
    }
}

/// Applies a pairing to the graph: each paired unit's `o ← u` edge becomes
/// `c ← u`, and carriers that received units are marked `carrier-of`.
pub fn apply_pairing(graph: &mut SceneGraph, object: NodeId, pairing: &Pairing) {
    for &(c, u) in &pairing.pairs {
        if let Some(e) = graph
            .edges
            .iter_mut()
            .find(|e| e.parent == object && e.child == u)
        {
            e.parent = c;
            e.relation = Relation::UnitOf;
        }
        if let Some(p) = graph
            .provenance
            .iter_mut()
            .find(|p| p.parent == object && p.child == u)
        {
            p.parent = c;
        }
        if let Some(e) = graph
            .edges
            .iter_mut()
            .find(|e| e.parent == object && e.child == c)
        {
            e.relation = Relation::CarrierOf;
        }
    }
    graph
        .edges
        .sort_unstable_by_key(|e: &Edge| (e.parent, e.child));
    graph
        .provenance
        .sort_unstable_by_key(|p| (p.parent, p.child));
}

/// Shapes the hierarchy under one object node.
pub fn shape_hierarchy(
    graph: &mut SceneGraph,
    object: NodeId,
    imap: &InteractabilityMap,
    params: &HierarchyParams,
) -> Pairing {
    let Some(obj) = graph.node(object) else {
        return Pairing::default();
    };
    let children: Vec<&MapNode> = graph
        .edges
        .iter()
        .filter(|e| e.parent == object)
        .filter_map(|e| graph.node(e.child))
        .collect();
    let (carriers, units) = partition_roles(obj, &children, imap);
    let lookup = |id: NodeId| children.iter().find(|n| n.id == id).copied();
    let pairing = solve_pairing(
        &carriers,
        &units,
        |c, u| match (lookup(c), lookup(u)) {
            (Some(c), Some(u)) => pairing_score(c, u, imap).total,
            _ => f64::NEG_INFINITY,
        },
        params,
    );
    apply_pairing(graph, object, &pairing);
    pairing
}

/// Shapes every object in the graph and validates the result.
pub fn shape_all(
    graph: &mut SceneGraph,
    imap: &InteractabilityMap,
    params: &HierarchyParams,
) -> Result<Vec<(NodeId, Pairing)>> {
    let objects: Vec<NodeId> = graph
        .nodes
        .iter()
        .filter(|n| !n.kind.is_fine())
        .map(|n| n.id)
        .collect();
    let mut out = Vec::new();
    for o in objects {
        let p = shape_hierarchy(graph, o, imap, params);
        if !p.pairs.is_empty() {
            out.push((o, p));
        }
    }
    graph.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeKind;

    fn node(id: NodeId, kind: NodeKind, cat: &str, c: [f64; 3], half: f64) -> MapNode {
        let pts = [
            [c[0] - half, c[1] - half, c[2] - half],
            [c[0] + half, c[1] + half, c[2] + half],
        ];
        MapNode::new(id, kind, cat, &pts, vec![1.0], None, 0)
    }

    fn imap() -> InteractabilityMap {
        let mut m = InteractabilityMap::default();
        m.add_object("cabinet", &["drawer"], &["handle"]);
        m.add_object("bottle", &[], &["cap"]);
        m.set_prior("drawer", "handle", 1.0);
        m
    }

    fn edge(p: NodeId, c: NodeId) -> Edge {
        Edge {
            parent: p,
            child: c,
            relation: Relation::Functional,
        }
    }

    #[test]
    fn roles_from_feasibility() {
        let cab = node(0, NodeKind::Object, "cabinet", [0.0; 3], 0.3);
        let drawer = node(1, NodeKind::FunctionalCarrier, "drawer", [0.0; 3], 0.1);
        let handle = node(2, NodeKind::InteractiveUnit, "handle", [0.0; 3], 0.02);
        let lamp = node(3, NodeKind::InteractiveUnit, "lamp", [0.0; 3], 0.02);
        let (c, u) = partition_roles(&cab, &[&drawer, &handle, &lamp], &imap());
        assert_eq!((c, u), (vec![1], vec![2]));

        let bottle = node(4, NodeKind::Object, "bottle", [0.0; 3], 0.1);
        let cap = node(5, NodeKind::InteractiveUnit, "cap", [0.0; 3], 0.02);
        let (c, u) = partition_roles(&bottle, &[&cap], &imap());
        assert_eq!((c, u), (vec![], vec![5]));
    }

    #[test]
    fn proximity_kernel() {
        let c = node(1, NodeKind::FunctionalCarrier, "drawer", [0.0; 3], 0.1);
        let same = node(2, NodeKind::InteractiveUnit, "handle", [0.0; 3], 0.01);
        assert!((geometric_proximity(&c, &same) - 1.0).abs() < 1e-12);
        let d = 0.25 * c.diag;
        let at = node(3, NodeKind::InteractiveUnit, "handle", [d, 0.0, 0.0], 0.01);
        assert!((geometric_proximity(&c, &at) - (-0.5f64).exp()).abs() < 1e-12);
        let far = node(
            4,
            NodeKind::InteractiveUnit,
            "handle",
            [10.0 * c.diag, 0.0, 0.0],
            0.01,
        );
        assert!(geometric_proximity(&c, &far) < 1e-3);
    }

    #[test]
    fn no_carriers_keeps_direct_edges() {
        let mut g = SceneGraph {
            nodes: vec![
                node(4, NodeKind::Object, "bottle", [0.0; 3], 0.1),
                node(5, NodeKind::InteractiveUnit, "cap", [0.0, 0.0, 0.1], 0.02),
            ],
            edges: vec![edge(4, 5)],
            provenance: vec![],
        };
        let before = g.clone();
        shape_all(&mut g, &imap(), &HierarchyParams::default()).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn compatible_pair_forms_chain() {
        let mut g = SceneGraph {
            nodes: vec![
                node(0, NodeKind::Object, "cabinet", [0.0; 3], 0.3),
                node(
                    1,
                    NodeKind::FunctionalCarrier,
                    "drawer",
                    [0.0, -0.2, 0.0],
                    0.1,
                ),
                node(
                    2,
                    NodeKind::InteractiveUnit,
                    "handle",
                    [0.0, -0.3, 0.0],
                    0.02,
                ),
            ],
            edges: vec![edge(0, 1), edge(0, 2)],
            provenance: vec![],
        };
        let nodes_before = g.nodes.clone();
        shape_all(&mut g, &imap(), &HierarchyParams::default()).unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && !g.has_edge(0, 2));
        assert_eq!(g.nodes, nodes_before);
    }

    #[test]
    fn dual_role_node_acts_once() {
        // node 2 may be a carrier (of 3) or a unit (of 1); pairing it under 1
        // scores 1.5, receiving 3 scores 1.2, so it becomes a unit and 3
        // goes to 1 instead.
        let scores = |c: NodeId, u: NodeId| match (c, u) {
            (1, 2) => 1.5,
            (2, 3) => 1.2,
            (1, 3) => 0.9,
            _ => 0.0,
        };
        let p = solve_pairing(&[1, 2], &[2, 3], scores, &HierarchyParams::default());
        assert_eq!(p.pairs, vec![(1, 2), (1, 3)]);
        assert!((p.total - 2.4).abs() < 1e-12);
    }

    #[test]
    fn floor_blocks_weak_pairs() {
        let p = solve_pairing(&[1], &[2], |_, _| 0.49, &HierarchyParams::default());
        assert!(p.pairs.is_empty());
    }

    #[test]
    fn greedy_fallback_respects_constraints() {
        let params = HierarchyParams {
            exhaustive_limit: 1,
            ..Default::default()
        };
        let p = solve_pairing(&[1, 2], &[2, 3], |c, u| (c + u) as f64, &params);
        assert!(p.greedy);
        // (2,3)=5 first; (1,2) would make 2 both carrier and unit, so skipped
        assert_eq!(p.pairs, vec![(2, 3)]);
    }
}
