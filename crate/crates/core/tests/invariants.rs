use std::collections::BTreeMap;

use proptest::prelude::*;

use fsg_core::anchor::{generate_candidates, mask_containment, DilationRadius, PrefilterParams};
use fsg_core::associate::{association_score, spawn_node, AssociationWeights, FrameContext};
use fsg_core::config::EngineConfig;
use fsg_core::edgeopt::{accumulate, optimize_step, select_edge, EdgeBelief, EdgeOptParams};
use fsg_core::engine::{run, Engine, Event};
use fsg_core::eval::{evaluate, EvalParams};
use fsg_core::hierarchy::{shape_all, HierarchyParams};
use fsg_core::io::packets_to_string;
use fsg_core::synth::{
    frame_truth, generate_named, generate_scene, render_stream, NoiseProfile, ObjectSpec, PartSpec,
    Recipe,
};
use fsg_core::{NodeId, NodeKind, Orbit};

#[test]
fn containment_grows_with_dilation() {
    let scene = generate_named("cabinet-3drawer", 1).unwrap();
    let packets = render_stream(&scene, &NoiseProfile::noisy(1), 12).unwrap();
    for p in &packets {
        let (w, h) = (p.intrinsics.width, p.intrinsics.height);
        for f in p.detections.iter().filter(|d| d.kind.is_fine()) {
            for o in p.detections.iter().filter(|d| d.kind == NodeKind::Object) {
                let mut last = 0.0;
                for delta in 0..8 {
                    let c = mask_containment(
                        &f.mask,
                        &o.mask,
                        DilationRadius::new(delta, w, h).unwrap(),
                    )
                    .unwrap();
                    assert!(c + 1e-12 >= last, "containment shrank at Δ={delta}");
                    last = c;
                }
            }
        }
    }
}

#[test]
fn candidates_are_permitted_ordered_and_shrink_with_detections() {
    let scene = generate_named("kitchen-small", 4).unwrap();
    let packets = render_stream(&scene, &NoiseProfile::noisy(4), 20).unwrap();
    let params = PrefilterParams::default();
    for p in &packets {
        let cands = generate_candidates(p, &params);
        let key = |c: &fsg_core::EdgeCandidate2D| (c.object_det, c.fine_det);
        assert!(
            cands.windows(2).all(|w| key(&w[0]) < key(&w[1])),
            "candidates out of order"
        );
        for c in &cands {
            let o = p.detection(c.object_det).unwrap();
            let f = p.detection(c.fine_det).unwrap();
            assert!(p.imap.permits(&o.category, &f.category));
        }
        assert_eq!(cands, generate_candidates(p, &params));
        for drop in 0..p.detections.len() {
            let mut q = p.clone();
            q.detections.remove(drop);
            for c in generate_candidates(&q, &params) {
                assert!(
                    cands.iter().any(|k| key(k) == key(&c)),
                    "removing a detection added {c:?}"
                );
            }
        }
    }
}

#[test]
fn association_scores_are_bounded() {
    let scene = generate_named("kitchen-small", 8).unwrap();
    let packets = render_stream(&scene, &NoiseProfile::noisy(8), 30).unwrap();
    let nodes: Vec<_> = packets[0]
        .detections
        .iter()
        .enumerate()
        .filter_map(|(i, d)| spawn_node(d, i as NodeId))
        .collect();
    let w = AssociationWeights::default();
    for p in &packets[1..] {
        let ctx = FrameContext {
            pose: &p.pose,
            intrinsics: &p.intrinsics,
        };
        for d in &p.detections {
            for n in &nodes {
                let s = association_score(d, n, &w, ctx);
                assert!((0.0..=1.0).contains(&s), "score {s} out of range");
            }
        }
    }
}

#[test]
fn same_category_nodes_a_metre_apart_keep_their_identity() {
    let bottle = |x: f64| ObjectSpec {
        category: "bottle".into(),
        center: [x, 0.0, 0.12],
        size: [0.08, 0.08, 0.24],
        tabletop: true,
        parts: vec![PartSpec {
            kind: NodeKind::InteractiveUnit,
            category: "cap".into(),
            center: [x, 0.0, 0.255],
            size: [0.035, 0.035, 0.03],
            carrier: None,
        }],
    };
    let recipe = Recipe {
        name: "two-bottles".into(),
        objects: vec![bottle(-0.5), bottle(0.5)],
        orbit: Orbit {
            target: [0.0, 0.0, 0.15],
            radius: 2.2,
            height: 1.0,
            start_deg: -30.0,
            sweep_deg: 60.0,
        },
    };
    for seed in 0..5 {
        let scene = generate_scene(&recipe, seed).unwrap();
        let profile = NoiseProfile {
            centroid_sigma: 0.012,
            ..NoiseProfile::noiseless(seed)
        };
        let packets = render_stream(&scene, &profile, 60).unwrap();
        let out = run(&packets, EngineConfig::default()).unwrap();
        let mut owner: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for e in &out.events {
            let (frame, det, node) = match *e {
                Event::Spawn { frame, det, node }
                | Event::Match {
                    frame, det, node, ..
                } => (frame, det, node),
                _ => continue,
            };
            let p = &packets[frame as usize];
            if p.detection(det).unwrap().kind != NodeKind::Object {
                continue;
            }
            let idx = p.detections.iter().position(|d| d.id == det).unwrap();
            let truth = frame_truth(&scene, p)[idx].unwrap();
            let first = *owner.entry(node).or_insert(truth);
            assert_eq!(
                first, truth,
                "seed {seed}: node {node} swapped identity in frame {frame}"
            );
        }
        assert_eq!(owner.len(), 2, "seed {seed}: objects fragmented");
    }
}

#[test]
fn uniform_logodds_shift_keeps_the_choice() {
    let p = EdgeOptParams {
        lambda_d: 0.0,
        ..EdgeOptParams::default()
    };
    let mut b = EdgeBelief::new(50);
    for (f, (o, s)) in [(1, 0.7), (2, 0.6), (3, 0.8), (1, 0.9), (2, 0.3)]
        .into_iter()
        .enumerate()
    {
        accumulate(&mut b, o, s, f as u64, &p).unwrap();
    }
    let mut shifted = b.clone();
    for c in &mut shifted.candidates {
        c.logodds += 3.7;
    }
    optimize_step(&mut b, &p).unwrap();
    optimize_step(&mut shifted, &p).unwrap();
    assert_eq!(select_edge(&b, &p), select_edge(&shifted, &p));
    for (x, y) in b.z().iter().zip(shifted.z()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn frozen_evidence_converges() {
    let p = EdgeOptParams::default();
    for k in 2..=10u64 {
        let mut b = EdgeBelief::new(99);
        for o in 0..k {
            let s = 0.2 + 0.6 * ((o * 7919) % 11) as f64 / 10.0;
            accumulate(&mut b, o, s, o, &p).unwrap();
        }
        let mut prev = b.z();
        let mut moved = f64::INFINITY;
        for _ in 0..100 {
            let z = optimize_step(&mut b, &p).unwrap();
            moved = z
                .iter()
                .zip(&prev)
                .map(|(a, c)| (a - c).powi(2))
                .sum::<f64>()
                .sqrt();
            prev = z;
        }
        assert!(moved < 1e-6, "k={k}: still moving by {moved}");
    }
}

#[test]
fn hierarchy_rewrite_keeps_nodes_and_stays_under_the_object() {
    for name in ["kitchen-small", "oven", "cabinet-3drawer"] {
        let scene = generate_named(name, 2).unwrap();
        let packets = render_stream(&scene, &NoiseProfile::noisy(2), 60).unwrap();
        let mut engine = Engine::new(EngineConfig::default()).unwrap();
        for p in &packets {
            engine.ingest(p).unwrap();
        }
        let flat = engine.flat_graph();
        let mut shaped = flat.clone();
        shape_all(&mut shaped, &scene.imap, &HierarchyParams::default()).unwrap();
        assert_eq!(flat.nodes, shaped.nodes);
        for e in &shaped.edges {
            let original = flat.parent_of(e.child).expect("child had a direct parent");
            assert!(
                e.parent == original || flat.parent_of(e.parent) == Some(original),
                "{name}: {} moved outside object {original}",
                e.child
            );
        }
        let children = |g: &fsg_core::SceneGraph| {
            let mut v: Vec<NodeId> = g.edges.iter().map(|e| e.child).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(children(&flat), children(&shaped));
    }
}

#[test]
fn eval_matches_are_one_to_one() {
    let scene = generate_named("kitchen-small", 5).unwrap();
    let packets = render_stream(&scene, &NoiseProfile::noisy(5), 60).unwrap();
    let graph = run(&packets, EngineConfig::default()).unwrap().graph;
    let report = evaluate(&scene, &graph, &EvalParams::default());
    let mut gt: Vec<NodeId> = report.node_matches.iter().map(|m| m.gt).collect();
    let mut pred: Vec<NodeId> = report.node_matches.iter().map(|m| m.pred).collect();
    let n = gt.len();
    gt.sort_unstable();
    gt.dedup();
    pred.sort_unstable();
    pred.dedup();
    assert_eq!((gt.len(), pred.len()), (n, n));
}

#[test]
fn synthetic_streams_are_reproducible_and_valid() {
    for name in ["kitchen-small", "pot"] {
        let scene = generate_named(name, 11).unwrap();
        assert_eq!(scene, generate_named(name, 11).unwrap());
        let profile = NoiseProfile {
            depth_missing_p: 0.1,
            ..NoiseProfile::noisy(11)
        };
        let a = render_stream(&scene, &profile, 40).unwrap();
        let b = render_stream(&scene, &profile, 40).unwrap();
        assert_eq!(packets_to_string(&a), packets_to_string(&b));
        for p in &a {
            p.validate().unwrap();
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Observe { object: u64, s: f64 },
    Step { lambda_h: f64, lambda_d: f64 },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u64..6, 0.001f64..0.999).prop_map(|(object, s)| Op::Observe { object, s }),
        (0.0f64..3.0, 0.0f64..3.0).prop_map(|(lambda_h, lambda_d)| Op::Step { lambda_h, lambda_d }),
    ]
}

proptest! {
    #[test]
    fn beliefs_stay_on_the_simplex(ops in prop::collection::vec(op(), 1..40)) {
        let mut b = EdgeBelief::new(1000);
        for (frame, o) in ops.into_iter().enumerate() {
            match o {
                Op::Observe { object, s } => {
                    accumulate(&mut b, object, s, frame as u64, &EdgeOptParams::default()).unwrap();
                }
                Op::Step { lambda_h, lambda_d } => {
                    let p = EdgeOptParams { lambda_h, lambda_d, ..EdgeOptParams::default() };
                    optimize_step(&mut b, &p).unwrap();
                }
            }
            prop_assert!(b.check_invariants().is_ok());
        }
    }
}
