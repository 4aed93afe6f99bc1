//! Synthetic ground-truth scenes and seeded frame-packet streams.
//!
//! Scenes are axis-aligned boxes: each object box encloses its parts, and
//! units sit on (or protrude slightly from) their carrier. Cameras orbit the
//! scene; a node is visible when its box lies in front of the camera and at
//! least half of its projected box falls inside the image. Occlusion is not
//! ray-cast: it is modeled by detection dropout.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anchor::{generate_candidates, PrefilterParams};
use crate::error::{Error, Result};
use crate::model::{
    add, Aabb3, BBox2, Detection2D, FramePacket, GroundTruthScene, GtNode, InteractabilityMap,
    Intrinsics, Mask, NodeId, NodeKind, Orbit, Pair, Point3, Pose, Tag, Triplet,
};

/// Number of bins in the synthetic appearance histograms.
pub const APPEARANCE_BINS: usize = 64;

/// Mean 2D scores of the simulated visual-semantic scorer.
const TRUE_MEAN: f64 = 0.85;
const WRONG_MEAN: f64 = 0.30;
const FLIP_WRONG_MEAN: f64 = 0.65;
const FLIP_TRUE_MEAN: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub kind: NodeKind,
    pub category: String,
    pub center: Point3,
    pub size: Point3,
    /// Index of the carrier part this unit sits on, if any.
    pub carrier: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub category: String,
    pub center: Point3,
    pub size: Point3,
    pub tabletop: bool,
    pub parts: Vec<PartSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    pub objects: Vec<ObjectSpec>,
    pub orbit: Orbit,
}

/// The built-in interactability table every recipe draws from.
pub fn builtin_imap() -> InteractabilityMap {
    let mut m = InteractabilityMap::default();
    m.add_object("cabinet", &["drawer", "door"], &["handle", "knob"]);
    m.add_object("chest", &["drawer"], &["knob", "handle"]);
    m.add_object(
        "oven",
        &["control panel", "door"],
        &["knob", "handle", "button"],
    );
    m.add_object("kettle", &[], &["handle", "switch"]);
    m.add_object("bottle", &[], &["cap"]);
    m.add_object("pot", &["lid"], &["handle", "knob"]);
    m.set_prior("drawer", "handle", 1.0);
    m.set_prior("drawer", "knob", 1.0);
    m.set_prior("door", "handle", 1.0);
    m.set_prior("control panel", "knob", 1.0);
    m.set_prior("control panel", "button", 1.0);
    m.set_prior("lid", "knob", 1.0);
    m
}

fn part(
    kind: NodeKind,
    category: &str,
    center: Point3,
    size: Point3,
    carrier: Option<usize>,
) -> PartSpec {
    PartSpec {
        kind,
        category: category.into(),
        center,
        size,
        carrier,
    }
}

/// Floor-standing cabinet with its back against y = 0 and `n` stacked
/// drawers, each carrying one centered unit.
fn drawer_stack(
    category: &str,
    x: f64,
    width: f64,
    depth: f64,
    height: f64,
    n: usize,
    unit: &str,
) -> ObjectSpec {
    let proud = 0.03;
    let unit_size = if unit == "knob" {
        [0.04, proud, 0.04]
    } else {
        [0.14, proud, 0.025]
    };
    let slot = (height - 0.06) / n as f64;
    let mut parts = Vec::new();
    for i in 0..n {
        let z0 = 0.04 + i as f64 * slot + 0.01;
        let z1 = 0.04 + (i + 1) as f64 * slot - 0.01;
        let zc = 0.5 * (z0 + z1);
        let y0 = -depth - proud;
        let y1 = -0.08;
        parts.push(part(
            NodeKind::FunctionalCarrier,
            "drawer",
            [x, 0.5 * (y0 + y1), zc],
            [width - 0.06, y1 - y0, z1 - z0],
            None,
        ));
        let carrier = parts.len() - 1;
        parts.push(part(
            NodeKind::InteractiveUnit,
            unit,
            [x, -depth - 0.5 * proud, zc],
            unit_size,
            Some(carrier),
        ));
    }
    ObjectSpec {
        category: category.into(),
        center: [x, -0.5 * (depth + proud), 0.5 * height],
        size: [width, depth + proud, height],
        tabletop: false,
        parts,
    }
}

fn oven(x: f64) -> ObjectSpec {
    let depth = 0.6;
    let mut parts = vec![part(
        NodeKind::FunctionalCarrier,
        "control panel",
        [x, -depth - 0.015, 0.8],
        [0.56, 0.03, 0.14],
        None,
    )];
    for dx in [-0.18, 0.0, 0.18] {
        parts.push(part(
            NodeKind::InteractiveUnit,
            "knob",
            [x + dx, -depth - 0.045, 0.8],
            [0.05, 0.03, 0.05],
            Some(0),
        ));
    }
    parts.push(part(
        NodeKind::FunctionalCarrier,
        "door",
        [x, -depth - 0.02, 0.38],
        [0.56, 0.04, 0.5],
        None,
    ));
    let door = parts.len() - 1;
    parts.push(part(
        NodeKind::InteractiveUnit,
        "handle",
        [x, -depth - 0.055, 0.58],
        [0.4, 0.03, 0.03],
        Some(door),
    ));
    ObjectSpec {
        category: "oven".into(),
        center: [x, -0.5 * (depth + 0.07), 0.45],
        size: [0.6, depth + 0.07, 0.9],
        tabletop: false,
        parts,
    }
}

fn bottle(x: f64, y: f64, base: f64) -> ObjectSpec {
    ObjectSpec {
        category: "bottle".into(),
        center: [x, y, base + 0.125],
        size: [0.07, 0.07, 0.25],
        tabletop: true,
        parts: vec![part(
            NodeKind::InteractiveUnit,
            "cap",
            [x, y, base + 0.235],
            [0.035, 0.035, 0.03],
            None,
        )],
    }
}

fn pot(x: f64, y: f64, base: f64) -> ObjectSpec {
    ObjectSpec {
        category: "pot".into(),
        center: [x, y, base + 0.1175],
        size: [0.36, 0.24, 0.235],
        tabletop: true,
        parts: vec![
            part(
                NodeKind::FunctionalCarrier,
                "lid",
                [x, y, base + 0.19],
                [0.24, 0.24, 0.02],
                None,
            ),
            part(
                NodeKind::InteractiveUnit,
                "knob",
                [x, y, base + 0.215],
                [0.04, 0.04, 0.03],
                Some(0),
            ),
            part(
                NodeKind::InteractiveUnit,
                "handle",
                [x - 0.15, y, base + 0.15],
                [0.06, 0.04, 0.03],
                None,
            ),
            part(
                NodeKind::InteractiveUnit,
                "handle",
                [x + 0.15, y, base + 0.15],
                [0.06, 0.04, 0.03],
                None,
            ),
        ],
    }
}

fn kettle(x: f64, y: f64, base: f64) -> ObjectSpec {
    ObjectSpec {
        category: "kettle".into(),
        center: [x, y, base + 0.12],
        size: [0.22, 0.16, 0.24],
        tabletop: true,
        parts: vec![
            part(
                NodeKind::InteractiveUnit,
                "handle",
                [x + 0.085, y, base + 0.15],
                [0.04, 0.03, 0.12],
                None,
            ),
            part(
                NodeKind::InteractiveUnit,
                "switch",
                [x + 0.085, y, base + 0.04],
                [0.03, 0.03, 0.03],
                None,
            ),
        ],
    }
}

fn tabletop_orbit(target_z: f64) -> Orbit {
    Orbit {
        target: [0.0, 0.0, target_z],
        radius: 0.9,
        height: target_z + 0.5,
        start_deg: -60.0,
        sweep_deg: 120.0,
    }
}

/// Names of the shipped recipes.
pub const RECIPES: [&str; 6] = [
    "bottle",
    "cabinet-3drawer",
    "kettle",
    "kitchen-small",
    "oven",
    "pot",
];

pub fn recipe(name: &str) -> Result<Recipe> {
    let (objects, orbit) = match name {
        "cabinet-3drawer" => (
            vec![drawer_stack("cabinet", 0.0, 0.6, 0.5, 0.8, 3, "handle")],
            Orbit {
                target: [0.0, -0.3, 0.4],
                radius: 1.8,
                height: 1.3,
                start_deg: -40.0,
                sweep_deg: 80.0,
            },
        ),
        "oven" => (
            vec![oven(0.0)],
            Orbit {
                target: [0.0, -0.35, 0.45],
                radius: 2.0,
                height: 1.4,
                start_deg: -40.0,
                sweep_deg: 80.0,
            },
        ),
        "bottle" => (vec![bottle(0.0, 0.0, 0.0)], {
            let mut o = tabletop_orbit(0.15);
            o.radius = 0.7;
            o
        }),
        "pot" => (vec![pot(0.0, 0.0, 0.0)], tabletop_orbit(0.12)),
        "kettle" => (vec![kettle(0.0, 0.0, 0.0)], tabletop_orbit(0.12)),
        "kitchen-small" => {
            let table = 0.45;
            (
                vec![
                    drawer_stack("cabinet", -0.95, 0.6, 0.5, 0.8, 3, "handle"),
                    drawer_stack("chest", -0.25, 0.5, 0.45, 0.75, 3, "knob"),
                    oven(0.45),
                    kettle(-0.8, -1.15, table),
                    bottle(-0.35, -1.15, table),
                    bottle(-0.27, -1.15, table),
                    bottle(-0.19, -1.15, table),
                    pot(0.25, -1.15, table),
                ],
                Orbit {
                    target: [-0.2, -0.6, 0.45],
                    radius: 2.6,
                    height: 1.6,
                    start_deg: -35.0,
                    sweep_deg: 70.0,
                },
            )
        }
        other => return Err(Error::Recipe(format!("unknown recipe `{other}`"))),
    };
    Ok(Recipe {
        name: name.into(),
        objects,
        orbit,
    })
}

fn histogram(bin: usize) -> Vec<f64> {
    let mut h = vec![0.0; APPEARANCE_BINS];
    h[bin % APPEARANCE_BINS] += 0.7;
    h[(bin + 1) % APPEARANCE_BINS] += 0.15;
    h[(bin + APPEARANCE_BINS - 1) % APPEARANCE_BINS] += 0.15;
    h
}

pub fn default_intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 525.0,
        fy: 525.0,
        cx: 320.0,
        cy: 240.0,
        width: 640,
        height: 480,
    }
}

/// Instantiates a recipe. The seed shifts each object (with its parts) by
/// up to 1 cm horizontally and assigns appearance colors.
pub fn generate_scene(recipe: &Recipe, seed: u64) -> Result<GroundTruthScene> {
    let table = builtin_imap();
    for o in &recipe.objects {
        if !table.objects.contains(&o.category) {
            return Err(Error::Recipe(format!(
                "unknown object category `{}`",
                o.category
            )));
        }
        for p in &o.parts {
            let known = match p.kind {
                NodeKind::FunctionalCarrier => table.role_c(&p.category, &o.category),
                NodeKind::InteractiveUnit => table.role_u(&p.category, &o.category),
                NodeKind::Object => false,
            };
            if !known {
                return Err(Error::Recipe(format!(
                    "`{}` is not a known {:?} of `{}`",
                    p.category, p.kind, o.category
                )));
            }
            if let Some(c) = p.carrier {
                let ok = p.kind == NodeKind::InteractiveUnit
                    && o.parts
                        .get(c)
                        .is_some_and(|c| c.kind == NodeKind::FunctionalCarrier);
                if !ok {
                    return Err(Error::Recipe(format!(
                        "bad carrier reference on `{}`",
                        p.category
                    )));
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bins: Vec<usize> = (0..APPEARANCE_BINS).collect();
    bins.shuffle(&mut rng);

    let mut nodes = Vec::new();
    let mut triplets = Vec::new();
    let mut pairs = Vec::new();
    let mut imap = InteractabilityMap::default();
    let mut next: NodeId = 0;
    let mut new_node =
        |kind, category: &str, bbox, tags: &BTreeSet<Tag>, nodes: &mut Vec<GtNode>| {
            let id = next;
            next += 1;
            nodes.push(GtNode {
                id,
                kind,
                category: category.into(),
                bbox,
                appearance: histogram(bins[id as usize % APPEARANCE_BINS]),
                tags: tags.clone(),
            });
            id
        };

    for o in &recipe.objects {
        let shift = [
            rng.gen_range(-0.01..=0.01),
            rng.gen_range(-0.01..=0.01),
            0.0,
        ];
        let base_tags: BTreeSet<Tag> = if o.tabletop {
            [Tag::Tabletop].into()
        } else {
            BTreeSet::new()
        };
        let oid = new_node(
            NodeKind::Object,
            &o.category,
            Aabb3::from_center_size(add(o.center, shift), o.size),
            &base_tags,
            &mut nodes,
        );
        let mut part_ids = Vec::with_capacity(o.parts.len());
        for p in &o.parts {
            let in_chain = p.kind == NodeKind::FunctionalCarrier || p.carrier.is_some();
            let mut tags = base_tags.clone();
            if in_chain {
                tags.insert(Tag::Hierarchical);
            }
            let bbox = Aabb3::from_center_size(add(p.center, shift), p.size);
            part_ids.push(new_node(p.kind, &p.category, bbox, &tags, &mut nodes));
        }
        for (p, &pid) in o.parts.iter().zip(&part_ids) {
            if p.kind != NodeKind::InteractiveUnit {
                continue;
            }
            match p.carrier {
                Some(c) => {
                    let mut tags = base_tags.clone();
                    tags.insert(Tag::Hierarchical);
                    triplets.push(Triplet {
                        object: oid,
                        carrier: part_ids[c],
                        unit: pid,
                        tags,
                    });
                }
                None => pairs.push(Pair {
                    object: oid,
                    unit: pid,
                    tags: base_tags.clone(),
                }),
            }
        }
        let carriers: Vec<&str> = table.carriers_of[&o.category]
            .iter()
            .map(String::as_str)
            .collect();
        let units: Vec<&str> = table.units_of[&o.category]
            .iter()
            .map(String::as_str)
            .collect();
        imap.add_object(&o.category, &carriers, &units);
        for c in &carriers {
            for u in &units {
                let s = table.prior(c, u);
                if s > 0.0 {
                    imap.set_prior(c, u, s);
                }
            }
        }
    }

    let scene = GroundTruthScene {
        recipe: recipe.name.clone(),
        seed,
        intrinsics: default_intrinsics(),
        nodes,
        triplets,
        pairs,
        imap,
        orbit: recipe.orbit,
        trajectory: Vec::new(),
    };
    scene.validate()?;
    Ok(scene)
}

/// Convenience wrapper: looks up a shipped recipe by name.
pub fn generate_named(name: &str, seed: u64) -> Result<GroundTruthScene> {
    generate_scene(&recipe(name)?, seed)
}

/// Parametric detector and scorer noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Probability that a visible node is not detected in a frame.
    pub dropout_p: f64,
    /// Per-detection 3D localization error, metres (isotropic).
    pub centroid_sigma: f64,
    /// Per-coordinate 2D box error, pixels.
    pub bbox_jitter: f64,
    /// Probability that a frame's scores favor a wrong neighboring object.
    pub score_flip_p: f64,
    pub score_sigma: f64,
    /// Probability that a detection arrives without depth.
    #[serde(default)]
    pub depth_missing_p: f64,
    pub seed: u64,
}

impl NoiseProfile {
    pub fn noiseless(seed: u64) -> Self {
        NoiseProfile {
            dropout_p: 0.0,
            centroid_sigma: 0.0,
            bbox_jitter: 0.0,
            score_flip_p: 0.0,
            score_sigma: 0.0,
            depth_missing_p: 0.0,
            seed,
        }
    }

    /// The standard noisy setting used for recovery and ablation runs.
    pub fn noisy(seed: u64) -> Self {
        NoiseProfile {
            dropout_p: 0.3,
            centroid_sigma: 0.03,
            bbox_jitter: 2.0,
            score_flip_p: 0.2,
            score_sigma: 0.05,
            depth_missing_p: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("dropout_p", self.dropout_p),
            ("score_flip_p", self.score_flip_p),
            ("depth_missing_p", self.depth_missing_p),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(
                    "noise profile",
                    format!("{name} = {p} outside [0, 1)"),
                ));
            }
        }
        for (name, s) in [
            ("centroid_sigma", self.centroid_sigma),
            ("bbox_jitter", self.bbox_jitter),
            ("score_sigma", self.score_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(
                    "noise profile",
                    format!("{name} = {s} must be ≥ 0"),
                ));
            }
        }
        Ok(())
    }
}

/// Projected image box of a 3D box, unclipped, or `None` when any corner
/// lies behind the camera.
pub fn project_box(bbox: &Aabb3, pose: &Pose, intr: &Intrinsics) -> Option<BBox2> {
    let mut xs = [0.0; 8];
    let mut ys = [0.0; 8];
    for (i, c) in bbox.corners().iter().enumerate() {
        let p = pose.world_to_camera(*c);
        if p[2] < 0.1 {
            return None;
        }
        let [u, v] = intr.project(p)?;
        xs[i] = u;
        ys[i] = v;
    }
    let fold = |v: &[f64; 8], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
    Some(BBox2::new(
        fold(&xs, f64::min, f64::INFINITY),
        fold(&ys, f64::min, f64::INFINITY),
        fold(&xs, f64::max, f64::NEG_INFINITY),
        fold(&ys, f64::max, f64::NEG_INFINITY),
    ))
}

/// Clipped image box of a node, when at least half of it is in view.
pub fn visible_box(bbox: &Aabb3, pose: &Pose, intr: &Intrinsics) -> Option<BBox2> {
    let full = project_box(bbox, pose, intr)?;
    let clipped = full.intersect(&intr.image_box())?;
    (clipped.area() >= 20.0 && clipped.area() >= 0.5 * full.area()).then_some(clipped)
}

/// 3×3×3 lattice of interior sample points.
pub fn lattice_points(bbox: &Aabb3) -> Vec<Point3> {
    let f = [1.0 / 6.0, 0.5, 5.0 / 6.0];
    let s = bbox.size();
    let mut pts = Vec::with_capacity(27);
    for fx in f {
        for fy in f {
            for fz in f {
                pts.push([
                    bbox.min[0] + fx * s[0],
                    bbox.min[1] + fy * s[1],
                    bbox.min[2] + fz * s[2],
                ]);
            }
        }
    }
    pts
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

fn score(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    (mean + gaussian(rng, sigma)).clamp(0.01, 1.0)
}

/// Object each fine node functionally belongs to.
fn true_parents(scene: &GroundTruthScene) -> BTreeMap<NodeId, NodeId> {
    let mut m = BTreeMap::new();
    for t in &scene.triplets {
        m.insert(t.carrier, t.object);
        m.insert(t.unit, t.object);
    }
    for p in &scene.pairs {
        m.insert(p.unit, p.object);
    }
    m
}

/// Renders one frame. Each frame draws from its own stream of the profile's
/// generator, so frames can be produced independently.
pub fn render_frame(
    scene: &GroundTruthScene,
    profile: &NoiseProfile,
    i: usize,
    n_frames: usize,
) -> FramePacket {
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    rng.set_stream(i as u64 + 1);
    let pose = scene.orbit.pose(i, n_frames);
    let intr = scene.intrinsics;
    let frame_id = i as u64;

    let mut visible: Vec<(&GtNode, BBox2)> = Vec::new();
    for n in &scene.nodes {
        let drop = rng.gen::<f64>() < profile.dropout_p;
        if let Some(b) = visible_box(&n.bbox, &pose, &intr) {
            if !drop {
                visible.push((n, b));
            }
        }
    }
    visible.shuffle(&mut rng);

    let w = intr.width as f64;
    let h = intr.height as f64;
    let mut detections = Vec::with_capacity(visible.len());
    let mut gt_of_det = Vec::with_capacity(visible.len());
    for (k, (n, b)) in visible.into_iter().enumerate() {
        let j = profile.bbox_jitter;
        let xs = [
            b.x_min + gaussian(&mut rng, j),
            b.x_max + gaussian(&mut rng, j),
        ];
        let ys = [
            b.y_min + gaussian(&mut rng, j),
            b.y_max + gaussian(&mut rng, j),
        ];
        let mut bbox = BBox2::new(
            xs[0].min(xs[1]).clamp(0.0, w - 1.0),
            ys[0].min(ys[1]).clamp(0.0, h - 1.0),
            xs[0].max(xs[1]).clamp(0.0, w),
            ys[0].max(ys[1]).clamp(0.0, h),
        );
        bbox.x_max = bbox.x_max.max(bbox.x_min + 1.0);
        bbox.y_max = bbox.y_max.max(bbox.y_min + 1.0);
        let mask = Mask::from_rect(intr.width, intr.height, &bbox);

        let offset = [
            gaussian(&mut rng, profile.centroid_sigma),
            gaussian(&mut rng, profile.centroid_sigma),
            gaussian(&mut rng, profile.centroid_sigma),
        ];
        let no_depth = rng.gen::<f64>() < profile.depth_missing_p;
        let (points, centroid3d) = if no_depth {
            (Vec::new(), None)
        } else {
            let pts: Vec<Point3> = lattice_points(&n.bbox)
                .into_iter()
                .map(|p| add(p, offset))
                .collect();
            (pts, Some(add(n.bbox.center(), offset)))
        };
        detections.push(Detection2D {
            id: k as u32,
            frame_id,
            bbox,
            category: n.category.clone(),
            confidence: if n.kind == NodeKind::Object { 0.9 } else { 0.8 },
            kind: n.kind,
            mask,
            appearance: n.appearance.clone(),
            embedding: None,
            centroid3d,
            points,
        });
        gt_of_det.push(n.id);
    }

    let mut packet = FramePacket {
        frame_id,
        timestamp: i as f64 / 30.0,
        pose,
        intrinsics: intr,
        detections,
        edge_candidates: Vec::new(),
        imap: scene.imap.clone(),
    };

    let parents = true_parents(scene);
    let cands = generate_candidates(&packet, &PrefilterParams::default());
    let mut by_fine: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (ci, c) in cands.iter().enumerate() {
        by_fine.entry(c.fine_det).or_default().push(ci);
    }
    let mut scores = vec![0.0; cands.len()];
    let sigma = profile.score_sigma;
    for (fine_det, idxs) in &by_fine {
        let truth = parents.get(&gt_of_det[*fine_det as usize]).copied();
        let is_true = |ci: usize| Some(gt_of_det[cands[ci].object_det as usize]) == truth;
        let wrong: Vec<usize> = idxs.iter().copied().filter(|&ci| !is_true(ci)).collect();
        let flip = !wrong.is_empty() && rng.gen::<f64>() < profile.score_flip_p;
        let favored = flip.then(|| wrong[rng.gen_range(0..wrong.len())]);
        for &ci in idxs {
            let mean = match (is_true(ci), flip) {
                (true, false) => TRUE_MEAN,
                (true, true) => FLIP_TRUE_MEAN,
                (false, _) if favored == Some(ci) => FLIP_WRONG_MEAN,
                (false, _) => WRONG_MEAN,
            };
            scores[ci] = score(&mut rng, mean, sigma);
        }
    }
    packet.edge_candidates = cands
        .into_iter()
        .zip(scores)
        .map(|(mut c, s)| {
            c.s_2d = Some(s);
            c
        })
        .collect();
    packet
}

/// Renders `n_frames` packets along the scene's orbit.
pub fn render_stream(
    scene: &GroundTruthScene,
    profile: &NoiseProfile,
    n_frames: usize,
) -> Result<Vec<FramePacket>> {
    if n_frames == 0 {
        return Err(Error::invalid(
            "render_stream",
            "n_frames must be at least 1",
        ));
    }
    profile.validate()?;
    Ok((0..n_frames)
        .map(|i| render_frame(scene, profile, i, n_frames))
        .collect())
}

/// Ground-truth node ids detected in a packet, in detection order. Only
/// meaningful for packets rendered from `scene` without noise in category.
pub fn frame_truth(scene: &GroundTruthScene, packet: &FramePacket) -> Vec<Option<NodeId>> {
    packet
        .detections
        .iter()
        .map(|d| {
            scene
                .nodes
                .iter()
                .filter(|n| n.category == d.category && n.kind == d.kind)
                .map(|n| (n.id, project_box(&n.bbox, &packet.pose, &packet.intrinsics)))
                .filter_map(|(id, b)| b.map(|b| (id, b.iou(&d.bbox))))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(id, _)| id)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_recipe_generates_valid_scene() {
        for name in RECIPES {
            let scene = generate_named(name, 1).unwrap();
            scene.validate().unwrap();
            scene.imap.validate().unwrap();
        }
    }

    #[test]
    fn unknown_category_is_a_recipe_error() {
        let mut r = recipe("bottle").unwrap();
        r.objects[0].parts[0].category = "spout".into();
        assert!(matches!(generate_scene(&r, 0), Err(Error::Recipe(_))));
        assert!(matches!(recipe("spaceship"), Err(Error::Recipe(_))));
    }

    #[test]
    fn parts_lie_inside_their_object() {
        for name in RECIPES {
            let r = recipe(name).unwrap();
            for o in &r.objects {
                let ob = Aabb3::from_center_size(o.center, o.size);
                for p in &o.parts {
                    let pb = Aabb3::from_center_size(p.center, p.size);
                    assert!(
                        ob.contains_box(&pb),
                        "{name}: {} outside {}",
                        p.category,
                        o.category
                    );
                }
            }
        }
    }

    #[test]
    fn noiseless_frames_carry_every_visible_node() {
        let scene = generate_named("cabinet-3drawer", 0).unwrap();
        let packets = render_stream(&scene, &NoiseProfile::noiseless(0), 10).unwrap();
        for p in &packets {
            p.validate().unwrap();
            assert_eq!(p.detections.len(), scene.nodes.len());
        }
    }
}
