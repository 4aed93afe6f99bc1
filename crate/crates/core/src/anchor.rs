//! 2D functional edge anchoring: candidate (object ← fine part) pairs from a
//! single frame, pre-filtered on detection confidence and mask containment.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EdgeCandidate2D, FramePacket, Mask, RowMask};

/// Square dilation radius in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DilationRadius(u32);

impl DilationRadius {
    pub fn new(delta: u32, width: u32, height: u32) -> Result<Self> {
        let bound = width.min(height) / 4;
        if delta > bound {
            return Err(Error::invalid(
                "dilation radius",
                format!("{delta} px exceeds min(width, height)/4 = {bound}"),
            ));
        }
        Ok(DilationRadius(delta))
    }

    /// 3 px at 640 px image width, scaled with resolution.
    pub fn default_for(width: u32, height: u32) -> Self {
        let d = (3.0 * width as f64 / 640.0).round() as u32;
        DilationRadius(d.min(width.min(height) / 4))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

/// Thresholds of the cascaded pre-filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefilterParams {
    /// Gate on min(s_o, s_f).
    pub tau_det: f64,
    /// Gate on mask containment.
    pub tau_geo: f64,
    /// Overrides the resolution-scaled default radius when set.
    pub delta: Option<u32>,
}

impl Default for PrefilterParams {
    fn default() -> Self {
        PrefilterParams {
            tau_det: 0.25,
            tau_geo: 0.90,
            delta: None,
        }
    }
}

fn containment_rows(fine: &RowMask, dilated_object: &RowMask) -> Result<f64> {
    let area = fine.area();
    if area == 0 {
        return Err(Error::Degenerate(
            "fine mask is empty; containment undefined".into(),
        ));
    }
    Ok(fine.intersection_area(dilated_object) as f64 / area as f64)
}

/// Fraction of the fine mask covered by the dilated object mask,
/// `|M_f ∩ (M_o ⊕ Δ)| / |M_f|`.
pub fn mask_containment(fine: &Mask, object: &Mask, delta: DilationRadius) -> Result<f64> {
    if fine.width != object.width || fine.height != object.height {
        return Err(Error::invalid("mask", "masks live on different grids"));
    }
    containment_rows(&fine.to_rows(), &object.to_rows().dilate(delta.get()))
}

/// Emits every (object, fine part) pair permitted by the frame's
/// interactability map that clears both pre-filter gates. Output is ordered
/// by object detection id, then fine detection id; `s_2d` is left unset.
pub fn generate_candidates(packet: &FramePacket, params: &PrefilterParams) -> Vec<EdgeCandidate2D> {
    let w = packet.intrinsics.width;
    let h = packet.intrinsics.height;
    let delta = match params.delta {
        Some(d) => DilationRadius(d.min(w.min(h) / 4)),
        None => DilationRadius::default_for(w, h),
    };

    let mut objects: Vec<_> = packet
        .detections
        .iter()
        .filter(|d| !d.kind.is_fine())
        .collect();
    let mut fines: Vec<_> = packet
        .detections
        .iter()
        .filter(|d| d.kind.is_fine())
        .collect();
    objects.sort_by_key(|d| d.id);
    fines.sort_by_key(|d| d.id);
    let fine_rows: Vec<RowMask> = fines.iter().map(|d| d.mask.to_rows()).collect();

    let mut out = Vec::new();
    for o in objects {
        let mut dilated: Option<RowMask> = None;
        for (f, f_rows) in fines.iter().zip(&fine_rows) {
            if !packet.imap.permits(&o.category, &f.category) {
                continue;
            }
            let s_det = o.confidence.min(f.confidence);
            if s_det <= params.tau_det {
                continue;
            }
            let dil = dilated.get_or_insert_with(|| o.mask.to_rows().dilate(delta.get()));
            let Ok(g) = containment_rows(f_rows, dil) else {
                continue;
            };
            if g > params.tau_geo {
                out.push(EdgeCandidate2D {
                    frame_id: packet.frame_id,
                    object_det: o.id,
                    fine_det: f.id,
                    s_det,
                    g_camc: g,
                    s_2d: None,
                });
            }
        }
    }
    out
}

/// Completes a candidate with its visual-semantic score `s ∈ (0, 1]`.
pub fn attach_score(candidate: &EdgeCandidate2D, s: f64) -> Result<EdgeCandidate2D> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::invalid(
            "edge score",
            format!("s_2d = {s} outside (0, 1]"),
        ));
    }
    Ok(EdgeCandidate2D {
        s_2d: Some(s),
        ..candidate.clone()
    })
}

/// Runs the pre-filter on a packet and joins the surviving pairs with the
/// scores the packet supplies. Pre-filtered pairs without a supplied score,
/// and supplied scores for pairs that fail the pre-filter, are dropped.
pub fn scored_candidates(packet: &FramePacket, params: &PrefilterParams) -> Vec<EdgeCandidate2D> {
    let supplied: BTreeMap<(u32, u32), f64> = packet
        .edge_candidates
        .iter()
        .filter_map(|c| c.s_2d.map(|s| ((c.object_det, c.fine_det), s)))
        .collect();
    generate_candidates(packet, params)
        .into_iter()
        .filter_map(|c| {
            let s = *supplied.get(&(c.object_det, c.fine_det))?;
            attach_score(&c, s).ok()
        })
        .collect()
}

/// Deterministic stand-in for a visual-semantic scorer: looks the category
/// pair up in a table and adds seeded Gaussian noise (zero by default).
#[derive(Debug, Clone)]
pub struct MockScorer {
    table: BTreeMap<(String, String), f64>,
    default: f64,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl MockScorer {
    pub fn new(default: f64) -> Self {
        MockScorer {
            table: BTreeMap::new(),
            default,
            noise: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn with_pair(mut self, object: &str, fine: &str, score: f64) -> Self {
        self.table.insert((object.into(), fine.into()), score);
        self
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma is finite"));
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn score(&mut self, object: &str, fine: &str) -> f64 {
        let base = self
            .table
            .get(&(object.to_string(), fine.to_string()))
            .copied()
            .unwrap_or(self.default);
        let noisy = match &self.noise {
            Some(n) => base + n.sample(&mut self.rng),
            None => base,
        };
        noisy.clamp(1e-3, 1.0)
    }

    /// Scores every candidate of a packet in place.
    pub fn score_packet(&mut self, packet: &mut FramePacket, params: &PrefilterParams) {
        let cands = generate_candidates(packet, params);
        let mut scored = Vec::with_capacity(cands.len());
        for c in cands {
            let (Some(o), Some(f)) = (packet.detection(c.object_det), packet.detection(c.fine_det))
            else {
                continue;
            };
            let s = self.score(&o.category.clone(), &f.category.clone());
            scored.push(attach_score(&c, s).expect("mock scores are clamped into (0, 1]"));
        }
        packet.edge_candidates = scored;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BBox2;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Mask {
        Mask::from_rect(40, 40, &BBox2::new(x0, y0, x1, y1))
    }

    #[test]
    fn containment_trivial_cases() {
        let d0 = DilationRadius::new(0, 40, 40).unwrap();
        let obj = rect(0.0, 0.0, 20.0, 20.0);
        assert_eq!(
            mask_containment(&rect(5.0, 5.0, 8.0, 8.0), &obj, d0).unwrap(),
            1.0
        );
        assert_eq!(
            mask_containment(&rect(25.0, 25.0, 30.0, 30.0), &obj, d0).unwrap(),
            0.0
        );
    }

    #[test]
    fn empty_fine_mask_is_degenerate() {
        let d0 = DilationRadius::new(0, 40, 40).unwrap();
        let err = mask_containment(&Mask::empty(40, 40), &rect(0.0, 0.0, 5.0, 5.0), d0);
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn dilation_radius_bound() {
        assert!(DilationRadius::new(10, 40, 40).is_ok());
        assert!(DilationRadius::new(11, 40, 40).is_err());
        assert_eq!(DilationRadius::default_for(640, 480).get(), 3);
        assert_eq!(DilationRadius::default_for(1280, 960).get(), 6);
    }

    #[test]
    fn dilation_tolerates_contour_error() {
        // fine mask pokes 2 px beyond the object boundary
        let obj = rect(0.0, 0.0, 20.0, 20.0);
        let fine = rect(18.0, 5.0, 22.0, 9.0);
        let g0 = mask_containment(&fine, &obj, DilationRadius::new(0, 40, 40).unwrap()).unwrap();
        let g2 = mask_containment(&fine, &obj, DilationRadius::new(2, 40, 40).unwrap()).unwrap();
        assert_eq!(g0, 0.5);
        assert_eq!(g2, 1.0);
    }

    #[test]
    fn attach_score_domain() {
        let c = EdgeCandidate2D {
            frame_id: 0,
            object_det: 0,
            fine_det: 1,
            s_det: 0.8,
            g_camc: 1.0,
            s_2d: None,
        };
        assert_eq!(attach_score(&c, 1.0).unwrap().s_2d, Some(1.0));
        assert_eq!(attach_score(&c, 0.73).unwrap().s_2d, Some(0.73));
        assert!(attach_score(&c, 0.0).is_err());
        assert!(attach_score(&c, 1.01).is_err());
        assert!(attach_score(&c, f64::NAN).is_err());
    }

    #[test]
    fn mock_scorer_is_deterministic() {
        let mut a = MockScorer::new(0.5)
            .with_pair("cabinet", "handle", 0.9)
            .with_noise(0.05, 3);
        let mut b = MockScorer::new(0.5)
            .with_pair("cabinet", "handle", 0.9)
            .with_noise(0.05, 3);
        for _ in 0..10 {
            assert_eq!(a.score("cabinet", "handle"), b.score("cabinet", "handle"));
        }
        let mut quiet = MockScorer::new(0.5).with_pair("cabinet", "handle", 0.9);
        assert_eq!(quiet.score("cabinet", "handle"), 0.9);
        assert_eq!(quiet.score("oven", "knob"), 0.5);
    }
}
