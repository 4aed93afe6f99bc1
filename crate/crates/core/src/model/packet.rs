use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::geometry::{BBox2, Intrinsics, Point3, Pose};
use super::mask::Mask;
use super::NodeKind;

const UNIT_TOL: f64 = 1e-6;
const POSE_TOL: f64 = 1e-5;

/// One open-vocabulary detection in a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection2D {
    /// Identifier unique within its packet; edge candidates refer to it.
    pub id: u32,
    pub frame_id: u64,
    pub bbox: BBox2,
    pub category: String,
    pub confidence: f64,
    pub kind: NodeKind,
    pub mask: Mask,
    /// Normalized colour histogram.
    pub appearance: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    /// Back-projected centre in world coordinates; absent when depth is invalid.
    #[serde(default)]
    pub centroid3d: Option<Point3>,
    /// Back-projected observation point cloud in world coordinates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Point3>,
}

impl Detection2D {
    pub fn validate(&self) -> Result<()> {
        let what = "detection";
        if !self.bbox.is_well_ordered() {
            return Err(Error::invalid(
                what,
                format!("det {}: bbox is not well ordered", self.id),
            ));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::invalid(
                what,
                format!("det {}: confidence outside [0,1]", self.id),
            ));
        }
        self.mask.validate()?;
        if let Some((x0, y0, x1, y1)) = self.mask.pixel_bounds() {
            let b = &self.bbox;
            let inside = x0 as f64 >= b.x_min.floor() - 1.0
                && y0 as f64 >= b.y_min.floor() - 1.0
                && x1 as f64 <= b.x_max.ceil() + 1.0
                && y1 as f64 <= b.y_max.ceil() + 1.0;
            if !inside {
                return Err(Error::invalid(
                    what,
                    format!("det {}: mask extends outside bbox", self.id),
                ));
            }
        }
        if self.appearance.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid(
                what,
                format!("det {}: negative histogram bin", self.id),
            ));
        }
        let sum: f64 = self.appearance.iter().sum();
        if (sum - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(
                what,
                format!("det {}: appearance sums to {sum}", self.id),
            ));
        }
        if let Some(e) = &self.embedding {
            let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid(
                    what,
                    format!("det {}: embedding norm {n}", self.id),
                ));
            }
        }
        if let Some(c) = self.centroid3d {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("detection centroid"));
            }
        }
        Ok(())
    }
}

/// Which carrier and unit categories each manipulable object admits, plus the
/// directed carrier ← unit compatibility prior.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractabilityMap {
    pub objects: BTreeSet<String>,
    #[serde(default)]
    pub carriers_of: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub units_of: BTreeMap<String, BTreeSet<String>>,
    /// `prior[carrier][unit]` in [0, 1]; missing entries read as 0.
    #[serde(default)]
    pub prior: BTreeMap<String, BTreeMap<String, f64>>,
}

impl InteractabilityMap {
    /// r^C: may a part of category `fine` act as a carrier of `object`?
    pub fn role_c(&self, fine: &str, object: &str) -> bool {
        self.carriers_of
            .get(object)
            .is_some_and(|s| s.contains(fine))
    }

    /// r^U: may a part of category `fine` act as an interactive unit of `object`?
    pub fn role_u(&self, fine: &str, object: &str) -> bool {
        self.units_of.get(object).is_some_and(|s| s.contains(fine))
    }

    pub fn permits(&self, object: &str, fine: &str) -> bool {
        self.objects.contains(object) && (self.role_c(fine, object) || self.role_u(fine, object))
    }

    pub fn prior(&self, carrier: &str, unit: &str) -> f64 {
        self.prior
            .get(carrier)
            .and_then(|m| m.get(unit))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn add_object(&mut self, object: &str, carriers: &[&str], units: &[&str]) {
        self.objects.insert(object.to_string());
        let c = self.carriers_of.entry(object.to_string()).or_default();
        c.extend(carriers.iter().map(|s| s.to_string()));
        let u = self.units_of.entry(object.to_string()).or_default();
        u.extend(units.iter().map(|s| s.to_string()));
    }

    pub fn set_prior(&mut self, carrier: &str, unit: &str, score: f64) {
        self.prior
            .entry(carrier.to_string())
            .or_default()
            .insert(unit.to_string(), score);
    }

    /// Union of two maps; overlapping priors keep the larger score.
    pub fn merge(&mut self, other: &InteractabilityMap) {
        self.objects.extend(other.objects.iter().cloned());
        for (k, v) in &other.carriers_of {
            self.carriers_of
                .entry(k.clone())
                .or_default()
                .extend(v.iter().cloned());
        }
        for (k, v) in &other.units_of {
            self.units_of
                .entry(k.clone())
                .or_default()
                .extend(v.iter().cloned());
        }
        for (c, row) in &other.prior {
            let dst = self.prior.entry(c.clone()).or_default();
            for (u, s) in row {
                let e = dst.entry(u.clone()).or_insert(*s);
                *e = e.max(*s);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for row in self.prior.values() {
            if row.values().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(Error::invalid("interactability map", "prior outside [0,1]"));
            }
        }
        Ok(())
    }
}

/// A pre-filtered (object ← fine part) pair seen in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCandidate2D {
    pub frame_id: u64,
    pub object_det: u32,
    pub fine_det: u32,
    /// min(s_o, s_f)
    pub s_det: f64,
    pub g_camc: f64,
    /// Visual-semantic support in (0, 1]; absent until scored.
    #[serde(default)]
    pub s_2d: Option<f64>,
}

/// One timestamped frame of perception output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePacket {
    pub frame_id: u64,
    pub timestamp: f64,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub detections: Vec<Detection2D>,
    #[serde(default)]
    pub edge_candidates: Vec<EdgeCandidate2D>,
    #[serde(default)]
    pub imap: InteractabilityMap,
}

impl FramePacket {
    pub fn detection(&self, id: u32) -> Option<&Detection2D> {
        self.detections.iter().find(|d| d.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let err = self.pose.orthonormality_error();
        if err > POSE_TOL {
            return Err(Error::invalid(
                "packet",
                format!(
                    "frame {}: pose rotation not orthonormal (error {err:.2e})",
                    self.frame_id
                ),
            ));
        }
        let mut ids = BTreeSet::new();
        for d in &self.detections {
            if !ids.insert(d.id) {
                return Err(Error::invalid(
                    "packet",
                    format!("frame {}: duplicate detection id {}", self.frame_id, d.id),
                ));
            }
            if d.frame_id != self.frame_id {
                return Err(Error::invalid(
                    "packet",
                    format!(
                        "frame {}: detection {} carries frame {}",
                        self.frame_id, d.id, d.frame_id
                    ),
                ));
            }
            if d.mask.width != self.intrinsics.width || d.mask.height != self.intrinsics.height {
                return Err(Error::invalid(
                    "packet",
                    format!(
                        "frame {}: detection {} mask grid differs from image",
                        self.frame_id, d.id
                    ),
                ));
            }
            d.validate()?;
        }
        for (i, c) in self.edge_candidates.iter().enumerate() {
            for (field, id) in [("object_det", c.object_det), ("fine_det", c.fine_det)] {
                if !ids.contains(&id) {
                    return Err(Error::invalid(
                        "packet",
                        format!(
                            "frame {}: edge_candidates[{i}].{field} references missing detection {id}",
                            self.frame_id
                        ),
                    ));
                }
            }
            if let Some(s) = c.s_2d {
                if !(s > 0.0 && s <= 1.0) {
                    return Err(Error::invalid(
                        "packet",
                        format!(
                            "frame {}: edge_candidates[{i}].s_2d = {s} outside (0,1]",
                            self.frame_id
                        ),
                    ));
                }
            }
        }
        self.imap.validate()
    }
}
