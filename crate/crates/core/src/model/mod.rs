//! Domain types shared by every stage of the pipeline.

mod geometry;
mod graph;
mod mask;
mod packet;
mod truth;

use serde::{Deserialize, Serialize};

pub use geometry::{
    add, cosine, cross, distance, dot, mean, norm, normalize, scale, sub, Aabb3, BBox2, Intrinsics,
    Point3, Pose,
};
pub use graph::{
    voxel_downsample, Edge, MapNode, NodeId, Provenance, Relation, SceneGraph, VOXEL_SIZE,
};
pub use mask::{Mask, RowMask};
pub use packet::{Detection2D, EdgeCandidate2D, FramePacket, InteractabilityMap};
pub use truth::{GroundTruthScene, GtNode, Orbit, Pair, Tag, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Object,
    FunctionalCarrier,
    InteractiveUnit,
}

impl NodeKind {
    /// Carriers and units are the fine-grained kinds.
    pub fn is_fine(self) -> bool {
        !matches!(self, NodeKind::Object)
    }
}
