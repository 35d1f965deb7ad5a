//! Conservative continuous collision detection for triangle meshes whose
//! vertices move linearly over one time step.
//!
//! The pipeline builds single-precision swept boxes ([`geometry`]), filters
//! them with the Sweep and Tiniest Queue broad phase ([`broadphase`]), and
//! bounds the earliest time of impact of every surviving vertex-face and
//! edge-edge pair with an interval inclusion function ([`narrowphase`]).
//! [`pipeline`] ties the stages together under a memory budget and
//! [`oracle`] provides exact ground truth for auditing.

pub mod geometry;
pub mod broadphase;
pub mod narrowphase;
pub mod oracle;
pub mod pipeline;
pub mod scenegen;

pub use geometry::{build_boxes, Aabb, PrimitiveId, PrimitiveKind, SceneStep};
