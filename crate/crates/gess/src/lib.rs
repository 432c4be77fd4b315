//! Multi-cue local feature mechanisms and a homography matching harness.
//!
//! The crate is organized around a small dense-tensor kernel ([`numerics`])
//! on top of which the feature mechanisms are built:
//!
//! - [`coupled`]: semantic-normal coupled vector field, its losses and the
//!   analytic gradient with the radial/tangential split.
//! - [`stability`]: depth-discontinuity stability targets and the L1
//!   stability loss.
//! - [`utcf`]: unified triple-cue descriptor fusion (channel calibration,
//!   semantic-modulated gating, residual refinement).
//! - [`sdak`]: semantic-depth aware keypoint reweighting, NMS, top-K
//!   extraction and descriptor sampling.
//! - [`eval`]: homography-supervised matching evaluation (mutual NN,
//!   MMA/AUC metrics, HPatches-style dataset ingestion, reports).
//! - [`toy`]: a self-contained intensity-patch detector/descriptor used by
//!   fixtures and end-to-end tests.
//!
//! All maps are exchanged on disk as GTF tensor files (see
//! [`numerics::gtf`]); keypoint/descriptor sets use the `.kpd` container of
//! [`sdak::io`].

pub mod coupled;
pub mod eval;
pub mod numerics;
pub mod sdak;
pub mod stability;
pub mod toy;
pub mod utcf;

pub use numerics::Tensor;
