//! Reflectance capture from sparse, noisy BRDF observations.
//!
//! The crate covers the whole offline pipeline of a handheld depth + IR
//! scanner with an LED ring:
//!
//! * [`geometry`]: poses, trajectory interpolation, projection and the
//!   half/difference angle reduction,
//! * [`brdf_table`]: the 45 x 48 bivariate reflectance table,
//! * [`simulator`]: a synthetic scanner producing IR and colour samples,
//! * [`estimation`]: per-vertex colour and reflectance tables,
//! * [`segmentation`]: material segmentation propagation over the global
//!   cell table,
//! * [`render_eval`]: material sphere and scene re-rendering plus evaluation
//!   against ground truth.

pub mod brdf_table;
pub mod estimation;
pub mod geometry;
pub mod render_eval;
pub mod segmentation;
pub mod simulator;

pub use brdf_table::{BrdfTable, CellIndex, CompleteBrdfTable, Rgb};
pub use geometry::{HalfDiffAngles, Pose, Quaternion, TimedPose, Vec3};
