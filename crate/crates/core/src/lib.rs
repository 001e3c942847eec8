//! Fall-hazard detection from RGB-D frames.
//!
//! Two paths run on every frame. The RGB path takes detector boxes and
//! localizes them from the depth pixels inside each box (or, without depth,
//! by intersecting the box-center ray with the floor). The depth path removes
//! the floor plane from the point cloud, grows regions over what remains and
//! classifies an enlarged crop around each region. Results are fused and
//! graded by a small rule cascade into `none`, `moderate` or `high` severity.
//!
//! - [`geometry`]: pinhole camera, back-projection, floor-ray intersection
//! - [`pointcloud`]: organized clouds, RanSaC floor fit, region growing
//! - [`roi_depth`]: histogram, K-means and double-threshold ROI distance
//! - [`backends`]: detector/classifier interfaces and fixture backends
//! - [`fusion`]: taxonomy and cross-path duplicate merging
//! - [`hazard`]: occupancy map and severity rules
//! - [`synth`]: ray-cast synthetic scenes with ground truth
//! - [`pipeline`]: per-frame orchestration
//! - [`bundle`], [`config`], [`report`], [`overlay`], [`cli`]: file formats and tooling

pub mod backends;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod hazard;
pub mod overlay;
pub mod pipeline;
pub mod pointcloud;
pub mod report;
pub mod roi_depth;
pub mod synth;

pub use crate::error::{Error, Result};
