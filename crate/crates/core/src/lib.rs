//! Self-supervised LiDAR ground segmentation.
//!
//! A smooth elevation surface `g(x, y)` is fitted to every scan at runtime with an
//! asymmetric robust loss, then points are labeled by their vertical residual to that
//! surface. Around the fit sit a quantile noise pre-filter and a pillar-based label
//! refinement. The crate also carries a RANSAC plane baseline, segmentation metrics and
//! a seeded synthetic scene generator with exact ground truth.
//!
//! Per-point kernels run on rayon when the `parallel` feature is on (the default).
//! Every reduction uses a fixed chunking, so [`Exec::Parallel`] and
//! [`Exec::Sequential`] produce bit-identical results.

pub mod baselines;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod par;
pub mod pointcloud;
pub mod pseudolabeler;
pub mod surfacefit;
pub mod synth;

pub use error::{Error, Result};
pub use par::Exec;
pub use pointcloud::{Label, PointCloud, SegmentationMask, StandardizationTransform};
