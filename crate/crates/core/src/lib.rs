//! Converts annotated LiDAR human-pose sequences into mmWave-like point
//! cloud sequences, evaluates the unsupervised temporal consistency loss
//! with its analytic gradient, and scores poses with MPJPE / PA-MPJPE.
//!
//! All operations are pure functions of their inputs and an explicit
//! [`SeededRng`]; there is no global state.

pub mod convert;
pub mod error;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod preprocess;
pub mod rng;
pub mod synth;
pub mod utcl;

pub use error::{Error, Result};
pub use geom::{
    bounding_cube, nearest_point_distance, skeleton_center, FlowField, Frame, Point3, PointCloud, Sequence, Skeleton,
    SourceTag, Vec3, BONES, JOINT_NAMES, NUM_JOINTS,
};
pub use rng::SeededRng;
