//! Radio-fingerprint and LiDAR pose-graph SLAM.
//!
//! Odometry builds a keyframe chain; fingerprint similarity adds distance
//! constraints between revisited places; optional 2D LiDAR scan matching
//! refines consecutive edges and adds rigid loop closures before a second
//! optimisation pass. A simulator provides datasets with exact ground truth.

pub mod dataset;
pub mod dataset_io;
pub mod distance_model;
pub mod error;
pub mod evaluation;
pub mod fingerprint;
pub mod geometry;
pub mod mapping;
pub mod pipeline;
pub mod pose_graph;
pub mod scan_matching;
pub mod simulator;

pub use error::{Error, Result};
pub use geometry::Pose2D;
