//! 2D lidar line-feature SLAM.
//!
//! The pipeline: a deterministic scan simulator produces range scans of a
//! segment world; `extract` turns each scan into perpendicular-form lines
//! using an odds-ratio merge criterion; `assoc` matches lines to map
//! landmarks with joint compatibility plus a segment-based geometric gate;
//! `graph` smooths the full trajectory and line map by sparse nonlinear
//! least squares. `harness` ties everything together for the CLI.

pub mod assoc;
pub mod extract;
pub mod geometry;
pub mod graph;
pub mod harness;
pub mod render;
pub mod segments;
pub mod sim;

pub use geometry::{LineFit, LineParams, Point2, Pose2};
