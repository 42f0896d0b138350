//! Tree reconstruction from calibrated silhouettes to branch traits.
//!
//! Stages: [`segmentation`] turns color images into silhouette probability
//! maps, [`reconstruction`] carves a voxel visual hull, [`edt`] labels each
//! voxel with its distance to the surface, [`skeleton`] extracts centerline
//! paths, [`graph`] orients them into a rooted tree and [`traits`] measures
//! each branch. [`pipeline`] chains the stages; [`synthetic`] generates test
//! trees with exact ground truth.

pub mod calibration;
pub mod edt;
pub mod graph;
pub mod grid;
pub mod pipeline;
pub mod ply;
pub mod reconstruction;
pub mod segmentation;
pub mod skeleton;
pub mod synthetic;
pub mod traits;
