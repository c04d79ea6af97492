//! Deterministic testbed for a miniature underwater vehicle.
//!
//! - [`vehicle`]: ground-truth dynamics, pump, IR plunger array, depth sensor.
//! - [`camera`]: overhead tag observations with noise, dropout and jitter.
//! - [`link`]: framed radio protocol and depth-attenuated channel.
//! - [`tracking`]: planar state estimation from tag detections.
//! - [`frames`]: shared geometry (plane fit, world rotation, yaw, body velocities).
//! - [`harness`]: scenarios, the fixed-step event loop, metrics and artifacts.
//!
//! Batch entry points take an [`exec::Execution`]; with the default
//! `parallel` feature they fan out over rayon.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod exec;
pub mod frames;
pub mod harness;
pub mod link;
pub mod tracking;
pub mod vehicle;
