#![allow(dead_code)]
pub mod oracle;

use miniuuv::camera::{overhead_pose, tag_in_camera, CameraConfig, TagConfig};
use miniuuv::tracking::TagDetection;
use miniuuv::vehicle::VehicleState;

/// Noise-free overhead camera tilted about the tank x axis.
pub fn tilted_camera(tilt_deg: f64) -> CameraConfig {
    CameraConfig {
        pose: overhead_pose(2.0, 2.0, 3.0, tilt_deg.to_radians(), 0.0, 0.0),
        ..CameraConfig::default()
    }
    .noiseless()
}

/// Exact detections of a planar trajectory given as `(t, x, y, psi)`.
pub fn detections(track: &[(f64, f64, f64, f64)], cam: &CameraConfig) -> Vec<TagDetection> {
    let tag = TagConfig::default();
    track
        .iter()
        .map(|&(t, x, y, psi)| {
            let state = VehicleState { t, ..VehicleState::at_rest(x, y, psi) };
            TagDetection { timestamp: t, tag_id: tag.tag_id, pose: tag_in_camera(&state, cam, &tag) }
        })
        .collect()
}

/// Straight run at speed `u` along heading `psi`, sampled at `rate`.
pub fn straight(u: f64, psi: f64, rate: f64, n: usize) -> Vec<(f64, f64, f64, f64)> {
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            (t, 1.0 + u * t * psi.cos(), 1.5 + u * t * psi.sin(), psi)
        })
        .collect()
}

/// Constant-speed circle of `radius` about (2, 2), clockwise seen from above
/// the water (positive yaw rate in the tank frame).
pub fn circle(radius: f64, speed: f64, rate: f64, n: usize) -> Vec<(f64, f64, f64, f64)> {
    let w = speed / radius;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let a = w * t;
            // Start south of the centre heading north (+x), turning east.
            (t, 2.0 + radius * a.sin(), 2.0 - radius * a.cos(), a)
        })
        .collect()
}
