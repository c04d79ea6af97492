//! Overhead camera observation model.
//!
//! Works at the pose level: the tag's true pose is pushed through the
//! camera extrinsics and perturbed, there is no image formation. Capture
//! times come from [`frame_clock`], which carries the frame-rate jitter; a
//! detection is stamped with the time it was captured.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::frames::{Pose, RotationMatrix, Vec3};
use crate::tracking::TagDetection;
use crate::vehicle::VehicleState;

/// Edge length of the vehicle's tag (2.8 in), m.
pub const DEFAULT_TAG_SIZE: f64 = 0.07112;
/// Height of the tag above the hull axis (outer hull radius), m.
pub const DEFAULT_TAG_HEIGHT: f64 = 0.0445;
/// Probability that an enabled spurious-pose injector corrupts a detection.
pub const SPURIOUS_PROB: f64 = 0.005;
/// Camera-frame z offset of an injected spurious detection, m.
pub const SPURIOUS_Z_OFFSET: f64 = 0.2;
/// Jitter is clamped to this fraction of the nominal frame period.
pub const MAX_JITTER_FRACTION: f64 = 0.4;

/// Circular patch of the water surface where glare suppresses detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlareRegion {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub dropout_prob: f64,
}

impl GlareRegion {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center_x).hypot(y - self.center_y) <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    /// Camera pose in the world (NED) frame. Camera z looks along the optical axis.
    pub pose: Pose,
    /// Hz
    pub frame_rate: f64,
    /// s
    pub timestamp_jitter_sigma: f64,
    /// m
    pub translation_noise_sigma: f64,
    /// rad
    pub rotation_noise_sigma: f64,
    pub dropout_prob: f64,
    pub glare_regions: Vec<GlareRegion>,
    /// Inject occasional z-offset outliers.
    pub spurious_outliers: bool,
    /// Tag is only seen while the vehicle is shallower than this, m.
    pub visibility_depth: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            pose: overhead_pose(2.0575, 2.0575, 3.2, 3f64.to_radians(), 0.0, 0.0),
            frame_rate: 30.0,
            timestamp_jitter_sigma: 0.003,
            translation_noise_sigma: 0.003,
            rotation_noise_sigma: 0.01,
            dropout_prob: 0.02,
            glare_regions: Vec::new(),
            spurious_outliers: false,
            visibility_depth: 0.05,
        }
    }
}

impl CameraConfig {
    /// Same geometry and timing with every noise and dropout source disabled.
    pub fn noiseless(&self) -> Self {
        Self {
            timestamp_jitter_sigma: 0.0,
            translation_noise_sigma: 0.0,
            rotation_noise_sigma: 0.0,
            dropout_prob: 0.0,
            glare_regions: Vec::new(),
            spurious_outliers: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(format!("frame_rate must be > 0, got {}", self.frame_rate));
        }
        let probs = std::iter::once(("dropout_prob", self.dropout_prob))
            .chain(self.glare_regions.iter().map(|g| ("glare dropout_prob", g.dropout_prob)));
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        for (name, v) in [
            ("timestamp_jitter_sigma", self.timestamp_jitter_sigma),
            ("translation_noise_sigma", self.translation_noise_sigma),
            ("rotation_noise_sigma", self.rotation_noise_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.frame_rate
    }

    fn dropout_at(&self, x: f64, y: f64) -> f64 {
        self.glare_regions
            .iter()
            .filter(|g| g.contains(x, y))
            .fold(self.dropout_prob, |p, g| p.max(g.dropout_prob))
    }
}

/// Camera hanging `height` above the water surface at `(x, y)`, looking
/// down, then tilted by `tilt_x` and `tilt_y` about the world axes and
/// turned by `yaw` about the vertical.
pub fn overhead_pose(x: f64, y: f64, height: f64, tilt_x: f64, tilt_y: f64, yaw: f64) -> Pose {
    let rotation = RotationMatrix::rot_x(tilt_x) * RotationMatrix::rot_y(tilt_y) * RotationMatrix::rot_z(yaw);
    Pose::new(Vec3::new(x, y, -height), rotation)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagConfig {
    pub tag_id: u32,
    /// Edge length, m. Metadata only at the pose level.
    pub size: f64,
    /// Tag pose in the vehicle body frame.
    pub mount_offset: Pose,
}

impl Default for TagConfig {
    fn default() -> Self {
        Self {
            tag_id: 0,
            size: DEFAULT_TAG_SIZE,
            mount_offset: Pose::new(Vec3::new(0.0, 0.0, -DEFAULT_TAG_HEIGHT), RotationMatrix::IDENTITY),
        }
    }
}

/// Vehicle body pose in the world frame.
pub fn body_pose(state: &VehicleState) -> Pose {
    let rotation =
        RotationMatrix::rot_z(state.psi) * RotationMatrix::rot_y(state.theta) * RotationMatrix::rot_x(state.phi);
    Pose::new(state.position, rotation)
}

/// Exact camera-frame pose of the tag.
pub fn tag_in_camera(state: &VehicleState, cam: &CameraConfig, tag: &TagConfig) -> Pose {
    let tag_world = body_pose(state).compose(&tag.mount_offset);
    cam.pose.inverse().compose(&tag_world)
}

/// One camera frame captured at `t`. Returns `None` when the tag is not
/// seen: vehicle submerged, random dropout or glare.
pub fn observe<R: Rng + ?Sized>(
    state: &VehicleState,
    cam: &CameraConfig,
    tag: &TagConfig,
    t: f64,
    rng: &mut R,
) -> Option<TagDetection> {
    if state.position.z >= cam.visibility_depth {
        return None;
    }
    let p_drop = cam.dropout_at(state.position.x, state.position.y);
    if rng.random::<f64>() < p_drop {
        return None;
    }

    let mut pose = tag_in_camera(state, cam, tag);
    pose.translation += Vec3::new(
        gaussian(rng, cam.translation_noise_sigma),
        gaussian(rng, cam.translation_noise_sigma),
        gaussian(rng, cam.translation_noise_sigma),
    );
    let axis = Vec3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    let angle = gaussian(rng, cam.rotation_noise_sigma);
    pose.rotation = RotationMatrix::from_axis_angle(axis, angle) * pose.rotation;

    if cam.spurious_outliers && rng.random::<f64>() < SPURIOUS_PROB {
        pose.translation.z += SPURIOUS_Z_OFFSET;
    }
    Some(TagDetection { timestamp: t, tag_id: tag.tag_id, pose })
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Capture times over `[0, duration)`: nominal `k / frame_rate` plus
/// Gaussian jitter clamped to ±40 % of a period, so the sequence is strictly
/// increasing.
pub fn frame_clock<R: Rng + ?Sized>(cam: &CameraConfig, duration: f64, rng: &mut R) -> Vec<f64> {
    let period = cam.frame_period();
    let count = (duration * cam.frame_rate - 1e-9).ceil().max(0.0) as usize;
    let bound = MAX_JITTER_FRACTION * period;
    (0..count)
        .map(|k| {
            let jitter = gaussian(rng, cam.timestamp_jitter_sigma).clamp(-bound, bound);
            let t = k as f64 / cam.frame_rate + jitter;
            if k == 0 {
                t.max(0.0)
            } else {
                t
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::fit_plane;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_camera() -> CameraConfig {
        CameraConfig { pose: Pose::IDENTITY, ..CameraConfig::default().noiseless() }
    }

    #[test]
    fn identity_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tag = TagConfig { mount_offset: Pose::IDENTITY, ..TagConfig::default() };
        let state = VehicleState::at_rest(1.0, 2.0, 0.0);
        let det = observe(&state, &identity_camera(), &tag, 0.5, &mut rng).unwrap();
        assert_eq!(det.pose.translation, Vec3::new(1.0, 2.0, 0.0));
        assert_eq!(det.pose.rotation, RotationMatrix::IDENTITY);
        assert_eq!(det.timestamp, 0.5);
    }

    #[test]
    fn noiseless_observation_recovers_world_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cam = CameraConfig::default().noiseless();
        let tag = TagConfig::default();
        let mut state = VehicleState::at_rest(1.3, 0.7, 0.9);
        state.position.z = 0.01;
        let det = observe(&state, &cam, &tag, 0.0, &mut rng).unwrap();
        let world = cam.pose.compose(&det.pose);
        let truth = body_pose(&state).compose(&tag.mount_offset);
        assert!((world.translation - truth.translation).norm() < 1e-12);
        let dr = (world.rotation.transpose() * truth.rotation).orthonormality_error();
        assert!(dr < 1e-12);
        for i in 0..3 {
            assert!((world.rotation.row(i) - truth.rotation.row(i)).norm() < 1e-12);
        }
    }

    #[test]
    fn tilted_camera_sees_coplanar_tags() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tilt = 3f64.to_radians();
        let cam = CameraConfig {
            pose: overhead_pose(2.0, 2.0, 3.2, tilt, 0.0, 0.0),
            ..CameraConfig::default().noiseless()
        };
        let tag = TagConfig::default();
        let pts: Vec<Vec3> = (0..60)
            .map(|i| {
                let a = i as f64 * 0.1;
                let s = VehicleState::at_rest(2.0 + a.cos(), 2.0 + 0.5 * a.sin(), a);
                observe(&s, &cam, &tag, 0.0, &mut rng).unwrap().pose.translation
            })
            .collect();
        let plane = fit_plane(&pts).unwrap();
        for p in &pts {
            assert!(plane.residual(*p).abs() < 1e-9);
        }
        // Plane normal against camera z.
        let n = plane.normal().normalized();
        let angle = (-n.z).acos();
        assert_abs_diff_eq!(angle, tilt, epsilon = 1e-9);
    }

    #[test]
    fn full_dropout_and_submerged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cam = CameraConfig { dropout_prob: 1.0, ..CameraConfig::default() };
        let s = VehicleState::at_rest(1.0, 1.0, 0.0);
        assert!((0..100).all(|_| observe(&s, &cam, &TagConfig::default(), 0.0, &mut rng).is_none()));
        let mut deep = s;
        deep.position.z = 0.3;
        let clear = CameraConfig::default().noiseless();
        assert!(observe(&deep, &clear, &TagConfig::default(), 0.0, &mut rng).is_none());
    }

    #[test]
    fn glare_region_blocks_locally() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cam = CameraConfig {
            glare_regions: vec![GlareRegion { center_x: 1.0, center_y: 1.0, radius: 0.3, dropout_prob: 1.0 }],
            ..CameraConfig::default().noiseless()
        };
        let tag = TagConfig::default();
        assert!(observe(&VehicleState::at_rest(1.1, 1.0, 0.0), &cam, &tag, 0.0, &mut rng).is_none());
        assert!(observe(&VehicleState::at_rest(2.0, 1.0, 0.0), &cam, &tag, 0.0, &mut rng).is_some());
    }

    #[test]
    fn frame_clock_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let exact = frame_clock(&CameraConfig::default().noiseless(), 1.0, &mut rng);
        assert_eq!(exact.len(), 30);
        for w in exact.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 1.0 / 30.0, epsilon = 1e-15);
        }
        let cam = CameraConfig::default();
        let ts = frame_clock(&cam, 10_000.0 / 30.0, &mut rng);
        assert_eq!(ts.len(), 10_000);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        let mean = (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64;
        assert!((mean - 1.0 / 30.0).abs() < 0.01 / 30.0);
    }

    #[test]
    fn noise_residual_matches_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sigma = 0.003;
        let cam = CameraConfig {
            translation_noise_sigma: sigma,
            ..CameraConfig::default().noiseless()
        };
        let tag = TagConfig::default();
        let pts: Vec<Vec3> = (0..1000)
            .map(|i| {
                let s = VehicleState::at_rest(0.5 + (i % 40) as f64 * 0.08, 0.5 + (i / 40) as f64 * 0.1, 0.0);
                observe(&s, &cam, &tag, 0.0, &mut rng).unwrap().pose.translation
            })
            .collect();
        let plane = fit_plane(&pts).unwrap();
        let rms = (pts.iter().map(|p| plane.residual(*p).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
        assert!((rms - sigma).abs() / sigma < 0.15, "rms {rms}");
    }

    #[test]
    fn seeded_observations_repeat() {
        let cam = CameraConfig { spurious_outliers: true, ..CameraConfig::default() };
        let tag = TagConfig::default();
        let s = VehicleState::at_rest(1.0, 1.0, 0.2);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|i| observe(&s, &cam, &tag, i as f64, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }
}
