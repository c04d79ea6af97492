//! Planar state estimation from overhead tag detections.
//!
//! A stream of camera-frame tag poses is split into gap-free segments, then
//! each segment goes through: plane fit, plane-aligned world rotation,
//! first-frame origin, world transform, yaw extraction and unwrapping,
//! uniform resampling, central differences, trailing moving average and
//! finally rotation of the planar velocity into the body frame.

mod io;
mod signal;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::frames::{
    self, body_velocities, extract_yaw, fit_plane_min_tilt, to_world, world_rotation, FramesError,
    PlaneCoefficients, Pose, RotationMatrix, Vec3,
};

pub use io::{read_detections, read_estimates, write_detections, write_estimates, CsvError};
pub use signal::{finite_difference, moving_average, resample_uniform, unwrap_angles};

/// Number of previously accepted detections whose median z anchors the
/// spurious-detection filter.
pub const OUTLIER_MEDIAN_WINDOW: usize = 5;
/// The z filter only rejects once this many detections are in its history.
const OUTLIER_MIN_HISTORY: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error("no detections")]
    EmptyInput,
    #[error("segment yields {samples} resampled points, need at least {required}")]
    SegmentTooShort { samples: usize, required: usize },
    #[error("series of length {len} is too short (need {required})")]
    TooShort { len: usize, required: usize },
    #[error("window {window} does not fit a series of length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("timestamps must strictly increase (violated at index {index})")]
    NonMonotoneTimestamps { index: usize },
    #[error("{timestamps} timestamps but {values} values")]
    LengthMismatch { timestamps: usize, values: usize },
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error(transparent)]
    Frames(#[from] FramesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagDetection {
    pub timestamp: f64,
    pub tag_id: u32,
    /// Tag pose in the camera frame.
    pub pose: Pose,
}

/// Detections with no gap longer than the configured `max_gap`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSegment {
    detections: Vec<TagDetection>,
}

impl DetectionSegment {
    /// Checks length and timestamp ordering; gap limits are enforced by
    /// [`segment_stream`].
    pub fn new(detections: Vec<TagDetection>) -> Result<Self, TrackingError> {
        if detections.len() < 2 {
            return Err(TrackingError::InvalidSegment(format!(
                "need at least 2 detections, got {}",
                detections.len()
            )));
        }
        let times: Vec<f64> = detections.iter().map(|d| d.timestamp).collect();
        signal::check_increasing(&times)?;
        Ok(Self { detections })
    }

    pub fn detections(&self) -> &[TagDetection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.detections[0].timestamp
    }

    pub fn end_time(&self) -> f64 {
        self.detections[self.detections.len() - 1].timestamp
    }
}

/// One uniformly sampled estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Moving-average length in output samples.
    pub smoothing_window: usize,
    /// Output sample rate, Hz.
    pub output_rate: f64,
    /// Largest tolerated gap between detections before a segment is split, s.
    pub max_gap: f64,
    /// Camera-frame z jump that marks a detection as spurious, m.
    pub outlier_z_jump: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            smoothing_window: 12,
            output_rate: 30.0,
            max_gap: 0.25,
            outlier_z_jump: 0.05,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), TrackingError> {
        if self.smoothing_window < 1 {
            return Err(TrackingError::InvalidConfig("smoothing_window must be >= 1".into()));
        }
        if !(self.output_rate > 0.0 && self.output_rate.is_finite()) {
            return Err(TrackingError::InvalidConfig("output_rate must be > 0".into()));
        }
        if !(self.max_gap > 0.0) {
            return Err(TrackingError::InvalidConfig("max_gap must be > 0".into()));
        }
        if !(self.outlier_z_jump > 0.0) {
            return Err(TrackingError::InvalidConfig("outlier_z_jump must be > 0".into()));
        }
        Ok(())
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.output_rate
    }

    /// Delay of the trailing average of central differences: the smoothed
    /// velocity at `t` estimates the true velocity at `t - lag`.
    pub fn velocity_lag(&self) -> f64 {
        (self.smoothing_window as f64 - 1.0) / 2.0 * self.sample_period()
    }
}

/// Splits a time-sorted detection stream into gap-free segments and drops
/// spurious detections whose camera-frame z jumps away from the running
/// median of the last [`OUTLIER_MEDIAN_WINDOW`] accepted ones.
///
/// Repeated timestamps keep the first detection. Segments with fewer than
/// two detections are discarded.
pub fn segment_stream(
    detections: &[TagDetection],
    config: &PipelineConfig,
) -> Result<Vec<DetectionSegment>, TrackingError> {
    config.validate()?;
    if detections.is_empty() {
        return Err(TrackingError::EmptyInput);
    }
    for (i, w) in detections.windows(2).enumerate() {
        if w[1].timestamp < w[0].timestamp {
            return Err(TrackingError::NonMonotoneTimestamps { index: i + 1 });
        }
    }

    let mut segments = Vec::new();
    let mut current: Vec<TagDetection> = Vec::new();
    let mut history: VecDeque<f64> = VecDeque::with_capacity(OUTLIER_MEDIAN_WINDOW);

    for det in detections {
        if let Some(last) = current.last() {
            if det.timestamp - last.timestamp > config.max_gap {
                flush(&mut current, &mut segments);
                history.clear();
            } else if det.timestamp == last.timestamp {
                continue;
            }
        }
        let z = det.pose.translation.z;
        if history.len() >= OUTLIER_MIN_HISTORY && (z - median(&history)).abs() > config.outlier_z_jump {
            continue;
        }
        if history.len() == OUTLIER_MEDIAN_WINDOW {
            history.pop_front();
        }
        history.push_back(z);
        current.push(*det);
    }
    flush(&mut current, &mut segments);
    Ok(segments)
}

fn flush(current: &mut Vec<TagDetection>, segments: &mut Vec<DetectionSegment>) {
    let dets = std::mem::take(current);
    if dets.len() >= 2 {
        segments.push(DetectionSegment { detections: dets });
    }
}

fn median(values: &VecDeque<f64>) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pipeline output plus the frame it is expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackEstimate {
    pub plane: PlaneCoefficients,
    /// Camera-to-world rotation used with [`to_world`]; world coordinates are
    /// `r_oc^T (q - origin)`.
    pub r_oc: RotationMatrix,
    /// Camera-frame position of the first detection.
    pub origin: Vec3,
    pub states: Vec<KinematicState>,
}

/// Runs the estimation pipeline on one segment.
pub fn run_pipeline(
    segment: &DetectionSegment,
    config: &PipelineConfig,
) -> Result<Vec<KinematicState>, TrackingError> {
    estimate_track(segment, config).map(|t| t.states)
}

/// [`run_pipeline`] that also returns the fitted plane and world frame.
///
/// Collinear or stationary tracks leave the plane's cross tilt unobservable;
/// for those the least-tilted least-squares plane is used instead of failing.
pub fn estimate_track(
    segment: &DetectionSegment,
    config: &PipelineConfig,
) -> Result<TrackEstimate, TrackingError> {
    config.validate()?;
    let dets = segment.detections();
    let translations: Vec<Vec3> = dets.iter().map(|d| d.pose.translation).collect();

    let plane = fit_plane_min_tilt(&translations)?;
    // world_rotation's rows are the world axes in camera coordinates, so the
    // camera-to-world rotation in to_world's convention is its transpose.
    let r_oc = world_rotation(&plane)?.transpose();
    let origin = translations[0];

    let times: Vec<f64> = dets.iter().map(|d| d.timestamp).collect();
    let mut xs = Vec::with_capacity(dets.len());
    let mut ys = Vec::with_capacity(dets.len());
    let mut yaws = Vec::with_capacity(dets.len());
    let world_from_camera = r_oc.transpose();
    for (det, q) in dets.iter().zip(&translations) {
        let p = to_world(*q, origin, &r_oc);
        xs.push(p.x);
        ys.push(p.y);
        // Tag attitude expressed in the same world frame as the positions.
        yaws.push(extract_yaw(&(world_from_camera * det.pose.rotation))?);
    }
    let yaws = unwrap_angles(&yaws);

    signal::check_increasing(&times)?;
    let grid = signal::uniform_grid(times[0], times[times.len() - 1], config.output_rate);
    let required = 2 * config.smoothing_window;
    if grid.len() < required {
        return Err(TrackingError::SegmentTooShort { samples: grid.len(), required });
    }
    let xs = signal::interpolate_onto(&times, &xs, &grid);
    let ys = signal::interpolate_onto(&times, &ys, &grid);
    let yaws = signal::interpolate_onto(&times, &yaws, &grid);

    let dt = config.sample_period();
    let xdot = moving_average(&finite_difference(&xs, dt)?, config.smoothing_window)?;
    let ydot = moving_average(&finite_difference(&ys, dt)?, config.smoothing_window)?;
    let rdot = moving_average(&finite_difference(&yaws, dt)?, config.smoothing_window)?;

    let states = (0..grid.len())
        .map(|i| {
            let bv = body_velocities(xdot[i], ydot[i], yaws[i]);
            KinematicState {
                t: grid[i],
                x: xs[i],
                y: ys[i],
                psi: frames::wrap_angle(yaws[i]),
                u: bv.u,
                v: bv.v,
                r: rdot[i],
            }
        })
        .collect();
    Ok(TrackEstimate { plane, r_oc, origin, states })
}

/// Runs [`estimate_track`] over many segments, one result per segment in
/// input order.
pub fn run_segments(
    segments: &[DetectionSegment],
    config: &PipelineConfig,
    exec: Execution,
) -> Vec<Result<TrackEstimate, TrackingError>> {
    exec::map(exec, segments, |s| estimate_track(s, config))
}
