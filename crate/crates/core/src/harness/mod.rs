//! Scenario runner: wires vehicle, camera, link and tracking together, then
//! scores the estimates against simulation truth.

mod artifacts;
pub mod builtin;
mod config;
pub mod metrics;
mod runner;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::camera::{CameraConfig, TagConfig};
use crate::exec::{self, Execution};
use crate::link::{ChannelConfig, Message};
use crate::tracking::{KinematicState, PipelineConfig, TagDetection, TrackEstimate};
use crate::vehicle::{VehicleParams, VehicleState, SYRINGE_CAPACITY_ML};

pub use artifacts::{evaluate_run_dir, load_run_dir, write_artifacts, write_metrics, RunData};
pub use config::{format_message, parse_message, parse_vehicle_params, split_override, ConfigError};
pub use metrics::{circle_fit, compute_metrics, Circle, MetricsError, TruthSample};
pub use runner::run_scenario;

/// Fixed simulation step, s.
pub const DEFAULT_DT: f64 = 1.0 / 240.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Runtime(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] crate::tracking::CsvError),
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tank {
    /// Side of the square tank, m.
    pub side: f64,
    pub depth: f64,
}

impl Default for Tank {
    fn default() -> Self {
        Self { side: 4.115, depth: 1.372 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    /// Syringe fill, mL.
    pub fill: f64,
}

/// Geometry of the overhead camera; see [`crate::camera::overhead_pose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMount {
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub tilt_x: f64,
    pub tilt_y: f64,
    pub yaw: f64,
}

impl Default for CameraMount {
    fn default() -> Self {
        Self { x: 2.0575, y: 2.0575, height: 3.2, tilt_x: 3f64.to_radians(), tilt_y: 0.0, yaw: 0.0 }
    }
}

/// Frame used for the plot-data files. `Overhead` flips the lateral axis so yaw
/// and yaw rate increase clockwise in the overhead camera image;
/// `Ned` is the tank frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlotFrame {
    #[default]
    Overhead,
    Ned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedCommand {
    pub time: f64,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    /// Ground-station commands, sent over the radio at their times.
    pub command_script: Vec<ScriptedCommand>,
    /// Onboard sequences started by `StartSequence`; times are offsets from
    /// the moment the command is applied.
    pub sequences: BTreeMap<u8, Vec<ScriptedCommand>>,
    pub vehicle: VehicleParams,
    pub camera: CameraConfig,
    pub camera_mount: CameraMount,
    pub tag: TagConfig,
    pub channel: ChannelConfig,
    pub pipeline: PipelineConfig,
    pub seed: u64,
    pub tank: Tank,
    pub start: StartState,
    pub dt: f64,
    /// Hz
    pub telemetry_rate: f64,
    pub depth_noise_sigma: f64,
    /// Ambient IR level at the surface, `0..=1`.
    pub surface_ambient: f64,
    pub plot_frame: PlotFrame,
    /// Start of the steady-state window used by the shape metrics.
    pub steady_after: Option<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        let tank = Tank::default();
        let camera_mount = CameraMount::default();
        let camera = CameraConfig { pose: camera_mount.pose(), ..CameraConfig::default() };
        Self {
            name: "custom".to_string(),
            duration: 10.0,
            command_script: Vec::new(),
            sequences: BTreeMap::new(),
            vehicle: VehicleParams { tank_depth: tank.depth, ..VehicleParams::default() },
            camera,
            camera_mount,
            tag: TagConfig::default(),
            channel: ChannelConfig::default(),
            pipeline: PipelineConfig::default(),
            seed: 1,
            tank,
            start: StartState { x: tank.side / 2.0, y: tank.side / 2.0, psi: 0.0, fill: SYRINGE_CAPACITY_ML / 2.0 },
            dt: DEFAULT_DT,
            telemetry_rate: 5.0,
            depth_noise_sigma: 0.002,
            surface_ambient: 0.95,
            plot_frame: PlotFrame::Overhead,
            steady_after: None,
        }
    }
}

impl Scenario {
    /// Checks cross-field consistency and refreshes derived fields (camera
    /// pose from the mount, floor depth from the tank).
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(key, format!("must be positive, got {v}")))
            }
        };
        positive("duration", self.duration)?;
        positive("dt", self.dt)?;
        if self.dt > crate::vehicle::MAX_DT {
            return Err(ConfigError::new("dt", format!("must be at most {} s", crate::vehicle::MAX_DT)));
        }
        positive("telemetry_rate", self.telemetry_rate)?;
        positive("tank.side", self.tank.side)?;
        positive("tank.depth", self.tank.depth)?;
        positive("camera.height", self.camera_mount.height)?;
        if !(self.depth_noise_sigma >= 0.0) {
            return Err(ConfigError::new("depth_noise_sigma", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.surface_ambient) {
            return Err(ConfigError::new("surface_ambient", "must be in [0, 1]"));
        }
        if !(0.0..=SYRINGE_CAPACITY_ML).contains(&self.start.fill) {
            return Err(ConfigError::new("start.fill", format!("must be in [0, {SYRINGE_CAPACITY_ML}] mL")));
        }
        let mut prev = f64::NEG_INFINITY;
        for c in &self.command_script {
            if c.time < prev {
                return Err(ConfigError::new("cmd", format!("script times must be non-decreasing ({} after {prev})", c.time)));
            }
            if !(0.0..=self.duration).contains(&c.time) {
                return Err(ConfigError::new("cmd", format!("time {} outside [0, {}]", c.time, self.duration)));
            }
            if matches!(c.message, Message::Telemetry { .. }) {
                return Err(ConfigError::new("cmd", "telemetry is not a ground-station command"));
            }
            prev = c.time;
        }
        for (id, steps) in &self.sequences {
            if steps.iter().any(|c| c.time < 0.0) {
                return Err(ConfigError::new(format!("seq.{id}"), "offsets must be >= 0"));
            }
        }
        self.vehicle.tank_depth = self.tank.depth;
        self.vehicle.validate().map_err(|e| ConfigError::new("vehicle", e.to_string()))?;
        self.camera.pose = self.camera_mount.pose();
        self.camera.validate().map_err(|m| ConfigError::new("camera", m))?;
        self.channel.validate().map_err(|m| ConfigError::new("channel", m))?;
        self.pipeline.validate().map_err(|e| ConfigError::new("pipeline", e.to_string()))?;
        Ok(())
    }

    /// Same scenario with every camera noise and dropout source disabled.
    pub fn noiseless(&self) -> Self {
        Self { camera: self.camera.noiseless(), ..self.clone() }
    }

    pub fn initial_state(&self) -> VehicleState {
        VehicleState {
            syringe_fill: self.start.fill,
            ..VehicleState::at_rest(self.start.x, self.start.y, self.start.psi)
        }
    }
}

/// One scripted ground-station command and what became of it.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandRecord {
    pub scripted_time: f64,
    pub message: Message,
    /// Truth depth when the frame left the ground station, m.
    pub depth_at_send: f64,
    pub delivered: bool,
    pub applied_time: Option<f64>,
}

/// Telemetry as produced on board, before the radio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetrySample {
    pub t: f64,
    pub depth: f64,
    pub ir: [f64; crate::vehicle::IR_CHANNELS],
    /// `None` when the array gave no usable signal.
    pub fill_estimate: Option<f64>,
    pub fill_truth: f64,
    pub flags: u8,
    pub delivered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub t: f64,
    pub detected: bool,
}

/// Pipeline output for one detection segment, in its own estimate frame and
/// mapped back into the tank (NED) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResult {
    pub track: TrackEstimate,
    pub ned: Vec<KinematicState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    /// Resolved scenario the run used.
    pub scenario: Scenario,
    pub truth: Vec<VehicleState>,
    pub frames: Vec<FrameRecord>,
    pub detections: Vec<TagDetection>,
    pub segments: Vec<SegmentResult>,
    /// Segments the pipeline rejected, with the reason.
    pub rejected_segments: Vec<(f64, String)>,
    pub commands: Vec<CommandRecord>,
    pub telemetry: Vec<TelemetrySample>,
    /// Telemetry decoded at the ground station: (arrival time, message).
    pub telemetry_received: Vec<(f64, Message)>,
    pub metrics: BTreeMap<String, f64>,
}

impl RunArtifacts {
    /// Pipeline output of all segments, in the estimate frame.
    pub fn estimates(&self) -> Vec<KinematicState> {
        self.segments.iter().flat_map(|s| s.track.states.iter().copied()).collect()
    }

    pub fn estimates_ned(&self) -> Vec<KinematicState> {
        self.segments.iter().flat_map(|s| s.ned.iter().copied()).collect()
    }
}

/// Runs independent scenarios, in parallel when `exec` allows.
pub fn run_batch(scenarios: &[Scenario], exec: Execution) -> Vec<Result<RunArtifacts, HarnessError>> {
    exec::map(exec, scenarios, |s| run_scenario(s.clone()))
}
