use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics;
use super::{
    CommandRecord, FrameRecord, HarnessError, RunArtifacts, Scenario, ScriptedCommand, SegmentResult,
    TelemetrySample,
};
use crate::camera::{frame_clock, observe, body_pose};
use crate::exec::Execution;
use crate::frames::{extract_yaw, wrap_angle, RotationMatrix, Vec3};
use crate::link::{encode, flags, FrameDecoder, LinkQueue, Message, TELEMETRY_IR_CHANNELS};
use crate::tracking::{run_segments, segment_stream, KinematicState, TrackEstimate, TrackingError};
use crate::vehicle::{
    depth_reading, estimate_plunger, ir_response, step, ActuatorCommand, PumpCommand, VehicleError, VehicleState,
};

/// Depth above which the IR array sees daylight, m.
const SURFACE_BAND: f64 = 0.05;

// Independent random streams, so changing one subsystem's draws leaves the
// others untouched.
const STREAM_CLOCK: u64 = 1;
const STREAM_CAMERA: u64 = 2;
const STREAM_UPLINK: u64 = 3;
const STREAM_DOWNLINK: u64 = 4;
const STREAM_SENSORS: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// What the vehicle's microcontroller is currently doing.
#[derive(Debug, Default)]
struct Onboard {
    motors: (f64, f64),
    pump: PumpCommand,
    pump_until: f64,
    /// Sequence steps waiting for their time, sorted.
    pending: Vec<ScriptedCommand>,
}

impl Onboard {
    fn apply(&mut self, msg: &Message, t: f64, scenario: &Scenario) {
        match *msg {
            Message::SetMotors { left, right } => {
                self.motors = (f64::from(left) / 100.0, f64::from(right) / 100.0);
            }
            Message::Pump { mode, duration_ms } => {
                self.pump = mode;
                self.pump_until = t + f64::from(duration_ms) / 1000.0;
            }
            Message::StartSequence { seq_id } => {
                if let Some(steps) = scenario.sequences.get(&seq_id) {
                    self.pending.extend(steps.iter().map(|s| ScriptedCommand { time: t + s.time, ..*s }));
                    self.pending.sort_by(|a, b| a.time.total_cmp(&b.time));
                }
            }
            Message::Telemetry { .. } => {}
        }
    }

    fn run_pending(&mut self, t: f64, scenario: &Scenario) {
        while self.pending.first().is_some_and(|s| s.time <= t + 1e-12) {
            let s = self.pending.remove(0);
            self.apply(&s.message, t, scenario);
        }
    }

    fn pump_active(&self, t: f64) -> bool {
        self.pump != PumpCommand::Off && t < self.pump_until
    }

    fn actuators(&self, t: f64) -> ActuatorCommand {
        let pump = if self.pump_active(t) { self.pump } else { PumpCommand::Off };
        ActuatorCommand::new(self.motors.0, self.motors.1, pump)
    }
}

fn lerp_state(a: &VehicleState, b: &VehicleState, f: f64) -> VehicleState {
    let l = |x: f64, y: f64| x + (y - x) * f;
    VehicleState {
        t: l(a.t, b.t),
        position: a.position + (b.position - a.position) * f,
        phi: l(a.phi, b.phi),
        theta: l(a.theta, b.theta),
        psi: wrap_angle(a.psi + wrap_angle(b.psi - a.psi) * f),
        u: l(a.u, b.u),
        v: l(a.v, b.v),
        w: l(a.w, b.w),
        r: l(a.r, b.r),
        syringe_fill: l(a.syringe_fill, b.syringe_fill),
        motor_thrust_left: l(a.motor_thrust_left, b.motor_thrust_left),
        motor_thrust_right: l(a.motor_thrust_right, b.motor_thrust_right),
    }
}

fn runtime(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

fn telemetry<R: Rng + ?Sized>(
    state: &VehicleState,
    pump_running: bool,
    scenario: &Scenario,
    rng: &mut R,
) -> (TelemetrySample, Message) {
    let depth = depth_reading(state, scenario.depth_noise_sigma, rng);
    let at_surface = state.depth() < SURFACE_BAND;
    let ambient = if at_surface { scenario.surface_ambient * rng.random_range(0.6..=1.0) } else { 0.0 };
    let reading = ir_response(state.syringe_fill, ambient);
    let estimate = estimate_plunger(&reading);

    let mut fl = 0;
    let fill_estimate = match estimate {
        Ok(e) => {
            if e.is_degraded() {
                fl |= flags::PLUNGER_DEGRADED;
            }
            Some(e.fill)
        }
        Err(_) => {
            fl |= flags::PLUNGER_NO_SIGNAL;
            None
        }
    };
    if pump_running {
        fl |= flags::PUMP_RUNNING;
    }
    if at_surface {
        fl |= flags::AT_SURFACE;
    }
    let mut ir = [0u8; TELEMETRY_IR_CHANNELS];
    for (b, c) in ir.iter_mut().zip(reading.channels) {
        *b = (c * 255.0).round() as u8;
    }
    let msg = Message::Telemetry {
        depth_mm: (depth * 1000.0).round().clamp(0.0, f64::from(u16::MAX)) as u16,
        ir,
        fill_est_tenth_ml: fill_estimate.map_or(u8::MAX, |f| (f * 10.0).round().clamp(0.0, 254.0) as u8),
        flags: fl,
    };
    let sample = TelemetrySample {
        t: state.t,
        depth,
        ir: reading.channels,
        fill_estimate,
        fill_truth: state.syringe_fill,
        flags: fl,
        delivered: false,
    };
    (sample, msg)
}

/// Maps a pipeline track back into the tank frame using the known camera
/// pose. Positions are the tag's; heading and rates are the body's.
pub(crate) fn track_to_ned(track: &TrackEstimate, scenario: &Scenario) -> Vec<KinematicState> {
    let cam = &scenario.camera.pose;
    let b: RotationMatrix = cam.rotation * track.r_oc;
    let p0 = cam.transform_point(track.origin);
    // The estimate frame's vertical points at the camera, i.e. up; a
    // right-handed frame with z up has its lateral axis mirrored against NED.
    let flip = if b.get(2, 2) < 0.0 { -1.0 } else { 1.0 };
    let mount_yaw = extract_yaw(&scenario.tag.mount_offset.rotation).unwrap_or(0.0);
    track
        .states
        .iter()
        .map(|s| {
            let p = p0 + b * Vec3::new(s.x, s.y, 0.0);
            let h = b * Vec3::new(s.psi.cos(), s.psi.sin(), 0.0);
            KinematicState {
                t: s.t,
                x: p.x,
                y: p.y,
                psi: wrap_angle(h.y.atan2(h.x) - mount_yaw),
                u: s.u,
                v: flip * s.v,
                r: flip * s.r,
            }
        })
        .collect()
}

/// Runs one scenario end to end. The event loop is single-threaded and all
/// randomness comes from streams derived from `scenario.seed`.
pub fn run_scenario(mut scenario: Scenario) -> Result<RunArtifacts, HarnessError> {
    scenario.resolve()?;
    let s = &scenario;
    let dt = s.dt;
    let n_steps = (s.duration / dt).round().max(1.0) as usize;

    let mut rng_clock = stream(s.seed, STREAM_CLOCK);
    let mut rng_camera = stream(s.seed, STREAM_CAMERA);
    let mut rng_up = stream(s.seed, STREAM_UPLINK);
    let mut rng_down = stream(s.seed, STREAM_DOWNLINK);
    let mut rng_sensors = stream(s.seed, STREAM_SENSORS);

    let frame_times = frame_clock(&s.camera, s.duration, &mut rng_clock);
    let mut next_frame = 0;

    let mut state = s.initial_state();
    let mut truth = Vec::with_capacity(n_steps + 1);
    truth.push(state);
    let mut onboard = Onboard::default();
    let mut uplink = LinkQueue::new(s.channel);
    let mut downlink = LinkQueue::new(s.channel);
    let mut in_flight_cmds: VecDeque<usize> = VecDeque::new();
    let mut in_flight_tel: VecDeque<usize> = VecDeque::new();
    let mut vehicle_rx = FrameDecoder::new();
    let mut ground_rx = FrameDecoder::new();

    let mut commands: Vec<CommandRecord> = Vec::with_capacity(s.command_script.len());
    let mut telemetry_log: Vec<TelemetrySample> = Vec::new();
    let mut telemetry_received = Vec::new();
    let mut frames = Vec::with_capacity(frame_times.len());
    let mut detections = Vec::new();
    let mut next_script = 0;
    let mut next_telemetry = 0usize;

    for k in 0..n_steps {
        let t = k as f64 * dt;

        while let Some(cmd) = s.command_script.get(next_script).filter(|c| c.time <= t + 1e-12) {
            let frame = encode(&cmd.message).map_err(runtime)?;
            let delivered = uplink.send(&frame, cmd.time, state.depth(), &mut rng_up);
            if delivered {
                in_flight_cmds.push_back(commands.len());
            }
            commands.push(CommandRecord {
                scripted_time: cmd.time,
                message: cmd.message,
                depth_at_send: state.depth(),
                delivered,
                applied_time: None,
            });
            next_script += 1;
        }

        for (_, bytes) in uplink.receive(t) {
            let idx = in_flight_cmds.pop_front();
            vehicle_rx.push(&bytes);
            while let Some(decoded) = vehicle_rx.poll() {
                let msg = decoded.map_err(runtime)?;
                onboard.apply(&msg, t, s);
                if let Some(i) = idx {
                    commands[i].applied_time = Some(t);
                }
            }
        }
        onboard.run_pending(t, s);

        while (next_telemetry as f64) / s.telemetry_rate <= t + 1e-12 {
            let (mut sample, msg) = telemetry(&state, onboard.pump_active(t), s, &mut rng_sensors);
            let frame = encode(&msg).map_err(runtime)?;
            sample.delivered = downlink.send(&frame, t, state.depth(), &mut rng_down);
            if sample.delivered {
                in_flight_tel.push_back(telemetry_log.len());
            }
            telemetry_log.push(sample);
            next_telemetry += 1;
        }
        for (arrival, bytes) in downlink.receive(t) {
            in_flight_tel.pop_front();
            ground_rx.push(&bytes);
            while let Some(decoded) = ground_rx.poll() {
                telemetry_received.push((arrival, decoded.map_err(runtime)?));
            }
        }

        let cmd = onboard.actuators(t);
        let mut next = step(&state, &cmd, dt, &s.vehicle).map_err(|e: VehicleError| runtime(e))?;
        next.t = (k + 1) as f64 * dt;

        let t_next = next.t;
        while let Some(&tc) = frame_times.get(next_frame).filter(|&&tc| tc < t_next) {
            let at = lerp_state(&state, &next, ((tc - t) / dt).clamp(0.0, 1.0));
            let det = observe(&at, &s.camera, &s.tag, tc, &mut rng_camera);
            frames.push(FrameRecord { t: tc, detected: det.is_some() });
            detections.extend(det);
            next_frame += 1;
        }

        state = next;
        truth.push(state);
    }

    let (segments, rejected_segments) = track(&detections, s)?;
    let ned_segments: Vec<Vec<KinematicState>> = segments.iter().map(|r| r.ned.clone()).collect();
    let truth_samples = metrics::truth_samples(&truth, s);
    let mut metric_map = metrics::evaluate(s, &truth_samples, &ned_segments, &frames);
    metric_map.extend(metrics::link_metrics(&commands, &telemetry_log, s.channel.d1));

    Ok(RunArtifacts {
        scenario: scenario.clone(),
        truth,
        frames,
        detections,
        segments,
        rejected_segments,
        commands,
        telemetry: telemetry_log,
        telemetry_received,
        metrics: metric_map,
    })
}

type Tracked = (Vec<SegmentResult>, Vec<(f64, String)>);

fn track(detections: &[crate::tracking::TagDetection], s: &Scenario) -> Result<Tracked, HarnessError> {
    let segs = match segment_stream(detections, &s.pipeline) {
        Ok(segs) => segs,
        Err(TrackingError::EmptyInput) => Vec::new(),
        Err(e) => return Err(runtime(e)),
    };
    let mut ok = Vec::new();
    let mut rejected = Vec::new();
    for (seg, res) in segs.iter().zip(run_segments(&segs, &s.pipeline, Execution::default())) {
        match res {
            Ok(track) => {
                let ned = track_to_ned(&track, s);
                ok.push(SegmentResult { track, ned });
            }
            Err(e @ TrackingError::SegmentTooShort { .. }) => rejected.push((seg.start_time(), e.to_string())),
            Err(e) => return Err(runtime(e)),
        }
    }
    Ok((ok, rejected))
}

/// Tag pose in the tank frame for a truth state.
pub(crate) fn tag_world(state: &VehicleState, s: &Scenario) -> Vec3 {
    body_pose(state).transform_point(s.tag.mount_offset.translation)
}
