//! Ground-truth vehicle model: differential thrust on the surface plane,
//! heave driven by the syringe ballast, plus the pump, IR plunger array and
//! depth sensor.
//!
//! World frame is NED with `z` as depth (positive down). Roll and pitch are
//! held at zero. Drag is quadratic, with no added mass or cross-coupling.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{wrap_angle, Vec3};

pub const GRAVITY: f64 = 9.81;
pub const WATER_DENSITY: f64 = 1000.0;
/// Syringe volume, mL.
pub const SYRINGE_CAPACITY_ML: f64 = 25.0;
pub const IR_CHANNELS: usize = 9;
/// Width of each IR channel's response along the normalized plunger travel.
pub const IR_SIGMA: f64 = 0.07;
/// Background-subtracted channel level below which the array shows no plunger.
pub const IR_NOISE_FLOOR: f64 = 0.05;
/// Peak-to-floor contrast below which a plunger estimate is flagged degraded.
pub const IR_DEGRADED_CONTRAST: f64 = 0.5;
/// Largest accepted integration step, s.
pub const MAX_DT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("time step {dt} s outside (0, {MAX_DT}]")]
    InvalidDt { dt: f64 },
    #[error("IR array shows no plunger signal")]
    NoSignal,
    #[error("invalid vehicle parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// m
    pub body_length: f64,
    /// Lateral distance between the propellers, m.
    pub propeller_separation: f64,
    /// N
    pub max_thrust_per_prop: f64,
    /// s
    pub motor_time_constant: f64,
    /// N·s²/m²
    pub drag_surge: f64,
    pub drag_sway: f64,
    pub drag_heave: f64,
    /// N·m·s²/rad²
    pub drag_yaw: f64,
    /// kg·m²
    pub yaw_inertia: f64,
    /// Fill at which the vehicle is neutrally buoyant, mL.
    pub neutral_fill: f64,
    /// mL/min
    pub pump_max_rate: f64,
    /// Depth of the tank floor, m.
    pub tank_depth: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 2.7,
            body_length: 0.30,
            propeller_separation: 0.06,
            max_thrust_per_prop: 0.8,
            motor_time_constant: 0.15,
            drag_surge: 4.0,
            drag_sway: 12.0,
            drag_heave: 20.0,
            drag_yaw: 0.08,
            yaw_inertia: 0.02,
            neutral_fill: SYRINGE_CAPACITY_ML / 2.0,
            pump_max_rate: 100.0,
            tank_depth: 1.372,
        }
    }
}

impl VehicleParams {
    pub const FIELDS: &'static [&'static str] = &[
        "mass",
        "body_length",
        "propeller_separation",
        "max_thrust_per_prop",
        "motor_time_constant",
        "drag_surge",
        "drag_sway",
        "drag_heave",
        "drag_yaw",
        "yaw_inertia",
        "neutral_fill",
        "pump_max_rate",
        "tank_depth",
    ];

    /// Sets a field by name. Returns `false` for unknown names.
    pub fn set(&mut self, name: &str, value: f64) -> bool {
        let slot = match name {
            "mass" => &mut self.mass,
            "body_length" => &mut self.body_length,
            "propeller_separation" => &mut self.propeller_separation,
            "max_thrust_per_prop" => &mut self.max_thrust_per_prop,
            "motor_time_constant" => &mut self.motor_time_constant,
            "drag_surge" => &mut self.drag_surge,
            "drag_sway" => &mut self.drag_sway,
            "drag_heave" => &mut self.drag_heave,
            "drag_yaw" => &mut self.drag_yaw,
            "yaw_inertia" => &mut self.yaw_inertia,
            "neutral_fill" => &mut self.neutral_fill,
            "pump_max_rate" => &mut self.pump_max_rate,
            "tank_depth" => &mut self.tank_depth,
            _ => return false,
        };
        *slot = value;
        true
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "mass" => self.mass,
            "body_length" => self.body_length,
            "propeller_separation" => self.propeller_separation,
            "max_thrust_per_prop" => self.max_thrust_per_prop,
            "motor_time_constant" => self.motor_time_constant,
            "drag_surge" => self.drag_surge,
            "drag_sway" => self.drag_sway,
            "drag_heave" => self.drag_heave,
            "drag_yaw" => self.drag_yaw,
            "yaw_inertia" => self.yaw_inertia,
            "neutral_fill" => self.neutral_fill,
            "pump_max_rate" => self.pump_max_rate,
            "tank_depth" => self.tank_depth,
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        for name in Self::FIELDS {
            let v = self.get(name).unwrap_or(f64::NAN);
            if !(v.is_finite() && v > 0.0) {
                return Err(VehicleError::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if (self.neutral_fill - SYRINGE_CAPACITY_ML / 2.0).abs() > 1e-12 {
            return Err(VehicleError::InvalidParams(format!(
                "neutral_fill must be half the {SYRINGE_CAPACITY_ML} mL syringe, got {}",
                self.neutral_fill
            )));
        }
        Ok(())
    }

    /// Pump flow, mL/s.
    pub fn pump_rate(&self) -> f64 {
        self.pump_max_rate / 60.0
    }

    /// Net downward force from ballast above neutral, N.
    pub fn ballast_force(&self, fill: f64) -> f64 {
        GRAVITY * WATER_DENSITY * (fill - self.neutral_fill) * 1e-6
    }

    /// Steady surge speed with both motors at `command`.
    pub fn terminal_surge(&self, command: f64) -> f64 {
        (2.0 * command * self.max_thrust_per_prop / self.drag_surge).sqrt()
    }

    /// Steady sink rate for a syringe at `fill` (negative when rising).
    pub fn terminal_heave(&self, fill: f64) -> f64 {
        let f = self.ballast_force(fill);
        f.signum() * (f.abs() / self.drag_heave).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PumpCommand {
    #[default]
    Off,
    Intake,
    Expel,
}

/// Actuator set-points, motor values normalized to `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub motor_left: f64,
    pub motor_right: f64,
    pub pump: PumpCommand,
}

impl ActuatorCommand {
    pub fn new(motor_left: f64, motor_right: f64, pump: PumpCommand) -> Self {
        Self {
            motor_left: motor_left.clamp(-1.0, 1.0),
            motor_right: motor_right.clamp(-1.0, 1.0),
            pump,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub t: f64,
    /// NED position, z is depth.
    pub position: Vec3,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub r: f64,
    /// mL
    pub syringe_fill: f64,
    /// N
    pub motor_thrust_left: f64,
    pub motor_thrust_right: f64,
}

impl VehicleState {
    /// At rest on the surface with a half-full syringe.
    pub fn at_rest(x: f64, y: f64, psi: f64) -> Self {
        Self {
            t: 0.0,
            position: Vec3::new(x, y, 0.0),
            phi: 0.0,
            theta: 0.0,
            psi,
            u: 0.0,
            v: 0.0,
            w: 0.0,
            r: 0.0,
            syringe_fill: SYRINGE_CAPACITY_ML / 2.0,
            motor_thrust_left: 0.0,
            motor_thrust_right: 0.0,
        }
    }

    pub fn depth(&self) -> f64 {
        self.position.z
    }

    pub fn speed_norm(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.w * self.w + self.r * self.r).sqrt()
    }
}

/// Advances the vehicle by `dt` with a semi-implicit Euler step: velocities
/// first, then positions from the updated velocities.
pub fn step(
    state: &VehicleState,
    cmd: &ActuatorCommand,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState, VehicleError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(VehicleError::InvalidDt { dt });
    }
    let p = params;
    let mut s = *state;

    let lag = 1.0 - (-dt / p.motor_time_constant).exp();
    let target_l = cmd.motor_left.clamp(-1.0, 1.0) * p.max_thrust_per_prop;
    let target_r = cmd.motor_right.clamp(-1.0, 1.0) * p.max_thrust_per_prop;
    s.motor_thrust_left += (target_l - s.motor_thrust_left) * lag;
    s.motor_thrust_right += (target_r - s.motor_thrust_right) * lag;
    let (tl, tr) = (s.motor_thrust_left, s.motor_thrust_right);

    s.u += dt * (tl + tr - p.drag_surge * s.u * s.u.abs()) / p.mass;
    s.v += dt * (-p.drag_sway * s.v * s.v.abs()) / p.mass;
    s.r += dt * ((tr - tl) * (p.propeller_separation / 2.0) - p.drag_yaw * s.r * s.r.abs()) / p.yaw_inertia;
    s.w += dt * (p.ballast_force(s.syringe_fill) - p.drag_heave * s.w * s.w.abs()) / p.mass;

    s.syringe_fill = pump_step(s.syringe_fill, cmd.pump, dt, p);

    s.psi = wrap_angle(s.psi + s.r * dt);
    let (sin, cos) = s.psi.sin_cos();
    s.position.x += (s.u * cos - s.v * sin) * dt;
    s.position.y += (s.u * sin + s.v * cos) * dt;
    s.position.z += s.w * dt;
    if s.position.z <= 0.0 {
        s.position.z = 0.0;
        s.w = s.w.max(0.0);
    } else if s.position.z >= p.tank_depth {
        s.position.z = p.tank_depth;
        s.w = s.w.min(0.0);
    }
    s.phi = 0.0;
    s.theta = 0.0;
    s.t += dt;
    Ok(s)
}

/// Moves `fill` by the pump's full rate for `dt`, clamped to the syringe.
pub fn pump_step(fill: f64, pump: PumpCommand, dt: f64, params: &VehicleParams) -> f64 {
    let delta = params.pump_rate() * dt;
    let next = match pump {
        PumpCommand::Off => fill,
        PumpCommand::Intake => fill + delta,
        PumpCommand::Expel => fill - delta,
    };
    next.clamp(0.0, SYRINGE_CAPACITY_ML)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrReading {
    pub channels: [f64; IR_CHANNELS],
}

/// Normalized position of IR sensor `k` along the plunger travel.
pub fn ir_sensor_position(k: usize) -> f64 {
    k as f64 / (IR_CHANNELS - 1) as f64
}

/// Reflectance seen by each channel: a Gaussian bump centred on the plunger
/// plus a uniform ambient term, clamped to `[0, 1]`.
pub fn ir_response(fill: f64, ambient: f64) -> IrReading {
    let plunger = fill / SYRINGE_CAPACITY_ML;
    let mut channels = [0.0; IR_CHANNELS];
    for (k, c) in channels.iter_mut().enumerate() {
        let d = ir_sensor_position(k) - plunger;
        *c = ((-d * d / (2.0 * IR_SIGMA * IR_SIGMA)).exp() + ambient).clamp(0.0, 1.0);
    }
    IrReading { channels }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlungerEstimate {
    /// mL
    pub fill: f64,
    /// Peak minus floor across channels.
    pub contrast: f64,
}

impl PlungerEstimate {
    /// True when ambient light has washed out the array.
    pub fn is_degraded(&self) -> bool {
        self.contrast < IR_DEGRADED_CONTRAST
    }
}

/// Background-subtracted centroid of the IR array, scaled to syringe volume.
pub fn estimate_plunger(reading: &IrReading) -> Result<PlungerEstimate, VehicleError> {
    let floor = reading.channels.iter().copied().fold(f64::INFINITY, f64::min);
    let peak = reading.channels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak - floor > IR_NOISE_FLOOR) {
        return Err(VehicleError::NoSignal);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (k, c) in reading.channels.iter().enumerate() {
        let w = c - floor;
        num += ir_sensor_position(k) * w;
        den += w;
    }
    Ok(PlungerEstimate { fill: SYRINGE_CAPACITY_ML * num / den, contrast: peak - floor })
}

/// Pressure-sensor depth: truth plus Gaussian noise, quantized to 1 mm.
pub fn depth_reading<R: Rng + ?Sized>(state: &VehicleState, noise_sigma: f64, rng: &mut R) -> f64 {
    let noise = if noise_sigma > 0.0 {
        Normal::new(0.0, noise_sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    };
    ((state.position.z + noise) * 1000.0).round() / 1000.0
}
