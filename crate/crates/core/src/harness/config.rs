//! Flat `key = value` text format for scenarios and vehicle parameter files.
//!
//! - `#` starts a comment; blank lines are ignored.
//! - Numeric keys are SI. Length keys also accept `_ft` and `_in` suffixes,
//!   angle keys `_deg`, syringe volumes `_mL`; they are converted on load.
//! - `cmd = <t> <message>` appends a ground-station command. Messages are
//!   `motors <left%> <right%>`, `pump <off|intake|expel> <ms>` or
//!   `start <seq_id>`.
//! - `seq.<id> = <offset> <message>` adds a step to an onboard sequence that a
//!   `start <id>` command triggers.
//! - `camera.glare = <x> <y> <radius> <dropout_prob>` adds a glare patch.
//! - `vehicle_params = <path>` loads a parameter file of bare vehicle keys.
//! - `camera.tilt` is shorthand for `camera.tilt_x`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{CameraMount, PlotFrame, Scenario, ScriptedCommand};
use crate::camera::GlareRegion;
use crate::link::Message;
use crate::vehicle::{PumpCommand, VehicleParams};

const FT: f64 = 0.3048;
const INCH: f64 = 0.0254;

/// Configuration problem tied to a key and, when known, a source line.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), line: None, message: message.into() }
    }

    fn at(mut self, line: Option<usize>) -> Self {
        self.line = self.line.or(line);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Length,
    Angle,
    Volume,
    Plain,
}

fn split_suffix(key: &str) -> (&str, Option<&str>) {
    for suffix in ["_ft", "_in", "_deg", "_mL"] {
        if let Some(base) = key.strip_suffix(suffix) {
            return (base, Some(suffix));
        }
    }
    (key, None)
}

fn convert(key: &str, unit: Unit, suffix: Option<&str>, raw: f64) -> Result<f64, ConfigError> {
    match (suffix, unit) {
        (None, _) => Ok(raw),
        (Some("_ft"), Unit::Length) => Ok(raw * FT),
        (Some("_in"), Unit::Length) => Ok(raw * INCH),
        (Some("_deg"), Unit::Angle) => Ok(raw.to_radians()),
        (Some("_mL"), Unit::Volume) => Ok(raw),
        (Some(s), _) => Err(ConfigError::new(key, format!("unit suffix `{s}` does not apply to this key"))),
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| ConfigError::new(key, format!("expected a number, got `{value}`")))?;
    if !v.is_finite() {
        return Err(ConfigError::new(key, "value must be finite"));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| ConfigError::new(key, format!("expected an integer, got `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        other => Err(ConfigError::new(key, format!("expected a boolean, got `{other}`"))),
    }
}

fn vehicle_unit(field: &str) -> Unit {
    match field {
        "body_length" | "propeller_separation" | "tank_depth" => Unit::Length,
        "neutral_fill" => Unit::Volume,
        _ => Unit::Plain,
    }
}

/// Parses one command message, e.g. `motors 50 -50`.
pub fn parse_message(key: &str, words: &[&str]) -> Result<Message, ConfigError> {
    let bad = |m: &str| ConfigError::new(key, m.to_string());
    match words {
        ["motors", l, r] => {
            let left: i8 = parse_int(key, l)?;
            let right: i8 = parse_int(key, r)?;
            let msg = Message::SetMotors { left, right };
            msg.validate().map_err(|e| bad(&e.to_string()))?;
            Ok(msg)
        }
        ["pump", mode, ms] => {
            let mode = match *mode {
                "off" => PumpCommand::Off,
                "intake" => PumpCommand::Intake,
                "expel" => PumpCommand::Expel,
                other => return Err(bad(&format!("pump mode must be off, intake or expel, got `{other}`"))),
            };
            Ok(Message::Pump { mode, duration_ms: parse_int(key, ms)? })
        }
        ["start", id] => Ok(Message::StartSequence { seq_id: parse_int(key, id)? }),
        _ => Err(bad("expected `motors L R`, `pump MODE MS` or `start ID`")),
    }
}

pub fn format_message(msg: &Message) -> String {
    match msg {
        Message::SetMotors { left, right } => format!("motors {left} {right}"),
        Message::Pump { mode, duration_ms } => {
            let m = match mode {
                PumpCommand::Off => "off",
                PumpCommand::Intake => "intake",
                PumpCommand::Expel => "expel",
            };
            format!("pump {m} {duration_ms}")
        }
        Message::StartSequence { seq_id } => format!("start {seq_id}"),
        Message::Telemetry { .. } => "telemetry".to_string(),
    }
}

fn parse_timed(key: &str, value: &str) -> Result<ScriptedCommand, ConfigError> {
    let words: Vec<&str> = value.split_whitespace().collect();
    let Some((t, rest)) = words.split_first() else {
        return Err(ConfigError::new(key, "expected `<time> <message>`"));
    };
    let time = parse_f64(key, t)?;
    Ok(ScriptedCommand { time, message: parse_message(key, rest)? })
}

impl Scenario {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.set_with_base(key, value, None)
    }

    fn set_with_base(&mut self, key: &str, value: &str, base_dir: Option<&Path>) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "name" => {
                self.name = value.to_string();
                return Ok(());
            }
            "seed" => {
                self.seed = parse_int(key, value)?;
                return Ok(());
            }
            "plot_frame" => {
                self.plot_frame = match value {
                    "overhead" => PlotFrame::Overhead,
                    "ned" => PlotFrame::Ned,
                    other => return Err(ConfigError::new(key, format!("expected `overhead` or `ned`, got `{other}`"))),
                };
                return Ok(());
            }
            "steady_after" if value == "none" => {
                self.steady_after = None;
                return Ok(());
            }
            "cmd" => {
                self.command_script.push(parse_timed(key, value)?);
                return Ok(());
            }
            "camera.glare" => {
                let nums = value
                    .split_whitespace()
                    .map(|w| parse_f64(key, w))
                    .collect::<Result<Vec<_>, _>>()?;
                let [center_x, center_y, radius, dropout_prob] = nums[..] else {
                    return Err(ConfigError::new(key, "expected `<x> <y> <radius> <dropout_prob>`"));
                };
                self.camera.glare_regions.push(GlareRegion { center_x, center_y, radius, dropout_prob });
                return Ok(());
            }
            "camera.spurious_outliers" => {
                self.camera.spurious_outliers = parse_bool(key, value)?;
                return Ok(());
            }
            "pipeline.smoothing_window" => {
                self.pipeline.smoothing_window = parse_int(key, value)?;
                return Ok(());
            }
            "tag.id" => {
                self.tag.tag_id = parse_int(key, value)?;
                return Ok(());
            }
            "vehicle_params" => {
                let path = match base_dir {
                    Some(dir) => dir.join(value),
                    None => PathBuf::from(value),
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| ConfigError::new(key, format!("cannot read {}: {e}", path.display())))?;
                let tank_depth = self.vehicle.tank_depth;
                self.vehicle = parse_vehicle_params_onto(self.vehicle, &text)?;
                self.vehicle.tank_depth = tank_depth;
                return Ok(());
            }
            _ => {}
        }
        if let Some(id) = key.strip_prefix("seq.") {
            let seq_id: u8 = parse_int(key, id)?;
            let step = parse_timed(key, value)?;
            self.sequences.entry(seq_id).or_default().push(step);
            return Ok(());
        }

        let (base, suffix) = split_suffix(key);
        if let Some(field) = base.strip_prefix("vehicle.") {
            if field == "tank_depth" {
                return Err(ConfigError::new(key, "set tank.depth instead"));
            }
            let v = convert(key, vehicle_unit(field), suffix, parse_f64(key, value)?)?;
            if !self.vehicle.set(field, v) {
                return Err(ConfigError::new(key, "unknown vehicle parameter"));
            }
            return Ok(());
        }
        let (slot, unit): (&mut f64, Unit) = match base {
            "duration" => (&mut self.duration, Unit::Plain),
            "dt" => (&mut self.dt, Unit::Plain),
            "telemetry_rate" => (&mut self.telemetry_rate, Unit::Plain),
            "depth_noise_sigma" => (&mut self.depth_noise_sigma, Unit::Length),
            "surface_ambient" => (&mut self.surface_ambient, Unit::Plain),
            "steady_after" => {
                let v = parse_f64(key, value)?;
                self.steady_after = Some(convert(key, Unit::Plain, suffix, v)?);
                return Ok(());
            }
            "tank.side" => (&mut self.tank.side, Unit::Length),
            "tank.depth" => (&mut self.tank.depth, Unit::Length),
            "start.x" => (&mut self.start.x, Unit::Length),
            "start.y" => (&mut self.start.y, Unit::Length),
            "start.psi" => (&mut self.start.psi, Unit::Angle),
            "start.fill" => (&mut self.start.fill, Unit::Volume),
            "camera.x" => (&mut self.camera_mount.x, Unit::Length),
            "camera.y" => (&mut self.camera_mount.y, Unit::Length),
            "camera.height" => (&mut self.camera_mount.height, Unit::Length),
            "camera.tilt_x" | "camera.tilt" => (&mut self.camera_mount.tilt_x, Unit::Angle),
            "camera.tilt_y" => (&mut self.camera_mount.tilt_y, Unit::Angle),
            "camera.yaw" => (&mut self.camera_mount.yaw, Unit::Angle),
            "camera.frame_rate" => (&mut self.camera.frame_rate, Unit::Plain),
            "camera.timestamp_jitter_sigma" => (&mut self.camera.timestamp_jitter_sigma, Unit::Plain),
            "camera.translation_noise_sigma" => (&mut self.camera.translation_noise_sigma, Unit::Length),
            "camera.rotation_noise_sigma" => (&mut self.camera.rotation_noise_sigma, Unit::Angle),
            "camera.dropout_prob" => (&mut self.camera.dropout_prob, Unit::Plain),
            "camera.visibility_depth" => (&mut self.camera.visibility_depth, Unit::Length),
            "tag.size" => (&mut self.tag.size, Unit::Length),
            "tag.height" => (&mut self.tag.mount_offset.translation.z, Unit::Length),
            "channel.d0" => (&mut self.channel.d0, Unit::Length),
            "channel.d1" => (&mut self.channel.d1, Unit::Length),
            "channel.base_loss" => (&mut self.channel.base_loss, Unit::Plain),
            "channel.latency" => (&mut self.channel.latency, Unit::Plain),
            "pipeline.output_rate" => (&mut self.pipeline.output_rate, Unit::Plain),
            "pipeline.max_gap" => (&mut self.pipeline.max_gap, Unit::Plain),
            "pipeline.outlier_z_jump" => (&mut self.pipeline.outlier_z_jump, Unit::Length),
            _ => return Err(ConfigError::new(key, "unknown key")),
        };
        let v = convert(key, unit, suffix, parse_f64(key, value)?)?;
        // Tag height is stored as a body-frame offset (z down).
        *slot = if base == "tag.height" { -v } else { v };
        if base == "tank.depth" {
            self.vehicle.tank_depth = v;
        }
        Ok(())
    }

    /// Parses scenario text on top of the defaults. Relative parameter-file
    /// paths resolve against `base_dir`.
    pub fn from_text(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ConfigError> {
        let mut s = Scenario::default();
        s.apply_text(text, base_dir)?;
        Ok(s)
    }

    pub fn apply_text(&mut self, text: &str, base_dir: Option<&Path>) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let lineno = Some(i + 1);
            let Some((key, value)) = split_line(line).map_err(|e| e.at(lineno))? else {
                continue;
            };
            self.set_with_base(key, value, base_dir).map_err(|e| e.at(lineno))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Scenario, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
        let mut s = Scenario::from_text(&text, path.parent())?;
        if s.name.is_empty() || s.name == Scenario::default().name {
            if let Some(stem) = path.file_stem() {
                s.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(s)
    }

    /// Canonical SI text form; [`Scenario::from_text`] reads it back exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("name", self.name.clone());
        kv("duration", self.duration.to_string());
        kv("seed", self.seed.to_string());
        kv("dt", self.dt.to_string());
        kv("telemetry_rate", self.telemetry_rate.to_string());
        kv("depth_noise_sigma", self.depth_noise_sigma.to_string());
        kv("surface_ambient", self.surface_ambient.to_string());
        kv("plot_frame", match self.plot_frame {
            PlotFrame::Overhead => "overhead".into(),
            PlotFrame::Ned => "ned".into(),
        });
        kv("steady_after", self.steady_after.map_or("none".into(), |v| v.to_string()));
        kv("tank.side", self.tank.side.to_string());
        kv("tank.depth", self.tank.depth.to_string());
        kv("start.x", self.start.x.to_string());
        kv("start.y", self.start.y.to_string());
        kv("start.psi", self.start.psi.to_string());
        kv("start.fill", self.start.fill.to_string());
        for field in VehicleParams::FIELDS.iter().filter(|f| **f != "tank_depth") {
            kv(&format!("vehicle.{field}"), self.vehicle.get(field).unwrap_or_default().to_string());
        }
        let m = &self.camera_mount;
        for (k, v) in [
            ("camera.x", m.x),
            ("camera.y", m.y),
            ("camera.height", m.height),
            ("camera.tilt_x", m.tilt_x),
            ("camera.tilt_y", m.tilt_y),
            ("camera.yaw", m.yaw),
            ("camera.frame_rate", self.camera.frame_rate),
            ("camera.timestamp_jitter_sigma", self.camera.timestamp_jitter_sigma),
            ("camera.translation_noise_sigma", self.camera.translation_noise_sigma),
            ("camera.rotation_noise_sigma", self.camera.rotation_noise_sigma),
            ("camera.dropout_prob", self.camera.dropout_prob),
            ("camera.visibility_depth", self.camera.visibility_depth),
        ] {
            kv(k, v.to_string());
        }
        kv("camera.spurious_outliers", self.camera.spurious_outliers.to_string());
        for g in &self.camera.glare_regions {
            kv("camera.glare", format!("{} {} {} {}", g.center_x, g.center_y, g.radius, g.dropout_prob));
        }
        kv("tag.id", self.tag.tag_id.to_string());
        kv("tag.size", self.tag.size.to_string());
        kv("tag.height", (-self.tag.mount_offset.translation.z).to_string());
        kv("channel.d0", self.channel.d0.to_string());
        kv("channel.d1", self.channel.d1.to_string());
        kv("channel.base_loss", self.channel.base_loss.to_string());
        kv("channel.latency", self.channel.latency.to_string());
        kv("pipeline.smoothing_window", self.pipeline.smoothing_window.to_string());
        kv("pipeline.output_rate", self.pipeline.output_rate.to_string());
        kv("pipeline.max_gap", self.pipeline.max_gap.to_string());
        kv("pipeline.outlier_z_jump", self.pipeline.outlier_z_jump.to_string());
        for c in &self.command_script {
            kv("cmd", format!("{} {}", c.time, format_message(&c.message)));
        }
        for (id, steps) in &self.sequences {
            for c in steps {
                kv(&format!("seq.{id}"), format!("{} {}", c.time, format_message(&c.message)));
            }
        }
        out
    }
}

fn split_line(line: &str) -> Result<Option<(&str, &str)>, ConfigError> {
    let content = line.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return Ok(None);
    }
    let Some((k, v)) = content.split_once('=') else {
        return Err(ConfigError::new(content, "expected `key = value`"));
    };
    let k = k.trim();
    if k.is_empty() {
        return Err(ConfigError::new("<empty>", "missing key before `=`"));
    }
    Ok(Some((k, v.trim())))
}

/// Parses a vehicle parameter file (bare `name = value` lines) over the defaults.
pub fn parse_vehicle_params(text: &str) -> Result<VehicleParams, ConfigError> {
    parse_vehicle_params_onto(VehicleParams::default(), text)
}

fn parse_vehicle_params_onto(mut params: VehicleParams, text: &str) -> Result<VehicleParams, ConfigError> {
    for (i, line) in text.lines().enumerate() {
        let lineno = Some(i + 1);
        let Some((key, value)) = split_line(line).map_err(|e| e.at(lineno))? else {
            continue;
        };
        let (base, suffix) = split_suffix(key);
        let v = parse_f64(key, value)
            .and_then(|raw| convert(key, vehicle_unit(base), suffix, raw))
            .map_err(|e| e.at(lineno))?;
        if !params.set(base, v) {
            return Err(ConfigError::new(key, "unknown vehicle parameter").at(lineno));
        }
    }
    Ok(params)
}

/// Splits a `--set key=value` argument.
pub fn split_override(arg: &str) -> Result<(&str, &str), ConfigError> {
    arg.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| ConfigError::new(arg, "override must look like key=value"))
}

impl CameraMount {
    pub fn pose(&self) -> crate::frames::Pose {
        crate::camera::overhead_pose(self.x, self.y, self.height, self.tilt_x, self.tilt_y, self.yaw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_suffixes_convert() {
        let s = Scenario::from_text(
            "tank.side_ft = 13.5\ntank.depth_ft = 4.5\ncamera.tilt_x_deg = 3\nstart.fill_mL = 20\ntag.size_in = 2.8\n",
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(s.tank.side, 4.1148, epsilon = 1e-12);
        assert_abs_diff_eq!(s.tank.depth, 1.3716, epsilon = 1e-12);
        assert_abs_diff_eq!(s.vehicle.tank_depth, 1.3716, epsilon = 1e-12);
        assert_abs_diff_eq!(s.camera_mount.tilt_x, 3f64.to_radians(), epsilon = 1e-15);
        assert_eq!(s.start.fill, 20.0);
        assert_abs_diff_eq!(s.tag.size, 0.07112, epsilon = 1e-15);
    }

    #[test]
    fn field_level_errors() {
        let err = Scenario::from_text("duration = 3\n\ncamera.frame_rate = fast\n", None).unwrap_err();
        assert_eq!(err.line, Some(3));
        assert_eq!(err.key, "camera.frame_rate");
        let err = Scenario::from_text("seed_ft = 3\n", None).unwrap_err();
        assert_eq!(err.key, "seed_ft");
        let err = Scenario::from_text("camera.frame_rate_deg = 3\n", None).unwrap_err();
        assert!(err.message.contains("suffix"));
        let err = Scenario::from_text("cmd = 1.0 dance\n", None).unwrap_err();
        assert_eq!(err.key, "cmd");
        assert!(Scenario::from_text("cmd = 1.0 motors 120 0\n", None).is_err());
        assert!(Scenario::from_text("just words\n", None).is_err());
        assert!(err.to_string().starts_with("line 1: cmd:"));
    }

    #[test]
    fn commands_and_sequences() {
        let s = Scenario::from_text(
            "cmd = 0.5 motors 50 -50\ncmd = 2 pump intake 6000 # fill up\nseq.3 = 0.0 motors 20 20\ncmd = 3 start 3\n",
            None,
        )
        .unwrap();
        assert_eq!(s.command_script.len(), 3);
        assert_eq!(s.command_script[0].message, Message::SetMotors { left: 50, right: -50 });
        assert_eq!(s.command_script[1].message, Message::Pump { mode: PumpCommand::Intake, duration_ms: 6000 });
        assert_eq!(s.sequences[&3].len(), 1);
    }

    #[test]
    fn text_round_trip() {
        let mut s = Scenario::from_text(
            "name = demo\ncamera.glare = 1 2 0.3 0.8\ncmd = 0.25 motors 40 60\nseq.1 = 1.5 pump expel 900\nplot_frame = ned\nsteady_after = 4.5\n",
            None,
        )
        .unwrap();
        s.camera_mount.tilt_x = 0.123456789;
        let back = Scenario::from_text(&s.to_text(), None).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn vehicle_param_file() {
        let p = parse_vehicle_params("# hull\nmass = 3.1\nbody_length_in = 12\n").unwrap();
        assert_eq!(p.mass, 3.1);
        assert_abs_diff_eq!(p.body_length, 0.3048, epsilon = 1e-12);
        let err = parse_vehicle_params("mass = 1\nwingspan = 2\n").unwrap_err();
        assert_eq!((err.line, err.key.as_str()), (Some(2), "wingspan"));
    }

    #[test]
    fn overrides() {
        assert_eq!(split_override("seed=4").unwrap(), ("seed", "4"));
        assert!(split_override("seed").is_err());
        let mut s = Scenario::default();
        let (k, v) = split_override("vehicle.drag_surge = 5").unwrap();
        s.set(k, v).unwrap();
        assert_eq!(s.vehicle.drag_surge, 5.0);
    }
}
