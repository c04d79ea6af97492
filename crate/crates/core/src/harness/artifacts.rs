//! Run directory layout:
//!
//! ```text
//! scenario.txt        resolved scenario, canonical SI form
//! truth.csv           vehicle state every simulation step
//! frames.csv          camera capture times and whether the tag was seen
//! detections.csv      t,tag_id,tx,ty,tz,r11..r33 (camera frame)
//! estimates.csv       pipeline output in its own frame, t,x,y,psi,u,v,r
//! estimates_ned.csv   the same mapped into the tank frame
//! commands.csv        every scripted command and its fate
//! telemetry.csv       onboard telemetry samples
//! metrics.csv         metric,value
//! plotdata/           per-panel columns in the scenario's plot frame
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, link_metrics, truth_samples, TruthSample};
use super::{
    parse_message, format_message, CommandRecord, FrameRecord, HarnessError, PlotFrame, RunArtifacts, Scenario,
    TelemetrySample,
};
use crate::frames::{wrap_angle, RotationMatrix, Vec3};
use crate::tracking::{read_estimates, write_detections, write_estimates, CsvError, KinematicState};
use crate::vehicle::{VehicleState, IR_CHANNELS};

#[derive(Serialize, Deserialize)]
struct TruthRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    phi: f64,
    theta: f64,
    psi: f64,
    u: f64,
    v: f64,
    w: f64,
    r: f64,
    syringe_fill: f64,
    motor_thrust_left: f64,
    motor_thrust_right: f64,
}

impl From<&VehicleState> for TruthRow {
    fn from(s: &VehicleState) -> Self {
        Self {
            t: s.t,
            x: s.position.x,
            y: s.position.y,
            z: s.position.z,
            phi: s.phi,
            theta: s.theta,
            psi: s.psi,
            u: s.u,
            v: s.v,
            w: s.w,
            r: s.r,
            syringe_fill: s.syringe_fill,
            motor_thrust_left: s.motor_thrust_left,
            motor_thrust_right: s.motor_thrust_right,
        }
    }
}

impl From<TruthRow> for VehicleState {
    fn from(r: TruthRow) -> Self {
        Self {
            t: r.t,
            position: Vec3::new(r.x, r.y, r.z),
            phi: r.phi,
            theta: r.theta,
            psi: r.psi,
            u: r.u,
            v: r.v,
            w: r.w,
            r: r.r,
            syringe_fill: r.syringe_fill,
            motor_thrust_left: r.motor_thrust_left,
            motor_thrust_right: r.motor_thrust_right,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FrameRow {
    t: f64,
    detected: u8,
}

#[derive(Serialize, Deserialize)]
struct CommandRow {
    scripted_time: f64,
    message: String,
    depth_at_send: f64,
    delivered: u8,
    applied_time: Option<f64>,
}

#[derive(Serialize)]
struct MetricRow<'a> {
    metric: &'a str,
    value: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

fn open(path: &Path) -> Result<File, HarnessError> {
    File::open(path).map_err(|e| HarnessError::io(path, e))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?))
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Csv(CsvError::Csv(e))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Writes a table with an explicit header, for column sets that vary.
fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

fn ir_header() -> impl Iterator<Item = String> {
    (0..IR_CHANNELS).map(|k| format!("ir{k}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes every artifact of `run` into `dir`, creating it if needed.
pub fn write_artifacts(run: &RunArtifacts, dir: &Path) -> Result<(), HarnessError> {
    let plot_dir = dir.join("plotdata");
    fs::create_dir_all(&plot_dir).map_err(|e| HarnessError::io(&plot_dir, e))?;
    let s = &run.scenario;

    let path = dir.join("scenario.txt");
    fs::write(&path, s.to_text()).map_err(|e| HarnessError::io(&path, e))?;
    write_rows(&dir.join("truth.csv"), run.truth.iter().map(TruthRow::from))?;
    write_rows(&dir.join("frames.csv"), run.frames.iter().map(|f| FrameRow { t: f.t, detected: f.detected as u8 }))?;
    write_detections(create(&dir.join("detections.csv"))?, &run.detections)?;
    write_estimates(create(&dir.join("estimates.csv"))?, &run.estimates())?;
    write_estimates(create(&dir.join("estimates_ned.csv"))?, &run.estimates_ned())?;
    write_rows(
        &dir.join("commands.csv"),
        run.commands.iter().map(|c| CommandRow {
            scripted_time: c.scripted_time,
            message: format_message(&c.message),
            depth_at_send: c.depth_at_send,
            delivered: c.delivered as u8,
            applied_time: c.applied_time,
        }),
    )?;

    let header: Vec<String> = ["t", "depth"]
        .into_iter()
        .map(String::from)
        .chain(ir_header())
        .chain(["fill_estimate", "fill_truth", "flags", "delivered"].map(String::from))
        .collect();
    let rows: Vec<Vec<String>> = run
        .telemetry
        .iter()
        .map(|t| {
            let mut row = vec![t.t.to_string(), t.depth.to_string()];
            row.extend(t.ir.iter().map(f64::to_string));
            row.extend([opt(t.fill_estimate), t.fill_truth.to_string(), t.flags.to_string(), (t.delivered as u8).to_string()]);
            row
        })
        .collect();
    write_table(&dir.join("telemetry.csv"), &header, &rows)?;

    write_rows(&dir.join("metrics.csv"), run.metrics.iter().map(|(k, v)| MetricRow { metric: k, value: *v }))?;
    write_plotdata(run, &plot_dir)
}

/// Rigid map from the tank frame into the plot frame of one segment.
struct PlotMap {
    /// Tank frame to estimate frame.
    b_t: RotationMatrix,
    p0: Vec3,
    flip: f64,
}

impl PlotMap {
    fn point(&self, x: f64, y: f64, z: f64) -> (f64, f64) {
        let p = self.b_t * (Vec3::new(x, y, z) - self.p0);
        (p.x, -p.y)
    }

    fn heading(&self, psi: f64) -> f64 {
        let h = self.b_t * Vec3::new(psi.cos(), psi.sin(), 0.0);
        wrap_angle(-h.y.atan2(h.x))
    }
}

fn write_plotdata(run: &RunArtifacts, dir: &Path) -> Result<(), HarnessError> {
    let s = &run.scenario;
    let truth = truth_samples(&run.truth, s);
    let map = match (s.plot_frame, run.segments.first()) {
        (PlotFrame::Overhead, Some(seg)) => {
            let b = s.camera.pose.rotation * seg.track.r_oc;
            let flip = if b.get(2, 2) < 0.0 { -1.0 } else { 1.0 };
            Some(PlotMap { b_t: b.transpose(), p0: s.camera.pose.transform_point(seg.track.origin), flip })
        }
        _ => None,
    };

    // Estimates: overhead frame mirrors the pipeline's lateral axis, tank frame
    // is the NED mapping.
    let mut vel = Vec::new();
    let mut track = Vec::new();
    for (i, seg) in run.segments.iter().enumerate() {
        let states: Vec<KinematicState> = match s.plot_frame {
            PlotFrame::Overhead => seg
                .track
                .states
                .iter()
                .map(|e| KinematicState { y: -e.y, psi: -e.psi, v: -e.v, r: -e.r, ..*e })
                .collect(),
            PlotFrame::Ned => seg.ned.clone(),
        };
        for e in states {
            let id = i.to_string();
            vel.push(vec![e.t.to_string(), id.clone(), e.psi.to_string(), e.u.to_string(), e.v.to_string(), e.r.to_string()]);
            track.push(vec![e.t.to_string(), id, e.x.to_string(), e.y.to_string()]);
        }
    }
    let h = |cols: &[&str]| cols.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    write_table(&dir.join("velocities.csv"), &h(&["t", "segment", "psi", "u", "v", "r"]), &vel)?;
    write_table(&dir.join("track.csv"), &h(&["t", "segment", "x", "y"]), &track)?;

    let truth_rows = |f: &dyn Fn(&TruthSample) -> Vec<String>| truth.iter().map(f).collect::<Vec<_>>();
    let (vel_t, track_t) = match &map {
        Some(m) => (
            truth_rows(&|p| {
                vec![p.t.to_string(), m.heading(p.psi).to_string(), p.u.to_string(), (-m.flip * p.v).to_string(), (-m.flip * p.r).to_string()]
            }),
            truth_rows(&|p| {
                let (x, y) = m.point(p.x, p.y, p.z + s.tag.mount_offset.translation.z);
                vec![p.t.to_string(), x.to_string(), y.to_string()]
            }),
        ),
        None => (
            truth_rows(&|p| vec![p.t.to_string(), p.psi.to_string(), p.u.to_string(), p.v.to_string(), p.r.to_string()]),
            truth_rows(&|p| vec![p.t.to_string(), p.x.to_string(), p.y.to_string()]),
        ),
    };
    write_table(&dir.join("velocities_truth.csv"), &h(&["t", "psi", "u", "v", "r"]), &vel_t)?;
    write_table(&dir.join("track_truth.csv"), &h(&["t", "x", "y"]), &track_t)?;

    let header: Vec<String> = ["t".to_string(), "depth".to_string()]
        .into_iter()
        .chain(ir_header())
        .chain(["fill_estimate".to_string(), "fill_truth".to_string()])
        .collect();
    let rows: Vec<Vec<String>> = run
        .telemetry
        .iter()
        .map(|t| {
            let mut row = vec![t.t.to_string(), t.depth.to_string()];
            row.extend(t.ir.iter().map(f64::to_string));
            row.extend([opt(t.fill_estimate), t.fill_truth.to_string()]);
            row
        })
        .collect();
    write_table(&dir.join("depth_ir.csv"), &header, &rows)
}

/// What `metrics <run-dir>` needs, read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub scenario: Scenario,
    pub truth: Vec<VehicleState>,
    pub frames: Vec<FrameRecord>,
    pub segments_ned: Vec<Vec<KinematicState>>,
    pub commands: Vec<CommandRecord>,
    pub telemetry: Vec<TelemetrySample>,
}

/// Splits a concatenated estimate series wherever consecutive samples are
/// further apart than one and a half output periods.
fn split_segments(states: Vec<KinematicState>, output_rate: f64) -> Vec<Vec<KinematicState>> {
    let gap = 1.5 / output_rate;
    let mut out: Vec<Vec<KinematicState>> = Vec::new();
    for s in states {
        match out.last_mut() {
            Some(seg) if seg.last().is_some_and(|p| s.t - p.t <= gap) => seg.push(s),
            _ => out.push(vec![s]),
        }
    }
    out
}

pub fn load_run_dir(dir: &Path) -> Result<RunData, HarnessError> {
    let path = dir.join("scenario.txt");
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let mut scenario = Scenario::from_text(&text, Some(dir))?;
    scenario.resolve()?;
    let truth: Vec<VehicleState> = read_rows::<TruthRow>(&dir.join("truth.csv"))?.into_iter().map(Into::into).collect();
    let frames = read_rows::<FrameRow>(&dir.join("frames.csv"))?
        .into_iter()
        .map(|f| FrameRecord { t: f.t, detected: f.detected != 0 })
        .collect();
    let estimates = read_estimates(open(&dir.join("estimates_ned.csv"))?)?;
    let segments_ned = split_segments(estimates, scenario.pipeline.output_rate);

    let mut commands = Vec::new();
    for (i, c) in read_rows::<CommandRow>(&dir.join("commands.csv"))?.into_iter().enumerate() {
        let words: Vec<&str> = c.message.split_whitespace().collect();
        let message = parse_message("message", &words).map_err(|e| {
            HarnessError::Csv(CsvError::InvalidRow { row: i + 1, message: e.to_string() })
        })?;
        commands.push(CommandRecord {
            scripted_time: c.scripted_time,
            message,
            depth_at_send: c.depth_at_send,
            delivered: c.delivered != 0,
            applied_time: c.applied_time,
        });
    }
    let telemetry = read_telemetry(&dir.join("telemetry.csv"))?;
    Ok(RunData { scenario, truth, frames, segments_ned, commands, telemetry })
}

fn read_telemetry(path: &Path) -> Result<Vec<TelemetrySample>, HarnessError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |m: &str| HarnessError::Csv(CsvError::InvalidRow { row: i + 1, message: m.to_string() });
        let num = |k: usize| -> Result<f64, HarnessError> {
            rec.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| bad(&format!("column {k} is not a number")))
        };
        let mut ir = [0.0; IR_CHANNELS];
        for (k, c) in ir.iter_mut().enumerate() {
            *c = num(2 + k)?;
        }
        let base = 2 + IR_CHANNELS;
        let fill_estimate = match rec.get(base) {
            Some("") => None,
            _ => Some(num(base)?),
        };
        out.push(TelemetrySample {
            t: num(0)?,
            depth: num(1)?,
            ir,
            fill_estimate,
            fill_truth: num(base + 1)?,
            flags: num(base + 2)? as u8,
            delivered: num(base + 3)? != 0.0,
        });
    }
    Ok(out)
}

/// Recomputes the metrics of a run directory from its CSV files.
pub fn evaluate_run_dir(dir: &Path) -> Result<BTreeMap<String, f64>, HarnessError> {
    let data = load_run_dir(dir)?;
    let truth = truth_samples(&data.truth, &data.scenario);
    let mut m = evaluate(&data.scenario, &truth, &data.segments_ned, &data.frames);
    m.extend(link_metrics(&data.commands, &data.telemetry, data.scenario.channel.d1));
    Ok(m)
}

/// Writes a metrics map as `metric,value` rows.
pub fn write_metrics<W: Write>(out: W, metrics: &BTreeMap<String, f64>) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for (k, v) in metrics {
        w.serialize(MetricRow { metric: k, value: *v }).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::Runtime(e.to_string()))
}
