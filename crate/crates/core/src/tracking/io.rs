//! CSV formats for detections (`t,tag_id,tx,ty,tz,r11..r33`) and estimates
//! (`t,x,y,psi,u,v,r`).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{KinematicState, TagDetection};
use crate::frames::{Pose, RotationMatrix, Vec3};

/// Orthonormality slack accepted on rotations read from text.
const INPUT_ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRecord {
    t: f64,
    tag_id: u32,
    tx: f64,
    ty: f64,
    tz: f64,
    r11: f64,
    r12: f64,
    r13: f64,
    r21: f64,
    r22: f64,
    r23: f64,
    r31: f64,
    r32: f64,
    r33: f64,
}

impl From<&TagDetection> for DetectionRecord {
    fn from(d: &TagDetection) -> Self {
        let r = d.pose.rotation.rows();
        let q = d.pose.translation;
        DetectionRecord {
            t: d.timestamp,
            tag_id: d.tag_id,
            tx: q.x,
            ty: q.y,
            tz: q.z,
            r11: r[0][0],
            r12: r[0][1],
            r13: r[0][2],
            r21: r[1][0],
            r22: r[1][1],
            r23: r[1][2],
            r31: r[2][0],
            r32: r[2][1],
            r33: r[2][2],
        }
    }
}

pub fn write_detections<W: Write>(out: W, detections: &[TagDetection]) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for d in detections {
        w.serialize(DetectionRecord::from(d))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads detections. Rotations within `1e-6` of orthonormal are accepted and,
/// unless already exact, re-orthonormalized; anything worse is rejected with its row number.
pub fn read_detections<R: Read>(input: R) -> Result<Vec<TagDetection>, CsvError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rd.deserialize::<DetectionRecord>().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let rows = [
            [rec.r11, rec.r12, rec.r13],
            [rec.r21, rec.r22, rec.r23],
            [rec.r31, rec.r32, rec.r33],
        ];
        let rotation = orthonormalize(rows).ok_or_else(|| CsvError::InvalidRow {
            row,
            message: "rotation is not orthonormal with det +1".into(),
        })?;
        let translation = Vec3::new(rec.tx, rec.ty, rec.tz);
        if !translation.is_finite() || !rec.t.is_finite() {
            return Err(CsvError::InvalidRow { row, message: "non-finite value".into() });
        }
        out.push(TagDetection { timestamp: rec.t, tag_id: rec.tag_id, pose: Pose::new(translation, rotation) });
    }
    Ok(out)
}

fn orthonormalize(rows: [[f64; 3]; 3]) -> Option<RotationMatrix> {
    let loose = RotationMatrix::from_rows_unchecked(rows);
    if !(loose.orthonormality_error() <= INPUT_ROTATION_TOLERANCE
        && (loose.determinant() - 1.0).abs() <= INPUT_ROTATION_TOLERANCE)
    {
        return None;
    }
    // Already exact rotations pass through untouched so files round-trip.
    if loose.orthonormality_error() <= 1e-12 && (loose.determinant() - 1.0).abs() <= 1e-12 {
        return Some(loose);
    }
    let r0 = loose.row(0).normalized();
    let r1 = loose.row(1);
    let r1 = (r1 - r0 * r0.dot(r1)).normalized();
    let r2 = r0.cross(r1);
    Some(RotationMatrix::from_rows_unchecked([r0.to_array(), r1.to_array(), r2.to_array()]))
}

pub fn write_estimates<W: Write>(out: W, states: &[KinematicState]) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for s in states {
        w.serialize(s)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_estimates<R: Read>(input: R) -> Result<Vec<KinematicState>, CsvError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    Ok(rd.deserialize().collect::<Result<Vec<KinematicState>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_csv_round_trip() {
        let dets = vec![
            TagDetection {
                timestamp: 0.5,
                tag_id: 3,
                pose: Pose::new(Vec3::new(0.1, -0.2, 3.3), RotationMatrix::rot_z(0.4) * RotationMatrix::rot_x(0.05)),
            },
            TagDetection { timestamp: 0.533, tag_id: 3, pose: Pose::IDENTITY },
        ];
        let mut buf = Vec::new();
        write_detections(&mut buf, &dets).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,tag_id,tx,ty,tz,r11,r12,r13,r21,r22,r23,r31,r32,r33\n"));
        assert!(!text.contains('\r'));
        let back = read_detections(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].tag_id, 3);
        assert_eq!(back[0].pose.translation, dets[0].pose.translation);
        assert!((back[0].pose.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_reflection_rows() {
        let text = "t,tag_id,tx,ty,tz,r11,r12,r13,r21,r22,r23,r31,r32,r33\n0,0,0,0,1,1,0,0,0,1,0,0,0,-1\n";
        match read_detections(text.as_bytes()) {
            Err(CsvError::InvalidRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn estimates_header() {
        let mut buf = Vec::new();
        write_estimates(&mut buf, &[KinematicState::default()]).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("t,x,y,psi,u,v,r\n"));
        assert_eq!(read_estimates(buf.as_slice()).unwrap(), vec![KinematicState::default()]);
    }
}
