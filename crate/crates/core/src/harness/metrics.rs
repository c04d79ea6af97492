//! Estimate-vs-truth scoring and trajectory shape metrics.

use std::collections::BTreeMap;

use thiserror::Error;

use super::runner::tag_world;
use super::{CommandRecord, FrameRecord, Scenario, TelemetrySample};
use crate::frames::wrap_angle;
use crate::tracking::KinematicState;
use crate::vehicle::VehicleState;

/// Hysteresis for counting yaw-rate sign changes, rad/s.
pub const R_SIGN_HYSTERESIS: f64 = 0.05;
/// Hysteresis for counting depth reversals, m.
pub const DEPTH_REVERSAL_HYSTERESIS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("points are collinear")]
    Collinear,
    #[error("estimates do not overlap the truth time range")]
    NoOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// Algebraic least-squares circle: minimizes
/// `sum (x^2 + y^2 + D x + E y + F)^2` over `D, E, F`.
pub fn circle_fit(points: &[(f64, f64)]) -> Result<Circle, MetricsError> {
    let n = points.len();
    if n < 3 {
        return Err(MetricsError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    // Centered, the normal equations decouple F from D and E.
    let (mut suu, mut suv, mut svv, mut szu, mut szv, mut sz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        let z = u * u + v * v;
        suu += u * u;
        suv += u * v;
        svv += v * v;
        szu += z * u;
        szv += z * v;
        sz += z;
    }
    let det = suu * svv - suv * suv;
    let scale = (suu + svv) * (suu + svv);
    if !(scale > 0.0) || det <= 1e-12 * scale {
        return Err(MetricsError::Collinear);
    }
    let d = (-szu * svv + szv * suv) / det;
    let e = (-szv * suu + szu * suv) / det;
    let f = -sz / nf;
    let radius = (0.25 * (d * d + e * e) - f).sqrt();
    Ok(Circle { cx: mx - 0.5 * d, cy: my - 0.5 * e, radius })
}

/// Truth reduced to what the pipeline estimates: tag position, body heading
/// and the tag's planar body-frame velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

pub fn truth_samples(states: &[VehicleState], scenario: &Scenario) -> Vec<TruthSample> {
    let offset = scenario.tag.mount_offset.translation;
    states
        .iter()
        .map(|s| {
            let p = tag_world(s, scenario);
            TruthSample {
                t: s.t,
                x: p.x,
                y: p.y,
                z: s.position.z,
                psi: s.psi,
                u: s.u - s.r * offset.y,
                v: s.v + s.r * offset.x,
                r: s.r,
            }
        })
        .collect()
}

/// Linear interpolation of the truth at `t`; `None` outside its range.
fn truth_at(truth: &[TruthSample], t: f64) -> Option<TruthSample> {
    let first = truth.first()?;
    let last = truth.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let i = truth.partition_point(|s| s.t <= t).min(truth.len() - 1).max(1);
    let (a, b) = (&truth[i - 1], &truth[i]);
    let f = if b.t > a.t { ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0) } else { 0.0 };
    let l = |x: f64, y: f64| x + (y - x) * f;
    Some(TruthSample {
        t,
        x: l(a.x, b.x),
        y: l(a.y, b.y),
        z: l(a.z, b.z),
        psi: wrap_angle(a.psi + wrap_angle(b.psi - a.psi) * f),
        u: l(a.u, b.u),
        v: l(a.v, b.v),
        r: l(a.r, b.r),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsOptions {
    /// Samples dropped at each end of every segment.
    pub edge: usize,
    /// Delay of the smoothed velocities; truth velocities are read this much
    /// earlier than the estimate timestamp.
    pub velocity_lag: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self { edge: 0, velocity_lag: 0.0 }
    }
}

fn interior(segment: &[KinematicState], edge: usize) -> &[KinematicState] {
    if segment.len() > 2 * edge {
        &segment[edge..segment.len() - edge]
    } else {
        &[]
    }
}

/// RMS errors of the estimates against truth resampled at the estimate
/// timestamps. Keys: `rmse_xy`, `rmse_psi`, `rmse_u`, `rmse_v`, `rmse_r`,
/// `compared_samples`.
pub fn compute_metrics(
    truth: &[TruthSample],
    segments: &[Vec<KinematicState>],
    opts: MetricsOptions,
) -> Result<BTreeMap<String, f64>, MetricsError> {
    let mut n = 0usize;
    let mut sums = [0.0; 5];
    for seg in segments {
        for e in interior(seg, opts.edge) {
            let (Some(p), Some(vel)) = (truth_at(truth, e.t), truth_at(truth, e.t - opts.velocity_lag)) else {
                continue;
            };
            n += 1;
            sums[0] += (e.x - p.x).powi(2) + (e.y - p.y).powi(2);
            sums[1] += wrap_angle(e.psi - p.psi).powi(2);
            sums[2] += (e.u - vel.u).powi(2);
            sums[3] += (e.v - vel.v).powi(2);
            sums[4] += (e.r - vel.r).powi(2);
        }
    }
    if n == 0 {
        return Err(MetricsError::NoOverlap);
    }
    let names = ["rmse_xy", "rmse_psi", "rmse_u", "rmse_v", "rmse_r"];
    let mut out: BTreeMap<String, f64> =
        names.iter().zip(sums).map(|(k, s)| (k.to_string(), (s / n as f64).sqrt())).collect();
    out.insert("compared_samples".into(), n as f64);
    Ok(out)
}

/// Number of sign changes, ignoring values within `±hysteresis` of zero.
pub fn hysteresis_sign_changes(values: impl IntoIterator<Item = f64>, hysteresis: f64) -> usize {
    let mut last = 0i8;
    let mut count = 0;
    for v in values {
        let s = if v > hysteresis {
            1
        } else if v < -hysteresis {
            -1
        } else {
            continue;
        };
        if last != 0 && s != last {
            count += 1;
        }
        last = s;
    }
    count
}

/// Direction changes of a series, each confirmed by a move of at least
/// `hysteresis` away from the last extremum.
pub fn reversals(values: impl IntoIterator<Item = f64>, hysteresis: f64) -> usize {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ext = 0.0;
    let mut dir = 0i8;
    let mut count = 0;
    for z in values {
        match dir {
            0 => {
                lo = lo.min(z);
                hi = hi.max(z);
                if z > lo + hysteresis {
                    dir = 1;
                    ext = z;
                } else if z < hi - hysteresis {
                    dir = -1;
                    ext = z;
                }
            }
            1 if z > ext => ext = z,
            1 if z < ext - hysteresis => {
                dir = -1;
                ext = z;
                count += 1;
            }
            -1 if z < ext => ext = z,
            -1 if z > ext + hysteresis => {
                dir = 1;
                ext = z;
                count += 1;
            }
            _ => {}
        }
    }
    count
}

pub fn path_length(truth: &[TruthSample]) -> f64 {
    truth.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum()
}

/// All run metrics derivable from truth, frames and the tank-frame estimates.
pub fn evaluate(
    scenario: &Scenario,
    truth: &[TruthSample],
    segments: &[Vec<KinematicState>],
    frames: &[FrameRecord],
) -> BTreeMap<String, f64> {
    let edge = scenario.pipeline.smoothing_window;
    let opts = MetricsOptions { edge, velocity_lag: scenario.pipeline.velocity_lag() };
    let mut m = compute_metrics(truth, segments, opts).unwrap_or_default();

    if !frames.is_empty() {
        let detected = frames.iter().filter(|f| f.detected).count();
        m.insert("frames".into(), frames.len() as f64);
        m.insert("detection_coverage".into(), detected as f64 / frames.len() as f64);
    }
    m.insert("segments".into(), segments.len() as f64);
    m.insert("estimate_samples".into(), segments.iter().map(Vec::len).sum::<usize>() as f64);
    m.insert("truth_path_length".into(), path_length(truth));
    m.insert("truth_max_depth".into(), truth.iter().map(|s| s.z).fold(0.0, f64::max));
    m.insert("truth_depth_reversals".into(), reversals(truth.iter().map(|s| s.z), DEPTH_REVERSAL_HYSTERESIS) as f64);

    let inner: Vec<&KinematicState> = segments.iter().flat_map(|s| interior(s, edge)).collect();
    m.insert(
        "est_r_sign_changes".into(),
        hysteresis_sign_changes(inner.iter().map(|e| e.r), R_SIGN_HYSTERESIS) as f64,
    );
    m.insert(
        "truth_r_sign_changes".into(),
        hysteresis_sign_changes(truth.iter().map(|s| s.r), R_SIGN_HYSTERESIS) as f64,
    );
    if !inner.is_empty() {
        m.insert("est_mean_v".into(), inner.iter().map(|e| e.v).sum::<f64>() / inner.len() as f64);
    }

    if let Some(t0) = scenario.steady_after {
        let steady: Vec<&TruthSample> = truth.iter().filter(|s| s.t >= t0).collect();
        if !steady.is_empty() {
            let k = steady.len() as f64;
            let mean_u = steady.iter().map(|s| s.u).sum::<f64>() / k;
            let mean_r = steady.iter().map(|s| s.r).sum::<f64>() / k;
            m.insert("steady_truth_u".into(), mean_u);
            m.insert("steady_truth_r".into(), mean_r);
            if mean_r.abs() > 1e-9 {
                let (lo, hi) = steady.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                    (lo.min(s.r), hi.max(s.r))
                });
                m.insert("steady_truth_r_variation".into(), (hi - lo) / mean_r.abs());
            }
            if let (Some(rmse_u), true) = (m.get("rmse_u").copied(), mean_u.abs() > 1e-9) {
                m.insert("rmse_u_rel".into(), rmse_u / mean_u.abs());
            }
            let pts: Vec<(f64, f64)> = steady.iter().map(|s| (s.x, s.y)).collect();
            if let Ok(c) = circle_fit(&pts) {
                m.insert("truth_circle_radius".into(), c.radius);
            }
        }
        let est_pts: Vec<(f64, f64)> = inner.iter().filter(|e| e.t >= t0).map(|e| (e.x, e.y)).collect();
        if let Ok(c) = circle_fit(&est_pts) {
            m.insert("est_circle_radius".into(), c.radius);
        }
    }
    m.retain(|_, v| v.is_finite());
    m
}

/// Radio bookkeeping: what was sent, what got through, what was applied.
pub fn link_metrics(commands: &[CommandRecord], telemetry: &[TelemetrySample], d1: f64) -> BTreeMap<String, f64> {
    let count = |f: &dyn Fn(&CommandRecord) -> bool| commands.iter().filter(|c| f(c)).count() as f64;
    let mut m = BTreeMap::new();
    m.insert("commands_scripted".into(), commands.len() as f64);
    m.insert("commands_delivered".into(), count(&|c| c.delivered));
    m.insert("commands_applied".into(), count(&|c| c.applied_time.is_some()));
    m.insert("commands_sent_beyond_d1".into(), count(&|c| c.depth_at_send > d1));
    m.insert("commands_applied_beyond_d1".into(), count(&|c| c.depth_at_send > d1 && c.applied_time.is_some()));
    m.insert("telemetry_sent".into(), telemetry.len() as f64);
    m.insert("telemetry_delivered".into(), telemetry.iter().filter(|s| s.delivered).count() as f64);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ring(n: usize, cx: f64, cy: f64, r: f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                (cx + r * a.cos(), cy + r * a.sin())
            })
            .collect()
    }

    #[test]
    fn exact_circle() {
        let c = circle_fit(&ring(100, 0.4, -2.0, 1.83)).unwrap();
        assert_abs_diff_eq!(c.radius, 1.83, epsilon = 1e-9);
        assert_abs_diff_eq!(c.cx, 0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(c.cy, -2.0, epsilon = 1e-9);
    }

    #[test]
    fn circumcircle() {
        let c = circle_fit(&[(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(c.cx, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.cy, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.radius, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_circles() {
        assert_eq!(circle_fit(&[(0.0, 0.0), (1.0, 1.0)]), Err(MetricsError::TooFewPoints(2)));
        let line: Vec<_> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert_eq!(circle_fit(&line), Err(MetricsError::Collinear));
        assert_eq!(circle_fit(&[(1.0, 1.0); 5]), Err(MetricsError::Collinear));
    }

    fn truth_line(n: usize) -> Vec<TruthSample> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.01;
                TruthSample { t, x: 0.3 * t, y: 0.1, z: 0.0, psi: 0.2, u: 0.3, v: 0.0, r: 0.05 }
            })
            .collect()
    }

    fn as_estimates(truth: &[TruthSample], dx: f64) -> Vec<KinematicState> {
        truth
            .iter()
            .map(|s| KinematicState { t: s.t, x: s.x + dx, y: s.y, psi: s.psi, u: s.u, v: s.v, r: s.r })
            .collect()
    }

    #[test]
    fn identical_estimates_score_zero() {
        let truth = truth_line(200);
        let m = compute_metrics(&truth, &[as_estimates(&truth, 0.0)], MetricsOptions::default()).unwrap();
        for k in ["rmse_xy", "rmse_psi", "rmse_u", "rmse_v", "rmse_r"] {
            assert_eq!(m[k], 0.0, "{k}");
        }
    }

    #[test]
    fn constant_offset() {
        let truth = truth_line(200);
        let m = compute_metrics(&truth, &[as_estimates(&truth, 0.01)], MetricsOptions::default()).unwrap();
        assert_abs_diff_eq!(m["rmse_xy"], 0.01, epsilon = 1e-12);
        assert_eq!(m["rmse_u"], 0.0);
    }

    #[test]
    fn edges_are_excluded() {
        let truth = truth_line(200);
        let mut est = as_estimates(&truth, 0.0);
        est[0].x += 5.0;
        est[199].u += 5.0;
        let m = compute_metrics(&truth, &[est], MetricsOptions { edge: 1, velocity_lag: 0.0 }).unwrap();
        assert_eq!(m["rmse_xy"], 0.0);
        assert_eq!(m["compared_samples"], 198.0);
    }

    #[test]
    fn yaw_error_is_wrapped() {
        let truth: Vec<_> = truth_line(10).into_iter().map(|s| TruthSample { psi: 3.1, ..s }).collect();
        let est: Vec<_> = as_estimates(&truth, 0.0).into_iter().map(|e| KinematicState { psi: -3.1, ..e }).collect();
        let m = compute_metrics(&truth, &[est], MetricsOptions::default()).unwrap();
        assert_abs_diff_eq!(m["rmse_psi"], std::f64::consts::TAU - 6.2, epsilon = 1e-12);
    }

    #[test]
    fn no_overlap() {
        let truth = truth_line(10);
        let mut est = as_estimates(&truth, 0.0);
        for e in &mut est {
            e.t += 100.0;
        }
        assert_eq!(compute_metrics(&truth, &[est], MetricsOptions::default()), Err(MetricsError::NoOverlap));
        assert_eq!(compute_metrics(&truth, &[], MetricsOptions::default()), Err(MetricsError::NoOverlap));
    }

    #[test]
    fn sign_changes_with_hysteresis() {
        let r = [0.0, 0.1, 0.04, -0.04, 0.2, -0.06, -0.3, 0.01, 0.06, -0.07];
        assert_eq!(hysteresis_sign_changes(r, 0.05), 3);
        assert_eq!(hysteresis_sign_changes([0.04, -0.04, 0.03], 0.05), 0);
    }

    #[test]
    fn depth_reversals() {
        let mut z = Vec::new();
        for i in 0..=100 {
            z.push(i as f64 * 0.01);
        }
        for i in 0..=50 {
            z.push(1.0 - i as f64 * 0.01);
        }
        for i in 0..=50 {
            z.push(0.5 + i as f64 * 0.01);
        }
        assert_eq!(reversals(z.iter().copied(), 0.05), 2);
        // Wiggles below the hysteresis do not count.
        let wiggle: Vec<f64> = (0..100).map(|i| 0.5 + 0.02 * (i as f64).sin()).collect();
        assert_eq!(reversals(wiggle, 0.05), 0);
    }
}
