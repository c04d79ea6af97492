//! One-dimensional signal helpers: angle unwrapping, finite differences,
//! trailing moving average and uniform resampling.

use std::f64::consts::PI;

use super::TrackingError;

/// Removes 2π jumps so consecutive samples differ by at most π.
///
/// Each output is the input plus an integer multiple of 2π.
pub fn unwrap_angles(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut prev: Option<f64> = None;
    for &a in series {
        let next = match prev {
            None => a,
            Some(p) => a + 2.0 * PI * ((p - a) / (2.0 * PI)).round(),
        };
        out.push(next);
        prev = Some(next);
    }
    out
}

/// Central differences in the interior and one-sided differences at both ends.
pub fn finite_difference(values: &[f64], dt: f64) -> Result<Vec<f64>, TrackingError> {
    let n = values.len();
    if n < 2 {
        return Err(TrackingError::TooShort { len: n, required: 2 });
    }
    let mut out = Vec::with_capacity(n);
    out.push((values[1] - values[0]) / dt);
    for i in 1..n - 1 {
        out.push((values[i + 1] - values[i - 1]) / (2.0 * dt));
    }
    out.push((values[n - 1] - values[n - 2]) / dt);
    Ok(out)
}

/// Trailing moving average; the first `window - 1` outputs average over the
/// samples seen so far.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>, TrackingError> {
    if window == 0 || values.len() < window {
        return Err(TrackingError::WindowTooLarge { window, len: values.len() });
    }
    // Direct sums per window: no drift from a running accumulator.
    Ok((0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &values[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect())
}

/// Uniform grid `t0 + k/rate` covering `[t0, t_last]`.
pub(crate) fn uniform_grid(t0: f64, t_last: f64, rate: f64) -> Vec<f64> {
    // Slack absorbs representation error when t_last sits exactly on the grid.
    let count = ((t_last - t0) * rate + 1e-9).floor() as usize + 1;
    (0..count).map(|k| t0 + k as f64 / rate).collect()
}

pub(crate) fn check_increasing(timestamps: &[f64]) -> Result<(), TrackingError> {
    for (i, w) in timestamps.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(TrackingError::NonMonotoneTimestamps { index: i + 1 });
        }
    }
    Ok(())
}

/// Linear interpolation of `(timestamps, values)` at each grid time. Grid
/// times past the last sample take the last value.
pub(crate) fn interpolate_onto(timestamps: &[f64], values: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut j = 0;
    let last = timestamps.len() - 1;
    grid.iter()
        .map(|&g| {
            while j + 1 < last && timestamps[j + 1] <= g {
                j += 1;
            }
            let (t0, t1) = (timestamps[j], timestamps[j + 1]);
            if g >= t1 {
                return values[j + 1];
            }
            if g <= t0 {
                return values[j];
            }
            let f = (g - t0) / (t1 - t0);
            values[j] + f * (values[j + 1] - values[j])
        })
        .collect()
}

/// Resamples onto a uniform grid starting at the first timestamp, linear
/// interpolation, no extrapolation.
pub fn resample_uniform(
    timestamps: &[f64],
    values: &[f64],
    rate: f64,
) -> Result<(Vec<f64>, Vec<f64>), TrackingError> {
    if timestamps.len() < 2 {
        return Err(TrackingError::TooShort { len: timestamps.len(), required: 2 });
    }
    if timestamps.len() != values.len() {
        return Err(TrackingError::LengthMismatch {
            timestamps: timestamps.len(),
            values: values.len(),
        });
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(TrackingError::InvalidConfig(format!("output rate must be positive, got {rate}")));
    }
    check_increasing(timestamps)?;
    let grid = uniform_grid(timestamps[0], timestamps[timestamps.len() - 1], rate);
    let out = interpolate_onto(timestamps, values, &grid);
    Ok((grid, out))
}
