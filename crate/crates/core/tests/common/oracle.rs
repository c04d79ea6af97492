//! Straight-line reimplementation of the estimation pipeline, sharing no
//! code with the library: raw normal equations with Cramer's rule, explicit
//! cross products, hand-rolled interpolation and filters.

use miniuuv::tracking::TagDetection;

type V = [f64; 3];

fn cross(a: V, b: V) -> V {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: V) -> V {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Rows `[t, x, y, psi, u, v, r]`, one per 1/rate grid sample.
pub fn brute_force(dets: &[TagDetection], window: usize, rate: f64) -> Vec<[f64; 7]> {
    let q: Vec<V> = dets.iter().map(|d| d.pose.translation.to_array()).collect();

    // (1) z = a x + b y + d
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for p in &q {
        let row = [p[0], p[1], 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * p[2];
        }
    }
    let d0 = det3(m);
    let mut coef = [0.0; 3];
    for (col, c) in coef.iter_mut().enumerate() {
        let mut mc = m;
        for i in 0..3 {
            mc[i][col] = rhs[i];
        }
        *c = det3(mc) / d0;
    }
    let (a, b) = (coef[0], coef[1]);

    // (2) rows u1, u2 = u3 x u1, u3
    let u3 = unit([a, b, -1.0]);
    let u1 = unit(cross([a, b, -1.0], [1.0, 0.0, 0.0]));
    let u2 = cross(u3, u1);
    let w = [u1, u2, u3];

    // (3)-(5)
    let o = q[0];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut yaw = Vec::new();
    for (det, p) in dets.iter().zip(&q) {
        let dq = [p[0] - o[0], p[1] - o[1], p[2] - o[2]];
        xs.push(w[0][0] * dq[0] + w[0][1] * dq[1] + w[0][2] * dq[2]);
        ys.push(w[1][0] * dq[0] + w[1][1] * dq[1] + w[1][2] * dq[2]);
        let r = det.pose.rotation.rows();
        let wr = |i: usize, j: usize| w[i][0] * r[0][j] + w[i][1] * r[1][j] + w[i][2] * r[2][j];
        yaw.push(wr(1, 0).atan2(wr(0, 0)));
    }
    let tau = 2.0 * std::f64::consts::PI;
    for i in 1..yaw.len() {
        while yaw[i] - yaw[i - 1] > std::f64::consts::PI {
            yaw[i] -= tau;
        }
        while yaw[i] - yaw[i - 1] < -std::f64::consts::PI {
            yaw[i] += tau;
        }
    }

    // (6)
    let ts: Vec<f64> = dets.iter().map(|d| d.timestamp).collect();
    let t0 = ts[0];
    let count = ((ts[ts.len() - 1] - t0) * rate + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|k| t0 + k as f64 / rate).collect();
    let interp = |vals: &[f64]| -> Vec<f64> {
        grid.iter()
            .map(|&g| {
                let mut j = 0;
                while j + 2 < ts.len() && ts[j + 1] <= g {
                    j += 1;
                }
                let f = ((g - ts[j]) / (ts[j + 1] - ts[j])).clamp(0.0, 1.0);
                vals[j] + (vals[j + 1] - vals[j]) * f
            })
            .collect()
    };
    let (gx, gy, gp) = (interp(&xs), interp(&ys), interp(&yaw));

    // (7)-(8)
    let dt = 1.0 / rate;
    let n = grid.len();
    let diff = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if i == 0 {
                    (v[1] - v[0]) / dt
                } else if i == n - 1 {
                    (v[n - 1] - v[n - 2]) / dt
                } else {
                    (v[i + 1] - v[i - 1]) / (2.0 * dt)
                }
            })
            .collect()
    };
    let smooth = |v: Vec<f64>| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let lo = (i + 1).saturating_sub(window);
                let mut s = 0.0;
                for x in &v[lo..=i] {
                    s += x;
                }
                s / (i + 1 - lo) as f64
            })
            .collect()
    };
    let (xd, yd, rd) = (smooth(diff(&gx)), smooth(diff(&gy)), smooth(diff(&gp)));

    // (9)
    (0..n)
        .map(|i| {
            let (c, s) = (gp[i].cos(), gp[i].sin());
            let mut psi = gp[i] % tau;
            if psi > std::f64::consts::PI {
                psi -= tau;
            } else if psi <= -std::f64::consts::PI {
                psi += tau;
            }
            [grid[i], gx[i], gy[i], psi, c * xd[i] + s * yd[i], -s * xd[i] + c * yd[i], rd[i]]
        })
        .collect()
}
