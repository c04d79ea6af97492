use approx::assert_abs_diff_eq;
use miniuuv::frames::{
    body_velocities, extract_yaw, fit_plane, from_world, to_world, world_rotation, PlaneCoefficients,
    RotationMatrix, Vec3,
};
use proptest::prelude::*;

fn coeff() -> impl Strategy<Value = f64> {
    -2.0..2.0f64
}

fn plane_points(a: f64, b: f64, d: f64, xy: &[(f64, f64)]) -> Vec<Vec3> {
    xy.iter().map(|&(x, y)| Vec3::new(x, y, a * x + b * y + d)).collect()
}

fn xy_cloud() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 3..60).prop_filter("spread in both axes", |pts| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let (sxx, syy, sxy) = pts.iter().fold((0.0, 0.0, 0.0), |(a, b, c), p| {
            let (dx, dy) = (p.0 - mx, p.1 - my);
            (a + dx * dx, b + dy * dy, c + dx * dy)
        });
        sxx * syy - sxy * sxy > 1e-2 * (sxx + syy).powi(2)
    })
}

fn gram_error(r: &RotationMatrix) -> f64 {
    let m = r.rows();
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - want).abs());
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exact_plane_fit_has_no_residual(a in coeff(), b in coeff(), d in -5.0..5.0f64, xy in xy_cloud()) {
        let pts = plane_points(a, b, d, &xy);
        let p = fit_plane(&pts).unwrap();
        for q in &pts {
            prop_assert!((p.a * q.x + p.b * q.y - q.z + p.d).abs() < 1e-9);
        }
        prop_assert_eq!(p.c(), -1.0);
    }

    #[test]
    fn world_rotation_is_proper(a in coeff(), b in coeff()) {
        let w = world_rotation(&PlaneCoefficients::new(a, b, 0.0)).unwrap();
        prop_assert!(gram_error(&w) < 1e-9);
        prop_assert!((w.determinant() - 1.0).abs() < 1e-9);
        let n = Vec3::new(a, b, -1.0).normalized();
        let mapped = w * n;
        prop_assert!((mapped - Vec3::Z).norm() < 1e-9);
    }

    #[test]
    fn to_world_round_trips(
        a in coeff(), b in coeff(),
        q in prop::array::uniform3(-5.0..5.0f64),
        o in prop::array::uniform3(-5.0..5.0f64),
    ) {
        let r = world_rotation(&PlaneCoefficients::new(a, b, 1.0)).unwrap();
        let (q, o) = (Vec3::from_array(q), Vec3::from_array(o));
        let back = from_world(to_world(q, o, &r), o, &r);
        prop_assert!((back - q).norm() < 1e-12);
    }

    #[test]
    fn yaw_of_pure_z_rotation(theta in -std::f64::consts::PI..=std::f64::consts::PI) {
        let yaw = extract_yaw(&RotationMatrix::rot_z(theta)).unwrap();
        let want = if theta <= -std::f64::consts::PI { std::f64::consts::PI } else { theta };
        prop_assert!((yaw - want).abs() < 1e-12);
    }

    #[test]
    fn body_velocities_preserve_norm_and_match_matrix(xd in -3.0..3.0f64, yd in -3.0..3.0f64, psi in -10.0..10.0f64) {
        let bv = body_velocities(xd, yd, psi);
        prop_assert!(((bv.u * bv.u + bv.v * bv.v) - (xd * xd + yd * yd)).abs() < 1e-12);
        // Independent 3x3 product with the transposed yaw rotation.
        let m = [[psi.cos(), psi.sin(), 0.0], [-psi.sin(), psi.cos(), 0.0], [0.0, 0.0, 1.0]];
        let v = [xd, yd, 0.0];
        let out: Vec<f64> = m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect();
        prop_assert!((bv.u - out[0]).abs() < 1e-12);
        prop_assert!((bv.v - out[1]).abs() < 1e-12);
        prop_assert_eq!(bv.w, 0.0);
    }
}

#[test]
fn noisy_plane_matches_independent_solve() {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let pts: Vec<Vec3> = (0..200)
        .map(|_| {
            let (x, y) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            Vec3::new(x, y, 0.05 * x - 0.03 * y + 1.0 + noise.sample(&mut rng))
        })
        .collect();
    let p = fit_plane(&pts).unwrap();

    // Oracle: raw normal equations, Cramer's rule.
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for q in &pts {
        let row = [q.x, q.y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * q.z;
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d0 = det(&m);
    let solve = |col: usize| {
        let mut mc = m;
        for i in 0..3 {
            mc[i][col] = rhs[i];
        }
        det(&mc) / d0
    };
    assert_abs_diff_eq!(p.a, solve(0), epsilon = 1e-9);
    assert_abs_diff_eq!(p.b, solve(1), epsilon = 1e-9);
    assert_abs_diff_eq!(p.d, solve(2), epsilon = 1e-9);
    assert!((p.a - 0.05).abs() < 0.005 && (p.b + 0.03).abs() < 0.005 && (p.d - 1.0).abs() < 0.005);
}

#[test]
fn tilted_yaw_close_to_planar_yaw() {
    let r = RotationMatrix::rot_x(3f64.to_radians()) * RotationMatrix::rot_z(0.7);
    // Independent ZYX decomposition: yaw = atan2(r21, r11).
    let m = r.rows();
    let oracle = m[1][0].atan2(m[0][0]);
    let yaw = extract_yaw(&r).unwrap();
    assert_abs_diff_eq!(yaw, oracle, epsilon = 1e-15);
    assert!((yaw - 0.7).abs() < 2e-3);
}
