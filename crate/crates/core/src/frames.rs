//! Geometry core: vectors, rotation matrices, plane fitting and the
//! camera-to-world transforms used by the tracking pipeline.
//!
//! Conventions:
//! - [`RotationMatrix`] is stored row-major. `R * v` rotates a column vector.
//! - A [`Pose`] maps points from its own frame into the parent frame:
//!   `p_parent = rotation * p_local + translation`.
//! - Angles are radians; yaw is wrapped to `(-pi, pi]`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative pivot threshold below which the plane normal equations are singular.
pub const PLANE_PIVOT_TOLERANCE: f64 = 1e-12;
/// Minimum angle between the plane normal and the camera x-axis.
pub const NORMAL_ANGLE_TOLERANCE: f64 = 1e-6;
/// `|R[3][1]|` above `1 - GIMBAL_TOLERANCE` is treated as an edge-on view.
pub const GIMBAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FramesError {
    #[error("plane fit needs at least 3 points, got {found}")]
    InsufficientPoints { found: usize },
    #[error("plane fit is degenerate: points are collinear or coincident in x-y")]
    DegenerateConfiguration,
    #[error("plane normal is parallel to the camera x-axis")]
    DegenerateNormal,
    #[error("rotation is edge-on (|R31| = {r31}); yaw is undefined")]
    GimbalDegenerate { r31: f64 },
    #[error("matrix is not a proper rotation (orthonormality error {ortho_err:e}, det {det})")]
    NotARotation { ortho_err: f64, det: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction. Zero input yields non-finite output.
    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix {
    rows: [[f64; 3]; 3],
}

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Wraps `rows` without checking; callers guarantee orthonormality.
    pub(crate) const fn from_rows_unchecked(rows: [[f64; 3]; 3]) -> Self {
        Self { rows }
    }

    /// Builds a rotation from rows, rejecting anything that is not
    /// orthonormal with determinant +1 to within `1e-9`.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, FramesError> {
        let m = Self { rows };
        let ortho_err = m.orthonormality_error();
        let det = m.determinant();
        if !(ortho_err <= 1e-9 && (det - 1.0).abs() <= 1e-9) {
            return Err(FramesError::NotARotation { ortho_err, det });
        }
        Ok(m)
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.rows
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from_array(self.rows[i])
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.rows[0][j], self.rows[1][j], self.rows[2][j])
    }

    /// Zero-indexed element access.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_rows_unchecked([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_rows_unchecked([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_rows_unchecked([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rodrigues rotation of `angle` radians about `axis` (need not be unit).
    /// A zero axis yields the identity.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let k = axis * (1.0 / n);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Self::from_rows_unchecked([
            [t * k.x * k.x + c, t * k.x * k.y - s * k.z, t * k.x * k.z + s * k.y],
            [t * k.x * k.y + s * k.z, t * k.y * k.y + c, t * k.y * k.z - s * k.x],
            [t * k.x * k.z - s * k.y, t * k.y * k.z + s * k.x, t * k.z * k.z + c],
        ])
    }

    pub fn transpose(&self) -> Self {
        let r = &self.rows;
        Self::from_rows_unchecked([
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    /// Largest absolute entry of `R * R^T - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.row(i).dot(self.row(j)) - expect).abs());
            }
        }
        worst
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, o: RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.rows[i][k] * o.rows[k][j]).sum();
            }
        }
        RotationMatrix::from_rows_unchecked(out)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }
}

/// Rigid transform from a child frame into its parent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: RotationMatrix,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        translation: Vec3::ZERO,
        rotation: RotationMatrix::IDENTITY,
    };

    pub fn new(translation: Vec3, rotation: RotationMatrix) -> Self {
        Self { translation, rotation }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ child`: maps points of `child`'s frame into `self`'s parent.
    pub fn compose(&self, child: &Pose) -> Pose {
        Pose {
            translation: self.transform_point(child.translation),
            rotation: self.rotation * child.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            translation: -(rt * self.translation),
            rotation: rt,
        }
    }
}

/// Plane `a*x + b*y + c*z + d = 0` with `c` pinned to `-1`, i.e. `z = a*x + b*y + d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneCoefficients {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

impl PlaneCoefficients {
    pub const C: f64 = -1.0;

    pub fn new(a: f64, b: f64, d: f64) -> Self {
        Self { a, b, d }
    }

    pub fn c(&self) -> f64 {
        Self::C
    }

    /// Unnormalized normal `(a, b, c)`.
    pub fn normal(&self) -> Vec3 {
        Vec3::new(self.a, self.b, Self::C)
    }

    /// Signed z-residual `a*x + b*y - z + d` of a point.
    pub fn residual(&self, p: Vec3) -> f64 {
        self.a * p.x + self.b * p.y + Self::C * p.z + self.d
    }
}

/// Least-squares plane `z = a*x + b*y + d` through `points`.
///
/// Solves the normal equations with partial pivoting on centred coordinates.
/// A pivot smaller than [`PLANE_PIVOT_TOLERANCE`] times the largest matrix
/// entry is reported as [`FramesError::DegenerateConfiguration`].
pub fn fit_plane(points: &[Vec3]) -> Result<PlaneCoefficients, FramesError> {
    if points.len() < 3 {
        return Err(FramesError::InsufficientPoints { found: points.len() });
    }
    let centroid = centroid(points);
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for p in points {
        let q = *p - centroid;
        let row = [q.x, q.y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * q.z;
        }
    }
    let [a, b, offset] = solve3_partial_pivot(m, rhs).ok_or(FramesError::DegenerateConfiguration)?;
    Ok(PlaneCoefficients::new(a, b, centroid.z + offset - a * centroid.x - b * centroid.y))
}

/// Like [`fit_plane`] but never fails on rank-deficient x-y layouts.
///
/// When the points are collinear the tilt across the line is unobservable,
/// so the least-tilted plane among all least-squares minimizers is returned
/// (pseudo-inverse solution). Coincident points give a level plane through
/// their mean height.
pub fn fit_plane_min_tilt(points: &[Vec3]) -> Result<PlaneCoefficients, FramesError> {
    match fit_plane(points) {
        Err(FramesError::DegenerateConfiguration) => {}
        other => return other,
    }
    let c = centroid(points);
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let q = *p - c;
        sxx += q.x * q.x;
        sxy += q.x * q.y;
        syy += q.y * q.y;
        sxz += q.x * q.z;
        syz += q.y * q.z;
    }
    // Largest eigenpair of the 2x2 scatter matrix.
    let half_tr = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let lambda = half_tr + disc;
    let (a, b) = if lambda <= f64::MIN_POSITIVE {
        (0.0, 0.0)
    } else {
        let dir = if sxy.abs() > 0.0 {
            Vec3::new(lambda - syy, sxy, 0.0)
        } else if sxx >= syy {
            Vec3::X
        } else {
            Vec3::Y
        }
        .normalized();
        let slope = (dir.x * sxz + dir.y * syz) / lambda;
        (slope * dir.x, slope * dir.y)
    };
    Ok(PlaneCoefficients::new(a, b, c.z - a * c.x - b * c.y))
}

fn centroid(points: &[Vec3]) -> Vec3 {
    let mut sum = Vec3::ZERO;
    for p in points {
        sum += *p;
    }
    sum * (1.0 / points.len() as f64)
}

fn solve3_partial_pivot(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(scale > 0.0) {
        return None;
    }
    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap_or(col);
        if m[pivot_row][col].abs() <= PLANE_PIVOT_TOLERANCE * scale {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let upper = m[col];
            for (a, b) in m[row].iter_mut().zip(upper).skip(col) {
                *a -= f * b;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let tail: f64 = (i + 1..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (rhs[i] - tail) / m[i][i];
    }
    Some(x)
}

/// Rotation whose rows are the plane-aligned world axes expressed in camera
/// coordinates: row 3 is the unit plane normal, row 1 is `normal × x̂`
/// normalized, and row 2 is `row3 × row1` so the result is right-handed.
///
/// The returned matrix maps camera-frame vectors into the plane-aligned
/// frame; in particular it sends the unit normal to `(0, 0, 1)`.
pub fn world_rotation(plane: &PlaneCoefficients) -> Result<RotationMatrix, FramesError> {
    let n = plane.normal();
    let u1 = n.cross(Vec3::X);
    if u1.norm() <= NORMAL_ANGLE_TOLERANCE.sin() * n.norm() {
        return Err(FramesError::DegenerateNormal);
    }
    let u3 = n.normalized();
    let u1 = u1.normalized();
    let u2 = u3.cross(u1).normalized();
    Ok(RotationMatrix::from_rows_unchecked([
        u1.to_array(),
        u2.to_array(),
        u3.to_array(),
    ]))
}

/// `r_oc^T * (detection - origin)`.
pub fn to_world(detection: Vec3, origin: Vec3, r_oc: &RotationMatrix) -> Vec3 {
    r_oc.transpose() * (detection - origin)
}

/// Inverse of [`to_world`].
pub fn from_world(world: Vec3, origin: Vec3, r_oc: &RotationMatrix) -> Vec3 {
    *r_oc * world + origin
}

/// Yaw of a yaw-pitch-roll decomposition, `atan2(R21, R11)` (one-indexed).
pub fn extract_yaw(r: &RotationMatrix) -> Result<f64, FramesError> {
    let r31 = r.get(2, 0);
    if r31.abs() > 1.0 - GIMBAL_TOLERANCE {
        return Err(FramesError::GimbalDegenerate { r31 });
    }
    Ok(wrap_angle(r.get(1, 0).atan2(r.get(0, 0))))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyVelocity {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

/// Rotates planar world-frame velocity into the body frame by heading `psi`.
/// Heave is zero: the estimate applies to surface operation only.
pub fn body_velocities(xdot: f64, ydot: f64, psi: f64) -> BodyVelocity {
    let (s, c) = psi.sin_cos();
    BodyVelocity {
        u: c * xdot + s * ydot,
        v: -s * xdot + c * ydot,
        w: 0.0,
    }
}
