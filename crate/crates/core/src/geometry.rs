//! Vectors, rotations, rigid transforms, and the hand/robot coordinate frames
//! used to align the simulated camera with the real one.
//!
//! Conventions:
//!
//! * [`RotationMatrix`] stores its entries row-major, but its *columns* are the
//!   basis vectors of the rotated frame expressed in the parent frame.
//! * [`HomogeneousMatrix::compose`] is left-to-right: `a.compose(&b)` maps a
//!   point through `b` first, then `a` (the usual `A * B`).
//! * Serialized transforms are row-major 4x4 arrays of 16 floats.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hand::HandKeypoints;

/// Minimum cross-product norm between the two normalized finger directions
/// before a frame is considered degenerate.
pub const COLLINEARITY_EPS: f64 = 1e-6;

/// MANO indices used for the hand frame: wrist, middle-finger MCP, ring-finger MCP.
pub const HAND_FRAME_KEYPOINTS: (usize, usize, usize) = (0, 9, 13);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("hand keypoints are degenerate: wrist, middle and ring MCP are (nearly) collinear")]
    DegenerateHand,
    #[error("robot marker links are degenerate: wrist, middle and ring markers are (nearly) collinear")]
    DegenerateRobotPose,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
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
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
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

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or `None` for a zero or non-finite vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs_diff(self, o: Vec3) -> f64 {
        (self.x - o.x).abs().max((self.y - o.y).abs()).max((self.z - o.z).abs())
    }

    /// Unsigned angle between two vectors in `[0, pi]`.
    pub fn angle_to(self, o: Vec3) -> Option<f64> {
        let a = self.normalized()?;
        let b = o.normalized()?;
        // atan2 of |a x b| and a.b is well conditioned near 0 and pi
        Some(a.cross(b).norm().atan2(a.dot(b)))
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

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        <[f64; 3]>::deserialize(d).map(Vec3::from_array)
    }
}

/// A 3x3 rotation. Entries are stored row-major; columns are basis vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    m: [[f64; 3]; 3],
}

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Builds from rows without checking orthonormality.
    pub const fn from_rows_unchecked(m: [[f64; 3]; 3]) -> Self {
        RotationMatrix { m }
    }

    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> Self {
        RotationMatrix {
            m: [[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]],
        }
    }

    pub fn from_row_major(v: [f64; 9]) -> Self {
        RotationMatrix {
            m: [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]],
        }
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    /// Rodrigues rotation about `axis` (normalized internally) by `angle` radians.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Some(k) = axis.normalized() else {
            return Self::IDENTITY;
        };
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        RotationMatrix {
            m: [
                [t * k.x * k.x + c, t * k.x * k.y - s * k.z, t * k.x * k.z + s * k.y],
                [t * k.x * k.y + s * k.z, t * k.y * k.y + c, t * k.y * k.z - s * k.x],
                [t * k.x * k.z - s * k.y, t * k.y * k.z + s * k.x, t * k.z * k.z + c],
            ],
        }
    }

    /// URDF roll/pitch/yaw: `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        RotationMatrix {
            m: [
                [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
                [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
                [-sp, cp * sr, cp * cr],
            ],
        }
    }

    /// Inverse of [`RotationMatrix::from_rpy`]. Returns `(roll, pitch, yaw)`.
    pub fn to_rpy(&self) -> (f64, f64, f64) {
        let m = &self.m;
        let pitch = (-m[2][0]).clamp(-1.0, 1.0).asin();
        if m[2][0].abs() < 1.0 - 1e-12 {
            (m[2][1].atan2(m[2][2]), pitch, m[1][0].atan2(m[0][0]))
        } else {
            // gimbal lock: fold everything into yaw
            (0.0, pitch, (-m[0][1]).atan2(m[1][1]))
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[row][col]
    }

    pub fn column(&self, c: usize) -> Vec3 {
        Vec3::new(self.m[0][c], self.m[1][c], self.m[2][c])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        RotationMatrix {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// `R^T v` without materializing the transpose.
    pub fn tmul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul(&self, o: &RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = self.m[r][0] * o.m[0][c] + self.m[r][1] * o.m[1][c] + self.m[r][2] * o.m[2][c];
            }
        }
        RotationMatrix { m: out }
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest deviation of `R^T R` from identity.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul(self);
        let mut worst: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((p.m[r][c] - target).abs());
            }
        }
        worst
    }

    /// Orthonormal with determinant +1, both within `tol`.
    pub fn is_rotation(&self, tol: f64) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
            && self.orthonormality_error() <= tol
            && (self.determinant() - 1.0).abs() <= tol
    }

    pub fn max_abs_diff(&self, o: &RotationMatrix) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(o.m.iter().flatten())
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

impl Serialize for RotationMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RotationMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        <[f64; 9]>::deserialize(d).map(RotationMatrix::from_row_major)
    }
}

/// Rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HomogeneousMatrix {
    pub rotation: RotationMatrix,
    pub translation: Vec3,
}

impl HomogeneousMatrix {
    pub const IDENTITY: HomogeneousMatrix = HomogeneousMatrix {
        rotation: RotationMatrix::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: RotationMatrix, translation: Vec3) -> Self {
        HomogeneousMatrix { rotation, translation }
    }

    pub fn from_translation(t: Vec3) -> Self {
        HomogeneousMatrix::new(RotationMatrix::IDENTITY, t)
    }

    pub fn from_rotation(r: RotationMatrix) -> Self {
        HomogeneousMatrix::new(r, Vec3::ZERO)
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &HomogeneousMatrix) -> HomogeneousMatrix {
        HomogeneousMatrix {
            rotation: self.rotation.mul(&other.rotation),
            translation: self.rotation.mul_vec(other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> HomogeneousMatrix {
        let rt = self.rotation.transpose();
        HomogeneousMatrix {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn transform_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.mul_vec(v)
    }

    pub fn to_matrix4(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = self.translation;
        [
            [r.get(0, 0), r.get(0, 1), r.get(0, 2), t.x],
            [r.get(1, 0), r.get(1, 1), r.get(1, 2), t.y],
            [r.get(2, 0), r.get(2, 1), r.get(2, 2), t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix4();
        let mut out = [0.0; 16];
        for (i, v) in m.iter().flatten().enumerate() {
            out[i] = *v;
        }
        out
    }

    /// Reads a row-major 4x4 array. The bottom row must be `0 0 0 1`; the
    /// rotation block is taken as-is (callers validate rigidity if needed).
    pub fn from_row_major(v: [f64; 16]) -> Option<Self> {
        if v[12] != 0.0 || v[13] != 0.0 || v[14] != 0.0 || v[15] != 1.0 {
            return None;
        }
        Some(HomogeneousMatrix {
            rotation: RotationMatrix::from_row_major([v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]]),
            translation: Vec3::new(v[3], v[7], v[11]),
        })
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        self.rotation.is_rotation(tol) && self.translation.is_finite()
    }

    pub fn max_abs_diff(&self, o: &HomogeneousMatrix) -> f64 {
        self.rotation
            .max_abs_diff(&o.rotation)
            .max(self.translation.max_abs_diff(o.translation))
    }
}

impl Serialize for HomogeneousMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().to_vec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for HomogeneousMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let arr: [f64; 16] = v
            .try_into()
            .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"16 floats"))?;
        HomogeneousMatrix::from_row_major(arr)
            .ok_or_else(|| serde::de::Error::custom("bottom row of a homogeneous matrix must be [0, 0, 0, 1]"))
    }
}

/// `a * b`.
pub fn compose(a: &HomogeneousMatrix, b: &HomogeneousMatrix) -> HomogeneousMatrix {
    a.compose(b)
}

pub fn invert(t: &HomogeneousMatrix) -> HomogeneousMatrix {
    t.inverse()
}

/// A right-handed orthonormal frame anchored at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateFrame {
    pub x_axis: Vec3,
    pub y_axis: Vec3,
    pub z_axis: Vec3,
    pub origin: Vec3,
}

/// Frame attached to the human hand (origin at the wrist).
pub type HandFrame = CoordinateFrame;
/// Frame attached to the robot end-effector (origin at the robot wrist marker).
pub type RobotFrame = CoordinateFrame;

impl CoordinateFrame {
    pub const WORLD: CoordinateFrame = CoordinateFrame {
        x_axis: Vec3::X,
        y_axis: Vec3::Y,
        z_axis: Vec3::Z,
        origin: Vec3::ZERO,
    };

    /// Builds a frame with origin `origin`, x pointing at `toward_x` and y
    /// normal to the plane spanned by the two directions.
    ///
    /// Returns `None` if either direction is zero or the two are collinear
    /// (cross product of the normalized directions shorter than
    /// [`COLLINEARITY_EPS`]).
    pub fn from_points(origin: Vec3, toward_x: Vec3, in_plane: Vec3) -> Option<CoordinateFrame> {
        let a = (toward_x - origin).normalized()?;
        let b = (in_plane - origin).normalized()?;
        let n = a.cross(b);
        if !(n.norm() > COLLINEARITY_EPS) {
            return None;
        }
        let y = n.normalized()?;
        Some(CoordinateFrame {
            x_axis: a,
            y_axis: y,
            z_axis: a.cross(y),
            origin,
        })
    }

    /// Largest violation of the orthonormal right-handed frame invariants.
    pub fn invariant_error(&self) -> f64 {
        let (x, y, z) = (self.x_axis, self.y_axis, self.z_axis);
        [
            (x.norm() - 1.0).abs(),
            (y.norm() - 1.0).abs(),
            (z.norm() - 1.0).abs(),
            x.dot(y).abs(),
            y.dot(z).abs(),
            x.dot(z).abs(),
            (x.cross(y) - z).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn to_transform(&self) -> HomogeneousMatrix {
        frame_to_transform(self)
    }
}

/// Hand frame from MANO keypoints 0 (wrist), 9 (middle MCP) and 13 (ring MCP).
pub fn build_hand_frame(keypoints: &HandKeypoints) -> Result<HandFrame, GeometryError> {
    let (w, m, r) = HAND_FRAME_KEYPOINTS;
    let p = &keypoints.points_3d;
    CoordinateFrame::from_points(p[w], p[m], p[r]).ok_or(GeometryError::DegenerateHand)
}

/// Robot frame from the world positions of the wrist, middle-finger and
/// ring-finger marker links.
pub fn build_robot_frame(wrist: Vec3, mid_finger: Vec3, ring_finger: Vec3) -> Result<RobotFrame, GeometryError> {
    CoordinateFrame::from_points(wrist, mid_finger, ring_finger).ok_or(GeometryError::DegenerateRobotPose)
}

/// Packs the frame axes as rotation columns and the origin as translation.
pub fn frame_to_transform(frame: &CoordinateFrame) -> HomogeneousMatrix {
    HomogeneousMatrix::new(
        RotationMatrix::from_columns(frame.x_axis, frame.y_axis, frame.z_axis),
        frame.origin,
    )
}

/// Camera pose in the world. `orientation` maps camera-frame directions to
/// world directions (x right, y down, z forward).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    #[serde(rename = "rotation")]
    pub orientation: RotationMatrix,
}

impl CameraPose {
    pub fn new(position: Vec3, orientation: RotationMatrix) -> Self {
        CameraPose { position, orientation }
    }

    /// Camera-to-world transform.
    pub fn to_transform(&self) -> HomogeneousMatrix {
        HomogeneousMatrix::new(self.orientation, self.position)
    }

    pub fn from_transform(t: &HomogeneousMatrix) -> Self {
        CameraPose::new(t.translation, t.rotation)
    }

    /// World point expressed in the camera frame.
    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.orientation.tmul_vec(p - self.position)
    }

    pub fn camera_to_world(&self, p: Vec3) -> Vec3 {
        self.orientation.mul_vec(p) + self.position
    }

    pub fn max_abs_diff(&self, o: &CameraPose) -> f64 {
        self.position
            .max_abs_diff(o.position)
            .max(self.orientation.max_abs_diff(&o.orientation))
    }
}

/// Moves the real camera into the simulator so that it sees the robot frame
/// the way the real camera sees the hand frame.
///
/// The full pose is mapped by `robot_t * hand_t^-1`; in particular the
/// position becomes `robot_t * hand_t^-1 * position`.
pub fn remap_camera(cam_real: &CameraPose, hand_t: &HomogeneousMatrix, robot_t: &HomogeneousMatrix) -> CameraPose {
    let map = robot_t.compose(&hand_t.inverse());
    CameraPose::from_transform(&map.compose(&cam_real.to_transform()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hand_with(p0: Vec3, p9: Vec3, p13: Vec3) -> HandKeypoints {
        let mut k = HandKeypoints::default();
        k.points_3d[0] = p0;
        k.points_3d[9] = p9;
        k.points_3d[13] = p13;
        k
    }

    fn close(a: Vec3, b: Vec3) -> bool {
        a.max_abs_diff(b) < 1e-12
    }

    #[test]
    fn hand_frame_axis_aligned() {
        let f = build_hand_frame(&hand_with(Vec3::ZERO, Vec3::X, Vec3::Y)).unwrap();
        assert!(close(f.x_axis, Vec3::X));
        assert!(close(f.y_axis, Vec3::Z));
        assert!(close(f.z_axis, Vec3::new(0.0, -1.0, 0.0)));
        assert!(close(f.origin, Vec3::ZERO));
    }

    #[test]
    fn hand_frame_ignores_lengths() {
        let a = build_hand_frame(&hand_with(Vec3::ZERO, Vec3::X, Vec3::Y)).unwrap();
        let b = build_hand_frame(&hand_with(Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn collinear_hand_is_degenerate() {
        let d = Vec3::new(1.0, 1.0, 1.0);
        let k = hand_with(Vec3::ZERO, d, d * 2.5);
        assert_eq!(build_hand_frame(&k), Err(GeometryError::DegenerateHand));
        // coincident wrist and MCP as well
        let k = hand_with(Vec3::ZERO, Vec3::ZERO, Vec3::Y);
        assert_eq!(build_hand_frame(&k), Err(GeometryError::DegenerateHand));
    }

    #[test]
    fn robot_frame_matches_hand_formula() {
        let r = build_robot_frame(Vec3::ZERO, Vec3::X, Vec3::Y).unwrap();
        let h = build_hand_frame(&hand_with(Vec3::ZERO, Vec3::X, Vec3::Y)).unwrap();
        assert_eq!(r, h);
        assert_eq!(
            build_robot_frame(Vec3::ZERO, Vec3::X, Vec3::X * 3.0),
            Err(GeometryError::DegenerateRobotPose)
        );
    }

    #[test]
    fn frame_packing() {
        assert_eq!(frame_to_transform(&CoordinateFrame::WORLD), HomogeneousMatrix::IDENTITY);
        let f = build_hand_frame(&hand_with(Vec3::ZERO, Vec3::X, Vec3::Y)).unwrap();
        let t = frame_to_transform(&f);
        assert!(close(t.rotation.column(0), Vec3::X));
        assert!(close(t.rotation.column(1), Vec3::Z));
        assert!(close(t.rotation.column(2), Vec3::new(0.0, -1.0, 0.0)));
        assert_eq!(t.translation, Vec3::ZERO);
        let shifted = CoordinateFrame { origin: Vec3::new(1.0, 2.0, 3.0), ..CoordinateFrame::WORLD };
        assert_eq!(frame_to_transform(&shifted).translation, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn remap_examples() {
        let cam = CameraPose::new(Vec3::new(0.0, 0.0, 2.0), RotationMatrix::IDENTITY);
        let t = HomogeneousMatrix::new(RotationMatrix::from_axis_angle(Vec3::Z, 0.3), Vec3::new(0.1, 0.2, 0.3));
        assert!(remap_camera(&cam, &t, &t).max_abs_diff(&cam) < 1e-12);

        let robot = HomogeneousMatrix::from_translation(Vec3::X);
        let out = remap_camera(&cam, &HomogeneousMatrix::IDENTITY, &robot);
        assert!(close(out.position, Vec3::new(1.0, 0.0, 2.0)));

        // inverse of a +90 deg turn about z sends (1,0,0) to (0,-1,0)
        let hand = HomogeneousMatrix::from_rotation(RotationMatrix::from_axis_angle(Vec3::Z, std::f64::consts::FRAC_PI_2));
        let cam = CameraPose::new(Vec3::X, RotationMatrix::IDENTITY);
        let out = remap_camera(&cam, &hand, &HomogeneousMatrix::IDENTITY);
        assert!(close(out.position, Vec3::new(0.0, -1.0, 0.0)));
    }

    #[test]
    fn compose_invert_basics() {
        let t = HomogeneousMatrix::new(RotationMatrix::from_rpy(0.1, 0.2, 0.3), Vec3::new(1.0, -1.0, 0.5));
        assert_eq!(compose(&HomogeneousMatrix::IDENTITY, &t), t);
        let tr = invert(&HomogeneousMatrix::from_translation(Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(tr.translation, Vec3::new(-1.0, -2.0, -3.0));
        assert_eq!(tr.rotation, RotationMatrix::IDENTITY);
    }

    #[test]
    fn rpy_quarter_turn_about_z() {
        let r = RotationMatrix::from_rpy(0.0, 0.0, 1.5707963);
        let expected = RotationMatrix::from_rows_unchecked([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(r.max_abs_diff(&expected) < 1e-6);
        let (roll, pitch, yaw) = RotationMatrix::from_rpy(0.3, -0.4, 2.0).to_rpy();
        assert!((roll - 0.3).abs() < 1e-12 && (pitch + 0.4).abs() < 1e-12 && (yaw - 2.0).abs() < 1e-12);
    }

    #[test]
    fn row_major_rejects_bad_bottom_row() {
        let mut v = HomogeneousMatrix::IDENTITY.to_row_major();
        assert!(HomogeneousMatrix::from_row_major(v).is_some());
        v[14] = 0.5;
        assert!(HomogeneousMatrix::from_row_major(v).is_none());
    }

    fn arb_transform() -> impl Strategy<Value = HomogeneousMatrix> {
        (
            prop::array::uniform3(-3.0f64..3.0),
            prop::array::uniform3(-10.0f64..10.0),
        )
            .prop_map(|(rpy, t)| {
                HomogeneousMatrix::new(RotationMatrix::from_rpy(rpy[0], rpy[1], rpy[2]), Vec3::from_array(t))
            })
    }

    proptest! {
        #[test]
        fn remap_round_trip(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let cam = CameraPose::from_transform(&c);
            let back = remap_camera(&remap_camera(&cam, &a, &b), &b, &a);
            prop_assert!(back.max_abs_diff(&cam) < 1e-9);
        }

        #[test]
        fn inverse_is_two_sided(t in arb_transform()) {
            prop_assert!(t.compose(&t.inverse()).max_abs_diff(&HomogeneousMatrix::IDENTITY) < 1e-9);
            prop_assert!(t.inverse().compose(&t).max_abs_diff(&HomogeneousMatrix::IDENTITY) < 1e-9);
        }

        #[test]
        fn scale_invariant_frame(
            p9 in prop::array::uniform3(-1.0f64..1.0),
            p13 in prop::array::uniform3(-1.0f64..1.0),
            s in 0.01f64..100.0,
        ) {
            let (p9, p13) = (Vec3::from_array(p9), Vec3::from_array(p13));
            let wrist = Vec3::new(0.3, -0.2, 0.5);
            if let Ok(a) = build_hand_frame(&hand_with(wrist, wrist + p9, wrist + p13)) {
                let b = build_hand_frame(&hand_with(wrist, wrist + p9 * s, wrist + p13 * s)).unwrap();
                prop_assert!(a.x_axis.max_abs_diff(b.x_axis) < 1e-9);
                prop_assert!(a.y_axis.max_abs_diff(b.y_axis) < 1e-9);
                prop_assert!(a.z_axis.max_abs_diff(b.z_axis) < 1e-9);
                prop_assert!(a.invariant_error() < 1e-9);
            }
        }
    }
}
