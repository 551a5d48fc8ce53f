//! Conversion from the source convention (left-handed, Z up, cameras facing +Y,
//! XYZ Euler angles) into the renderer convention (right-handed, Y up, cameras
//! facing +Z, rotation matrices).
//!
//! Positions are mapped with the Y/Z swap `P`; rotations are conjugated,
//! `R_renderer = P · R_source · P`. Conversion always goes through the full
//! rotation matrix, so pitch = ±90 needs no special casing.
//!
//! Mesh vertices are authored in the renderer's local convention (Y up), so a
//! local vertex `v` of an object with source pose `(p, R)` sits at
//! `p + R · P · v` in the source frame.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{self, Mat3, Vec3};
use crate::scene_model::{ActorKind, Euler, FrameConvention, Handedness, Pose, SignedAxis, Axis};

pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;
pub const GIMBAL_TOLERANCE_DEG: f64 = 1e-6;
pub const DEFAULT_UNIT_SCALE: f64 = 100.0;

/// Swaps the Y and Z components. Involutive, determinant −1.
pub const AXIS_SWAP: Mat3 = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("unit scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("unsupported source convention: {0}")]
    UnsupportedConvention(String),
    #[error("matrix is not a proper rotation (orthonormality error {orthonormality:e}, det {det})")]
    NotARotation { orthonormality: f64, det: f64 },
    #[error("homogeneous bottom row must be (0, 0, 0, 1)")]
    BadBottomRow,
}

/// Orthonormal 3×3 matrix with determinant +1 (row-major).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix(math::IDENTITY3);

    pub fn new(m: Mat3) -> Result<Self, TransformError> {
        let orthonormality = orthonormality_error(&m);
        let det = math::det(&m);
        if orthonormality < ORTHONORMAL_TOLERANCE && (det - 1.0).abs() < ORTHONORMAL_TOLERANCE {
            Ok(RotationMatrix(m))
        } else {
            Err(TransformError::NotARotation { orthonormality, det })
        }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        math::mat_vec(&self.0, v)
    }

    pub fn transpose(&self) -> RotationMatrix {
        RotationMatrix(math::transpose(&self.0))
    }

    pub fn compose(&self, other: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(math::mat_mul(&self.0, &other.0))
    }
}

/// ‖RᵀR − I‖_F
pub fn orthonormality_error(m: &Mat3) -> f64 {
    math::frobenius_distance(&math::mat_mul(&math::transpose(m), m), &math::IDENTITY3)
}

/// Rigid 4×4 transform: rotation then translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldMatrix {
    pub rotation: RotationMatrix,
    pub translation: Vec3,
}

impl WorldMatrix {
    pub const IDENTITY: WorldMatrix = WorldMatrix {
        rotation: RotationMatrix::IDENTITY,
        translation: [0.0; 3],
    };

    pub fn rows(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.matrix();
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_rows(rows: &[[f64; 4]; 4]) -> Result<Self, TransformError> {
        if rows[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(TransformError::BadBottomRow);
        }
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row.copy_from_slice(&rows[i][..3]);
        }
        Ok(WorldMatrix {
            rotation: RotationMatrix::new(m)?,
            translation: [rows[0][3], rows[1][3], rows[2][3]],
        })
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        math::add(self.rotation.apply(p), self.translation)
    }

    pub fn transform_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.apply(v)
    }

    /// Maps a world point into this transform's local frame.
    pub fn inverse_transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.transpose().apply(math::sub(p, self.translation))
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90.
fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == quarter.round() {
        match (quarter.round() as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

/// `R = R_z(yaw) · R_y(pitch) · R_x(roll)`.
pub fn euler_to_matrix(rotation: &Euler) -> RotationMatrix {
    let (sr, cr) = sin_cos_deg(rotation.roll);
    let (sp, cp) = sin_cos_deg(rotation.pitch);
    let (sy, cy) = sin_cos_deg(rotation.yaw);
    let rx = [[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]];
    let ry = [[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]];
    let rz = [[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]];
    RotationMatrix(math::mat_mul(&rz, &math::mat_mul(&ry, &rx)))
}

pub fn axis_swap(v: Vec3) -> Vec3 {
    [v[0], v[2], v[1]]
}

/// Source-to-renderer conversion built by rotating 90 degrees about X, then
/// 90 degrees about Y, then negating Y: `N_y · R_y(90) · R_x(90)`.
///
/// It maps source up to renderer +Y like [`AXIS_SWAP`] and differs from it only
/// by a rotation of the world about that axis.
pub fn rotation_route_conversion() -> Mat3 {
    let rx = [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]];
    let ry = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]];
    let ny = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]];
    math::mat_mul(&ny, &math::mat_mul(&ry, &rx))
}

/// Renderer camera-local coordinates of a source-frame point under any
/// improper orthogonal world conversion `k` (default source convention).
///
/// Rotations are conjugated by `k` and the camera basis is rebuilt from the
/// converted up and forward axes, so the result depends on `k` only through
/// rounding.
pub fn camera_local_via(k: &Mat3, camera: &Pose, point: Vec3, unit_scale: f64) -> Vec3 {
    let kt = math::transpose(k);
    let r = math::mat_mul(k, &math::mat_mul(euler_to_matrix(&camera.rotation).matrix(), &kt));
    let up = math::mat_vec(k, [0.0, 0.0, 1.0]);
    let forward = math::mat_vec(k, [0.0, 1.0, 0.0]);
    let basis = math::from_columns(math::cross(up, forward), up, forward);
    let m = math::mat_mul(&r, &basis);
    let d = math::scale(math::mat_vec(k, math::sub(point, camera.position)), unit_scale);
    math::mat_vec(&math::transpose(&m), d)
}

/// A frame whose pitch sits on ±90 degrees, where yaw and roll act about the same axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GimbalLock {
    pub actor: String,
    pub frame: u32,
    pub pitch: f64,
}

impl fmt::Display for GimbalLock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gimbal lock: actor `{}` at frame {} has pitch {} degrees",
            self.actor, self.frame, self.pitch
        )
    }
}

pub fn is_gimbal_locked(pose: &Pose) -> bool {
    (pose.rotation.pitch.abs() - 90.0).abs() <= GIMBAL_TOLERANCE_DEG
}

pub fn detect_gimbal_lock(actor: &str, frame: u32, pose: &Pose) -> Option<GimbalLock> {
    is_gimbal_locked(pose).then(|| GimbalLock {
        actor: actor.to_string(),
        frame,
        pitch: pose.rotation.pitch,
    })
}

/// Converter bound to a particular source convention.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFrame {
    convention: FrameConvention,
    /// Source-frame camera axes.
    forward: Vec3,
    up: Vec3,
    /// Renderer camera-local axes to renderer-frame camera axes.
    camera_basis: Mat3,
}

impl Default for SourceFrame {
    fn default() -> Self {
        SourceFrame::new(&FrameConvention::default()).expect("default convention is supported")
    }
}

impl SourceFrame {
    pub fn new(convention: &FrameConvention) -> Result<Self, TransformError> {
        if convention.handedness != Handedness::Left {
            return Err(TransformError::UnsupportedConvention(
                "only left-handed source frames are supported".into(),
            ));
        }
        if convention.up != SignedAxis::positive(Axis::Z) {
            return Err(TransformError::UnsupportedConvention(format!(
                "up axis must be +z, got {}",
                convention.up
            )));
        }
        let forward = convention.camera_forward.unit();
        let up = convention.up.unit();
        if math::dot(forward, up) != 0.0 {
            return Err(TransformError::UnsupportedConvention(format!(
                "camera forward {} is not perpendicular to up {}",
                convention.camera_forward, convention.up
            )));
        }
        let fwd_r = axis_swap(forward);
        let up_r = axis_swap(up);
        // renderer camera-local +X points to the image left
        let camera_basis = math::from_columns(math::cross(up_r, fwd_r), up_r, fwd_r);
        Ok(SourceFrame {
            convention: convention.clone(),
            forward,
            up,
            camera_basis,
        })
    }

    pub fn convention(&self) -> &FrameConvention {
        &self.convention
    }

    /// Fixed correction applied to camera rotations (identity for the default convention).
    pub fn camera_basis(&self) -> &Mat3 {
        &self.camera_basis
    }

    pub fn convert_rotation(&self, rotation: &Euler) -> RotationMatrix {
        let r = euler_to_matrix(rotation);
        RotationMatrix(math::mat_mul(&AXIS_SWAP, &math::mat_mul(r.matrix(), &AXIS_SWAP)))
    }

    pub fn convert_pose(
        &self,
        pose: &Pose,
        unit_scale: f64,
        kind: ActorKind,
    ) -> Result<WorldMatrix, TransformError> {
        if !(unit_scale.is_finite() && unit_scale > 0.0) {
            return Err(TransformError::InvalidScale(unit_scale));
        }
        let mut rotation = self.convert_rotation(&pose.rotation);
        if kind == ActorKind::Camera {
            rotation = RotationMatrix(math::mat_mul(rotation.matrix(), &self.camera_basis));
        }
        Ok(WorldMatrix {
            rotation,
            translation: math::scale(axis_swap(pose.position), unit_scale),
        })
    }

    /// Camera-to-world matrix: camera-local +Z forward, +Y up, +X image-left.
    pub fn camera_to_world(&self, pose: &Pose, unit_scale: f64) -> Result<WorldMatrix, TransformError> {
        self.convert_pose(pose, unit_scale, ActorKind::Camera)
    }

    /// Renderer-frame unit vector pointing from the scene toward a light with this pose.
    pub fn light_direction(&self, pose: &Pose) -> Vec3 {
        let forward = euler_to_matrix(&pose.rotation).apply(self.forward);
        math::scale(axis_swap(forward), -1.0)
    }

    /// Source-frame position of a mesh-local vertex.
    pub fn object_point(&self, object: &Pose, local: Vec3) -> Vec3 {
        math::add(object.position, euler_to_matrix(&object.rotation).apply(axis_swap(local)))
    }

    /// Source-frame camera axes `(right, up, forward)`.
    pub fn camera_axes(&self, camera: &Pose) -> (Vec3, Vec3, Vec3) {
        let r = euler_to_matrix(&camera.rotation);
        // left-handed: right = up × forward
        let right = math::cross(self.up, self.forward);
        (r.apply(right), r.apply(self.up), r.apply(self.forward))
    }

    /// Pinhole projection computed directly in the source frame.
    ///
    /// Returns continuous pixel coordinates (x right, y down, pixel `i` spans
    /// `[i, i+1)`), or `None` when the point is not in front of the camera.
    pub fn project(
        &self,
        camera: &Pose,
        fov_deg: f64,
        resolution: (u32, u32),
        point: Vec3,
    ) -> Option<[f64; 2]> {
        let (right, up, forward) = self.camera_axes(camera);
        let d = math::sub(point, camera.position);
        let depth = math::dot(d, forward);
        if depth <= 0.0 {
            return None;
        }
        let (w, h) = (f64::from(resolution.0), f64::from(resolution.1));
        let focal = 0.5 * w / (0.5 * fov_deg).to_radians().tan();
        Some([
            0.5 * w + focal * math::dot(d, right) / depth,
            0.5 * h - focal * math::dot(d, up) / depth,
        ])
    }
}

/// [`SourceFrame::convert_pose`] for the default convention.
pub fn convert_pose(pose: &Pose, unit_scale: f64, kind: ActorKind) -> Result<WorldMatrix, TransformError> {
    SourceFrame::default().convert_pose(pose, unit_scale, kind)
}

/// [`SourceFrame::camera_to_world`] for the default convention.
pub fn camera_to_world(pose: &Pose, unit_scale: f64) -> Result<WorldMatrix, TransformError> {
    SourceFrame::default().camera_to_world(pose, unit_scale)
}
