//! Rigid transforms, pinhole cameras and point projection.
//!
//! Poses map a local frame into a parent frame: `x_parent = R * x_local + t`.
//! Rotations are kept as unit quaternions and re-normalized after every
//! composition. Point application goes through the 3x3 rotation matrix.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Default near-plane distance in meters. Points at or in front of it are culled.
pub const DEFAULT_Z_NEAR: f64 = 1e-3;

const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// 6-DoF rigid transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds a pose from raw quaternion `(w, x, y, z)` and translation components.
    ///
    /// The quaternion is normalized; a zero or non-finite quaternion is rejected.
    pub fn from_components(q: [f64; 4], t: [f64; 3]) -> Result<Self> {
        if q.iter().chain(t.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidPose("non-finite component".into()));
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if norm < 1e-12 {
            return Err(Error::InvalidPose("zero quaternion".into()));
        }
        Ok(Self::new(
            UnitQuaternion::new_normalize(quat),
            Vector3::new(t[0], t[1], t[2]),
        ))
    }

    /// Rebuilds a pose from stored components without re-normalizing, so
    /// values that were written by [`RigidPose::components`] come back bit-exact.
    pub fn from_stored_components(q: [f64; 4], t: [f64; 3]) -> Result<Self> {
        if q.iter().chain(t.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidPose("non-finite component".into()));
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        if (quat.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "stored quaternion has norm {}",
                quat.norm()
            )));
        }
        Ok(Self::new(
            UnitQuaternion::new_unchecked(quat),
            Vector3::new(t[0], t[1], t[2]),
        ))
    }

    /// Builds a pose from a rotation about the z (up) axis plus a translation.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            translation,
        )
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Quaternion `(w, x, y, z)` and translation `(x, y, z)`.
    pub fn components(&self) -> ([f64; 4], [f64; 3]) {
        let q = self.rotation.quaternion();
        (
            [q.w, q.i, q.j, q.k],
            [self.translation.x, self.translation.y, self.translation.z],
        )
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// 4x4 homogeneous matrix.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        let q = self.rotation.into_inner() * other.rotation.into_inner();
        RigidPose {
            rotation: UnitQuaternion::new_normalize(q),
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let inv = self.rotation.inverse();
        RigidPose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Yaw of the local x axis in the parent frame, radians.
    pub fn yaw(&self) -> f64 {
        let x = self.rotation * Vector3::x();
        x.y.atan2(x.x)
    }
}

/// Optical camera axes (x right, y down, z forward) in a body frame with
/// x forward, y left, z up.
pub fn optical_to_body() -> RigidPose {
    #[rustfmt::skip]
    let r = Matrix3::new(
        0.0, 0.0, 1.0,
        -1.0, 0.0, 0.0,
        0.0, -1.0, 0.0,
    );
    RigidPose::new(
        UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r)),
        Vector3::zeros(),
    )
}

/// Ego→camera extrinsics for a level camera at `position` (ego frame) whose
/// optical axis points along ego heading rotated by `yaw` radians.
pub fn mounted_camera_extrinsics(yaw: f64, position: Vector3<f64>) -> RigidPose {
    RigidPose::from_yaw(yaw, position)
        .compose(&optical_to_body())
        .inverse()
}

/// Coordinate frame a point cloud is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    SensorLocal,
    Global,
    CameraLocal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn empty(frame: Frame) -> Self {
        Self::new(Vec::new(), frame)
    }

    /// Promotes f32 storage points.
    pub fn from_f32(points: &[[f32; 3]], frame: Frame) -> Self {
        Self::new(
            points
                .iter()
                .map(|p| Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64))
                .collect(),
            frame,
        )
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vector3<f64>> {
        self.points
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }

    pub(crate) fn expect_frame(&self, expected: Frame) -> Result<()> {
        if self.frame != expected {
            return Err(Error::FrameMismatch {
                expected,
                found: self.frame,
            });
        }
        Ok(())
    }

    /// Applies `pose` to every point and relabels the frame.
    pub fn transformed(&self, pose: &RigidPose, frame: Frame) -> PointCloud {
        let r = pose.rotation_matrix();
        let t = *pose.translation();
        PointCloud::new(self.points.iter().map(|p| r * p + t).collect(), frame)
    }
}

/// Pinhole camera: intrinsics plus the ego→camera extrinsic transform.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    intrinsics: Matrix3<f64>,
    extrinsics: RigidPose,
    width: u32,
    height: u32,
}

impl CameraModel {
    pub fn new(
        intrinsics: Matrix3<f64>,
        extrinsics: RigidPose,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        if intrinsics.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCamera("non-finite intrinsics".into()));
        }
        if intrinsics[(2, 2)] != 1.0 {
            return Err(Error::InvalidCamera("intrinsics[2][2] must be 1".into()));
        }
        if intrinsics[(0, 0)] <= 0.0 || intrinsics[(1, 1)] <= 0.0 {
            return Err(Error::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        let (cx, cy) = (intrinsics[(0, 2)], intrinsics[(1, 2)]);
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            intrinsics,
            extrinsics,
            width,
            height,
        })
    }

    pub fn pinhole(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        extrinsics: RigidPose,
    ) -> Result<Self> {
        #[rustfmt::skip]
        let k = Matrix3::new(
            fx, 0.0, cx,
            0.0, fy, cy,
            0.0, 0.0, 1.0,
        );
        Self::new(k, extrinsics, width, height)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &RigidPose {
        &self.extrinsics
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn fx(&self) -> f64 {
        self.intrinsics[(0, 0)]
    }

    pub fn fy(&self) -> f64 {
        self.intrinsics[(1, 1)]
    }

    pub fn cx(&self) -> f64 {
        self.intrinsics[(0, 2)]
    }

    pub fn cy(&self) -> f64 {
        self.intrinsics[(1, 2)]
    }
}

/// A point that landed inside the image. `u` is the column, `v` the row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: u32,
    pub v: u32,
    pub depth: f64,
}

/// Global→camera transform for one ego pose and camera, with the matrices
/// precomputed so the same arithmetic is shared by the transform and the
/// fused render path.
#[derive(Clone, Debug)]
pub struct CameraProjector {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    intrinsics: Matrix3<f64>,
    width: u32,
    height: u32,
    z_near: f64,
}

impl CameraProjector {
    pub fn new(ego: &RigidPose, cam: &CameraModel, z_near: f64) -> Self {
        let world_to_cam = cam.extrinsics.compose(&ego.inverse());
        Self::from_camera_local(&world_to_cam, cam, z_near)
    }

    /// Projector whose input frame is reached through `to_camera`.
    pub fn from_camera_local(to_camera: &RigidPose, cam: &CameraModel, z_near: f64) -> Self {
        Self {
            rotation: to_camera.rotation_matrix(),
            translation: *to_camera.translation(),
            intrinsics: cam.intrinsics,
            width: cam.width,
            height: cam.height,
            z_near,
        }
    }

    #[inline]
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Projects a camera-local point; `None` when culled or out of bounds.
    #[inline]
    pub fn project_camera_local(&self, q: &Vector3<f64>) -> Option<Projection> {
        let h = self.intrinsics * q;
        let depth = h.z;
        if !(depth > self.z_near) {
            return None;
        }
        let u = (h.x / depth).floor();
        let v = (h.y / depth).floor();
        if !(u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64) {
            return None;
        }
        Some(Projection {
            u: u as u32,
            v: v as u32,
            depth,
        })
    }

    #[inline]
    pub fn project_global(&self, p: &Vector3<f64>) -> Option<Projection> {
        self.project_camera_local(&self.to_camera(p))
    }

    pub fn z_near(&self) -> f64 {
        self.z_near
    }
}

/// Moves a global-frame cloud into the camera frame: `T * G⁻¹ * q`.
pub fn transform_to_camera(
    pc: &PointCloud,
    ego: &RigidPose,
    cam: &CameraModel,
) -> Result<PointCloud> {
    pc.expect_frame(Frame::Global)?;
    let projector = CameraProjector::new(ego, cam, DEFAULT_Z_NEAR);
    Ok(PointCloud::new(
        pc.points.iter().map(|p| projector.to_camera(p)).collect(),
        Frame::CameraLocal,
    ))
}

/// Perspective projection of a camera-local cloud. Returns the points that
/// landed in the image and the number that were dropped.
pub fn project_points(
    pc: &PointCloud,
    cam: &CameraModel,
    z_near: f64,
) -> Result<(Vec<Projection>, usize)> {
    pc.expect_frame(Frame::CameraLocal)?;
    let projector = CameraProjector::from_camera_local(&RigidPose::identity(), cam, z_near);
    let kept: Vec<Projection> = pc
        .points
        .iter()
        .filter_map(|q| projector.project_camera_local(q))
        .collect();
    let dropped = pc.len() - kept.len();
    Ok((kept, dropped))
}
