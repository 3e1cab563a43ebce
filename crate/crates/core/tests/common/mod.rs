//! Reference implementations written against plain arrays, independent of
//! the library's nalgebra code paths.
#![allow(dead_code)]

use asyncdepth::{CameraModel, RigidPose};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Mat4 = [[f64; 4]; 4];

pub fn quat_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|c| c / n);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

pub fn homogeneous(q: [f64; 4], t: [f64; 3]) -> Mat4 {
    let r = quat_matrix(q);
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&r[i]);
        m[i][3] = t[i];
    }
    m[3][3] = 1.0;
    m
}

pub fn pose_matrix(p: &RigidPose) -> Mat4 {
    let (q, t) = p.components();
    homogeneous(q, t)
}

/// Inverse of a rigid homogeneous matrix: `[Rᵀ | -Rᵀt]`.
pub fn rigid_inverse(m: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
        out[i][3] = -(0..3).map(|k| m[k][i] * m[k][3]).sum::<f64>();
    }
    out[3][3] = 1.0;
    out
}

pub fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn apply(m: &Mat4, p: [f64; 3]) -> [f64; 3] {
    let h = [p[0], p[1], p[2], 1.0];
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = (0..4).map(|k| m[i][k] * h[k]).sum();
    }
    out
}

/// Continuous image coordinates and depth of a global point, or `None`
/// when it sits at or behind the near plane.
pub fn oracle_image_coords(
    world_to_cam: &Mat4,
    cam: &CameraModel,
    z_near: f64,
    p: [f64; 3],
) -> Option<(f64, f64, f64)> {
    let q = apply(world_to_cam, p);
    if q[2] <= z_near {
        return None;
    }
    let k = cam.intrinsics();
    let x = k[(0, 0)] * q[0] + k[(0, 1)] * q[1] + k[(0, 2)] * q[2];
    let y = k[(1, 0)] * q[0] + k[(1, 1)] * q[1] + k[(1, 2)] * q[2];
    let z = k[(2, 0)] * q[0] + k[(2, 1)] * q[1] + k[(2, 2)] * q[2];
    Some((x / z, y / z, q[2]))
}

/// Pixel and depth of a global point, `None` when culled or off-image.
pub fn oracle_project(
    world_to_cam: &Mat4,
    cam: &CameraModel,
    z_near: f64,
    p: [f64; 3],
) -> Option<(u32, u32, f64)> {
    let (x, y, d) = oracle_image_coords(world_to_cam, cam, z_near, p)?;
    let (u, v) = (x.floor(), y.floor());
    if u < 0.0 || v < 0.0 || u >= cam.width() as f64 || v >= cam.height() as f64 {
        return None;
    }
    Some((u as u32, v as u32, d))
}

/// `T · G⁻¹` for ego pose `G` and ego→camera extrinsics `T`.
pub fn world_to_camera(ego: &RigidPose, cam: &CameraModel) -> Mat4 {
    matmul(
        &pose_matrix(cam.extrinsics()),
        &rigid_inverse(&pose_matrix(ego)),
    )
}

pub fn random_quaternion<R: Rng>(rng: &mut R) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        if q.iter().map(|c| c * c).sum::<f64>() > 1e-6 {
            return q;
        }
    }
}

pub fn random_pose<R: Rng>(rng: &mut R, reach: f64) -> RigidPose {
    let t = std::array::from_fn(|_| rng.random_range(-reach..reach));
    RigidPose::from_components(random_quaternion(rng), t).unwrap()
}

/// Depth map reference: every point that lands keeps the largest depth.
pub fn oracle_max_raster(
    world_to_cam: &Mat4,
    cam: &CameraModel,
    z_near: f64,
    max_depth: Option<f64>,
    points: &[[f64; 3]],
) -> Vec<f32> {
    let mut raster = vec![-1.0f32; (cam.width() * cam.height()) as usize];
    for p in points {
        if let Some((u, v, d)) = oracle_project(world_to_cam, cam, z_near, *p) {
            if max_depth.is_some_and(|m| d > m) {
                continue;
            }
            let i = (v * cam.width() + u) as usize;
            raster[i] = raster[i].max(d as f32);
        }
    }
    raster
}
