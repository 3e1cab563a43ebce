//! Synthetic multi-traversal worlds with closed-form geometry.
//!
//! A scene is an optional ground plane plus yaw-rotated boxes. Static boxes are
//! seen by every traversal; transient boxes belong to a single traversal. An
//! idealized ring LiDAR (uniform elevation rings × uniform azimuth) samples the
//! scene along a route polyline, and [`gt_depth`] ray-casts the static scene
//! through every pixel center to give the background depth a renderer should
//! reproduce.
//!
//! Scene files are key-value text, one entry per line, with repeatable keys:
//!
//! ```text
//! ground_z = 0
//! box = cx cy cz sx sy sz yaw_deg
//! transient = traversal cx cy cz sx sy sz yaw_deg
//! route = x y z
//! rings = 32
//! elevation_min = -25
//! elevation_max = 10
//! azimuth_step = 0.4
//! max_range = 80
//! range_noise = 0
//! sensor_height = 1.8
//! pose_jitter = 0.05
//! seed = 7
//! ```

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::descriptor::{parse_f64, KeyValues};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Frame, PointCloud, RigidPose};
use crate::render::{DepthMap, RenderConfig, SENTINEL};
use crate::store::FrameRecord;

/// Hits closer than this along a ray are ignored (self-intersection guard).
const RAY_EPSILON: f64 = 1e-9;

/// Box with full extents `size`, rotated by `yaw` (radians) about +z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneBox {
    pub center: Vector3<f64>,
    pub size: Vector3<f64>,
    pub yaw: f64,
}

impl SceneBox {
    pub fn new(center: Vector3<f64>, size: Vector3<f64>, yaw: f64) -> Self {
        Self { center, size, yaw }
    }

    pub fn axis_aligned(center: Vector3<f64>, size: Vector3<f64>) -> Self {
        Self::new(center, size, 0.0)
    }

    fn is_valid(&self) -> bool {
        self.size.iter().all(|s| *s > 0.0 && s.is_finite())
            && self.center.iter().all(|c| c.is_finite())
            && self.yaw.is_finite()
    }

    /// Smallest ray parameter `t > 0` where `origin + t·dir` meets the surface.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let (s, c) = self.yaw.sin_cos();
        // rotate into the box frame by -yaw
        let to_local = |v: &Vector3<f64>| Vector3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z);
        let o = to_local(&(origin - self.center));
        let d = to_local(dir);
        let half = self.size / 2.0;
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for axis in 0..3 {
            if d[axis] == 0.0 {
                if o[axis].abs() > half[axis] {
                    return None;
                }
                continue;
            }
            let t1 = (-half[axis] - o[axis]) / d[axis];
            let t2 = (half[axis] - o[axis]) / d[axis];
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            t_near = t_near.max(lo);
            t_far = t_far.min(hi);
            if t_near > t_far {
                return None;
            }
        }
        if t_near > RAY_EPSILON {
            Some(t_near)
        } else if t_far > RAY_EPSILON {
            Some(t_far)
        } else {
            None
        }
    }
}

/// Idealized spinning LiDAR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarModel {
    pub rings: u32,
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub azimuth_step: f64,
    pub max_range: f64,
    /// Std of Gaussian noise added along each ray, meters. Zero disables it.
    pub range_noise: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            rings: 32,
            elevation_min: -25.0,
            elevation_max: 10.0,
            azimuth_step: 0.4,
            max_range: 80.0,
            range_noise: 0.0,
        }
    }
}

impl LidarModel {
    /// Unit ray directions in the sensor frame, ring-major.
    pub fn directions(&self) -> Vec<Vector3<f64>> {
        let steps = (360.0 / self.azimuth_step).floor() as usize;
        let mut out = Vec::with_capacity(self.rings as usize * steps);
        for ring in 0..self.rings {
            let el = if self.rings > 1 {
                self.elevation_min
                    + (self.elevation_max - self.elevation_min) * ring as f64
                        / (self.rings - 1) as f64
            } else {
                self.elevation_min
            }
            .to_radians();
            for k in 0..steps {
                let az = (k as f64 * self.azimuth_step).to_radians();
                out.push(Vector3::new(
                    el.cos() * az.cos(),
                    el.cos() * az.sin(),
                    el.sin(),
                ));
            }
        }
        out
    }

    pub fn rays_per_sweep(&self) -> usize {
        self.rings as usize * (360.0 / self.azimuth_step).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub ground_z: Option<f64>,
    pub boxes: Vec<SceneBox>,
    /// `(traversal index, box)`
    pub transients: Vec<(usize, SceneBox)>,
    pub route: Vec<Vector3<f64>>,
    pub lidar: LidarModel,
    pub sensor_height: f64,
    /// Std of the horizontal jitter applied to each traversal's sensor positions, meters.
    pub pose_jitter: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            ground_z: None,
            boxes: Vec::new(),
            transients: Vec::new(),
            route: vec![Vector3::zeros(), Vector3::new(100.0, 0.0, 0.0)],
            lidar: LidarModel::default(),
            sensor_height: 1.8,
            pose_jitter: 0.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// A straight 200 m street lined with buildings and poles, plus parked and
    /// moving cars that differ from traversal to traversal.
    pub fn demo_street(n_traversals: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut boxes = Vec::new();
        let mut x = -20.0;
        while x < 220.0 {
            let len = rng.random_range(8.0..20.0);
            let height = rng.random_range(6.0..18.0);
            for side in [-1.0, 1.0] {
                let setback = rng.random_range(11.0..15.0);
                boxes.push(SceneBox::axis_aligned(
                    Vector3::new(x + len / 2.0, side * (setback + 4.0), height / 2.0),
                    Vector3::new(len - 1.0, 8.0, height),
                ));
            }
            x += len;
        }
        let mut px = 5.0;
        while px < 200.0 {
            for side in [-1.0, 1.0] {
                boxes.push(SceneBox::axis_aligned(
                    Vector3::new(px, side * 8.5, 3.0),
                    Vector3::new(0.3, 0.3, 6.0),
                ));
            }
            px += 25.0;
        }
        let mut transients = Vec::new();
        for t in 0..n_traversals {
            let cars = rng.random_range(3..7);
            for _ in 0..cars {
                let cx = rng.random_range(0.0..200.0);
                let lane = [-5.5, -1.75, 1.75, 5.5][rng.random_range(0..4)];
                transients.push((
                    t,
                    SceneBox::new(
                        Vector3::new(cx, lane, 0.8),
                        Vector3::new(4.5, 1.9, 1.6),
                        rng.random_range(-0.1..0.1),
                    ),
                ));
            }
        }
        Self {
            ground_z: Some(0.0),
            boxes,
            transients,
            route: vec![
                Vector3::new(0.0, -1.75, 0.0),
                Vector3::new(200.0, -1.75, 0.0),
            ],
            lidar: LidarModel::default(),
            sensor_height: 1.8,
            pose_jitter: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self
            .boxes
            .iter()
            .chain(self.transients.iter().map(|(_, b)| b))
            .find(|b| !b.is_valid())
        {
            return Err(Error::InvalidArgument(format!("degenerate box {b:?}")));
        }
        if self.route_length() <= 0.0 {
            return Err(Error::InvalidArgument("route length must be > 0".into()));
        }
        let l = &self.lidar;
        if l.rings == 0
            || !(l.azimuth_step > 0.0 && l.azimuth_step <= 360.0)
            || !(l.max_range > 0.0)
            || !(l.range_noise >= 0.0)
        {
            return Err(Error::InvalidArgument("invalid LiDAR model".into()));
        }
        if !(self.pose_jitter >= 0.0) {
            return Err(Error::InvalidArgument("pose jitter must be >= 0".into()));
        }
        Ok(())
    }

    pub fn route_length(&self) -> f64 {
        self.route.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Position and heading at arc length `s` along the route.
    pub fn route_point(&self, s: f64) -> (Vector3<f64>, f64) {
        let mut remaining = s.max(0.0);
        for w in self.route.windows(2) {
            let seg = w[1] - w[0];
            let len = seg.norm();
            if len == 0.0 {
                continue;
            }
            let heading = seg.y.atan2(seg.x);
            if remaining <= len {
                return (w[0] + seg * (remaining / len), heading);
            }
            remaining -= len;
        }
        let n = self.route.len();
        let seg = self.route[n - 1] - self.route[n.saturating_sub(2)];
        (self.route[n - 1], seg.y.atan2(seg.x))
    }

    /// Sensor pose at arc length `s` without jitter.
    pub fn sensor_pose_at(&self, s: f64) -> RigidPose {
        let (p, heading) = self.route_point(s);
        RigidPose::from_yaw(heading, p + Vector3::new(0.0, 0.0, self.sensor_height))
    }

    /// Nearest hit parameter along `origin + t·dir`, static surfaces plus the
    /// transients of `traversal` when given.
    pub fn cast_ray(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        traversal: Option<usize>,
    ) -> Option<f64> {
        let mut best: Option<f64> = None;
        let mut consider = |t: Option<f64>| {
            if let Some(t) = t {
                if best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        };
        if let Some(gz) = self.ground_z {
            if dir.z != 0.0 {
                let t = (gz - origin.z) / dir.z;
                if t > RAY_EPSILON {
                    consider(Some(t));
                }
            }
        }
        for b in &self.boxes {
            consider(b.intersect(origin, dir));
        }
        if let Some(n) = traversal {
            for (_, b) in self.transients.iter().filter(|(t, _)| *t == n) {
                consider(b.intersect(origin, dir));
            }
        }
        best
    }

    /// One LiDAR sweep from `pose`, returned in the sensor frame.
    pub fn raycast_sweep(
        &self,
        pose: &RigidPose,
        traversal: Option<usize>,
        noise_seed: u64,
    ) -> PointCloud {
        let r = pose.rotation_matrix();
        let origin = *pose.translation();
        let noise = (self.lidar.range_noise > 0.0)
            .then(|| Normal::new(0.0, self.lidar.range_noise).expect("finite std"));
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let mut points = Vec::new();
        for d in self.lidar.directions() {
            let world_dir = r * d;
            if let Some(range) = self.cast_ray(&origin, &world_dir, traversal) {
                if range <= self.lidar.max_range {
                    let range = match &noise {
                        Some(n) => range + n.sample(&mut rng),
                        None => range,
                    };
                    if range > 0.0 {
                        points.push(d * range);
                    }
                }
            }
        }
        PointCloud::new(points, Frame::SensorLocal)
    }

    /// Drives the route `n_traversals` times, taking a sweep every `spacing` meters.
    pub fn generate_traversals(
        &self,
        n_traversals: usize,
        spacing: f64,
    ) -> Result<Vec<Vec<FrameRecord>>> {
        self.validate()?;
        if !(spacing > 0.0) {
            return Err(Error::InvalidArgument("frame spacing must be > 0".into()));
        }
        let gen = |n: usize| self.generate_one(n, spacing);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            Ok((0..n_traversals).into_par_iter().map(gen).collect())
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok((0..n_traversals).map(gen).collect())
        }
    }

    fn generate_one(&self, n: usize, spacing: f64) -> Vec<FrameRecord> {
        let traversal_seed = self.seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(traversal_seed);
        let jitter = (self.pose_jitter > 0.0)
            .then(|| Normal::new(0.0, self.pose_jitter).expect("finite std"));
        let length = self.route_length();
        let count = (length / spacing).floor() as usize + 1;
        let mut frames = Vec::with_capacity(count);
        for k in 0..count {
            let s = k as f64 * spacing;
            let mut pose = self.sensor_pose_at(s);
            if let Some(j) = &jitter {
                let offset = Vector3::new(j.sample(&mut rng), j.sample(&mut rng), 0.0);
                pose = RigidPose::new(*pose.rotation(), pose.translation() + offset);
            }
            let cloud = self.raycast_sweep(&pose, Some(n), rng.random());
            if cloud.is_empty() {
                continue;
            }
            let points = cloud
                .points()
                .iter()
                .map(|p| [p.x as f32, p.y as f32, p.z as f32])
                .collect();
            let timestamp = 1000.0 * n as f64 + s / 10.0;
            frames.push(FrameRecord::new(k as u32, timestamp, pose, points));
        }
        frames
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let mut spec = SceneSpec {
            route: Vec::new(),
            ..SceneSpec::default()
        };
        for (key, value) in kv.entries() {
            let nums = || -> Result<Vec<f64>> {
                value
                    .split_whitespace()
                    .map(|t| parse_f64(key, t))
                    .collect()
            };
            let scalar = || parse_f64(key, value);
            match key.as_str() {
                "ground_z" => spec.ground_z = Some(scalar()?),
                "box" => spec.boxes.push(box_from(key, &nums()?, 0)?),
                "transient" => {
                    let v = nums()?;
                    if v.is_empty() || v[0] < 0.0 || v[0].fract() != 0.0 {
                        return Err(Error::format("scene", "transient needs a traversal index"));
                    }
                    spec.transients.push((v[0] as usize, box_from(key, &v, 1)?));
                }
                "route" => {
                    let v = nums()?;
                    if v.len() != 3 {
                        return Err(Error::format("scene", "route points need x y z"));
                    }
                    spec.route.push(Vector3::new(v[0], v[1], v[2]));
                }
                "rings" => spec.lidar.rings = scalar()? as u32,
                "elevation_min" => spec.lidar.elevation_min = scalar()?,
                "elevation_max" => spec.lidar.elevation_max = scalar()?,
                "azimuth_step" => spec.lidar.azimuth_step = scalar()?,
                "max_range" => spec.lidar.max_range = scalar()?,
                "range_noise" => spec.lidar.range_noise = scalar()?,
                "sensor_height" => spec.sensor_height = scalar()?,
                "pose_jitter" => spec.pose_jitter = scalar()?,
                "seed" => {
                    spec.seed = value
                        .parse()
                        .map_err(|_| Error::format("scene", format!("bad seed {value}")))?
                }
                other => return Err(Error::format("scene", format!("unknown key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(g) = self.ground_z {
            let _ = writeln!(out, "ground_z = {g:?}");
        }
        let fmt_box = |b: &SceneBox| {
            format!(
                "{:?} {:?} {:?} {:?} {:?} {:?} {:?}",
                b.center.x,
                b.center.y,
                b.center.z,
                b.size.x,
                b.size.y,
                b.size.z,
                b.yaw.to_degrees()
            )
        };
        for b in &self.boxes {
            let _ = writeln!(out, "box = {}", fmt_box(b));
        }
        for (t, b) in &self.transients {
            let _ = writeln!(out, "transient = {t} {}", fmt_box(b));
        }
        for p in &self.route {
            let _ = writeln!(out, "route = {:?} {:?} {:?}", p.x, p.y, p.z);
        }
        let l = &self.lidar;
        let _ = writeln!(out, "rings = {}", l.rings);
        let _ = writeln!(out, "elevation_min = {:?}", l.elevation_min);
        let _ = writeln!(out, "elevation_max = {:?}", l.elevation_max);
        let _ = writeln!(out, "azimuth_step = {:?}", l.azimuth_step);
        let _ = writeln!(out, "max_range = {:?}", l.max_range);
        let _ = writeln!(out, "range_noise = {:?}", l.range_noise);
        let _ = writeln!(out, "sensor_height = {:?}", self.sensor_height);
        let _ = writeln!(out, "pose_jitter = {:?}", self.pose_jitter);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }

    /// The scene with all transient boxes removed.
    pub fn static_only(&self) -> SceneSpec {
        SceneSpec {
            transients: Vec::new(),
            ..self.clone()
        }
    }
}

fn box_from(key: &str, v: &[f64], start: usize) -> Result<SceneBox> {
    if v.len() != start + 7 {
        return Err(Error::format(
            "scene",
            format!("`{key}` needs cx cy cz sx sy sz yaw_deg"),
        ));
    }
    let v = &v[start..];
    Ok(SceneBox::new(
        Vector3::new(v[0], v[1], v[2]),
        Vector3::new(v[3], v[4], v[5]),
        v[6].to_radians(),
    ))
}

/// Background depth seen through each pixel center of `cam` at `ego`,
/// ignoring transients. Pixels with no surface, or a surface beyond the
/// renderer's depth clip, are `SENTINEL`.
pub fn gt_depth(
    scene: &SceneSpec,
    ego: &RigidPose,
    cam: &CameraModel,
    cfg: &RenderConfig,
) -> DepthMap {
    let cam_to_world = ego.compose(&cam.extrinsics().inverse());
    let r = cam_to_world.rotation_matrix();
    let origin = *cam_to_world.translation();
    let k_inv = cam
        .intrinsics()
        .try_inverse()
        .expect("validated intrinsics are invertible");
    let mut map = DepthMap::empty(cam.width(), cam.height());
    for v in 0..cam.height() {
        for u in 0..cam.width() {
            // third component is 1, so the ray parameter is the camera depth
            let d_cam = k_inv * Vector3::new(u as f64 + 0.5, v as f64 + 0.5, 1.0);
            let d_cam = d_cam / d_cam.z;
            let dir = r * d_cam;
            let value = match scene.cast_ray(&origin, &dir, None) {
                Some(z) if z > cfg.z_near && cfg.max_depth.is_none_or(|m| z <= m) => z as f32,
                _ => SENTINEL,
            };
            map.set(u, v, value);
        }
    }
    map
}
