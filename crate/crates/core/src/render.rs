//! Densification of past frames and z-buffered depth rasterization.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{
    CameraModel, CameraProjector, Frame, PointCloud, Projection, RigidPose, DEFAULT_Z_NEAR,
};
use crate::store::{FrameRecord, QueryConfig, TraversalMatch, TraversalStore};

/// Value of pixels that received no point.
pub const SENTINEL: f32 = -1.0;
pub const DEFAULT_MAX_DEPTH: f64 = 60.0;
pub const DEPTH_MAGIC: &[u8; 4] = b"ADDM";

/// Union of a traversal's selected frames, in the global frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DensifiedCloud {
    pub traversal_id: u64,
    pub cloud: PointCloud,
    pub source_frames: Vec<u32>,
}

impl DensifiedCloud {
    pub fn new(traversal_id: u64, cloud: PointCloud, source_frames: Vec<u32>) -> Result<Self> {
        cloud.expect_frame(Frame::Global)?;
        Ok(Self {
            traversal_id,
            cloud,
            source_frames,
        })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Moves each frame into the global frame with its own pose and concatenates them in order.
pub fn densify(frames: &[&FrameRecord]) -> Result<DensifiedCloud> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("no frames to densify".into()))?;
    if let Some(other) = frames.iter().find(|f| f.traversal_id != first.traversal_id) {
        return Err(Error::MixedTraversals {
            first: first.traversal_id,
            other: other.traversal_id,
        });
    }
    let total = frames.iter().map(|f| f.points.len()).sum();
    let mut points = Vec::with_capacity(total);
    for f in frames {
        let r: Matrix3<f64> = f.pose.rotation_matrix();
        let t = *f.pose.translation();
        points.extend(
            f.points
                .iter()
                .map(|p| r * Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) + t),
        );
    }
    Ok(DensifiedCloud {
        traversal_id: first.traversal_id,
        cloud: PointCloud::new(points, Frame::Global),
        source_frames: frames.iter().map(|f| f.frame_index).collect(),
    })
}

/// How multiple depths landing on one pixel are reduced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DepthRule {
    /// Farthest return wins.
    Max,
    /// Nearest-rank percentile in `[0, 100]`; 100 equals `Max`.
    Percentile(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderConfig {
    pub z_near: f64,
    /// Points with camera depth above this are discarded; `None` disables the clip.
    pub max_depth: Option<f64>,
    pub rule: DepthRule,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            z_near: DEFAULT_Z_NEAR,
            max_depth: Some(DEFAULT_MAX_DEPTH),
            rule: DepthRule::Max,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_near > 0.0) {
            return Err(Error::InvalidArgument("z_near must be > 0".into()));
        }
        if let Some(m) = self.max_depth {
            if !(m > self.z_near) {
                return Err(Error::InvalidArgument(
                    "max depth must exceed z_near".into(),
                ));
            }
        }
        if let DepthRule::Percentile(p) = self.rule {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::InvalidArgument(
                    "percentile must be in [0, 100]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Row-major `height × width` raster of camera depths in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
    pub camera_id: usize,
    pub traversal_id: u64,
}

impl DepthMap {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![SENTINEL; width as usize * height as usize],
            camera_id: 0,
            traversal_id: 0,
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} raster",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            camera_id: 0,
            traversal_id: 0,
        })
    }

    pub fn with_ids(mut self, traversal_id: u64, camera_id: usize) -> Self {
        self.traversal_id = traversal_id;
        self.camera_id = camera_id;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Depth at column `u`, row `v`.
    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, value: f32) {
        self.data[v as usize * self.width as usize + u as usize] = value;
    }

    pub fn covered_pixels(&self) -> usize {
        self.data.iter().filter(|&&d| d != SENTINEL).count()
    }

    /// Pixelwise max; `SENTINEL` is the identity.
    pub fn pixelwise_max(&self, other: &DepthMap) -> Result<DepthMap> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::ShapeMismatch("depth maps differ in size".into()));
        }
        let mut out = self.clone();
        max_into(&mut out.data, &other.data);
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DEPTH_MAGIC)?;
        w.write_all(&self.width.to_le_bytes())?;
        w.write_all(&self.height.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for d in &self.data {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 12];
        r.read_exact(&mut head)?;
        if &head[..4] != DEPTH_MAGIC {
            return Err(Error::format("depth map", "bad magic"));
        }
        let width = u32::from_le_bytes(head[4..8].try_into().unwrap());
        let height = u32::from_le_bytes(head[8..12].try_into().unwrap());
        let n = width as u64 * height as u64;
        let mut raw = Vec::new();
        r.take(n * 4).read_to_end(&mut raw)?;
        if raw.len() as u64 != n * 4 {
            return Err(Error::format("depth map", "truncated raster"));
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_data(width, height, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|source| Error::FileIo {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_to(BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|source| Error::FileIo {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_from(BufReader::new(f))
    }

    /// 16-bit binary PGM in millimeters; sentinel pixels become 0. For viewing only.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.data.len() * 2);
        for &d in &self.data {
            let mm = if d == SENTINEL {
                0
            } else {
                (d as f64 * 1000.0).round().clamp(1.0, 65535.0) as u16
            };
            buf.extend_from_slice(&mm.to_be_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }
}

fn max_into(acc: &mut [f32], other: &[f32]) {
    for (a, &b) in acc.iter_mut().zip(other) {
        if b > *a {
            *a = b;
        }
    }
}

fn accept(p: &Projection, cfg: &RenderConfig) -> Option<f32> {
    if let Some(m) = cfg.max_depth {
        if p.depth > m {
            return None;
        }
    }
    let d = p.depth as f32;
    // f32 rounding must not pull the stored value down to the near plane.
    if !(d as f64 > cfg.z_near) {
        return None;
    }
    Some(d)
}

fn rasterize_max(
    points: &[Vector3<f64>],
    projector: &CameraProjector,
    cfg: &RenderConfig,
    raster: &mut [f32],
    width: usize,
) {
    for q in points {
        if let Some(p) = projector.project_global(q) {
            if let Some(d) = accept(&p, cfg) {
                let i = p.v as usize * width + p.u as usize;
                if d > raster[i] {
                    raster[i] = d;
                }
            }
        }
    }
}

/// Projects a global cloud through the current ego pose and camera.
/// Each pixel keeps the depth chosen by `cfg.rule` or `SENTINEL`.
pub fn render_depth(
    cloud: &DensifiedCloud,
    ego: &RigidPose,
    cam: &CameraModel,
    cfg: &RenderConfig,
) -> Result<DepthMap> {
    cfg.validate()?;
    let projector = CameraProjector::new(ego, cam, cfg.z_near);
    let width = cam.width() as usize;
    let mut map = DepthMap::empty(cam.width(), cam.height());
    map.traversal_id = cloud.traversal_id;
    let points = cloud.cloud.points();

    match cfg.rule {
        DepthRule::Max => {
            rasterize_max(points, &projector, cfg, &mut map.data, width);
        }
        DepthRule::Percentile(pct) => {
            let mut hits: Vec<(usize, f32)> = points
                .iter()
                .filter_map(|q| projector.project_global(q))
                .filter_map(|p| accept(&p, cfg).map(|d| (p.v as usize * width + p.u as usize, d)))
                .collect();
            hits.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            for group in hits.chunk_by(|a, b| a.0 == b.0) {
                let n = group.len();
                let rank = ((pct / 100.0) * n as f64).ceil() as usize;
                map.data[group[0].0] = group[rank.clamp(1, n) - 1].1;
            }
        }
    }
    Ok(map)
}

/// Depth maps for every matched traversal and camera.
#[derive(Clone, Debug, Default)]
pub struct RenderOutput {
    pub matches: Vec<TraversalMatch>,
    /// Ordered by traversal id, then camera index.
    pub maps: Vec<DepthMap>,
    pub points_rendered: usize,
    pub warnings: Vec<String>,
}

impl RenderOutput {
    pub fn get(&self, traversal_id: u64, camera_id: usize) -> Option<&DepthMap> {
        self.maps
            .iter()
            .find(|m| m.traversal_id == traversal_id && m.camera_id == camera_id)
    }

    /// Maps of one camera across traversals.
    pub fn for_camera(&self, camera_id: usize) -> impl Iterator<Item = &DepthMap> {
        self.maps.iter().filter(move |m| m.camera_id == camera_id)
    }
}

/// Queries the store around the ego position, densifies each matched
/// traversal and renders one map per (traversal, camera).
pub fn render_all(
    ego: &RigidPose,
    cams: &[CameraModel],
    query: &QueryConfig,
    store: &TraversalStore,
    cfg: &RenderConfig,
) -> Result<RenderOutput> {
    cfg.validate()?;
    let mut out = RenderOutput::default();
    if store.is_empty() {
        out.warnings.push("store is empty".into());
        return Ok(out);
    }
    let matches = store.query_frames(ego.translation(), query)?;
    if matches.is_empty() {
        out.warnings
            .push("no past traversal within the search radius".into());
    }
    let clouds = matches
        .iter()
        .map(|m| densify(&store.matched_frames(m)))
        .collect::<Result<Vec<_>>>()?;
    out.points_rendered = clouds.iter().map(|c| c.len()).sum::<usize>() * cams.len();

    let jobs: Vec<(usize, usize)> = (0..clouds.len())
        .flat_map(|n| (0..cams.len()).map(move |i| (n, i)))
        .collect();
    let render_one = |&(n, i): &(usize, usize)| {
        render_depth(&clouds[n], ego, &cams[i], cfg).map(|m| m.with_ids(clouds[n].traversal_id, i))
    };
    #[cfg(feature = "parallel")]
    let maps = {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(render_one)
            .collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let maps = jobs.iter().map(render_one).collect::<Result<Vec<_>>>()?;

    out.maps = maps;
    out.matches = matches;
    Ok(out)
}
