//! Geo-indexed store of past LiDAR traversals.
//!
//! On-disk layout (little-endian throughout):
//!
//! ```text
//! "ADST" | version u32 | traversal-count u32
//! per traversal: id u64 | frame-count u32
//!   per frame:   timestamp f64 | qw qx qy qz f64 | tx ty tz f64 | k u32 | k × (x y z f32)
//! ```
//!
//! The spatial index is rebuilt when a store is opened. Frame indices are the
//! ordinal position of each frame within its traversal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud, RigidPose};

pub const STORE_MAGIC: &[u8; 4] = b"ADST";
pub const STORE_VERSION: u32 = 1;
/// magic + version + traversal count
pub const FILE_HEADER_BYTES: u64 = 12;
/// id + frame count
pub const TRAVERSAL_HEADER_BYTES: u64 = 12;
/// timestamp + 7 pose components + point count
pub const FRAME_HEADER_BYTES: u64 = 8 + 7 * 8 + 4;
pub const POINT_BYTES: u64 = 12;

pub const DEFAULT_CELL_SIZE: f64 = 25.0;
pub const DEFAULT_SEARCH_RADIUS: f64 = 10.0;
pub const DEFAULT_FRAME_SPACING: f64 = 5.0;
pub const DEFAULT_MAX_TRAVERSALS: usize = 5;

/// One LiDAR sweep of a past traversal.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub traversal_id: u64,
    pub frame_index: u32,
    pub timestamp: f64,
    /// sensor → global
    pub pose: RigidPose,
    /// Sensor-local points.
    pub points: Vec<[f32; 3]>,
}

impl FrameRecord {
    pub fn new(frame_index: u32, timestamp: f64, pose: RigidPose, points: Vec<[f32; 3]>) -> Self {
        Self {
            traversal_id: 0,
            frame_index,
            timestamp,
            pose,
            points,
        }
    }

    pub fn ego_position(&self) -> Vector3<f64> {
        *self.pose.translation()
    }

    pub fn cloud(&self) -> PointCloud {
        PointCloud::from_f32(&self.points, Frame::SensorLocal)
    }

    fn encoded_len(&self) -> u64 {
        FRAME_HEADER_BYTES + POINT_BYTES * self.points.len() as u64
    }
}

/// Exact on-disk size of a store holding traversals with the given per-frame point counts.
pub fn store_size_formula<'a>(traversals: impl IntoIterator<Item = &'a [usize]>) -> u64 {
    FILE_HEADER_BYTES
        + traversals
            .into_iter()
            .map(|frames| {
                TRAVERSAL_HEADER_BYTES
                    + frames
                        .iter()
                        .map(|&k| FRAME_HEADER_BYTES + POINT_BYTES * k as u64)
                        .sum::<u64>()
            })
            .sum::<u64>()
}

#[derive(Clone, Debug)]
pub struct QueryConfig {
    pub max_traversals: usize,
    /// Along-road offsets in meters; positive is the direction of travel.
    pub offsets: Vec<f64>,
    pub search_radius: f64,
    /// When set, traversals with any frame at or after this timestamp are skipped.
    pub exclude_after: Option<f64>,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self::surround()
    }
}

impl QueryConfig {
    pub fn new(max_traversals: usize, offsets: Vec<f64>, search_radius: f64) -> Result<Self> {
        let cfg = Self {
            max_traversals,
            offsets,
            search_radius,
            exclude_after: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 360° setting: frames nearest to {0, -20, 20} m, up to 5 traversals.
    pub fn surround() -> Self {
        Self {
            max_traversals: DEFAULT_MAX_TRAVERSALS,
            offsets: vec![0.0, -20.0, 20.0],
            search_radius: DEFAULT_SEARCH_RADIUS,
            exclude_after: None,
        }
    }

    /// Front-facing setting: frames nearest to {0, 10, 20} m, up to 5 traversals.
    pub fn frontal() -> Self {
        Self {
            offsets: vec![0.0, 10.0, 20.0],
            ..Self::surround()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_traversals == 0 {
            return Err(Error::InvalidArgument("max traversals must be >= 1".into()));
        }
        if self.offsets.is_empty() || self.offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument(
                "offsets must be a non-empty list of finite values".into(),
            ));
        }
        if !(self.search_radius > 0.0) || !self.search_radius.is_finite() {
            return Err(Error::InvalidArgument("search radius must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IngestOptions {
    /// Drop frames closer than half this spacing to the previously kept frame.
    pub thin_spacing: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramePick {
    pub offset: f64,
    pub frame_index: u32,
    /// Arc position of the frame relative to the closest-approach point.
    pub arc_offset: f64,
}

/// Frames chosen from one traversal for a query location.
#[derive(Clone, Debug, PartialEq)]
pub struct TraversalMatch {
    pub traversal_id: u64,
    pub closest_distance: f64,
    /// Arc length from the traversal start to the closest-approach point.
    pub anchor_arc: f64,
    /// One pick per requested offset, in offset order.
    pub picks: Vec<FramePick>,
}

impl TraversalMatch {
    /// Distinct picked frame indices in ascending order.
    pub fn frame_indices(&self) -> Vec<u32> {
        self.picks
            .iter()
            .map(|p| p.frame_index)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Clone, Debug)]
struct Polyline {
    positions: Vec<Vector3<f64>>,
    /// Cumulative arc length at each vertex.
    arc: Vec<f64>,
}

impl Polyline {
    fn new(positions: Vec<Vector3<f64>>) -> Self {
        let mut arc = Vec::with_capacity(positions.len());
        let mut total = 0.0;
        for (i, p) in positions.iter().enumerate() {
            if i > 0 {
                total += (p - positions[i - 1]).norm();
            }
            arc.push(total);
        }
        Self { positions, arc }
    }

    fn max_segment(&self) -> f64 {
        self.arc.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// (distance, arc position) of the closest point to `p`; first segment wins ties.
    fn closest_approach(&self, p: &Vector3<f64>) -> (f64, f64) {
        if self.positions.len() == 1 {
            return ((self.positions[0] - p).norm(), 0.0);
        }
        let mut best = (f64::INFINITY, 0.0);
        for (i, seg) in self.positions.windows(2).enumerate() {
            let d = seg[1] - seg[0];
            let len2 = d.norm_squared();
            let t = if len2 > 0.0 {
                ((p - seg[0]).dot(&d) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let dist = (seg[0] + d * t - p).norm();
            if dist < best.0 {
                best = (dist, self.arc[i] + t * (self.arc[i + 1] - self.arc[i]));
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameRef {
    pub traversal_id: u64,
    pub ordinal: usize,
}

/// Uniform xy grid over frame ego positions plus per-traversal polylines.
#[derive(Clone, Debug)]
pub struct StoreIndex {
    cell_size: f64,
    cells: HashMap<(i64, i64), Vec<FrameRef>>,
    polylines: BTreeMap<u64, Polyline>,
    max_segment: f64,
}

impl StoreIndex {
    fn new(cell_size: f64) -> Self {
        Self {
            cell_size,
            cells: HashMap::new(),
            polylines: BTreeMap::new(),
            max_segment: 0.0,
        }
    }

    fn cell_of(&self, p: &Vector3<f64>) -> (i64, i64) {
        (
            (p.x / self.cell_size).floor() as i64,
            (p.y / self.cell_size).floor() as i64,
        )
    }

    fn insert(&mut self, traversal: &Traversal) {
        for (ordinal, frame) in traversal.frames.iter().enumerate() {
            let cell = self.cell_of(&frame.ego_position());
            self.cells.entry(cell).or_default().push(FrameRef {
                traversal_id: traversal.id,
                ordinal,
            });
        }
        let line = Polyline::new(traversal.frames.iter().map(|f| f.ego_position()).collect());
        self.max_segment = self.max_segment.max(line.max_segment());
        self.polylines.insert(traversal.id, line);
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Frames whose ego position falls in the same cell as `p`.
    pub fn frames_in_cell_of(&self, p: &Vector3<f64>) -> &[FrameRef] {
        self.cells
            .get(&self.cell_of(p))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Traversal ids with at least one frame within `reach` (xy box) of `p`.
    fn candidates(&self, p: &Vector3<f64>, reach: f64) -> BTreeSet<u64> {
        let lo = self.cell_of(&Vector3::new(p.x - reach, p.y - reach, 0.0));
        let hi = self.cell_of(&Vector3::new(p.x + reach, p.y + reach, 0.0));
        let mut out = BTreeSet::new();
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                if let Some(refs) = self.cells.get(&(cx, cy)) {
                    out.extend(refs.iter().map(|r| r.traversal_id));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Traversal {
    pub id: u64,
    pub frames: Vec<FrameRecord>,
}

#[derive(Clone, Debug)]
pub struct TraversalStore {
    traversals: BTreeMap<u64, Traversal>,
    index: StoreIndex,
    next_id: u64,
}

impl Default for TraversalStore {
    fn default() -> Self {
        Self::new()
    }
}

impl TraversalStore {
    pub fn new() -> Self {
        Self::with_cell_size(DEFAULT_CELL_SIZE)
    }

    pub fn with_cell_size(cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        Self {
            traversals: BTreeMap::new(),
            index: StoreIndex::new(cell_size),
            next_id: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.traversals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.traversals.len()
    }

    pub fn traversal_ids(&self) -> Vec<u64> {
        self.traversals.keys().copied().collect()
    }

    pub fn traversal(&self, id: u64) -> Option<&Traversal> {
        self.traversals.get(&id)
    }

    pub fn traversals(&self) -> impl Iterator<Item = &Traversal> {
        self.traversals.values()
    }

    pub fn index(&self) -> &StoreIndex {
        &self.index
    }

    pub fn frame(&self, traversal_id: u64, frame_index: u32) -> Option<&FrameRecord> {
        self.traversals
            .get(&traversal_id)?
            .frames
            .get(frame_index as usize)
    }

    pub fn ingest_traversal(&mut self, frames: Vec<FrameRecord>) -> Result<u64> {
        self.ingest_traversal_with(frames, IngestOptions::default())
    }

    pub fn ingest_traversal_with(
        &mut self,
        frames: Vec<FrameRecord>,
        opts: IngestOptions,
    ) -> Result<u64> {
        if frames.is_empty() {
            return Err(Error::InvalidArgument("traversal has no frames".into()));
        }
        for (i, frame) in frames.iter().enumerate() {
            if i > 0 && frame.frame_index <= frames[i - 1].frame_index {
                return Err(Error::UnorderedFrames { index: i });
            }
            if frame.points.is_empty() {
                return Err(Error::EmptyFrame { index: i });
            }
            if !frame.timestamp.is_finite()
                || frame
                    .points
                    .iter()
                    .any(|p| p.iter().any(|c| !c.is_finite()))
            {
                return Err(Error::InvalidArgument(format!(
                    "frame at position {i} has non-finite values"
                )));
            }
        }
        let frames = match opts.thin_spacing {
            Some(s) if s > 0.0 => thin_frames(frames, s / 2.0),
            _ => frames,
        };
        let id = self.next_id;
        self.insert(id, frames);
        Ok(id)
    }

    /// Copy of the store with every frame pose replaced by `f(frame)`, visiting
    /// traversals by id and frames in order. Ids and the index are preserved.
    pub fn map_poses<F: FnMut(&FrameRecord) -> RigidPose>(&self, mut f: F) -> Self {
        let mut out = Self::with_cell_size(self.index.cell_size);
        for t in self.traversals.values() {
            let frames = t
                .frames
                .iter()
                .map(|fr| FrameRecord {
                    pose: f(fr),
                    ..fr.clone()
                })
                .collect();
            out.insert(t.id, frames);
        }
        out
    }

    fn insert(&mut self, id: u64, mut frames: Vec<FrameRecord>) {
        for (ordinal, frame) in frames.iter_mut().enumerate() {
            frame.traversal_id = id;
            frame.frame_index = ordinal as u32;
        }
        let traversal = Traversal { id, frames };
        self.index.insert(&traversal);
        self.traversals.insert(id, traversal);
        self.next_id = self.next_id.max(id + 1);
    }

    /// For up to `max_traversals` traversals passing within the search radius
    /// of `p`, pick for every offset the frame whose arc position relative to
    /// the closest-approach point is nearest to that offset.
    pub fn query_frames(&self, p: &Vector3<f64>, cfg: &QueryConfig) -> Result<Vec<TraversalMatch>> {
        cfg.validate()?;
        let reach = cfg.search_radius + self.index.max_segment / 2.0;
        let mut hits: Vec<(f64, u64, f64)> = Vec::new();
        for id in self.index.candidates(p, reach) {
            let traversal = &self.traversals[&id];
            if let Some(cutoff) = cfg.exclude_after {
                if traversal.frames.iter().any(|f| f.timestamp >= cutoff) {
                    continue;
                }
            }
            let (dist, arc) = self.index.polylines[&id].closest_approach(p);
            if dist <= cfg.search_radius {
                hits.push((dist, id, arc));
            }
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.truncate(cfg.max_traversals);
        hits.sort_by_key(|h| h.1);

        Ok(hits
            .into_iter()
            .map(|(dist, id, anchor)| {
                let line = &self.index.polylines[&id];
                let picks = cfg
                    .offsets
                    .iter()
                    .map(|&offset| {
                        let mut best = 0usize;
                        let mut best_err = f64::INFINITY;
                        for (i, a) in line.arc.iter().enumerate() {
                            let err = (a - anchor - offset).abs();
                            if err < best_err {
                                best = i;
                                best_err = err;
                            }
                        }
                        FramePick {
                            offset,
                            frame_index: best as u32,
                            arc_offset: line.arc[best] - anchor,
                        }
                    })
                    .collect();
                TraversalMatch {
                    traversal_id: id,
                    closest_distance: dist,
                    anchor_arc: anchor,
                    picks,
                }
            })
            .collect())
    }

    /// Distinct frames picked for a match, in frame order.
    pub fn matched_frames(&self, m: &TraversalMatch) -> Vec<&FrameRecord> {
        m.frame_indices()
            .into_iter()
            .filter_map(|i| self.frame(m.traversal_id, i))
            .collect()
    }

    /// Exact byte size of a store file holding only the given traversals.
    pub fn store_size_bytes(&self, ids: &[u64]) -> Result<u64> {
        let mut total = FILE_HEADER_BYTES;
        for id in ids {
            let t = self
                .traversals
                .get(id)
                .ok_or(Error::UnknownTraversal(*id))?;
            total +=
                TRAVERSAL_HEADER_BYTES + t.frames.iter().map(FrameRecord::encoded_len).sum::<u64>();
        }
        Ok(total)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        self.write_subset(&self.traversal_ids(), w)
    }

    pub fn write_subset<W: Write>(&self, ids: &[u64], mut w: W) -> Result<()> {
        let selected = ids
            .iter()
            .map(|id| self.traversals.get(id).ok_or(Error::UnknownTraversal(*id)))
            .collect::<Result<Vec<_>>>()?;
        w.write_all(STORE_MAGIC)?;
        w.write_all(&STORE_VERSION.to_le_bytes())?;
        w.write_all(&(selected.len() as u32).to_le_bytes())?;
        for t in selected {
            w.write_all(&t.id.to_le_bytes())?;
            w.write_all(&(t.frames.len() as u32).to_le_bytes())?;
            for f in &t.frames {
                w.write_all(&f.timestamp.to_le_bytes())?;
                let (q, tr) = f.pose.components();
                for c in q.iter().chain(tr.iter()) {
                    w.write_all(&c.to_le_bytes())?;
                }
                w.write_all(&(f.points.len() as u32).to_le_bytes())?;
                let mut buf = Vec::with_capacity(f.points.len() * 12);
                for p in &f.points {
                    for c in p {
                        buf.extend_from_slice(&c.to_le_bytes());
                    }
                }
                w.write_all(&buf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        Self::read_from_with_cell_size(r, DEFAULT_CELL_SIZE)
    }

    pub fn read_from_with_cell_size<R: Read>(mut r: R, cell_size: f64) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(Error::format("store", "bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != STORE_VERSION {
            return Err(Error::format(
                "store",
                format!("unsupported version {version}"),
            ));
        }
        let count = read_u32(&mut r)?;
        let mut store = Self::with_cell_size(cell_size);
        for _ in 0..count {
            let id = read_u64(&mut r)?;
            if store.traversals.contains_key(&id) {
                return Err(Error::format(
                    "store",
                    format!("duplicate traversal id {id}"),
                ));
            }
            let frame_count = read_u32(&mut r)?;
            if frame_count == 0 {
                return Err(Error::format(
                    "store",
                    format!("traversal {id} has no frames"),
                ));
            }
            let mut frames = Vec::new();
            for ordinal in 0..frame_count {
                let timestamp = read_f64(&mut r)?;
                let mut comps = [0f64; 7];
                for c in &mut comps {
                    *c = read_f64(&mut r)?;
                }
                let pose = RigidPose::from_stored_components(
                    [comps[0], comps[1], comps[2], comps[3]],
                    [comps[4], comps[5], comps[6]],
                )?;
                let k = read_u32(&mut r)? as u64;
                let mut raw = Vec::new();
                (&mut r).take(k * POINT_BYTES).read_to_end(&mut raw)?;
                if raw.len() as u64 != k * POINT_BYTES {
                    return Err(Error::format("store", "truncated point payload"));
                }
                let points = raw
                    .chunks_exact(12)
                    .map(|c| {
                        [
                            f32::from_le_bytes(c[0..4].try_into().unwrap()),
                            f32::from_le_bytes(c[4..8].try_into().unwrap()),
                            f32::from_le_bytes(c[8..12].try_into().unwrap()),
                        ]
                    })
                    .collect();
                frames.push(FrameRecord::new(ordinal, timestamp, pose, points));
            }
            store.insert(id, frames);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::FileIo {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_to(BufWriter::new(file))
    }

    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::FileIo {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_from(BufReader::new(file))
    }
}

fn thin_frames(frames: Vec<FrameRecord>, min_gap: f64) -> Vec<FrameRecord> {
    let mut kept: Vec<FrameRecord> = Vec::with_capacity(frames.len());
    for f in frames {
        match kept.last() {
            Some(prev) if (f.ego_position() - prev.ego_position()).norm() < min_gap => {}
            _ => kept.push(f),
        }
    }
    kept
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
