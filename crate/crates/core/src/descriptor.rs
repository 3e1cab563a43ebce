//! Key-value text descriptors for cameras and poses.
//!
//! One `key = value` pair per line (`key: value` and `key value` are also
//! accepted). `#` starts a comment. Camera files carry
//! `fx, fy, cx, cy, width, height, qw, qx, qy, qz, tx, ty, tz`; pose files
//! carry `qw, qx, qy, qz, tx, ty, tz` and optionally `timestamp`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, RigidPose};

/// Ordered key-value pairs; repeated keys are kept.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let split = line
                .find(['=', ':'])
                .map(|i| (&line[..i], &line[i + 1..]))
                .or_else(|| line.split_once(char::is_whitespace));
            let Some((key, value)) = split else {
                return Err(Error::format(
                    "descriptor",
                    format!("line {}: expected `key = value`", lineno + 1),
                ));
            };
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Last value for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn as_map(&self) -> HashMap<&str, &str> {
        self.entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect()
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::format("descriptor", format!("missing field `{key}`")))?;
        parse_f64(key, raw)
    }

    pub fn optional_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|raw| parse_f64(key, raw)).transpose()
    }

    pub fn require_u32(&self, key: &str) -> Result<u32> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::format("descriptor", format!("missing field `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::format("descriptor", format!("`{key}`: not an integer: {raw}")))
    }
}

pub(crate) fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    raw.parse()
        .map_err(|_| Error::format("descriptor", format!("`{key}`: not a number: {raw}")))
}

fn pose_from(kv: &KeyValues) -> Result<RigidPose> {
    let q = [
        kv.require_f64("qw")?,
        kv.require_f64("qx")?,
        kv.require_f64("qy")?,
        kv.require_f64("qz")?,
    ];
    let t = [
        kv.require_f64("tx")?,
        kv.require_f64("ty")?,
        kv.require_f64("tz")?,
    ];
    RigidPose::from_components(q, t)
}

fn write_pose(out: &mut String, pose: &RigidPose) {
    let (q, t) = pose.components();
    for (name, value) in ["qw", "qx", "qy", "qz"].iter().zip(q) {
        let _ = writeln!(out, "{name} = {value:?}");
    }
    for (name, value) in ["tx", "ty", "tz"].iter().zip(t) {
        let _ = writeln!(out, "{name} = {value:?}");
    }
}

pub fn parse_camera(text: &str) -> Result<CameraModel> {
    let kv = KeyValues::parse(text)?;
    CameraModel::pinhole(
        kv.require_f64("fx")?,
        kv.require_f64("fy")?,
        kv.require_f64("cx")?,
        kv.require_f64("cy")?,
        kv.require_u32("width")?,
        kv.require_u32("height")?,
        pose_from(&kv)?,
    )
}

pub fn format_camera(cam: &CameraModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "fx = {:?}", cam.fx());
    let _ = writeln!(out, "fy = {:?}", cam.fy());
    let _ = writeln!(out, "cx = {:?}", cam.cx());
    let _ = writeln!(out, "cy = {:?}", cam.cy());
    let _ = writeln!(out, "width = {}", cam.width());
    let _ = writeln!(out, "height = {}", cam.height());
    write_pose(&mut out, cam.extrinsics());
    out
}

/// A pose plus the optional `timestamp` field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseDescriptor {
    pub pose: RigidPose,
    pub timestamp: Option<f64>,
}

pub fn parse_pose(text: &str) -> Result<PoseDescriptor> {
    let kv = KeyValues::parse(text)?;
    Ok(PoseDescriptor {
        pose: pose_from(&kv)?,
        timestamp: kv.optional_f64("timestamp")?,
    })
}

pub fn format_pose(pose: &RigidPose, timestamp: Option<f64>) -> String {
    let mut out = String::new();
    if let Some(ts) = timestamp {
        let _ = writeln!(out, "timestamp = {ts:?}");
    }
    write_pose(&mut out, pose);
    out
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_camera_file(path: &Path) -> Result<CameraModel> {
    parse_camera(&read_text(path)?)
}

pub fn read_pose_file(path: &Path) -> Result<PoseDescriptor> {
    parse_pose(&read_text(path)?)
}
