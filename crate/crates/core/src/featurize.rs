//! Depth feature tensors: the masked bilinear "downsample + average"
//! featurizer, traversal pooling and channel concatenation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::render::{DepthMap, SENTINEL};

pub const TENSOR_MAGIC: &[u8; 4] = b"ADTF";
pub const DEFAULT_SCALE: u32 = 8;

/// Channel-major `channels × height × width` f32 tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[(c * self.height + row) * self.width + col]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channels `start..end` as a new tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<FeatureTensor> {
        if start > end || end > self.channels {
            return Err(Error::ShapeMismatch(format!(
                "channel range {start}..{end} of {}",
                self.channels
            )));
        }
        let plane = self.height * self.width;
        FeatureTensor::new(
            end - start,
            self.height,
            self.width,
            self.data[start * plane..end * plane].to_vec(),
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_all(&3u32.to_le_bytes())?;
        for dim in [self.channels, self.height, self.width] {
            let dim = u32::try_from(dim)
                .map_err(|_| Error::ShapeMismatch("dimension exceeds u32".into()))?;
            w.write_all(&dim.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(Error::format("tensor", "bad magic"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let ndim = u32::from_le_bytes(word);
        if ndim != 3 {
            return Err(Error::format(
                "tensor",
                format!("expected 3 dimensions (channels, height, width), got {ndim}"),
            ));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut word)?;
            *d = u32::from_le_bytes(word) as usize;
        }
        let n = (dims[0] as u64) * (dims[1] as u64) * (dims[2] as u64);
        let mut raw = Vec::new();
        r.take(n * 4).read_to_end(&mut raw)?;
        if raw.len() as u64 != n * 4 {
            return Err(Error::format("tensor", "truncated payload"));
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureTensor::new(dims[0], dims[1], dims[2], data)
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
}

/// Bilinear taps along one axis: `(i0, w0, i1, w1)`.
fn taps(out_index: usize, scale: u32, len: usize) -> (usize, f64, usize, f64) {
    let src = ((out_index as f64 + 0.5) * scale as f64 - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    let frac = src - i0 as f64;
    (i0, 1.0 - frac, i1, frac)
}

/// Downsamples a depth map by an integer factor with half-pixel-centered
/// bilinear interpolation. Sentinel pixels get zero weight; a cell whose taps
/// are all sentinel is `-1`. Output is `1 × ceil(H/scale) × ceil(W/scale)`.
pub fn downavg_featurize(d: &DepthMap, scale: u32) -> Result<FeatureTensor> {
    if scale == 0 {
        return Err(Error::InvalidArgument("scale must be >= 1".into()));
    }
    let (w, h) = (d.width() as usize, d.height() as usize);
    let out_w = w.div_ceil(scale as usize);
    let out_h = h.div_ceil(scale as usize);
    let src = d.data();
    let mut data = Vec::with_capacity(out_w * out_h);
    for row in 0..out_h {
        let (r0, wr0, r1, wr1) = taps(row, scale, h);
        for col in 0..out_w {
            let (c0, wc0, c1, wc1) = taps(col, scale, w);
            let mut acc = 0.0f64;
            let mut weight = 0.0f64;
            for (r, wr) in [(r0, wr0), (r1, wr1)] {
                for (c, wc) in [(c0, wc0), (c1, wc1)] {
                    let wgt = wr * wc;
                    let v = src[r * w + c];
                    if wgt > 0.0 && v != SENTINEL {
                        acc += wgt * v as f64;
                        weight += wgt;
                    }
                }
            }
            data.push(if weight > 0.0 {
                (acc / weight) as f32
            } else {
                SENTINEL
            });
        }
    }
    FeatureTensor::new(1, out_h, out_w, data)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PoolMode {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(PoolMode::Mean),
            "max" => Ok(PoolMode::Max),
            other => Err(Error::InvalidArgument(format!(
                "unknown pool mode `{other}`"
            ))),
        }
    }
}

/// Elementwise pooling across traversals. Inputs are reduced in ascending
/// traversal-id order, so the result does not depend on the order given.
pub fn pool_traversals(feats: &[(u64, FeatureTensor)], mode: PoolMode) -> Result<FeatureTensor> {
    let mut ordered: Vec<&(u64, FeatureTensor)> = feats.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);
    let (_, first) = ordered
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to pool".into()))?;
    for pair in ordered.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::InvalidArgument(format!(
                "traversal {} pooled twice",
                pair[0].0
            )));
        }
    }
    if let Some((id, t)) = ordered.iter().find(|(_, t)| t.shape() != first.shape()) {
        return Err(Error::ShapeMismatch(format!(
            "traversal {id} has shape {:?}, expected {:?}",
            t.shape(),
            first.shape()
        )));
    }
    let n = ordered.len();
    let data = (0..first.data.len())
        .map(|i| match mode {
            PoolMode::Mean => {
                let sum: f64 = ordered.iter().map(|(_, t)| t.data[i] as f64).sum();
                (sum / n as f64) as f32
            }
            PoolMode::Max => ordered
                .iter()
                .map(|(_, t)| t.data[i])
                .fold(f32::NEG_INFINITY, f32::max),
        })
        .collect();
    FeatureTensor::new(first.channels, first.height, first.width, data)
}

/// Stacks image channels followed by depth channels.
pub fn concat_features(f_img: &FeatureTensor, f_depth: &FeatureTensor) -> Result<FeatureTensor> {
    if (f_img.height, f_img.width) != (f_depth.height, f_depth.width) {
        return Err(Error::ShapeMismatch(format!(
            "image features are {}x{}, depth features are {}x{}",
            f_img.height, f_img.width, f_depth.height, f_depth.width
        )));
    }
    let mut data = Vec::with_capacity(f_img.data.len() + f_depth.data.len());
    data.extend_from_slice(&f_img.data);
    data.extend_from_slice(&f_depth.data);
    FeatureTensor::new(
        f_img.channels + f_depth.channels,
        f_img.height,
        f_img.width,
        data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn depth(width: u32, height: u32, data: Vec<f32>) -> DepthMap {
        DepthMap::from_data(width, height, data).unwrap()
    }

    #[test]
    fn scale_one_is_identity() {
        let d = depth(3, 2, vec![1.0, -1.0, 3.0, 4.5, 5.0, -1.0]);
        let t = downavg_featurize(&d, 1).unwrap();
        assert_eq!(t.shape(), (1, 2, 3));
        assert_eq!(t.data(), d.data());
    }

    #[test]
    fn constant_block() {
        let t = downavg_featurize(&depth(2, 2, vec![10.0; 4]), 2).unwrap();
        assert_eq!(t.data(), &[10.0]);
    }

    #[test]
    fn sentinels_excluded() {
        let t = downavg_featurize(&depth(2, 2, vec![10.0, -1.0, -1.0, 30.0]), 2).unwrap();
        assert_eq!(t.data(), &[20.0]);
    }

    #[test]
    fn all_sentinel_cell() {
        let t = downavg_featurize(
            &depth(4, 2, vec![-1.0, -1.0, 2.0, 2.0, -1.0, -1.0, 2.0, 4.0]),
            2,
        )
        .unwrap();
        assert_eq!(t.data(), &[-1.0, 2.5]);
    }

    #[test]
    fn output_size_rounds_up() {
        let t = downavg_featurize(&DepthMap::empty(17, 9), 8).unwrap();
        assert_eq!(t.shape(), (1, 2, 3));
        assert!(t.data().iter().all(|&v| v == -1.0));
        assert!(downavg_featurize(&DepthMap::empty(4, 4), 0).is_err());
    }

    #[test]
    fn pool_single_and_pair() {
        let a = FeatureTensor::filled(2, 3, 4, 4.0);
        assert_eq!(
            pool_traversals(&[(3, a.clone())], PoolMode::Mean).unwrap(),
            a
        );
        let b = FeatureTensor::filled(2, 3, 4, 8.0);
        let mean = pool_traversals(&[(0, a.clone()), (1, b.clone())], PoolMode::Mean).unwrap();
        assert!(mean.data().iter().all(|&v| v == 6.0));
        let max = pool_traversals(&[(0, a), (1, b)], PoolMode::Max).unwrap();
        assert!(max.data().iter().all(|&v| v == 8.0));
    }

    #[test]
    fn pool_errors() {
        let a = FeatureTensor::filled(1, 2, 2, 1.0);
        let b = FeatureTensor::filled(1, 2, 3, 1.0);
        assert!(matches!(
            pool_traversals(&[(0, a.clone()), (1, b)], PoolMode::Mean),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(pool_traversals(&[], PoolMode::Mean).is_err());
        assert!(pool_traversals(&[(0, a.clone()), (0, a)], PoolMode::Mean).is_err());
        assert!("median".parse::<PoolMode>().is_err());
    }

    #[test]
    fn concat_layout() {
        let img = FeatureTensor::new(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let dep = FeatureTensor::new(1, 1, 2, vec![9.0, 8.0]).unwrap();
        let cat = concat_features(&img, &dep).unwrap();
        assert_eq!(cat.shape(), (3, 1, 2));
        assert_eq!(cat.data(), &[1.0, 2.0, 3.0, 4.0, 9.0, 8.0]);
        let wrong = FeatureTensor::filled(1, 2, 2, 0.0);
        assert!(concat_features(&img, &wrong).is_err());
    }

    #[test]
    fn tensor_file_layout() {
        let t = FeatureTensor::new(1, 1, 2, vec![1.5, -1.0]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"ADTF\x03\0\0\0");
        assert_eq!(&buf[8..20], &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(buf.len(), 20 + 8);
        assert!(FeatureTensor::read_from(&buf[..buf.len() - 2]).is_err());
    }

    fn arb_tensor() -> impl Strategy<Value = FeatureTensor> {
        (1usize..4, 1usize..6, 1usize..6).prop_flat_map(|(c, h, w)| {
            prop::collection::vec(-100.0f32..100.0, c * h * w)
                .prop_map(move |data| FeatureTensor::new(c, h, w, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn tensor_round_trip(t in arb_tensor()) {
            let mut buf = Vec::new();
            t.write_to(&mut buf).unwrap();
            let back = FeatureTensor::read_from(&buf[..]).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            let same = back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }

        #[test]
        fn concat_then_slice(a in arb_tensor(), extra in 1usize..3, seed in any::<u32>()) {
            let b = FeatureTensor::new(
                extra, a.height(), a.width(),
                (0..extra * a.height() * a.width()).map(|i| (i as u32 ^ seed) as f32).collect(),
            ).unwrap();
            let cat = concat_features(&a, &b).unwrap();
            prop_assert_eq!(cat.slice_channels(0, a.channels()).unwrap(), a.clone());
            prop_assert_eq!(cat.slice_channels(a.channels(), cat.channels()).unwrap(), b);
        }

        #[test]
        fn pooling_replicas_is_identity(t in arb_tensor(), k in 1usize..6) {
            let reps: Vec<(u64, FeatureTensor)> = (0..k as u64).map(|i| (i, t.clone())).collect();
            prop_assert_eq!(pool_traversals(&reps, PoolMode::Mean).unwrap(), t.clone());
            prop_assert_eq!(pool_traversals(&reps, PoolMode::Max).unwrap(), t);
        }

        #[test]
        fn all_sentinel_stays_sentinel(w in 1u32..40, h in 1u32..40, scale in 1u32..9) {
            let t = downavg_featurize(&DepthMap::empty(w, h), scale).unwrap();
            prop_assert!(t.data().iter().all(|&v| v == SENTINEL));
            prop_assert_eq!(t.shape(), (1, h.div_ceil(scale) as usize, w.div_ceil(scale) as usize));
        }
    }
}
