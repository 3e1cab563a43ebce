//! Composite detection score and depth error.

use crate::error::{Error, Result};
use crate::render::{DepthMap, SENTINEL};

/// Mean true-positive errors of a detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TpMetrics {
    /// Average translation error, meters.
    pub ate: f64,
    /// Average scale error, `1 - IoU` after alignment.
    pub ase: f64,
    /// Average orientation error, radians.
    pub aoe: f64,
}

impl TpMetrics {
    pub fn new(ate: f64, ase: f64, aoe: f64) -> Result<Self> {
        let tp = Self { ate, ase, aoe };
        if [ate, ase, aoe].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("TP metrics must be >= 0".into()));
        }
        Ok(tp)
    }
}

/// `DS = (3·mAP + Σ (1 − min(1, mTP))) / 6` over ATE, ASE and AOE.
pub fn detection_score(map: f64, tp: &TpMetrics) -> Result<f64> {
    if !(0.0..=1.0).contains(&map) {
        return Err(Error::InvalidArgument(format!("mAP {map} outside [0, 1]")));
    }
    let tp = TpMetrics::new(tp.ate, tp.ase, tp.aoe)?;
    let tp_term: f64 = [tp.ate, tp.ase, tp.aoe]
        .iter()
        .map(|m| 1.0 - m.min(1.0))
        .sum();
    Ok((3.0 * map + tp_term) / 6.0)
}

/// Mean absolute difference over pixels valid in both maps.
pub fn depth_l1(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let (sum, count) = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(p, g)| **p != SENTINEL && **g != SENTINEL)
        .fold((0.0f64, 0usize), |(s, n), (p, g)| {
            (s + (*p as f64 - *g as f64).abs(), n + 1)
        });
    if count == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tp(ate: f64, ase: f64, aoe: f64) -> TpMetrics {
        TpMetrics::new(ate, ase, aoe).unwrap()
    }

    #[test]
    fn score_bounds() {
        assert_eq!(detection_score(0.0, &tp(1.0, 2.0, 3.5)).unwrap(), 0.0);
        assert_eq!(detection_score(1.0, &tp(0.0, 0.0, 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn score_fcos3d_row() {
        // (3·0.146 + 0.03 + 0.77 + 0.37) / 6 = 1.608 / 6
        let ds = detection_score(0.146, &tp(0.97, 0.23, 0.63)).unwrap();
        assert!((ds - 0.268).abs() < 1e-12);
    }

    #[test]
    fn score_rejects_bad_inputs() {
        assert!(detection_score(1.2, &tp(0.0, 0.0, 0.0)).is_err());
        assert!(detection_score(-0.1, &tp(0.0, 0.0, 0.0)).is_err());
        assert!(TpMetrics::new(-1.0, 0.0, 0.0).is_err());
    }

    fn map_of(w: u32, h: u32, data: Vec<f32>) -> DepthMap {
        DepthMap::from_data(w, h, data).unwrap()
    }

    #[test]
    fn l1_cases() {
        let gt = map_of(2, 2, vec![10.0; 4]);
        assert_eq!(depth_l1(&gt, &gt).unwrap(), 0.0);
        let pred = map_of(2, 2, vec![12.0; 4]);
        assert_eq!(depth_l1(&pred, &gt).unwrap(), 2.0);
        let sparse = map_of(2, 2, vec![-1.0, 14.0, -1.0, -1.0]);
        assert_eq!(depth_l1(&sparse, &gt).unwrap(), 4.0);
        let empty = DepthMap::empty(2, 2);
        assert!(matches!(depth_l1(&empty, &gt), Err(Error::NoOverlap)));
        assert!(depth_l1(&DepthMap::empty(3, 2), &gt).is_err());
    }

    proptest! {
        #[test]
        fn score_monotone(
            map in 0.0f64..1.0, dm in 0.0f64..0.5,
            ate in 0.0f64..2.0, ase in 0.0f64..2.0, aoe in 0.0f64..2.0, bump in 0.0f64..1.0,
        ) {
            let base = detection_score(map, &tp(ate, ase, aoe)).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            let more_map = detection_score((map + dm).min(1.0), &tp(ate, ase, aoe)).unwrap();
            prop_assert!(more_map >= base);
            for worse in [tp(ate + bump, ase, aoe), tp(ate, ase + bump, aoe), tp(ate, ase, aoe + bump)] {
                prop_assert!(detection_score(map, &worse).unwrap() <= base);
            }
            let clamped = detection_score(map, &tp(ate.max(1.0) + bump, ase, aoe)).unwrap();
            prop_assert_eq!(clamped, detection_score(map, &tp(1.0, ase, aoe)).unwrap());
        }

        #[test]
        fn l1_symmetric_and_triangle(
            a in prop::collection::vec(0.5f32..60.0, 12),
            b in prop::collection::vec(0.5f32..60.0, 12),
            c in prop::collection::vec(0.5f32..60.0, 12),
        ) {
            let (a, b, c) = (map_of(4, 3, a), map_of(4, 3, b), map_of(4, 3, c));
            let ab = depth_l1(&a, &b).unwrap();
            prop_assert_eq!(ab, depth_l1(&b, &a).unwrap());
            let ac = depth_l1(&a, &c).unwrap();
            let cb = depth_l1(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
        }
    }
}
