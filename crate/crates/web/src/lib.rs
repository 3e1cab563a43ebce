//! WebAssembly bindings for the browser demo. The scene, rendering and
//! featurization live in [`DemoCore`], which is plain Rust and testable natively.

use asyncdepth::geometry::mounted_camera_extrinsics;
use asyncdepth::render::DEFAULT_MAX_DEPTH;
use asyncdepth::synth::LidarModel;
use asyncdepth::*;
use nalgebra::Vector3;
use wasm_bindgen::prelude::*;

pub const IMAGE_WIDTH: u32 = 480;
pub const IMAGE_HEIGHT: u32 = 200;
const FRAME_SPACING: f64 = 10.0;

/// Which raster `render` returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    GroundTruth,
    /// Pixelwise max over all matched traversals.
    Union,
    Traversal(usize),
}

impl View {
    pub fn from_code(code: i32) -> Self {
        match code {
            -2 => View::GroundTruth,
            c if c < 0 => View::Union,
            c => View::Traversal(c as usize),
        }
    }
}

pub struct DemoCore {
    scene: SceneSpec,
    store: TraversalStore,
    camera: CameraModel,
    ego: RigidPose,
    maps: Vec<DepthMap>,
    truth: DepthMap,
}

impl DemoCore {
    pub fn new(traversals: usize, seed: u64) -> Result<Self> {
        let mut scene = SceneSpec::demo_street(traversals, seed);
        scene.lidar = LidarModel {
            rings: 24,
            azimuth_step: 0.8,
            ..LidarModel::default()
        };
        let mut store = TraversalStore::new();
        for frames in scene.generate_traversals(traversals, FRAME_SPACING)? {
            if !frames.is_empty() {
                store.ingest_traversal(frames)?;
            }
        }
        let camera = CameraModel::pinhole(
            240.0,
            240.0,
            IMAGE_WIDTH as f64 / 2.0,
            IMAGE_HEIGHT as f64 / 2.0,
            IMAGE_WIDTH,
            IMAGE_HEIGHT,
            mounted_camera_extrinsics(0.0, Vector3::new(1.0, 0.0, 1.6)),
        )?;
        Ok(Self {
            scene,
            store,
            truth: DepthMap::empty(IMAGE_WIDTH, IMAGE_HEIGHT),
            camera,
            ego: RigidPose::identity(),
            maps: Vec::new(),
        })
    }

    pub fn traversal_count(&self) -> usize {
        self.store.len()
    }

    pub fn route_length(&self) -> f64 {
        self.scene.route_length()
    }

    /// Renders every matched traversal at `position` meters along the route,
    /// with the heading turned by `yaw_deg` and the ego pose perturbed by the
    /// given noise.
    pub fn update(&mut self, position: f64, yaw_deg: f64, noise: &NoiseSpec) -> Result<()> {
        let (p, heading) = self.scene.route_point(position);
        let truth_pose = RigidPose::from_yaw(heading + yaw_deg.to_radians(), p);
        self.ego = perturb_pose(&truth_pose, noise, &mut noise.rng());
        let cfg = RenderConfig::default();
        let out = render_all(
            &self.ego,
            std::slice::from_ref(&self.camera),
            &QueryConfig::frontal(),
            &self.store,
            &cfg,
        )?;
        self.maps = out.maps;
        self.truth = gt_depth(&self.scene.static_only(), &truth_pose, &self.camera, &cfg);
        Ok(())
    }

    pub fn view(&self, view: View) -> Result<DepthMap> {
        match view {
            View::GroundTruth => Ok(self.truth.clone()),
            View::Union => self
                .maps
                .iter()
                .try_fold(DepthMap::empty(IMAGE_WIDTH, IMAGE_HEIGHT), |acc, m| {
                    acc.pixelwise_max(m)
                }),
            View::Traversal(k) => self
                .maps
                .get(k)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("no traversal {k} matched here"))),
        }
    }

    pub fn matched(&self) -> usize {
        self.maps.len()
    }

    /// Mean absolute error of `view` against the noise-free ground truth.
    pub fn l1(&self, view: View) -> Result<f64> {
        depth_l1(&self.view(view)?, &self.truth)
    }

    /// Down-sampled and pooled depth feature of the current maps.
    pub fn features(&self, scale: u32, pool: PoolMode) -> Result<FeatureTensor> {
        let feats = self
            .maps
            .iter()
            .map(|m| Ok((m.traversal_id, downavg_featurize(m, scale)?)))
            .collect::<Result<Vec<_>>>()?;
        pool_traversals(&feats, pool)
    }
}

/// RGBA pixel for a depth in meters; uncovered pixels are dark grey.
pub fn colormap(depth: f32) -> [u8; 4] {
    if depth < 0.0 {
        return [32, 32, 36, 255];
    }
    // near is warm, far is cool
    const STOPS: [[f32; 3]; 6] = [
        [122.0, 4.0, 3.0],
        [249.0, 96.0, 15.0],
        [236.0, 214.0, 55.0],
        [96.0, 247.0, 120.0],
        [40.0, 155.0, 232.0],
        [48.0, 18.0, 59.0],
    ];
    let t = (depth / DEFAULT_MAX_DEPTH as f32).clamp(0.0, 1.0) * (STOPS.len() - 1) as f32;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f32;
    let c = |k: usize| (STOPS[i][k] + (STOPS[i + 1][k] - STOPS[i][k]) * f).round() as u8;
    [c(0), c(1), c(2), 255]
}

pub fn rgba(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|d| colormap(*d)).collect()
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    core: DemoCore,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(traversals: usize, seed: u32) -> Result<Demo, JsError> {
        Ok(Demo {
            core: DemoCore::new(traversals, seed as u64).map_err(js)?,
        })
    }

    pub fn width(&self) -> u32 {
        IMAGE_WIDTH
    }

    pub fn height(&self) -> u32 {
        IMAGE_HEIGHT
    }

    #[wasm_bindgen(js_name = routeLength)]
    pub fn route_length(&self) -> f64 {
        self.core.route_length()
    }

    #[wasm_bindgen(js_name = traversalCount)]
    pub fn traversal_count(&self) -> usize {
        self.core.traversal_count()
    }

    /// Re-renders at the given route position and heading offset under pose
    /// noise, returning the RGBA image of `view` (-2 ground truth, -1 union,
    /// k ≥ 0 one traversal).
    pub fn render(
        &mut self,
        position: f64,
        yaw_deg: f64,
        sigma_t: f64,
        sigma_r: f64,
        seed: u32,
        view: i32,
    ) -> Result<Vec<u8>, JsError> {
        let noise = NoiseSpec::new(sigma_t, sigma_r, seed as u64).map_err(js)?;
        self.core.update(position, yaw_deg, &noise).map_err(js)?;
        self.show(view)
    }

    /// RGBA image of `view` for the last rendered pose.
    pub fn show(&self, view: i32) -> Result<Vec<u8>, JsError> {
        let map = self.core.view(View::from_code(view)).map_err(js)?;
        Ok(rgba(map.data()))
    }

    pub fn matched(&self) -> usize {
        self.core.matched()
    }

    /// Depth L1 of `view` against ground truth, NaN when nothing overlaps.
    pub fn l1(&self, view: i32) -> f64 {
        self.core.l1(View::from_code(view)).unwrap_or(f64::NAN)
    }

    /// RGBA image of the pooled feature at `scale`; `pool` is `mean` or `max`.
    pub fn features(&self, scale: u32, pool: &str) -> Result<Vec<u8>, JsError> {
        let mode: PoolMode = pool.parse().map_err(js)?;
        let f = self.core.features(scale, mode).map_err(js)?;
        Ok(rgba(f.data()))
    }

    #[wasm_bindgen(js_name = featureWidth)]
    pub fn feature_width(&self, scale: u32) -> u32 {
        IMAGE_WIDTH.div_ceil(scale.max(1))
    }

    #[wasm_bindgen(js_name = featureHeight)]
    pub fn feature_height(&self, scale: u32) -> u32 {
        IMAGE_HEIGHT.div_ceil(scale.max(1))
    }
}

#[wasm_bindgen(js_name = detectionScore)]
pub fn detection_score_js(map: f64, ate: f64, ase: f64, aoe: f64) -> Result<f64, JsError> {
    let tp = TpMetrics::new(ate, ase, aoe).map_err(js)?;
    detection_score(map, &tp).map_err(js)
}
