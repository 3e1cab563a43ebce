//! Asynchronous depth features from past LiDAR traversals.
//!
//! Past drives through a location are kept in a [`store::TraversalStore`].
//! For a new ego pose, the frames nearest to a set of along-road offsets are
//! pulled from each past traversal, densified into one global cloud per
//! traversal ([`render::densify`]), and projected through every camera into a
//! depth map that keeps the farthest return per pixel
//! ([`render::render_depth`]). Per-traversal maps are then downsampled and
//! pooled into a single depth feature tensor ([`featurize`]) that can be
//! concatenated with image features.

pub mod bench;
pub mod descriptor;
pub mod error;
pub mod featurize;
pub mod geometry;
pub mod metrics;
pub mod perturb;
pub mod pointio;
pub mod render;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use featurize::{concat_features, downavg_featurize, pool_traversals, FeatureTensor, PoolMode};
pub use geometry::{
    project_points, transform_to_camera, CameraModel, Frame, PointCloud, Projection, RigidPose,
};
pub use metrics::{depth_l1, detection_score, TpMetrics};
pub use perturb::{perturb_pose, NoiseSpec};
pub use render::{
    densify, render_all, render_depth, DensifiedCloud, DepthMap, RenderConfig, SENTINEL,
};
pub use store::{FrameRecord, QueryConfig, TraversalMatch, TraversalStore};
pub use synth::{gt_depth, SceneSpec};
