//! Latency and storage measurements for the query → feature pipeline.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::featurize::{downavg_featurize, pool_traversals, PoolMode};
use crate::geometry::{CameraModel, RigidPose};
use crate::render::{densify, render_depth, DensifiedCloud, RenderConfig};
use crate::store::{QueryConfig, TraversalStore};

#[derive(Clone, Debug)]
pub struct StageTimes {
    pub name: &'static str,
    pub samples: Vec<Duration>,
}

impl StageTimes {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            samples: Vec::new(),
        }
    }

    pub fn mean(&self) -> Duration {
        if self.samples.is_empty() {
            return Duration::ZERO;
        }
        self.samples.iter().sum::<Duration>() / self.samples.len() as u32
    }

    /// Nearest-rank percentile.
    pub fn percentile(&self, pct: f64) -> Duration {
        if self.samples.is_empty() {
            return Duration::ZERO;
        }
        let mut sorted = self.samples.clone();
        sorted.sort();
        let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
        sorted[rank.clamp(1, sorted.len()) - 1]
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub repeat: usize,
    pub traversals: usize,
    pub cameras: usize,
    /// Densified points pushed through the renderer per run, summed over cameras.
    pub points_processed: usize,
    /// On-disk bytes of the traversals used for this scene.
    pub store_bytes: u64,
    pub query: StageTimes,
    pub densify: StageTimes,
    pub render: StageTimes,
    pub featurize: StageTimes,
    pub total: StageTimes,
}

impl BenchReport {
    pub fn stages(&self) -> [&StageTimes; 5] {
        [
            &self.query,
            &self.densify,
            &self.render,
            &self.featurize,
            &self.total,
        ]
    }

    /// Render throughput from the mean render time; zero when nothing was rendered.
    pub fn points_per_second(&self) -> f64 {
        let secs = self.render.mean().as_secs_f64();
        if self.points_processed == 0 || secs == 0.0 {
            0.0
        } else {
            self.points_processed as f64 / secs
        }
    }

    /// `key=value` lines, times in milliseconds.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "repeat={}", self.repeat);
        let _ = writeln!(out, "traversals={}", self.traversals);
        let _ = writeln!(out, "cameras={}", self.cameras);
        let _ = writeln!(out, "points_processed={}", self.points_processed);
        let _ = writeln!(out, "points_per_second={:.1}", self.points_per_second());
        let _ = writeln!(out, "store_bytes={}", self.store_bytes);
        let _ = writeln!(out, "store_megabytes={:.3}", self.store_bytes as f64 / 1e6);
        for s in self.stages() {
            let ms = |d: Duration| d.as_secs_f64() * 1e3;
            let _ = writeln!(out, "{}_mean_ms={:.4}", s.name, ms(s.mean()));
            let _ = writeln!(out, "{}_p50_ms={:.4}", s.name, ms(s.percentile(50.0)));
            let _ = writeln!(out, "{}_p95_ms={:.4}", s.name, ms(s.percentile(95.0)));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub query: QueryConfig,
    pub render: RenderConfig,
    pub scale: u32,
    pub pool: PoolMode,
    pub repeat: usize,
}

/// Runs query, densify, render and featurize `repeat` times, timing each stage.
pub fn bench_pipeline(
    store: &TraversalStore,
    ego: &RigidPose,
    cams: &[CameraModel],
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    let mut report = BenchReport {
        repeat: cfg.repeat,
        traversals: 0,
        cameras: cams.len(),
        points_processed: 0,
        store_bytes: 0,
        query: StageTimes::new("query"),
        densify: StageTimes::new("densify"),
        render: StageTimes::new("render"),
        featurize: StageTimes::new("featurize"),
        total: StageTimes::new("total"),
    };
    for _ in 0..cfg.repeat.max(1) {
        let start = Instant::now();
        let matches = store.query_frames(ego.translation(), &cfg.query)?;
        let t_query = start.elapsed();

        let t = Instant::now();
        let clouds = matches
            .iter()
            .map(|m| densify(&store.matched_frames(m)))
            .collect::<Result<Vec<DensifiedCloud>>>()?;
        let t_densify = t.elapsed();

        let t = Instant::now();
        let mut maps = Vec::with_capacity(clouds.len() * cams.len());
        for cloud in &clouds {
            for (i, cam) in cams.iter().enumerate() {
                maps.push(
                    render_depth(cloud, ego, cam, &cfg.render)?.with_ids(cloud.traversal_id, i),
                );
            }
        }
        let t_render = t.elapsed();

        let t = Instant::now();
        for i in 0..cams.len() {
            let feats = maps
                .iter()
                .filter(|m| m.camera_id == i)
                .map(|m| Ok((m.traversal_id, downavg_featurize(m, cfg.scale)?)))
                .collect::<Result<Vec<_>>>()?;
            if !feats.is_empty() {
                pool_traversals(&feats, cfg.pool)?;
            }
        }
        let t_featurize = t.elapsed();

        report.query.samples.push(t_query);
        report.densify.samples.push(t_densify);
        report.render.samples.push(t_render);
        report.featurize.samples.push(t_featurize);
        report.total.samples.push(start.elapsed());
        report.traversals = matches.len();
        report.points_processed = clouds.iter().map(|c| c.len()).sum::<usize>() * cams.len();
        let ids: Vec<u64> = matches.iter().map(|m| m.traversal_id).collect();
        report.store_bytes = store.store_size_bytes(&ids)?;
    }
    Ok(report)
}

/// Render timings at two cloud sizes.
#[derive(Clone, Copy, Debug)]
pub struct ScalingReport {
    pub small_points: usize,
    pub large_points: usize,
    pub small_time: Duration,
    pub large_time: Duration,
}

impl ScalingReport {
    /// Observed time ratio divided by the point-count ratio; 1.0 is perfectly linear.
    pub fn linearity(&self) -> f64 {
        let time_ratio = self.large_time.as_secs_f64() / self.small_time.as_secs_f64();
        let size_ratio = self.large_points as f64 / self.small_points as f64;
        time_ratio / size_ratio
    }
}

/// Median render times of `small` and `large`, alternating between the two.
pub fn render_scaling(
    small: &DensifiedCloud,
    large: &DensifiedCloud,
    ego: &RigidPose,
    cam: &CameraModel,
    cfg: &RenderConfig,
    repeat: usize,
) -> Result<ScalingReport> {
    let mut times = [StageTimes::new("small"), StageTimes::new("large")];
    for i in 0..repeat.max(1) + 2 {
        for (cloud, samples) in [small, large].into_iter().zip(times.iter_mut()) {
            let t = Instant::now();
            std::hint::black_box(render_depth(cloud, ego, cam, cfg)?);
            // first two rounds are warm-up
            if i >= 2 {
                samples.samples.push(t.elapsed());
            }
        }
    }
    Ok(ScalingReport {
        small_points: small.len(),
        large_points: large.len(),
        small_time: times[0].percentile(50.0),
        large_time: times[1].percentile(50.0),
    })
}
