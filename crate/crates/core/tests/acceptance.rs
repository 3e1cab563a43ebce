//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::time::{Duration, Instant};

use asyncdepth::bench::{bench_pipeline, render_scaling, BenchConfig};
use asyncdepth::featurize::PoolMode;
use asyncdepth::geometry::{mounted_camera_extrinsics, CameraProjector, Frame};
use asyncdepth::perturb::PoseNoise;
use asyncdepth::store::{store_size_formula, QueryConfig};
use asyncdepth::*;
use common::*;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64, outcome: Outcome) -> Outcome {
    let secs = elapsed.as_secs_f64();
    if limit_s.is_infinite() {
        return outcome.map(|d| format!("{d}; {secs:.2}s"));
    }
    match outcome {
        Ok(d) if secs < limit_s => Ok(format!("{d}; {secs:.2}s < {limit_s}s")),
        Ok(d) => Err(format!("{d}; took {secs:.2}s, limit {limit_s}s")),
        Err(d) => Err(format!("{d}; {secs:.2}s")),
    }
}

fn detection_score_rows() -> Outcome {
    let rows = [
        ("FCOS3D", 0.146, [0.97, 0.23, 0.63], 0.267),
        ("Lift-Splat", 0.233, [0.83, 0.24, 0.85], 0.290),
    ];
    let mut details = Vec::new();
    let mut ok = true;
    for (name, map, [ate, ase, aoe], expected) in rows {
        let ds = detection_score(map, &TpMetrics::new(ate, ase, aoe).unwrap()).unwrap();
        let pass = (ds - expected).abs() <= 0.005;
        ok &= pass;
        details.push(format!(
            "{name} DS={ds:.4} expected {expected:.3}±0.005 {}",
            if pass { "ok" } else { "MISS" }
        ));
    }
    check(ok, details.join(", "))
}

fn projection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut compared, mut kept, mut worst) = (0usize, 0usize, 0.0f64);
    for config in 0..100 {
        let width = rng.random_range(64..1600);
        let height = rng.random_range(48..900);
        let f = rng.random_range(0.4..1.5) * width as f64;
        let cam = CameraModel::pinhole(
            f,
            f * rng.random_range(0.9..1.1),
            rng.random_range(0.3..0.7) * width as f64,
            rng.random_range(0.3..0.7) * height as f64,
            width,
            height,
            random_pose(&mut rng, 3.0),
        )
        .unwrap();
        let ego = random_pose(&mut rng, 500.0);
        let m = world_to_camera(&ego, &cam);
        let to_world = rigid_inverse(&m);
        let points: Vec<Vector3<f64>> = (0..10_000)
            .map(|_| {
                let z: f64 = rng.random_range(-10.0..120.0);
                let x = (rng.random_range(-0.2..1.2) * width as f64 - cam.cx()) * z / cam.fx();
                let y = (rng.random_range(-0.2..1.2) * height as f64 - cam.cy()) * z / cam.fy();
                Vector3::from(apply(&to_world, [x, y, z]))
            })
            .collect();
        let projector = CameraProjector::new(&ego, &cam, 1e-3);
        for p in &points {
            let got = projector.project_global(p);
            let want = oracle_project(&m, &cam, 1e-3, [p.x, p.y, p.z]);
            compared += 1;
            match (got, want) {
                (None, None) => {}
                (Some(g), Some((u, v, d))) if g.u == u && g.v == v => {
                    kept += 1;
                    let err = (g.depth - d).abs();
                    worst = worst.max(err);
                    if err > 1e-9 {
                        return Err(format!("config {config}: depth error {err:e}"));
                    }
                }
                (g, w) => return Err(format!("config {config}: pipeline {g:?} vs oracle {w:?}")),
            }
        }
    }
    Ok(format!(
        "{compared} points, {kept} in view, identical pixels, max depth error {worst:.1e}"
    ))
}

fn zbuffer_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = RenderConfig::default();
    let mut covered = 0usize;
    for pair in 0..500 {
        let cam = CameraModel::pinhole(50.0, 50.0, 32.0, 24.0, 64, 48, random_pose(&mut rng, 1.0))
            .unwrap();
        let ego = random_pose(&mut rng, 50.0);
        let to_world = rigid_inverse(&world_to_camera(&ego, &cam));
        let (na, nb) = (rng.random_range(0..400), rng.random_range(0..400));
        let mut draw = |n: usize| -> Vec<Vector3<f64>> {
            (0..n)
                .map(|_| {
                    let z: f64 = rng.random_range(-5.0..80.0);
                    let s = z.abs().max(1.0);
                    Vector3::from(apply(
                        &to_world,
                        [
                            rng.random_range(-0.8..0.8) * s,
                            rng.random_range(-0.6..0.6) * s,
                            z,
                        ],
                    ))
                })
                .collect()
        };
        let (a, b) = (draw(na), draw(nb));
        let cloud = |pts: Vec<Vector3<f64>>| {
            DensifiedCloud::new(pair, PointCloud::new(pts, Frame::Global), vec![0]).unwrap()
        };
        let union: Vec<Vector3<f64>> = a.iter().chain(&b).copied().collect();
        let ra = render_depth(&cloud(a), &ego, &cam, &cfg).unwrap();
        let rb = render_depth(&cloud(b), &ego, &cam, &cfg).unwrap();
        let rab = render_depth(&cloud(union), &ego, &cam, &cfg).unwrap();
        let merged = ra.pixelwise_max(&rb).unwrap();
        let bits = |m: &DepthMap| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        if bits(&rab) != bits(&merged) {
            return Err(format!(
                "pair {pair}: union render differs from pixelwise max"
            ));
        }
        let empty = DepthMap::empty(64, 48);
        if bits(&ra.pixelwise_max(&empty).unwrap()) != bits(&ra)
            || bits(&empty.pixelwise_max(&ra).unwrap()) != bits(&ra)
        {
            return Err(format!("pair {pair}: sentinel is not the identity"));
        }
        covered += rab.covered_pixels();
    }
    Ok(format!(
        "500 pairs bit-exact, {covered} covered pixels in union maps"
    ))
}

fn synthetic_ground_truth() -> Outcome {
    // Two fronto-parallel facades, laterally disjoint so neither hides the other.
    let scene = SceneSpec::parse(
        "route = 0 0 0
route = 40 0 0
box = 30 -6 3 1 12 20 0
box = 45 8 3 1 16 20 0
rings = 64
azimuth_step = 0.1
",
    )
    .unwrap();
    let mut store = TraversalStore::new();
    for t in scene.generate_traversals(1, 5.0).unwrap() {
        store.ingest_traversal(t).unwrap();
    }
    let ego = RigidPose::identity();
    let cam = CameraModel::pinhole(
        400.0,
        400.0,
        400.0,
        192.0,
        800,
        384,
        mounted_camera_extrinsics(0.0, Vector3::new(1.0, 0.0, 1.6)),
    )
    .unwrap();
    let query = QueryConfig::new(1, vec![0.0, 10.0, 20.0], 10.0).unwrap();
    let cfg = RenderConfig::default();
    let out = render_all(&ego, std::slice::from_ref(&cam), &query, &store, &cfg).unwrap();
    let frames = out.matches[0].frame_indices().len();
    let map = &out.maps[0];
    let gt = gt_depth(&scene, &ego, &cam, &cfg);
    let (mut covered, mut agree, mut off_edge) = (0usize, 0usize, 0usize);
    for v in 0..cam.height() {
        for u in 0..cam.width() {
            let r = map.get(u, v);
            if r == SENTINEL {
                continue;
            }
            covered += 1;
            if (r - gt.get(u, v)).abs() <= 1e-4 {
                agree += 1;
                continue;
            }
            // a disagreement is a flooring artifact when a neighbouring ray sees that depth
            let neighbour_agrees = (-1i64..=1).any(|dv| {
                (-1i64..=1).any(|du| {
                    let (uu, vv) = (u as i64 + du, v as i64 + dv);
                    uu >= 0
                        && vv >= 0
                        && uu < cam.width() as i64
                        && vv < cam.height() as i64
                        && (gt.get(uu as u32, vv as u32) - r).abs() <= 1e-4
                })
            });
            if !neighbour_agrees {
                off_edge += 1;
            }
        }
    }
    let frac = agree as f64 / covered.max(1) as f64;
    check(
        frames == 3 && covered > 1000 && frac >= 0.99,
        format!(
            "{frames} frames densified, {agree}/{covered} covered pixels within 1e-4 m ({:.3}%), {off_edge} disagreements away from a surface edge",
            frac * 100.0
        ),
    )
}

fn pooling_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let feats: Vec<(u64, FeatureTensor)> = (0..5)
        .map(|i| {
            let data = (0..3 * 48 * 100)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        -1.0
                    } else {
                        rng.random_range(0.0f32..60.0)
                    }
                })
                .collect();
            (10 + i as u64, FeatureTensor::new(3, 48, 100, data).unwrap())
        })
        .collect();
    let reference_mean = pool_traversals(&feats, PoolMode::Mean).unwrap();
    let reference_max = pool_traversals(&feats, PoolMode::Max).unwrap();
    let bits = |t: &FeatureTensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let mut perms = 0;
    let mut order: Vec<usize> = (0..5).collect();
    // Heap's algorithm over all 120 orderings
    let mut c = [0usize; 5];
    let mut i = 0;
    loop {
        let permuted: Vec<(u64, FeatureTensor)> = order.iter().map(|&k| feats[k].clone()).collect();
        perms += 1;
        if bits(&pool_traversals(&permuted, PoolMode::Mean).unwrap()) != bits(&reference_mean) {
            return Err(format!("mean differs for order {order:?}"));
        }
        if bits(&pool_traversals(&permuted, PoolMode::Max).unwrap()) != bits(&reference_max) {
            return Err(format!("max differs for order {order:?}"));
        }
        while i < 5 && c[i] >= i {
            c[i] = 0;
            i += 1;
        }
        if i >= 5 {
            break;
        }
        if i % 2 == 0 {
            order.swap(0, i);
        } else {
            order.swap(c[i], i);
        }
        c[i] += 1;
        i = 1;
    }
    check(
        perms == 120,
        format!("{perms} permutations, mean and max bit-identical"),
    )
}

fn noise_statistics() -> Outcome {
    let spec = NoiseSpec::new(0.2, 1.0, 17).unwrap();
    let mut rng = spec.rng();
    let base = RigidPose::identity();
    let n = 100_000;
    let (mut norm_sum, mut yaw_sum, mut yaw_sq) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let p = perturb_pose(&base, &spec, &mut rng);
        norm_sum += p.translation().norm();
        let yaw = p.yaw().to_degrees();
        yaw_sum += yaw;
        yaw_sq += yaw * yaw;
    }
    let mean_norm = norm_sum / n as f64;
    let expected_norm = 0.2 * (2.0 / std::f64::consts::PI).sqrt();
    let yaw_mean = yaw_sum / n as f64;
    let yaw_std = (yaw_sq / n as f64 - yaw_mean * yaw_mean).sqrt();
    let norm_ok = ((mean_norm - expected_norm) / expected_norm).abs() <= 0.05;
    let yaw_ok = ((yaw_std - 1.0) / 1.0).abs() <= 0.03;

    let zero = NoiseSpec::new(0.0, 0.0, 3).unwrap();
    let mut zr = zero.rng();
    let mut identity_ok = true;
    let mut prng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let p = random_pose(&mut prng, 100.0);
        let q = perturb_pose(&p, &zero, &mut zr);
        let (a, b) = (p.components(), q.components());
        identity_ok &= a.0.map(f64::to_bits) == b.0.map(f64::to_bits)
            && a.1.map(f64::to_bits) == b.1.map(f64::to_bits);
        let draw = PoseNoise::sample(&zero, &mut zr);
        identity_ok &= draw.epsilon == 0.0 && draw.yaw == 0.0;
    }
    check(
        norm_ok && yaw_ok && identity_ok,
        format!(
            "mean |offset| {mean_norm:.5} vs {expected_norm:.5}, yaw std {yaw_std:.4}° vs 1°, zero-noise identity {}",
            if identity_ok { "exact" } else { "BROKEN" }
        ),
    )
}

fn store_round_trip() -> Outcome {
    let scene = SceneSpec::demo_street(5, 31);
    let mut store = TraversalStore::new();
    for t in scene.generate_traversals(5, 5.0).unwrap() {
        store.ingest_traversal(t).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.adst");
    store.save(&path).unwrap();
    let on_disk = std::fs::metadata(&path).unwrap().len();
    let back = TraversalStore::open(&path).unwrap();
    let ids = store.traversal_ids();
    if back.traversal_ids() != ids {
        return Err("traversal ids changed".into());
    }
    let mut frames = 0;
    for id in &ids {
        let (a, b) = (store.traversal(*id).unwrap(), back.traversal(*id).unwrap());
        if a.frames.len() != b.frames.len() {
            return Err(format!("traversal {id}: frame count changed"));
        }
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            frames += 1;
            let (ca, cb) = (fa.pose.components(), fb.pose.components());
            let pose_same = ca.0.map(f64::to_bits) == cb.0.map(f64::to_bits)
                && ca.1.map(f64::to_bits) == cb.1.map(f64::to_bits);
            let pts_same = fa.points.len() == fb.points.len()
                && fa
                    .points
                    .iter()
                    .zip(&fb.points)
                    .all(|(p, q)| p.map(f32::to_bits) == q.map(f32::to_bits));
            if !pose_same || !pts_same || fa.timestamp.to_bits() != fb.timestamp.to_bits() {
                return Err(format!(
                    "traversal {id} frame {}: not bit-exact",
                    fa.frame_index
                ));
            }
        }
    }
    let counts: Vec<Vec<usize>> = ids
        .iter()
        .map(|id| {
            store
                .traversal(*id)
                .unwrap()
                .frames
                .iter()
                .map(|f| f.points.len())
                .collect()
        })
        .collect();
    let formula = store_size_formula(counts.iter().map(|c| c.as_slice()));
    let reported = store.store_size_bytes(&ids).unwrap();
    if formula != on_disk || reported != on_disk {
        return Err(format!(
            "size formula {formula}, reported {reported}, file {on_disk}"
        ));
    }

    let mut big = TraversalStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let frames = (0..3)
            .map(|k| {
                let points = (0..95_000)
                    .map(|_| {
                        [
                            rng.random_range(-60.0f32..60.0),
                            rng.random_range(-60.0f32..60.0),
                            rng.random_range(-3.0f32..8.0),
                        ]
                    })
                    .collect();
                FrameRecord::new(
                    k,
                    k as f64 * 0.5,
                    RigidPose::from_translation(Vector3::new(5.0 * k as f64, 0.0, 0.0)),
                    points,
                )
            })
            .collect();
        big.ingest_traversal(frames).unwrap();
    }
    let mut buf = Vec::new();
    big.write_to(&mut buf).unwrap();
    let target = 17.1e6;
    let rel = (buf.len() as f64 - target).abs() / target;
    check(
        rel <= 0.05 && big.store_size_bytes(&big.traversal_ids()).unwrap() == buf.len() as u64,
        format!(
            "{frames} frames bit-exact, file {on_disk} B = formula; 5x3x95k store {} B ({:+.2}% vs 17.1 MB)",
            buf.len(),
            (buf.len() as f64 / target - 1.0) * 100.0
        ),
    )
}

fn latency() -> Outcome {
    let cam =
        CameraModel::pinhole(400.0, 400.0, 400.0, 192.0, 800, 384, RigidPose::identity()).unwrap();
    let ego = RigidPose::identity();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut frustum_cloud = |n: usize| {
        let pts = (0..n)
            .map(|_| {
                let z: f64 = rng.random_range(2.0..70.0);
                Vector3::new(
                    rng.random_range(-1.0..1.0) * z,
                    rng.random_range(-0.48..0.48) * z,
                    z,
                )
            })
            .collect();
        DensifiedCloud::new(0, PointCloud::new(pts, Frame::Global), vec![0]).unwrap()
    };
    let (small, large) = (frustum_cloud(150_000), frustum_cloud(300_000));
    let scaling = render_scaling(&small, &large, &ego, &cam, &RenderConfig::default(), 21).unwrap();
    let lin = scaling.linearity();

    let scene = SceneSpec::demo_street(5, 3);
    let mut store = TraversalStore::new();
    for t in scene.generate_traversals(5, 5.0).unwrap() {
        store.ingest_traversal(t).unwrap();
    }
    let cams: Vec<CameraModel> = (0..6)
        .map(|i| {
            let yaw = i as f64 * std::f64::consts::FRAC_PI_3;
            CameraModel::pinhole(
                400.0,
                400.0,
                400.0,
                192.0,
                800,
                384,
                mounted_camera_extrinsics(yaw, Vector3::new(1.0, 0.0, 1.6)),
            )
            .unwrap()
        })
        .collect();
    let cfg = BenchConfig {
        query: QueryConfig::surround(),
        render: RenderConfig::default(),
        scale: 8,
        pool: PoolMode::Mean,
        repeat: 5,
    };
    let report = bench_pipeline(
        &store,
        &RigidPose::from_yaw(0.0, Vector3::new(100.0, -1.75, 0.0)),
        &cams,
        &cfg,
    )
    .unwrap();
    check(
        (0.7..=1.3).contains(&lin) && report.traversals == 5,
        format!(
            "render {:.2} ms @150k, {:.2} ms @300k, linearity {lin:.3} (band 0.7..1.3); 5 traversals x 6 cameras end-to-end mean {:.1} ms, p95 {:.1} ms, {:.2e} points/s",
            scaling.small_time.as_secs_f64() * 1e3,
            scaling.large_time.as_secs_f64() * 1e3,
            report.total.mean().as_secs_f64() * 1e3,
            report.total.percentile(95.0).as_secs_f64() * 1e3,
            report.points_per_second(),
        ),
    )
}

fn main() {
    type Criterion = (&'static str, f64, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("detection score reconstruction", 1.0, detection_score_rows),
        ("projection oracle equivalence", 10.0, projection_oracle),
        ("z-buffer algebra", 30.0, zbuffer_algebra),
        (
            "synthetic ground-truth agreement",
            60.0,
            synthetic_ground_truth,
        ),
        ("pooling invariance", 5.0, pooling_invariance),
        ("noise-model statistics", 10.0, noise_statistics),
        ("store round-trip", 30.0, store_round_trip),
        ("latency scaling", f64::INFINITY, latency),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let outcome = within(start.elapsed(), *limit, outcome);
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{}] {name}: {detail}", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
