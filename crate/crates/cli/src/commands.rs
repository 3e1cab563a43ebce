use std::fs;
use std::path::{Path, PathBuf};

use asyncdepth::bench::{bench_pipeline, render_scaling, BenchConfig};
use asyncdepth::descriptor::{format_camera, format_pose, read_camera_file, read_pose_file};
use asyncdepth::geometry::{mounted_camera_extrinsics, Frame};
use asyncdepth::pointio::{read_points_file, write_raw_xyz};
use asyncdepth::render::DepthRule;
use asyncdepth::store::IngestOptions;
use asyncdepth::*;
use nalgebra::Vector3;

use crate::args::*;
use crate::{CliError, CliResult};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("io", format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn sorted_entries(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| io_err(dir, e))?;
    entries.sort();
    Ok(entries)
}

fn load_cameras(paths: &[PathBuf]) -> CliResult<Vec<CameraModel>> {
    paths
        .iter()
        .map(|p| read_camera_file(p).map_err(CliError::from))
        .collect()
}

fn query_config(q: &QueryArgs) -> CliResult<(QueryConfig, RenderConfig)> {
    let mut query = QueryConfig::new(q.max_traversals, q.offsets.clone(), q.search_radius)?;
    query.exclude_after = q.exclude_after;
    let render = RenderConfig {
        max_depth: (q.max_depth != 0.0).then_some(q.max_depth),
        rule: match q.percentile {
            Some(p) => DepthRule::Percentile(p),
            None => DepthRule::Max,
        },
        ..RenderConfig::default()
    };
    render.validate()?;
    Ok((query, render))
}

pub fn build_store(a: &BuildStoreArgs) -> CliResult<()> {
    if !(a.frame_spacing >= 0.0) {
        return Err(CliError::usage("--frame-spacing must be >= 0"));
    }
    let opts = IngestOptions {
        thin_spacing: (a.frame_spacing > 0.0).then_some(a.frame_spacing),
    };
    let dirs: Vec<PathBuf> = sorted_entries(&a.input)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    if dirs.is_empty() {
        return Err(CliError::new(
            "invalid_argument",
            format!("{}: no traversal sub-directories", a.input.display()),
        ));
    }
    let mut store = TraversalStore::new();
    for dir in &dirs {
        let mut frames: Vec<FrameRecord> = Vec::new();
        for path in sorted_entries(dir)? {
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if !matches!(ext, "ply" | "bin" | "xyz") {
                continue;
            }
            let pose_path = path.with_extension("pose");
            let desc = read_pose_file(&pose_path)?;
            let ordinal = frames.len();
            let timestamp = desc.timestamp.unwrap_or(ordinal as f64);
            if let Some(prev) = frames.last() {
                if timestamp < prev.timestamp {
                    return Err(CliError::new(
                        "unordered_frames",
                        format!(
                            "{}: timestamp {timestamp} precedes the previous frame",
                            path.display()
                        ),
                    ));
                }
            }
            frames.push(FrameRecord::new(
                ordinal as u32,
                timestamp,
                desc.pose,
                read_points_file(&path)?,
            ));
        }
        if frames.is_empty() {
            return Err(CliError::new(
                "invalid_argument",
                format!("{}: no point files", dir.display()),
            ));
        }
        store
            .ingest_traversal_with(frames, opts)
            .map_err(|e| CliError::new(e.kind(), format!("{}: {e}", dir.display())))?;
    }
    store.save(&a.out)?;
    let frames: usize = store.traversals().map(|t| t.frames.len()).sum();
    let points: usize = store
        .traversals()
        .flat_map(|t| t.frames.iter().map(|f| f.points.len()))
        .sum();
    println!("traversals={}", store.len());
    println!("frames={frames}");
    println!("points={points}");
    println!("bytes={}", store.store_size_bytes(&store.traversal_ids())?);
    Ok(())
}

pub fn render(a: &RenderArgs) -> CliResult<()> {
    let (query, cfg) = query_config(&a.query)?;
    let mut store = TraversalStore::open(&a.store)?;
    let mut ego = read_pose_file(&a.pose)?.pose;
    let cams = load_cameras(&a.cameras)?;
    let noise = NoiseSpec::new(a.sigma_t, a.sigma_r, a.seed)?;
    if !noise.is_zero() || a.perturb_past {
        let mut rng = noise.rng();
        ego = perturb_pose(&ego, &noise, &mut rng);
        if a.perturb_past {
            store = store.map_poses(|f| perturb_pose(&f.pose, &noise, &mut rng));
        }
    }
    let out = render_all(&ego, &cams, &query, &store, &cfg)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    create_dir(&a.out)?;
    for m in &out.maps {
        let name = format!("t{}_c{}", m.traversal_id, m.camera_id);
        let path = a.out.join(format!("{name}.addm"));
        m.save(&path)?;
        if a.pgm {
            let pgm = a.out.join(format!("{name}.pgm"));
            let file = fs::File::create(&pgm).map_err(|e| io_err(&pgm, e))?;
            m.write_pgm(std::io::BufWriter::new(file))?;
        }
        println!(
            "map={} traversal={} camera={} covered={}",
            path.display(),
            m.traversal_id,
            m.camera_id,
            m.covered_pixels()
        );
    }
    println!("traversals={}", out.matches.len());
    println!("points_rendered={}", out.points_rendered);
    Ok(())
}

/// `t<traversal>_c<camera>` from a depth-map file stem.
fn parse_map_name(stem: &str) -> Option<(u64, usize)> {
    let (t, c) = stem.strip_prefix('t')?.split_once("_c")?;
    Some((t.parse().ok()?, c.parse().ok()?))
}

pub fn featurize(a: &FeaturizeArgs) -> CliResult<()> {
    if a.mode != "downavg" {
        return Err(CliError::usage(format!(
            "unknown featurizer mode `{}`; expected downavg",
            a.mode
        )));
    }
    let mut maps: Vec<(u64, usize, PathBuf)> = Vec::new();
    for path in sorted_entries(&a.depth_dir)? {
        if path.extension().and_then(|e| e.to_str()) != Some("addm") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let (t, c) = parse_map_name(stem).unwrap_or((maps.len() as u64, 0));
        maps.push((t, c, path));
    }
    if maps.is_empty() {
        return Err(CliError::new(
            "invalid_argument",
            format!("{}: no .addm depth maps", a.depth_dir.display()),
        ));
    }
    let camera = match a.camera {
        Some(c) => c,
        None => {
            let first = maps[0].1;
            if maps.iter().any(|m| m.1 != first) {
                return Err(CliError::usage(
                    "depth directory holds several cameras; pass --camera",
                ));
            }
            first
        }
    };
    let mut feats = Vec::new();
    for (t, _, path) in maps.iter().filter(|m| m.1 == camera) {
        let map = DepthMap::load(path)?;
        feats.push((*t, downavg_featurize(&map, a.scale)?));
    }
    if feats.is_empty() {
        return Err(CliError::new(
            "invalid_argument",
            format!("no depth maps for camera {camera}"),
        ));
    }
    let pooled = pool_traversals(&feats, a.pool)?;
    pooled.save(&a.out)?;
    let (c, h, w) = pooled.shape();
    println!("tensor={}", a.out.display());
    println!("shape={c}x{h}x{w}");
    println!("traversals={}", feats.len());
    Ok(())
}

pub fn bench(a: &BenchArgs) -> CliResult<()> {
    let (query, render) = query_config(&a.query)?;
    let store = TraversalStore::open(&a.store)?;
    let ego = read_pose_file(&a.pose)?.pose;
    let cams = load_cameras(&a.cameras)?;
    let cfg = BenchConfig {
        query: query.clone(),
        render,
        scale: a.scale,
        pool: a.pool,
        repeat: a.repeat.max(1),
    };
    let report = bench_pipeline(&store, &ego, &cams, &cfg)?;
    print!("{}", report.to_key_values());

    // render time at the full matched cloud versus its first half
    let matches = store.query_frames(ego.translation(), &query)?;
    let mut points = Vec::new();
    for m in &matches {
        points.extend_from_slice(densify(&store.matched_frames(m))?.cloud.points());
    }
    if points.len() >= 2 {
        let half = points[..points.len() / 2].to_vec();
        let cloud =
            |p: Vec<_>| DensifiedCloud::new(0, PointCloud::new(p, Frame::Global), Vec::new());
        let scaling = render_scaling(
            &cloud(half)?,
            &cloud(points)?,
            &ego,
            &cams[0],
            &render,
            cfg.repeat,
        )?;
        println!("scaling_small_points={}", scaling.small_points);
        println!("scaling_large_points={}", scaling.large_points);
        println!(
            "scaling_small_ms={:.4}",
            scaling.small_time.as_secs_f64() * 1e3
        );
        println!(
            "scaling_large_ms={:.4}",
            scaling.large_time.as_secs_f64() * 1e3
        );
        println!("scaling_linearity={:.4}", scaling.linearity());
    }
    Ok(())
}

pub fn score(a: &ScoreArgs) -> CliResult<()> {
    let ds = detection_score(a.map, &TpMetrics::new(a.ate, a.ase, a.aoe)?)?;
    println!("{ds:.4}");
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn synth(a: &SynthArgs) -> CliResult<()> {
    let scene = match &a.scene {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            SceneSpec::parse(&text)?
        }
        None => SceneSpec::demo_street(a.traversals, a.seed),
    };
    let traversals = scene.generate_traversals(a.traversals, a.frame_spacing)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("scene.txt"), &scene.to_text())?;

    if a.frames {
        for (n, frames) in traversals.iter().enumerate() {
            let dir = a.out.join("frames").join(format!("traversal_{n:03}"));
            create_dir(&dir)?;
            for f in frames {
                let stem = dir.join(format!("{:05}", f.frame_index));
                let bin = stem.with_extension("bin");
                let file = fs::File::create(&bin).map_err(|e| io_err(&bin, e))?;
                write_raw_xyz(std::io::BufWriter::new(file), &f.points)?;
                write_text(
                    &stem.with_extension("pose"),
                    &format_pose(&f.pose, Some(f.timestamp)),
                )?;
            }
        }
    }

    let mut store = TraversalStore::new();
    for frames in traversals {
        if !frames.is_empty() {
            store.ingest_traversal(frames)?;
        }
    }
    let store_path = a.out.join("store.adst");
    store.save(&store_path)?;

    let ego = match &a.pose {
        Some(p) => read_pose_file(p)?.pose,
        None => {
            let (p, heading) = scene.route_point(scene.route_length() / 2.0);
            RigidPose::from_yaw(heading, p)
        }
    };
    let cams = if a.cameras.is_empty() {
        vec![CameraModel::pinhole(
            400.0,
            400.0,
            400.0,
            192.0,
            800,
            384,
            mounted_camera_extrinsics(0.0, Vector3::new(1.0, 0.0, 1.6)),
        )?]
    } else {
        load_cameras(&a.cameras)?
    };
    let cfg = RenderConfig {
        max_depth: (a.max_depth != 0.0).then_some(a.max_depth),
        ..RenderConfig::default()
    };
    cfg.validate()?;
    write_text(&a.out.join("pose.txt"), &format_pose(&ego, None))?;
    for (i, cam) in cams.iter().enumerate() {
        write_text(&a.out.join(format!("cam{i}.txt")), &format_camera(cam))?;
        let gt = gt_depth(&scene, &ego, cam, &cfg).with_ids(0, i);
        gt.save(&a.out.join(format!("gt_c{i}.addm")))?;
    }
    println!("store={}", store_path.display());
    println!("traversals={}", store.len());
    println!("bytes={}", store.store_size_bytes(&store.traversal_ids())?);
    println!("cameras={}", cams.len());
    Ok(())
}
