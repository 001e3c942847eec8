#![allow(dead_code)]

use std::path::PathBuf;

use fallwatch::backends::{BBox, Detection, Source};
use fallwatch::fusion::{Category, Observation, Taxonomy};
use fallwatch::geometry::{CameraIntrinsics, Pose, WorldPoint};
use fallwatch::hazard::{RuleFacts, Severity};
use fallwatch::synth::{SceneObject, SceneSpec, Shape};
use nalgebra::Vector3;
use rand::Rng;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_dir() -> PathBuf {
    fixtures_dir().join("frames/golden_scene")
}

pub fn golden_expected() -> PathBuf {
    fixtures_dir().join("expected/golden_scene.json")
}

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(285.0, 285.0, 159.5, 119.5, 320, 240).unwrap()
}

pub fn object(name: &str, shape: Shape, x: f64, y: f64, yaw_deg: f64) -> SceneObject {
    SceneObject {
        name: name.into(),
        shape,
        position: [x, y, 0.0],
        yaw_deg,
        category_hint: None,
        color: [200, 120, 60],
        rgb_label: None,
        depth_label: None,
    }
}

/// Camera at `height` looking along +X, pitched `pitch_deg` down, with
/// `n` random boxes and cylinders on the floor in front of it.
pub fn random_floor_scene<R: Rng>(rng: &mut R, pitch_deg: f64, height: f64, sigma: f64, n: usize) -> SceneSpec {
    let pose = Pose::looking(Vector3::new(0.0, 0.0, height), 0.0, pitch_deg.to_radians());
    let mut spec = SceneSpec::new(intrinsics(), pose);
    spec.noise_sigma = sigma;
    let ahead = height / pitch_deg.to_radians().tan();
    for k in 0..n {
        let x = ahead + rng.random_range(-0.3..0.3);
        let y = rng.random_range(-0.4..0.4);
        let shape = if rng.random_bool(0.5) {
            Shape::Box {
                size: [
                    rng.random_range(0.1..0.3),
                    rng.random_range(0.1..0.3),
                    rng.random_range(0.05..0.3),
                ],
            }
        } else {
            Shape::Cylinder {
                radius: rng.random_range(0.05..0.15),
                height: rng.random_range(0.05..0.3),
            }
        };
        spec.objects
            .push(object(&format!("obj{k}"), shape, x, y, rng.random_range(0.0..90.0)));
    }
    spec
}

/// `n` objects (1..=5) spaced 0.45 m apart along a line across the view,
/// with alternating shapes.
pub fn separated_objects_scene(n: usize, sigma: f64) -> SceneSpec {
    let pose = Pose::looking(Vector3::new(0.0, 0.0, 1.2), 0.0, 35f64.to_radians());
    let mut spec = SceneSpec::new(intrinsics(), pose);
    spec.noise_sigma = sigma;
    let ahead = 1.2 / 35f64.to_radians().tan();
    for k in 0..n {
        let y = (k as f64 - (n as f64 - 1.0) / 2.0) * 0.45;
        let shape = if k % 2 == 0 {
            Shape::Box { size: [0.2, 0.2, 0.25] }
        } else {
            Shape::Cylinder {
                radius: 0.1,
                height: 0.3,
            }
        };
        spec.objects
            .push(object(&format!("obj{k}"), shape, ahead, y, 20.0 * k as f64));
    }
    spec
}

/// Angle between two directions, degrees.
pub fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos().to_degrees()
}

/// The rule table written out cell by cell.
pub fn expected_severity(f: &RuleFacts) -> Severity {
    use Category::*;
    match (f.category, f.on_floor, f.near_occupied) {
        (_, false, _) => Severity::None,
        (Furniture, true, true) => Severity::None,
        (Furniture, true, false) => Severity::High,
        (Animal, true, _) => Severity::Moderate,
        (SmallObject, true, _) => Severity::High,
        (Unknown, true, _) => Severity::High,
    }
}

pub fn observation(label: &str, source: Source, bbox: [f64; 4], position: [f64; 3]) -> Observation {
    Observation {
        detection: Detection {
            bbox: BBox::try_from(bbox).unwrap(),
            label: label.into(),
            score: 0.5,
            source,
        },
        position: WorldPoint::new(position[0], position[1], position[2]),
    }
}

/// Random observations on a coarse grid so that IoU and distance ties occur.
pub fn random_observations<R: Rng>(rng: &mut R, source: Source, n: usize) -> Vec<Observation> {
    const LABELS: [&str; 5] = ["cat", "chair", "book", "qwerty", "tabby"];
    (0..n)
        .map(|_| {
            let x = rng.random_range(0..6) as f64 * 10.0;
            let y = rng.random_range(0..4) as f64 * 10.0;
            let w = rng.random_range(1..4) as f64 * 10.0;
            let h = rng.random_range(1..4) as f64 * 10.0;
            let pos = [
                rng.random_range(0..8) as f64 * 0.1,
                rng.random_range(0..8) as f64 * 0.1,
                0.0,
            ];
            observation(LABELS[rng.random_range(0..LABELS.len())], source, [x, y, x + w, y + h], pos)
        })
        .collect()
}

fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = (a.x_max - a.x_min) * (a.y_max - a.y_min) + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Brute-force pairing: repeatedly scan every admissible unused pair and
/// take the best one until none is left.
pub fn oracle_pairs(
    rgb: &[Observation],
    depth: &[Observation],
    taxonomy: &Taxonomy,
    iou_threshold: f64,
    max_gap: f64,
) -> Vec<(usize, usize)> {
    let cat = |o: &Observation| taxonomy.map_label(&o.detection.label, o.detection.source);
    let admissible = |i: usize, j: usize| {
        let (a, b) = (cat(&rgb[i]), cat(&depth[j]));
        let compatible = a == b || a == Category::Unknown || b == Category::Unknown;
        let iou = box_iou(&rgb[i].detection.bbox, &depth[j].detection.bbox);
        let d = rgb[i].position.distance(&depth[j].position);
        compatible && (iou >= iou_threshold || d <= max_gap)
    };
    // Larger is better: IoU, then nearness, then the lexicographically
    // smaller pair of top-left corners, then smaller indices.
    let better = |p: (usize, usize), q: (usize, usize)| -> bool {
        let iou = |(i, j): (usize, usize)| box_iou(&rgb[i].detection.bbox, &depth[j].detection.bbox);
        let dist = |(i, j): (usize, usize)| rgb[i].position.distance(&depth[j].position);
        let corners = |(i, j): (usize, usize)| {
            let a = (rgb[i].detection.bbox.x_min, rgb[i].detection.bbox.y_min);
            let b = (depth[j].detection.bbox.x_min, depth[j].detection.bbox.y_min);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            [lo.0, lo.1, hi.0, hi.1]
        };
        if iou(p) != iou(q) {
            return iou(p) > iou(q);
        }
        if dist(p) != dist(q) {
            return dist(p) < dist(q);
        }
        let (cp, cq) = (corners(p), corners(q));
        if cp != cq {
            return cp.partial_cmp(&cq) == Some(std::cmp::Ordering::Less);
        }
        p < q
    };
    let mut rgb_free = vec![true; rgb.len()];
    let mut depth_free = vec![true; depth.len()];
    let mut pairs = Vec::new();
    loop {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..rgb.len() {
            for j in 0..depth.len() {
                if rgb_free[i] && depth_free[j] && admissible(i, j) && best.is_none_or(|b| better((i, j), b)) {
                    best = Some((i, j));
                }
            }
        }
        match best {
            Some((i, j)) => {
                rgb_free[i] = false;
                depth_free[j] = false;
                pairs.push((i, j));
            }
            None => break,
        }
    }
    pairs.sort();
    pairs
}

/// Normally distributed sample via Box-Muller, independent of the crate's
/// own noise source.
pub fn gaussian<R: Rng>(rng: &mut R, mean: f64, sigma: f64) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    mean + sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Floor fit, floor removal and region growing with default parameters.
/// Returns each segment's mask and camera-frame centroid.
pub fn segment_scene(
    spec: &SceneSpec,
    seed: u64,
) -> (Vec<(fallwatch::pointcloud::Mask, Vector3<f64>)>, fallwatch::synth::GroundTruth) {
    use fallwatch::pointcloud::{
        depth_to_cloud, fit_floor_plane, region_grow, remove_plane, segment_mask, RansacParams, RegionGrowParams,
    };
    use rand::SeedableRng;
    let (bundle, truth) = fallwatch::synth::render(spec, seed).unwrap();
    let k = bundle.intrinsics;
    let cloud = depth_to_cloud(&bundle.depth, &k).unwrap();
    let plane = fit_floor_plane(
        &cloud,
        &RansacParams::default(),
        Some(bundle.pose.up_in_camera()),
        &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap();
    let rest = remove_plane(&cloud, &plane, RansacParams::default().inlier_tol);
    let segments = region_grow(&rest, &RegionGrowParams::default());
    let out = segments
        .iter()
        .map(|s| (segment_mask(s, k.width, k.height).unwrap(), s.centroid.coords()))
        .collect();
    (out, truth)
}

/// Worst per-object mask IoU and centroid error for an `n`-object scene,
/// or an error when the segment count is wrong.
pub fn region_growing_scores(n: usize) -> Result<(f64, f64), String> {
    let spec = separated_objects_scene(n, 0.002);
    let (segments, truth) = segment_scene(&spec, n as u64);
    if segments.len() != n {
        return Err(format!("{n} objects gave {} segments", segments.len()));
    }
    let mut worst_iou = f64::INFINITY;
    let mut worst_err: f64 = 0.0;
    for gt in &truth.objects {
        let (mask, centroid) = segments
            .iter()
            .max_by(|a, b| a.0.iou(&gt.mask).total_cmp(&b.0.iou(&gt.mask)))
            .unwrap();
        worst_iou = worst_iou.min(mask.iou(&gt.mask));
        worst_err = worst_err.max((centroid - gt.visible_centroid.unwrap().coords()).norm());
    }
    Ok((worst_iou, worst_err))
}

/// Runs `merge_paths` on a random instance (at most 6 observations per
/// path) and checks it against [`oracle_pairs`] and the merge invariants.
pub fn check_merge_instance(seed: u64) -> Result<(), String> {
    use fallwatch::fusion::{merge_paths, FusionParams};
    use rand::SeedableRng;
    use std::collections::BTreeSet;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let nr = rng.random_range(0..=6);
    let nd = rng.random_range(0..=6);
    let rgb = random_observations(&mut rng, Source::RgbPath, nr);
    let depth = random_observations(&mut rng, Source::DepthPath, nd);
    let taxonomy = Taxonomy::default();
    let params = FusionParams::default();
    let out = merge_paths(&rgb, &depth, &taxonomy, &params);

    let expected = oracle_pairs(&rgb, &depth, &taxonomy, params.iou_threshold, params.max_position_gap);
    let mut got: Vec<(usize, usize)> = out
        .iter()
        .filter_map(|o| Some((o.rgb_index?, o.depth_index?)))
        .collect();
    got.sort();
    if got != expected {
        return Err(format!("seed {seed}: pairs {got:?}, oracle {expected:?}"));
    }
    let rgb_seen: BTreeSet<usize> = out.iter().filter_map(|o| o.rgb_index).collect();
    let depth_seen: BTreeSet<usize> = out.iter().filter_map(|o| o.depth_index).collect();
    if out.len() != nr + nd - expected.len() || rgb_seen.len() != nr || depth_seen.len() != nd {
        return Err(format!("seed {seed}: inputs lost or duplicated"));
    }
    for o in &out {
        if let (Some(i), Some(j)) = (o.rgb_index, o.depth_index) {
            let ok = o.position == depth[j].position
                && o.bbox == rgb[i].detection.bbox.union(&depth[j].detection.bbox)
                && o.sources == BTreeSet::from([Source::RgbPath, Source::DepthPath]);
            if !ok {
                return Err(format!("seed {seed}: merged object ({i}, {j}) malformed"));
            }
        }
    }
    Ok(())
}

/// `n` depth readings split between `(depth, fraction)` modes with
/// Gaussian spread `sigma`.
pub fn mixture<R: Rng>(rng: &mut R, n: usize, parts: &[(f64, f64)], sigma: f64) -> Vec<f64> {
    let mut values = Vec::with_capacity(n);
    for &(depth, fraction) in parts {
        let count = (fraction * n as f64).round() as usize;
        for _ in 0..count {
            values.push(gaussian(rng, depth, sigma));
        }
    }
    values
}

/// 70 % object, 30 % background 0.5 to 2.5 m behind it. Returns the true
/// object depth and the readings.
pub fn seventy_thirty<R: Rng>(rng: &mut R) -> (f64, Vec<f64>) {
    let object = rng.random_range(0.8..3.5);
    let background = object + rng.random_range(0.5..2.5);
    (object, mixture(rng, 400, &[(object, 0.7), (background, 0.3)], 0.01))
}

/// Foreground split 60/40 between the object and an occluder 0.6 to 1.0 m
/// in front of it, plus 10 % background 1.5 m behind the object.
pub fn occluded<R: Rng>(rng: &mut R) -> (f64, Vec<f64>) {
    let object = rng.random_range(1.2..3.0);
    let occluder = object - rng.random_range(0.6..1.0);
    let parts = [(object, 0.54), (occluder, 0.36), (object + 1.5, 0.1)];
    (object, mixture(rng, 500, &parts, 0.01))
}
