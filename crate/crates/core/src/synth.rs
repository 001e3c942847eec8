//! Ray-cast synthetic RGB-D scenes with exact ground truth.
//!
//! Scenes are a floor plane (world Z = 0) plus boxes and vertical cylinders.
//! Every pixel ray is intersected analytically with all shapes; the nearest
//! hit wins.

use image::{Rgb, RgbImage};
use nalgebra::{Rotation3, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backends::{BBox, FixtureClassification, FixtureDetection, FixtureDocument};
use crate::bundle::FrameBundle;
use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, CameraPoint, PixelPoint, Pose, WorldPoint};
use crate::pointcloud::{DepthImage, Mask};

/// Score given to fixture detections generated from ground truth.
pub const FIXTURE_DETECTION_SCORE: f64 = 0.9;
/// Score given to fixture classifications generated from ground truth.
pub const FIXTURE_CLASSIFICATION_SCORE: f64 = 0.75;

const BACKGROUND: [u8; 3] = [24, 24, 32];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Extents along the object's local x, y, z axes.
    Box { size: [f64; 3] },
    /// Vertical cylinder.
    Cylinder { radius: f64, height: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub name: String,
    pub shape: Shape,
    /// World position of the center of the shape's base.
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw_deg: f64,
    #[serde(default)]
    pub category_hint: Option<String>,
    #[serde(default = "default_object_color")]
    pub color: [u8; 3],
    /// Label the fixture RGB detector reports for this object, if any.
    #[serde(default)]
    pub rgb_label: Option<String>,
    /// Label the fixture classifier reports for this object's depth segment.
    #[serde(default)]
    pub depth_label: Option<String>,
}

fn default_object_color() -> [u8; 3] {
    [200, 120, 60]
}

fn default_floor_color() -> [u8; 3] {
    [150, 150, 140]
}

fn default_frame_id() -> String {
    "synthetic".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "default_frame_id")]
    pub frame_id: String,
    pub camera: CameraSpec,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    /// Standard deviation of additive range noise, meters.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub invalid_pixel_fraction: f64,
    #[serde(default = "default_floor_color")]
    pub floor_color: [u8; 3],
}

impl SceneSpec {
    pub fn new(intrinsics: CameraIntrinsics, pose: Pose) -> Self {
        Self {
            frame_id: default_frame_id(),
            camera: CameraSpec { intrinsics, pose },
            objects: Vec::new(),
            noise_sigma: 0.0,
            invalid_pixel_fraction: 0.0,
            floor_color: default_floor_color(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.camera
            .intrinsics
            .validate()
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        if !(self.camera.pose.translation().z > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "camera height {} must be above the floor",
                self.camera.pose.translation().z
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidSpec("noise_sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.invalid_pixel_fraction) {
            return Err(Error::InvalidSpec("invalid_pixel_fraction must be in [0, 1]".into()));
        }
        for o in &self.objects {
            if !(o.position[2] >= 0.0) || !o.position.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidSpec(format!("object `{}` must rest at or above the floor", o.name)));
            }
            let dims_ok = match &o.shape {
                Shape::Box { size } => size.iter().all(|&s| s > 0.0 && s.is_finite()),
                Shape::Cylinder { radius, height } => *radius > 0.0 && *height > 0.0,
            };
            if !dims_ok {
                return Err(Error::InvalidSpec(format!("object `{}` has non-positive dimensions", o.name)));
            }
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::load(path, e.to_string()))
    }
}

impl SceneObject {
    /// Geometric center of the shape in world coordinates.
    pub fn center(&self) -> WorldPoint {
        let h = match self.shape {
            Shape::Box { size } => size[2],
            Shape::Cylinder { height, .. } => height,
        };
        WorldPoint::new(self.position[0], self.position[1], self.position[2] + 0.5 * h)
    }

    /// Nearest ray parameter `t > eps` at which `origin + t * dir` hits the shape.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let base = Vector3::from(self.position);
        match self.shape {
            Shape::Box { size } => {
                let to_local = Rotation3::from_axis_angle(&Vector3::z_axis(), -self.yaw_deg.to_radians());
                let o = to_local * (origin - base);
                let d = to_local * dir;
                let lo = [-0.5 * size[0], -0.5 * size[1], 0.0];
                let hi = [0.5 * size[0], 0.5 * size[1], size[2]];
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for a in 0..3 {
                    if d[a].abs() < 1e-15 {
                        if o[a] < lo[a] || o[a] > hi[a] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (lo[a] - o[a]) / d[a];
                    let t2 = (hi[a] - o[a]) / d[a];
                    t_near = t_near.max(t1.min(t2));
                    t_far = t_far.min(t1.max(t2));
                }
                (t_near <= t_far && t_near > 1e-9).then_some(t_near)
            }
            Shape::Cylinder { radius, height } => {
                let o = origin - base;
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > 1e-9 && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a = dir.x * dir.x + dir.y * dir.y;
                if a > 1e-18 {
                    let b = 2.0 * (o.x * dir.x + o.y * dir.y);
                    let c = o.x * o.x + o.y * o.y - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                            let z = o.z + t * dir.z;
                            if (0.0..=height).contains(&z) {
                                consider(t);
                            }
                        }
                    }
                }
                if dir.z.abs() > 1e-15 {
                    for cap in [0.0, height] {
                        let t = (cap - o.z) / dir.z;
                        let x = o.x + t * dir.x;
                        let y = o.y + t * dir.y;
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
        }
    }
}

/// Ground truth for one object.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectTruth {
    pub name: String,
    /// Valid pixels where this object is the nearest surface.
    pub mask: Mask,
    /// Geometric center of the shape.
    pub world_center: WorldPoint,
    /// Mean of the noiseless surface points under `mask`, camera frame.
    pub visible_centroid: Option<CameraPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub objects: Vec<ObjectTruth>,
    /// Floor plane in camera coordinates: `normal . q + offset = 0`.
    pub floor_normal: Vector3<f64>,
    pub floor_offset: f64,
    /// Noiseless depth per pixel, `0.0` where the ray hits nothing. Kept
    /// for invalidated pixels too.
    pub true_depth: Vec<f64>,
    /// Per-pixel hit: `None` for floor or miss, `Some(k)` for object `k`.
    pub hit_object: Vec<Option<usize>>,
    /// Valid floor pixels.
    pub floor_mask: Mask,
}

/// Renders `spec`. The same `(spec, seed)` always yields identical output.
pub fn render(spec: &SceneSpec, seed: u64) -> Result<(FrameBundle, GroundTruth)> {
    spec.validate()?;
    let k = spec.camera.intrinsics;
    let pose = spec.camera.pose;
    let (w, h) = (k.width, k.height);
    let n = w as usize * h as usize;
    let origin = pose.translation();
    let rot = pose.rotation();

    let mut true_depth = vec![0.0; n];
    let mut hit_object: Vec<Option<usize>> = vec![None; n];
    let mut floor_hit = vec![false; n];
    let mut rgb = RgbImage::from_pixel(w, h, Rgb(BACKGROUND));

    for v in 0..h {
        for u in 0..w {
            let i = (v * w + u) as usize;
            let ray_cam = k.pixel_ray(PixelPoint::new(u as f64, v as f64));
            let dir = rot * ray_cam;
            let mut best: Option<(f64, Option<usize>)> = None;
            if dir.z < 0.0 {
                best = Some((-origin.z / dir.z, None));
            }
            for (idx, obj) in spec.objects.iter().enumerate() {
                if let Some(t) = obj.intersect(&origin, &dir) {
                    if best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, Some(idx)));
                    }
                }
            }
            if let Some((t, hit)) = best {
                // The ray direction has unit camera Z, so t is the depth.
                true_depth[i] = t;
                hit_object[i] = hit;
                floor_hit[i] = hit.is_none();
                let color = match hit {
                    Some(idx) => spec.objects[idx].color,
                    None => spec.floor_color,
                };
                rgb.put_pixel(u, v, Rgb(color));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut depth = vec![0.0; n];
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        for v in 0..h {
            for u in 0..w {
                let i = (v * w + u) as usize;
                if true_depth[i] <= 0.0 {
                    continue;
                }
                let ray_len = k.pixel_ray(PixelPoint::new(u as f64, v as f64)).norm();
                let noisy = true_depth[i] + normal.sample(&mut rng) / ray_len;
                depth[i] = if noisy > 0.0 { noisy } else { 0.0 };
            }
        }
    } else {
        depth.copy_from_slice(&true_depth);
    }

    let n_invalid = (spec.invalid_pixel_fraction * n as f64).round() as usize;
    if n_invalid > 0 {
        for i in index::sample(&mut rng, n, n_invalid.min(n)) {
            depth[i] = 0.0;
        }
    }

    let valid = |i: usize| depth[i] > 0.0;
    let mut objects = Vec::with_capacity(spec.objects.len());
    for (idx, obj) in spec.objects.iter().enumerate() {
        let indices: Vec<usize> = (0..n).filter(|&i| valid(i) && hit_object[i] == Some(idx)).collect();
        let visible_centroid = if indices.is_empty() {
            None
        } else {
            let sum: Vector3<f64> = indices
                .iter()
                .map(|&i| {
                    let (u, v) = ((i as u32 % w) as f64, (i as u32 / w) as f64);
                    k.pixel_ray(PixelPoint::new(u, v)) * true_depth[i]
                })
                .sum();
            Some((sum / indices.len() as f64).into())
        };
        objects.push(ObjectTruth {
            name: obj.name.clone(),
            mask: Mask::from_indices(w, h, &indices)?,
            world_center: obj.center(),
            visible_centroid,
        });
    }
    let floor_indices: Vec<usize> = (0..n).filter(|&i| valid(i) && floor_hit[i]).collect();

    let depth = DepthImage::new(w, h, depth)?;
    let fixture = fixture_from_truth(spec, &objects)?;
    let bundle = FrameBundle {
        frame_id: spec.frame_id.clone(),
        rgb,
        depth,
        intrinsics: k,
        pose,
        fixture,
    };
    let truth = GroundTruth {
        objects,
        floor_normal: pose.up_in_camera(),
        floor_offset: origin.z,
        true_depth,
        hit_object,
        floor_mask: Mask::from_indices(w, h, &floor_indices)?,
    };
    Ok((bundle, truth))
}

/// Builds the fixture a perfect detector/classifier pair would produce:
/// RGB detections use the object's mask bounding box, classifications are
/// anchored at the projected visible centroid.
fn fixture_from_truth(spec: &SceneSpec, truth: &[ObjectTruth]) -> Result<Option<FixtureDocument>> {
    let labeled = spec
        .objects
        .iter()
        .any(|o| o.rgb_label.is_some() || o.depth_label.is_some());
    if !labeled {
        return Ok(None);
    }
    let mut doc = FixtureDocument {
        frame_id: spec.frame_id.clone(),
        ..Default::default()
    };
    for (obj, gt) in spec.objects.iter().zip(truth) {
        if let (Some(label), Some(bbox)) = (&obj.rgb_label, gt.mask.bounding_box()) {
            doc.detections.push(FixtureDetection {
                label: label.clone(),
                score: FIXTURE_DETECTION_SCORE,
                bbox,
            });
        }
        if let (Some(label), Some(c)) = (&obj.depth_label, gt.visible_centroid) {
            let px = project(c, &spec.camera.intrinsics)?;
            doc.classifications.push(FixtureClassification {
                pixel: [px.x, px.y],
                label: label.clone(),
                score: FIXTURE_CLASSIFICATION_SCORE,
            });
        }
    }
    Ok(Some(doc))
}

/// Summary of [`GroundTruth`] suitable for writing next to a bundle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruthSummary {
    pub floor_normal: [f64; 3],
    pub floor_offset: f64,
    pub objects: Vec<ObjectSummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub name: String,
    pub mask_area: usize,
    pub mask_bbox: Option<BBox>,
    pub world_center: [f64; 3],
    pub visible_centroid: Option<[f64; 3]>,
}

impl GroundTruth {
    pub fn summary(&self) -> GroundTruthSummary {
        GroundTruthSummary {
            floor_normal: self.floor_normal.into(),
            floor_offset: self.floor_offset,
            objects: self
                .objects
                .iter()
                .map(|o| ObjectSummary {
                    name: o.name.clone(),
                    mask_area: o.mask.area(),
                    mask_bbox: o.mask.bounding_box(),
                    world_center: [o.world_center.x, o.world_center.y, o.world_center.z],
                    visible_centroid: o.visible_centroid.map(|c| [c.x, c.y, c.z]),
                })
                .collect(),
        }
    }
}
