//! Per-frame orchestration of the RGB and depth paths, fusion and hazard
//! classification.
//!
//! ```text
//! RGB path:   detect -> ROI depth -> back_project -> camera_to_world
//! depth path: depth_to_cloud -> fit_floor_plane -> remove_plane -> region_grow
//!             -> segment_mask -> expand_roi crop -> classify -> centroid -> camera_to_world
//! both:       merge_paths -> classify_hazard
//! ```
//!
//! The two paths only meet in `merge_paths`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{
    crop_image, expand_roi, validate_detections, Classifier, Crop, Detection, Detector,
    ExternalClassifier, ExternalDetector, FixtureClassifier, FixtureDetector, Source,
};
use crate::bundle::FrameBundle;
use crate::config::{BackendKind, PipelineConfig};
use crate::error::{Error, Result};
use crate::fusion::{merge_paths, Observation};
use crate::geometry::{back_project, camera_to_world, project, ray_ground_intersect};
use crate::hazard::{classify_hazard, HazardReport, OccupancyMap};
use crate::pointcloud::{
    depth_to_cloud, fit_floor_plane, region_grow, remove_plane, segment_mask, ObstacleSegment,
};
use crate::roi_depth::{estimate, RoiDepthSample};

pub struct Backends {
    pub detector: Box<dyn Detector>,
    pub classifier: Box<dyn Classifier>,
}

impl Backends {
    /// Builds the configured backends. Fixture backends are loaded from the
    /// bundle's own fixture document, when it has one.
    pub fn for_bundle(cfg: &PipelineConfig, bundle: &FrameBundle) -> Result<Self> {
        let (w, h) = bundle.rgb.dimensions();
        let detector: Box<dyn Detector> = match &cfg.detector {
            BackendKind::Fixture => {
                let mut d = FixtureDetector::new();
                if let Some(doc) = &bundle.fixture {
                    d.register(doc, w, h)?;
                }
                Box::new(d)
            }
            BackendKind::External { address } => Box::new(ExternalDetector::new(address.clone())),
        };
        let classifier: Box<dyn Classifier> = match &cfg.classifier {
            BackendKind::Fixture => {
                let mut c = FixtureClassifier::new();
                if let Some(doc) = &bundle.fixture {
                    c.register(doc, w, h)?;
                }
                Box::new(c)
            }
            BackendKind::External { address } => Box::new(ExternalClassifier::new(address.clone())),
        };
        Ok(Self {
            detector,
            classifier,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FloorSummary {
    pub normal: [f64; 3],
    pub offset: f64,
    pub inliers: usize,
}

/// Counts and models produced along the way.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub rgb_detections: usize,
    /// RGB detections localized by intersecting their ray with the floor.
    pub rgb_ray_fallbacks: usize,
    pub cloud_points: usize,
    pub floor: Option<FloorSummary>,
    pub remaining_points: usize,
    pub segments: usize,
    pub fused_objects: usize,
}

/// Wall-clock duration of one stage, milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

#[derive(Clone, Debug)]
pub struct FrameResult {
    pub report: HazardReport,
    pub summary: StageSummary,
    pub timings: Vec<StageTiming>,
    pub warnings: Vec<String>,
    pub rgb_observations: Vec<Observation>,
    pub depth_observations: Vec<Observation>,
    pub segments: Vec<ObstacleSegment>,
}

impl FrameResult {
    pub fn total_ms(&self) -> f64 {
        self.timings
            .iter()
            .find(|t| t.stage == "total")
            .map_or(0.0, |t| t.ms)
    }
}

struct Stopwatch {
    timings: Vec<StageTiming>,
    last: Instant,
}

impl Stopwatch {
    fn new() -> Self {
        Self {
            timings: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.into(),
            ms: (now - self.last).as_secs_f64() * 1e3,
        });
        self.last = now;
    }
}

struct RgbPathOutput {
    observations: Vec<Observation>,
    detections: usize,
    ray_fallbacks: usize,
}

fn rgb_path(
    bundle: &FrameBundle,
    cfg: &PipelineConfig,
    detector: &dyn Detector,
    clock: &mut Stopwatch,
    warnings: &mut Vec<String>,
) -> Result<RgbPathOutput> {
    let (w, h) = bundle.rgb.dimensions();
    let detections = detector.detect(&bundle.frame_id, &bundle.rgb)?;
    validate_detections(&detections, w, h)?;
    clock.lap("rgb.detect");

    let k = &bundle.intrinsics;
    let mut observations = Vec::with_capacity(detections.len());
    let mut ray_fallbacks = 0;
    for det in &detections {
        let center = det.bbox.center();
        let sample = RoiDepthSample::new(bundle.depth.roi_values(&det.bbox));
        let from_depth = estimate(cfg.roi_estimator, &sample, &cfg.roi_depth)
            .and_then(|z| back_project(center, z, k))
            .map(|q| camera_to_world(q, &bundle.pose));
        let position = match from_depth {
            Ok(p) => p,
            Err(_) => match ray_ground_intersect(center, k, &bundle.pose) {
                Ok(p) => {
                    ray_fallbacks += 1;
                    p
                }
                Err(e) => {
                    warnings.push(format!("rgb detection `{}` could not be localized: {e}", det.label));
                    continue;
                }
            },
        };
        observations.push(Observation {
            detection: Detection {
                source: Source::RgbPath,
                ..det.clone()
            },
            position,
        });
    }
    clock.lap("rgb.localize");
    Ok(RgbPathOutput {
        observations,
        detections: detections.len(),
        ray_fallbacks,
    })
}

struct DepthPathOutput {
    observations: Vec<Observation>,
    segments: Vec<ObstacleSegment>,
    cloud_points: usize,
    floor: Option<FloorSummary>,
    remaining_points: usize,
}

fn depth_path(
    bundle: &FrameBundle,
    cfg: &PipelineConfig,
    classifier: &dyn Classifier,
    seed: u64,
    clock: &mut Stopwatch,
    warnings: &mut Vec<String>,
) -> Result<DepthPathOutput> {
    let k = &bundle.intrinsics;
    let (w, h) = (k.width, k.height);
    let cloud = depth_to_cloud(&bundle.depth, k)?;
    let cloud_points = cloud.point_count();
    clock.lap("depth.cloud");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = match fit_floor_plane(&cloud, &cfg.ransac, Some(bundle.pose.up_in_camera()), &mut rng) {
        Ok(p) => p,
        Err(Error::NoFloorFound(msg)) => {
            warnings.push(format!("no floor found, depth path skipped: {msg}"));
            clock.lap("depth.floor");
            return Ok(DepthPathOutput {
                observations: Vec::new(),
                segments: Vec::new(),
                cloud_points,
                floor: None,
                remaining_points: 0,
            });
        }
        Err(e) => return Err(e),
    };
    let floor = FloorSummary {
        normal: plane.normal,
        offset: plane.offset,
        inliers: plane.inliers.len(),
    };
    let remaining = remove_plane(&cloud, &plane, cfg.ransac.inlier_tol);
    clock.lap("depth.floor");

    let segments = region_grow(&remaining, &cfg.region_grow);
    clock.lap("depth.segment");

    let mut observations = Vec::with_capacity(segments.len());
    for seg in &segments {
        let mask = segment_mask(seg, w, h)?;
        let bbox = mask.bounding_box().expect("segments are non-empty");
        let roi = expand_roi(&bbox, cfg.roi_factor, w, h);
        let image = crop_image(&bundle.rgb, &roi)
            .ok_or_else(|| Error::InvalidArgument("segment crop is empty".into()))?;
        let crop = Crop {
            frame_id: bundle.frame_id.clone(),
            image,
            roi,
            anchor: project(seg.centroid, k)?,
        };
        let class = classifier.classify(&crop)?;
        observations.push(Observation {
            detection: Detection {
                bbox,
                label: class.label,
                score: class.score,
                source: Source::DepthPath,
            },
            position: camera_to_world(seg.centroid, &bundle.pose),
        });
    }
    clock.lap("depth.classify");

    Ok(DepthPathOutput {
        observations,
        remaining_points: remaining.point_count(),
        segments,
        cloud_points,
        floor: Some(floor),
    })
}

/// Runs both paths on one frame, fuses them and grades every object.
/// `seed` drives the floor-plane RanSaC; the same inputs and seed always
/// give the same report.
pub fn process_frame(
    bundle: &FrameBundle,
    cfg: &PipelineConfig,
    map: &OccupancyMap,
    backends: &Backends,
    seed: u64,
) -> Result<FrameResult> {
    bundle.validate()?;
    let start = Instant::now();
    let mut clock = Stopwatch::new();
    let mut warnings = Vec::new();

    let rgb = rgb_path(bundle, cfg, backends.detector.as_ref(), &mut clock, &mut warnings)?;
    let depth = depth_path(bundle, cfg, backends.classifier.as_ref(), seed, &mut clock, &mut warnings)?;

    let fused = merge_paths(&rgb.observations, &depth.observations, &cfg.taxonomy, &cfg.fusion);
    clock.lap("fusion");
    let report = classify_hazard(&bundle.frame_id, &fused, map, &cfg.hazard);
    clock.lap("hazard");

    let mut timings = clock.timings;
    timings.push(StageTiming {
        stage: "total".into(),
        ms: start.elapsed().as_secs_f64() * 1e3,
    });

    Ok(FrameResult {
        summary: StageSummary {
            rgb_detections: rgb.detections,
            rgb_ray_fallbacks: rgb.ray_fallbacks,
            cloud_points: depth.cloud_points,
            floor: depth.floor,
            remaining_points: depth.remaining_points,
            segments: depth.segments.len(),
            fused_objects: fused.len(),
        },
        report,
        timings,
        warnings,
        rgb_observations: rgb.observations,
        depth_observations: depth.observations,
        segments: depth.segments,
    })
}
