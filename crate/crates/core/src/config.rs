//! Pipeline configuration as a flat `key = value` document with dotted keys.
//!
//! ```text
//! # comment
//! roi_depth.estimator = double_threshold
//! ransac.inlier_tol = 0.015
//! ```
//!
//! Unknown or repeated keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fusion::{FusionParams, Taxonomy};
use crate::hazard::HazardConfig;
use crate::pointcloud::{RansacParams, RegionGrowParams};
use crate::roi_depth::{Estimator, EstimatorParams};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Fixture,
    External { address: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub ransac: RansacParams,
    pub region_grow: RegionGrowParams,
    pub roi_estimator: Estimator,
    pub roi_depth: EstimatorParams,
    pub fusion: FusionParams,
    pub taxonomy: Taxonomy,
    pub hazard: HazardConfig,
    pub detector: BackendKind,
    pub classifier: BackendKind,
    /// Crop enlargement factor for the classifier.
    pub roi_factor: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ransac: RansacParams::default(),
            region_grow: RegionGrowParams::default(),
            roi_estimator: Estimator::DoubleThreshold,
            roi_depth: EstimatorParams::default(),
            fusion: FusionParams::default(),
            taxonomy: Taxonomy::default(),
            hazard: HazardConfig::default(),
            detector: BackendKind::Fixture,
            classifier: BackendKind::Fixture,
            roi_factor: 3.0,
        }
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "ransac.iterations",
    "ransac.inlier_tol",
    "ransac.min_inlier_fraction",
    "ransac.max_tilt_deg",
    "ransac.max_scoring_points",
    "region_grow.max_neighbor_dist",
    "region_grow.min_segment_size",
    "roi_depth.estimator",
    "roi_depth.k_bins",
    "roi_depth.k_clusters",
    "roi_depth.x_b",
    "roi_depth.x_f",
    "roi_depth.max_kmeans_iters",
    "fusion.iou_threshold",
    "fusion.max_position_gap",
    "fusion.taxonomy",
    "hazard.h_max",
    "hazard.near_radius",
    "detector.backend",
    "detector.address",
    "classifier.backend",
    "classifier.address",
    "classifier.roi_factor",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}` has invalid value `{value}`")))
}

/// Splits a flat config document into key/value pairs.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", n + 1)));
        }
        if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
        }
    }
    Ok(pairs)
}

impl PipelineConfig {
    /// Parses a config document. Relative `fusion.taxonomy` paths resolve
    /// against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mut cfg = PipelineConfig::default();
        let mut detector_address = None;
        let mut classifier_address = None;
        let mut detector_backend = "fixture".to_string();
        let mut classifier_backend = "fixture".to_string();

        for (key, value) in &pairs {
            let (k, v) = (key.as_str(), value.as_str());
            match k {
                "ransac.iterations" => cfg.ransac.iterations = parse_value(k, v)?,
                "ransac.inlier_tol" => cfg.ransac.inlier_tol = parse_value(k, v)?,
                "ransac.min_inlier_fraction" => cfg.ransac.min_inlier_fraction = parse_value(k, v)?,
                "ransac.max_tilt_deg" => cfg.ransac.max_tilt_deg = parse_value(k, v)?,
                "ransac.max_scoring_points" => cfg.ransac.max_scoring_points = parse_value(k, v)?,
                "region_grow.max_neighbor_dist" => cfg.region_grow.max_neighbor_dist = parse_value(k, v)?,
                "region_grow.min_segment_size" => cfg.region_grow.min_segment_size = parse_value(k, v)?,
                "roi_depth.estimator" => cfg.roi_estimator = v.parse()?,
                "roi_depth.k_bins" => cfg.roi_depth.k_bins = parse_value(k, v)?,
                "roi_depth.k_clusters" => cfg.roi_depth.k_clusters = parse_value(k, v)?,
                "roi_depth.x_b" => cfg.roi_depth.x_b = parse_value(k, v)?,
                "roi_depth.x_f" => cfg.roi_depth.x_f = parse_value(k, v)?,
                "roi_depth.max_kmeans_iters" => cfg.roi_depth.max_kmeans_iters = parse_value(k, v)?,
                "fusion.iou_threshold" => cfg.fusion.iou_threshold = parse_value(k, v)?,
                "fusion.max_position_gap" => cfg.fusion.max_position_gap = parse_value(k, v)?,
                "fusion.taxonomy" => {
                    let path = PathBuf::from(v);
                    let path = match base_dir {
                        Some(dir) if path.is_relative() => dir.join(path),
                        _ => path,
                    };
                    cfg.taxonomy = Taxonomy::load(&path)?;
                }
                "hazard.h_max" => cfg.hazard.h_max = parse_value(k, v)?,
                "hazard.near_radius" => cfg.hazard.near_radius = parse_value(k, v)?,
                "detector.backend" => detector_backend = v.to_string(),
                "detector.address" => detector_address = Some(v.to_string()),
                "classifier.backend" => classifier_backend = v.to_string(),
                "classifier.address" => classifier_address = Some(v.to_string()),
                "classifier.roi_factor" => cfg.roi_factor = parse_value(k, v)?,
                _ => unreachable!("keys are checked against KNOWN_KEYS"),
            }
        }
        cfg.detector = backend_kind("detector", &detector_backend, detector_address)?;
        cfg.classifier = backend_kind("classifier", &classifier_backend, classifier_address)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent()).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.ransac;
        if r.iterations == 0 {
            return Err(Error::Config("ransac.iterations must be >= 1".into()));
        }
        if !(r.inlier_tol > 0.0) {
            return Err(Error::Config("ransac.inlier_tol must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&r.min_inlier_fraction) {
            return Err(Error::Config("ransac.min_inlier_fraction must be in [0, 1]".into()));
        }
        if !(r.max_tilt_deg > 0.0 && r.max_tilt_deg <= 180.0) {
            return Err(Error::Config("ransac.max_tilt_deg must be in (0, 180]".into()));
        }
        if r.max_scoring_points < 3 {
            return Err(Error::Config("ransac.max_scoring_points must be >= 3".into()));
        }
        if !(self.region_grow.max_neighbor_dist > 0.0) {
            return Err(Error::Config("region_grow.max_neighbor_dist must be > 0".into()));
        }
        if self.region_grow.min_segment_size == 0 {
            return Err(Error::Config("region_grow.min_segment_size must be >= 1".into()));
        }
        self.roi_depth.validate()?;
        if !(0.0..=1.0).contains(&self.fusion.iou_threshold) {
            return Err(Error::Config("fusion.iou_threshold must be in [0, 1]".into()));
        }
        if !(self.fusion.max_position_gap >= 0.0) {
            return Err(Error::Config("fusion.max_position_gap must be >= 0".into()));
        }
        if !(self.hazard.h_max >= 0.0) || !(self.hazard.near_radius >= 0.0) {
            return Err(Error::Config("hazard.h_max and hazard.near_radius must be >= 0".into()));
        }
        if !(self.roi_factor >= 1.0) || !self.roi_factor.is_finite() {
            return Err(Error::Config("classifier.roi_factor must be >= 1".into()));
        }
        Ok(())
    }
}

fn backend_kind(name: &str, kind: &str, address: Option<String>) -> Result<BackendKind> {
    match (kind, address) {
        ("fixture", None) => Ok(BackendKind::Fixture),
        ("fixture", Some(_)) => Err(Error::Config(format!(
            "{name}.address is only valid with {name}.backend = external"
        ))),
        ("external", Some(address)) => Ok(BackendKind::External { address }),
        ("external", None) => Err(Error::Config(format!(
            "{name}.backend = external requires {name}.address"
        ))),
        (other, _) => Err(Error::Config(format!(
            "{name}.backend must be fixture or external, got `{other}`"
        ))),
    }
}
