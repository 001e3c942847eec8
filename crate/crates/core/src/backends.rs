//! Detector and classifier interfaces with deterministic fixture backends.
//!
//! The RGB detector and the crop classifier are neural networks in a real
//! deployment. Here they sit behind [`Detector`] and [`Classifier`]; the
//! fixture implementations replay per-frame JSON documents, and the external
//! adapters forward requests to an inference process over TCP.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::time::Duration;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelPoint;

/// Default radius within which a fixture classification matches a crop
/// anchor, pixels.
pub const FIXTURE_MATCH_RADIUS_PX: f64 = 10.0;

/// Axis-aligned pixel box. Covers pixel `(u, v)` when
/// `x_min <= u < x_max` and `y_min <= v < y_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || !(x_min < x_max) || !(y_min < y_max) {
            return Err(Error::Validation(format!(
                "invalid bbox [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= width as f64
            && self.y_max <= height as f64
    }

    /// Integer pixel ranges covered by the box, clipped to the image.
    pub fn pixel_ranges(
        &self,
        width: u32,
        height: u32,
    ) -> (std::ops::Range<u32>, std::ops::Range<u32>) {
        let clip = |v: f64, hi: u32| v.ceil().clamp(0.0, hi as f64) as u32;
        (
            clip(self.x_min, width)..clip(self.x_max, width),
            clip(self.y_min, height)..clip(self.y_max, height),
        )
    }
}

/// Which processing path produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    RgbPath,
    DepthPath,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::RgbPath => "rgb_path",
            Source::DepthPath => "depth_path",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub label: String,
    pub score: f64,
    pub source: Source,
}

impl Detection {
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.label.trim().is_empty() {
            return Err(Error::Validation("detection label is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::Validation(format!(
                "detection `{}` score {} outside [0, 1]",
                self.label, self.score
            )));
        }
        if !self.bbox.within(width, height) {
            return Err(Error::Validation(format!(
                "detection `{}` bbox {:?} outside {width}x{height} image",
                self.label,
                <[f64; 4]>::from(self.bbox)
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub label: String,
    pub score: f64,
}

impl ClassificationResult {
    pub fn unknown() -> Self {
        Self {
            label: "unknown".into(),
            score: 0.0,
        }
    }
}

/// Image region handed to a classifier. `anchor` is the pixel the crop was
/// built around (projected segment centroid).
#[derive(Clone, Debug)]
pub struct Crop {
    pub frame_id: String,
    pub image: RgbImage,
    pub roi: BBox,
    pub anchor: PixelPoint,
}

pub trait Detector: Send + Sync {
    fn detect(&self, frame_id: &str, rgb: &RgbImage) -> Result<Vec<Detection>>;
}

pub trait Classifier: Send + Sync {
    fn classify(&self, crop: &Crop) -> Result<ClassificationResult>;
}

/// Checks every detection against the image bounds; backends are not
/// trusted to do so.
pub fn validate_detections(detections: &[Detection], width: u32, height: u32) -> Result<()> {
    detections.iter().try_for_each(|d| d.validate(width, height))
}

/// Scales `b` by `factor` about its center and clips it to the image.
pub fn expand_roi(b: &BBox, factor: f64, width: u32, height: u32) -> BBox {
    let factor = factor.max(1.0);
    let c = b.center();
    let hw = 0.5 * b.width() * factor;
    let hh = 0.5 * b.height() * factor;
    let clipped = BBox {
        x_min: (c.x - hw).max(0.0),
        y_min: (c.y - hh).max(0.0),
        x_max: (c.x + hw).min(width as f64),
        y_max: (c.y + hh).min(height as f64),
    };
    // Never shrink past the original, even if it pokes out of the image.
    clipped.union(b)
}

/// Copies the pixels covered by `roi`. Returns `None` when nothing is covered.
pub fn crop_image(rgb: &RgbImage, roi: &BBox) -> Option<RgbImage> {
    let (xs, ys) = roi.pixel_ranges(rgb.width(), rgb.height());
    if xs.is_empty() || ys.is_empty() {
        return None;
    }
    Some(image::imageops::crop_imm(rgb, xs.start, ys.start, xs.len() as u32, ys.len() as u32).to_image())
}

/// On-disk fixture for one frame bundle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureDocument {
    pub frame_id: String,
    #[serde(default)]
    pub detections: Vec<FixtureDetection>,
    #[serde(default)]
    pub classifications: Vec<FixtureClassification>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureDetection {
    pub label: String,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureClassification {
    /// Segment centroid pixel `[u, v]` the mapping applies to.
    pub pixel: [f64; 2],
    pub label: String,
    pub score: f64,
}

impl FixtureDocument {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::load(path, e.to_string()))
    }

    /// Rejects boxes outside the image, bad scores and empty labels.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        validate_detections(&self.rgb_detections(), width, height)?;
        for c in &self.classifications {
            if c.label.trim().is_empty() || !(0.0..=1.0).contains(&c.score) {
                return Err(Error::Validation(format!(
                    "classification `{}` at {:?} has empty label or score outside [0, 1]",
                    c.label, c.pixel
                )));
            }
        }
        Ok(())
    }

    pub fn rgb_detections(&self) -> Vec<Detection> {
        self.detections
            .iter()
            .map(|d| Detection {
                bbox: d.bbox,
                label: d.label.clone(),
                score: d.score,
                source: Source::RgbPath,
            })
            .collect()
    }
}

/// Replays fixture detections by frame id.
#[derive(Clone, Debug, Default)]
pub struct FixtureDetector {
    frames: HashMap<String, Vec<Detection>>,
}

impl FixtureDetector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates the document against the image size and registers it.
    pub fn register(&mut self, doc: &FixtureDocument, width: u32, height: u32) -> Result<()> {
        doc.validate(width, height)?;
        self.frames.insert(doc.frame_id.clone(), doc.rgb_detections());
        Ok(())
    }
}

impl Detector for FixtureDetector {
    fn detect(&self, frame_id: &str, _rgb: &RgbImage) -> Result<Vec<Detection>> {
        self.frames
            .get(frame_id)
            .cloned()
            .ok_or_else(|| Error::MissingFixture(frame_id.to_string()))
    }
}

/// Maps crops to labels by nearest fixture pixel within a radius.
#[derive(Clone, Debug)]
pub struct FixtureClassifier {
    frames: HashMap<String, Vec<FixtureClassification>>,
    radius_px: f64,
}

impl Default for FixtureClassifier {
    fn default() -> Self {
        Self {
            frames: HashMap::new(),
            radius_px: FIXTURE_MATCH_RADIUS_PX,
        }
    }
}

impl FixtureClassifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_radius(radius_px: f64) -> Self {
        Self {
            radius_px,
            ..Self::default()
        }
    }

    pub fn register(&mut self, doc: &FixtureDocument, width: u32, height: u32) -> Result<()> {
        doc.validate(width, height)?;
        self.frames
            .insert(doc.frame_id.clone(), doc.classifications.clone());
        Ok(())
    }
}

impl Classifier for FixtureClassifier {
    fn classify(&self, crop: &Crop) -> Result<ClassificationResult> {
        if crop.image.width() == 0 || crop.image.height() == 0 {
            return Err(Error::InvalidArgument("empty crop".into()));
        }
        let entries = self
            .frames
            .get(&crop.frame_id)
            .ok_or_else(|| Error::MissingFixture(crop.frame_id.clone()))?;
        let best = entries
            .iter()
            .map(|c| (PixelPoint::new(c.pixel[0], c.pixel[1]).distance(&crop.anchor), c))
            .filter(|(d, _)| *d <= self.radius_px)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        Ok(match best {
            Some((_, c)) => ClassificationResult {
                label: c.label.clone(),
                score: c.score,
            },
            None => ClassificationResult::unknown(),
        })
    }
}

/// Header line of an external inference request; the raw RGB8 pixels
/// (`width * height * 3` bytes, row-major) follow immediately.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExternalRequest {
    pub op: String,
    pub frame_id: String,
    pub width: u32,
    pub height: u32,
    pub rgb_len: usize,
}

#[derive(Debug, Deserialize)]
struct ExternalDetectReply {
    #[serde(default)]
    detections: Vec<FixtureDetection>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ExternalClassifyReply {
    label: Option<String>,
    score: Option<f64>,
    #[serde(default)]
    error: Option<String>,
}

fn exchange(address: &str, timeout: Duration, op: &str, frame_id: &str, rgb: &RgbImage) -> Result<String> {
    let backend_err = |e: std::io::Error| Error::Backend(format!("{address}: {e}"));
    let mut stream = TcpStream::connect(address).map_err(backend_err)?;
    stream.set_read_timeout(Some(timeout)).map_err(backend_err)?;
    stream.set_write_timeout(Some(timeout)).map_err(backend_err)?;
    let header = ExternalRequest {
        op: op.into(),
        frame_id: frame_id.into(),
        width: rgb.width(),
        height: rgb.height(),
        rgb_len: rgb.as_raw().len(),
    };
    let mut line = serde_json::to_string(&header).expect("request serializes");
    line.push('\n');
    stream.write_all(line.as_bytes()).map_err(backend_err)?;
    stream.write_all(rgb.as_raw()).map_err(backend_err)?;
    stream.flush().map_err(backend_err)?;
    let mut reply = String::new();
    BufReader::new(stream).read_line(&mut reply).map_err(backend_err)?;
    Ok(reply)
}

/// Forwards detection requests to an inference process listening on
/// `address` (one request per connection, JSON-line reply).
#[derive(Clone, Debug)]
pub struct ExternalDetector {
    pub address: String,
    pub timeout: Duration,
}

impl ExternalDetector {
    pub fn new(address: impl Into<String>) -> Self {
        Self {
            address: address.into(),
            timeout: Duration::from_secs(10),
        }
    }
}

impl Detector for ExternalDetector {
    fn detect(&self, frame_id: &str, rgb: &RgbImage) -> Result<Vec<Detection>> {
        let reply = exchange(&self.address, self.timeout, "detect", frame_id, rgb)?;
        let reply: ExternalDetectReply = serde_json::from_str(&reply)
            .map_err(|e| Error::Backend(format!("malformed detector reply: {e}")))?;
        if let Some(err) = reply.error {
            return Err(Error::Backend(err));
        }
        let detections: Vec<Detection> = reply
            .detections
            .into_iter()
            .map(|d| Detection {
                bbox: d.bbox,
                label: d.label,
                score: d.score,
                source: Source::RgbPath,
            })
            .collect();
        validate_detections(&detections, rgb.width(), rgb.height())?;
        Ok(detections)
    }
}

#[derive(Clone, Debug)]
pub struct ExternalClassifier {
    pub address: String,
    pub timeout: Duration,
}

impl ExternalClassifier {
    pub fn new(address: impl Into<String>) -> Self {
        Self {
            address: address.into(),
            timeout: Duration::from_secs(10),
        }
    }
}

impl Classifier for ExternalClassifier {
    fn classify(&self, crop: &Crop) -> Result<ClassificationResult> {
        if crop.image.width() == 0 || crop.image.height() == 0 {
            return Err(Error::InvalidArgument("empty crop".into()));
        }
        let reply = exchange(&self.address, self.timeout, "classify", &crop.frame_id, &crop.image)?;
        let reply: ExternalClassifyReply = serde_json::from_str(&reply)
            .map_err(|e| Error::Backend(format!("malformed classifier reply: {e}")))?;
        if let Some(err) = reply.error {
            return Err(Error::Backend(err));
        }
        match (reply.label, reply.score) {
            (Some(label), Some(score)) if !label.trim().is_empty() && (0.0..=1.0).contains(&score) => {
                Ok(ClassificationResult { label, score })
            }
            _ => Err(Error::Backend("classifier reply lacks a valid label/score".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox(a: f64, b: f64, c: f64, d: f64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn bbox_rejects_degenerate() {
        assert!(BBox::new(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 3.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 2.0).is_err());
    }

    #[test]
    fn expand_roi_identity_at_factor_one() {
        let b = bbox(10.0, 20.0, 30.0, 60.0);
        assert_eq!(expand_roi(&b, 1.0, 100, 100), b);
    }

    #[test]
    fn expand_roi_centered_triple() {
        let b = bbox(450.0, 450.0, 550.0, 550.0);
        assert_eq!(expand_roi(&b, 3.0, 1000, 1000), bbox(350.0, 350.0, 650.0, 650.0));
    }

    #[test]
    fn expand_roi_clips_at_corner() {
        let b = bbox(2.0, 3.0, 22.0, 13.0);
        let e = expand_roi(&b, 3.0, 100, 80);
        assert_eq!(e, bbox(0.0, 0.0, 42.0, 23.0));
        assert!(e.contains(&b));
        assert!(e.within(100, 80));
    }

    fn doc() -> FixtureDocument {
        serde_json::from_str(
            r#"{
                "frame_id": "f1",
                "detections": [{"label": "cat", "score": 0.9, "bbox": [10, 10, 40, 30]}],
                "classifications": [{"pixel": [50, 50], "label": "modem", "score": 0.4}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn fixture_detector_lookup() {
        let mut det = FixtureDetector::new();
        det.register(&doc(), 64, 64).unwrap();
        let rgb = RgbImage::new(64, 64);
        let a = det.detect("f1", &rgb).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].source, Source::RgbPath);
        assert_eq!(a, det.detect("f1", &rgb).unwrap());
        assert!(matches!(det.detect("nope", &rgb), Err(Error::MissingFixture(_))));
    }

    #[test]
    fn empty_fixture_gives_no_detections() {
        let mut det = FixtureDetector::new();
        let empty = FixtureDocument {
            frame_id: "room".into(),
            ..Default::default()
        };
        det.register(&empty, 8, 8).unwrap();
        assert!(det.detect("room", &RgbImage::new(8, 8)).unwrap().is_empty());
    }

    #[test]
    fn out_of_bounds_fixture_box_rejected() {
        let mut det = FixtureDetector::new();
        assert!(matches!(det.register(&doc(), 32, 32), Err(Error::Validation(_))));
    }

    #[test]
    fn fixture_classifier_nearest_within_radius() {
        let mut cls = FixtureClassifier::new();
        cls.register(&doc(), 64, 64).unwrap();
        let crop = |x: f64, y: f64| Crop {
            frame_id: "f1".into(),
            image: RgbImage::new(4, 4),
            roi: bbox(0.0, 0.0, 4.0, 4.0),
            anchor: PixelPoint::new(x, y),
        };
        assert_eq!(cls.classify(&crop(56.0, 58.0)).unwrap().label, "modem");
        assert_eq!(cls.classify(&crop(61.0, 50.0)).unwrap(), ClassificationResult::unknown());
        let empty = Crop {
            image: RgbImage::new(0, 0),
            ..crop(50.0, 50.0)
        };
        assert!(matches!(cls.classify(&empty), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn crop_covers_roi_pixels() {
        let mut rgb = RgbImage::new(10, 10);
        rgb.put_pixel(3, 4, image::Rgb([9, 9, 9]));
        let c = crop_image(&rgb, &bbox(2.0, 3.0, 5.0, 6.0)).unwrap();
        assert_eq!(c.dimensions(), (3, 3));
        assert_eq!(c.get_pixel(1, 1).0, [9, 9, 9]);
        assert!(crop_image(&rgb, &bbox(10.0, 10.0, 12.0, 12.0)).is_none());
    }
}
