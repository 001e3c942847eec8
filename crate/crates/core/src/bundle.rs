//! Frame bundles: one synchronized RGB-D frame with camera metadata.
//!
//! On disk a bundle is a directory holding
//!
//! - `rgb.png`: 8-bit, 3-channel color image
//! - `depth.png`: 16-bit single-channel depth in millimeters, 0 = no reading
//! - `meta.json`: `{"frame_id", "intrinsics", "pose"}`
//! - `detections.json` (optional): detector/classifier fixture

use std::path::Path;

use image::{ImageBuffer, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::backends::FixtureDocument;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::pointcloud::DepthImage;

pub const RGB_FILE: &str = "rgb.png";
pub const DEPTH_FILE: &str = "depth.png";
pub const META_FILE: &str = "meta.json";
pub const FIXTURE_FILE: &str = "detections.json";

#[derive(Clone, Debug, PartialEq)]
pub struct FrameBundle {
    pub frame_id: String,
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub fixture: Option<FixtureDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    frame_id: String,
    intrinsics: CameraIntrinsics,
    pose: Pose,
}

impl FrameBundle {
    /// Dimensions of both images and the intrinsics must agree.
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let (w, h) = self.rgb.dimensions();
        if (w, h) != (self.depth.width(), self.depth.height()) {
            return Err(Error::Validation(format!(
                "rgb is {w}x{h} but depth is {}x{}",
                self.depth.width(),
                self.depth.height()
            )));
        }
        if (w, h) != (self.intrinsics.width, self.intrinsics.height) {
            return Err(Error::Validation(format!(
                "intrinsics.width/height {}x{} do not match the {w}x{h} images",
                self.intrinsics.width, self.intrinsics.height
            )));
        }
        if let Some(doc) = &self.fixture {
            if doc.frame_id != self.frame_id {
                return Err(Error::Validation(format!(
                    "fixture frame_id `{}` does not match bundle `{}`",
                    doc.frame_id, self.frame_id
                )));
            }
            doc.validate(w, h)?;
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rgb_path = dir.join(RGB_FILE);
        self.rgb
            .save(&rgb_path)
            .map_err(|e| Error::load(&rgb_path, e.to_string()))?;

        let depth_path = dir.join(DEPTH_FILE);
        let mm: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.depth.width(), self.depth.height(), self.depth.to_millimeters())
                .expect("depth buffer matches its dimensions");
        mm.save(&depth_path)
            .map_err(|e| Error::load(&depth_path, e.to_string()))?;

        let meta = Meta {
            frame_id: self.frame_id.clone(),
            intrinsics: self.intrinsics,
            pose: self.pose,
        };
        write_json(&dir.join(META_FILE), &meta)?;
        if let Some(doc) = &self.fixture {
            write_json(&dir.join(FIXTURE_FILE), doc)?;
        }
        Ok(())
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads and validates a bundle directory; depth is converted to meters.
pub fn load_frame_bundle(dir: &Path) -> Result<FrameBundle> {
    if !dir.is_dir() {
        return Err(Error::load(dir, "not a frame bundle directory"));
    }
    let meta_path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::load(&meta_path, e.to_string()))?;
    meta.intrinsics
        .validate()
        .map_err(|e| Error::load(&meta_path, e.to_string()))?;

    let rgb_path = dir.join(RGB_FILE);
    let rgb = image::open(&rgb_path)
        .map_err(|e| Error::load(&rgb_path, e.to_string()))?;
    if rgb.color() != image::ColorType::Rgb8 {
        return Err(Error::load(&rgb_path, format!("expected 8-bit RGB, found {:?}", rgb.color())));
    }
    let rgb = rgb.into_rgb8();

    let depth_path = dir.join(DEPTH_FILE);
    let depth = image::open(&depth_path)
        .map_err(|e| Error::load(&depth_path, e.to_string()))?;
    if depth.color() != image::ColorType::L16 {
        return Err(Error::load(
            &depth_path,
            format!("expected 16-bit single-channel depth, found {:?}", depth.color()),
        ));
    }
    let depth = depth.into_luma16();
    let depth = DepthImage::from_millimeters(depth.width(), depth.height(), depth.as_raw())?;

    let fixture_path = dir.join(FIXTURE_FILE);
    let fixture = if fixture_path.exists() {
        Some(FixtureDocument::load(&fixture_path)?)
    } else {
        None
    };

    let bundle = FrameBundle {
        frame_id: meta.frame_id,
        rgb,
        depth,
        intrinsics: meta.intrinsics,
        pose: meta.pose,
        fixture,
    };
    bundle.validate().map_err(|e| Error::load(dir, e.to_string()))?;
    Ok(bundle)
}
