//! Merging RGB-path and depth-path observations into deduplicated objects.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{BBox, Detection, Source};
use crate::error::{Error, Result};
use crate::geometry::WorldPoint;

const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Animal,
    Furniture,
    SmallObject,
    Unknown,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Animal,
        Category::Furniture,
        Category::SmallObject,
        Category::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Animal => "animal",
            Category::Furniture => "furniture",
            Category::SmallObject => "small_object",
            Category::Unknown => "unknown",
        }
    }

    /// Equal categories, or either side unknown.
    pub fn compatible(self, other: Category) -> bool {
        self == other || self == Category::Unknown || other == Category::Unknown
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown category `{s}`")))
    }
}

fn normalize_label(label: &str) -> String {
    label
        .trim()
        .to_lowercase()
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Label to category lookup covering detector and classifier vocabularies.
#[derive(Clone, Debug, PartialEq)]
pub struct Taxonomy {
    table: HashMap<String, Category>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::parse(DEFAULT_TAXONOMY).expect("built-in taxonomy parses")
    }
}

impl Taxonomy {
    /// Parses `label = category` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (label, category) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("taxonomy line {}: expected `label = category`", n + 1))
            })?;
            let category: Category = category.trim().parse()?;
            let label = normalize_label(label);
            if let Some(prev) = table.insert(label.clone(), category) {
                if prev != category {
                    return Err(Error::Config(format!(
                        "taxonomy line {}: `{label}` mapped to both {} and {}",
                        n + 1,
                        prev.as_str(),
                        category.as_str()
                    )));
                }
            }
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::load(path, e.to_string()))
    }

    /// Both vocabularies share one table, so `source` does not change the
    /// result; unmapped labels are [`Category::Unknown`].
    pub fn map_label(&self, label: &str, _source: Source) -> Category {
        self.table
            .get(&normalize_label(label))
            .copied()
            .unwrap_or(Category::Unknown)
    }
}

/// [`Taxonomy::map_label`] on the built-in table.
pub fn map_label(label: &str, source: Source) -> Category {
    thread_local! {
        static DEFAULT: Taxonomy = Taxonomy::default();
    }
    DEFAULT.with(|t| t.map_label(label, source))
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// A located result from either path.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub detection: Detection,
    pub position: WorldPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawLabel {
    pub label: String,
    pub score: f64,
    pub source: Source,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizedObject {
    pub category: Category,
    pub raw_labels: Vec<RawLabel>,
    pub position: WorldPoint,
    pub bbox: BBox,
    pub sources: BTreeSet<Source>,
    /// Index into the RGB input this object came from, if any.
    pub rgb_index: Option<usize>,
    /// Index into the depth input this object came from, if any.
    pub depth_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams {
    pub iou_threshold: f64,
    /// Meters.
    pub max_position_gap: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.3,
            max_position_gap: 0.3,
        }
    }
}

/// A candidate RGB/depth pairing that passed the merge gates.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchCandidate {
    pub rgb: usize,
    pub depth: usize,
    pub iou: f64,
    pub distance: f64,
}

fn corner(b: &BBox) -> (f64, f64) {
    (b.x_min, b.y_min)
}

fn cmp_corner(a: (f64, f64), b: (f64, f64)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// Greedy one-to-one matching: candidates are taken in descending IoU order,
/// then ascending world distance, then by the smaller top-left corner of the
/// pair (x_min, then y_min).
pub fn match_observations(
    rgb: &[Observation],
    depth: &[Observation],
    taxonomy: &Taxonomy,
    params: &FusionParams,
) -> Vec<MatchCandidate> {
    let rgb_cat: Vec<Category> = rgb
        .iter()
        .map(|o| taxonomy.map_label(&o.detection.label, o.detection.source))
        .collect();
    let depth_cat: Vec<Category> = depth
        .iter()
        .map(|o| taxonomy.map_label(&o.detection.label, o.detection.source))
        .collect();

    let mut candidates = Vec::new();
    for (i, a) in rgb.iter().enumerate() {
        for (j, b) in depth.iter().enumerate() {
            if !rgb_cat[i].compatible(depth_cat[j]) {
                continue;
            }
            let overlap = iou(&a.detection.bbox, &b.detection.bbox);
            let distance = a.position.distance(&b.position);
            if overlap >= params.iou_threshold || distance <= params.max_position_gap {
                candidates.push(MatchCandidate {
                    rgb: i,
                    depth: j,
                    iou: overlap,
                    distance,
                });
            }
        }
    }

    let key = |c: &MatchCandidate| {
        let a = corner(&rgb[c.rgb].detection.bbox);
        let b = corner(&depth[c.depth].detection.bbox);
        if cmp_corner(a, b).is_le() {
            (a, b)
        } else {
            (b, a)
        }
    };
    candidates.sort_by(|x, y| {
        let (xa, xb) = key(x);
        let (ya, yb) = key(y);
        y.iou
            .total_cmp(&x.iou)
            .then(x.distance.total_cmp(&y.distance))
            .then(cmp_corner(xa, ya))
            .then(cmp_corner(xb, yb))
            .then(x.rgb.cmp(&y.rgb))
            .then(x.depth.cmp(&y.depth))
    });

    let mut rgb_used = vec![false; rgb.len()];
    let mut depth_used = vec![false; depth.len()];
    let mut chosen = Vec::new();
    for c in candidates {
        if rgb_used[c.rgb] || depth_used[c.depth] {
            continue;
        }
        rgb_used[c.rgb] = true;
        depth_used[c.depth] = true;
        chosen.push(c);
    }
    chosen
}

fn raw_label(o: &Observation) -> RawLabel {
    RawLabel {
        label: o.detection.label.clone(),
        score: o.detection.score,
        source: o.detection.source,
    }
}

/// Merges duplicates across the two paths. Every input ends up in exactly
/// one output object; the result is ordered by bounding box.
pub fn merge_paths(
    rgb: &[Observation],
    depth: &[Observation],
    taxonomy: &Taxonomy,
    params: &FusionParams,
) -> Vec<LocalizedObject> {
    let matches = match_observations(rgb, depth, taxonomy, params);
    let mut rgb_partner = vec![None; rgb.len()];
    let mut depth_taken = vec![false; depth.len()];
    for m in &matches {
        rgb_partner[m.rgb] = Some(m.depth);
        depth_taken[m.depth] = true;
    }

    let single = |o: &Observation, rgb_index: Option<usize>, depth_index: Option<usize>| LocalizedObject {
        category: taxonomy.map_label(&o.detection.label, o.detection.source),
        raw_labels: vec![raw_label(o)],
        position: o.position,
        bbox: o.detection.bbox,
        sources: BTreeSet::from([o.detection.source]),
        rgb_index,
        depth_index,
    };

    let mut out = Vec::with_capacity(rgb.len() + depth.len());
    for (i, a) in rgb.iter().enumerate() {
        match rgb_partner[i] {
            None => out.push(single(a, Some(i), None)),
            Some(j) => {
                let b = &depth[j];
                let ca = taxonomy.map_label(&a.detection.label, a.detection.source);
                let cb = taxonomy.map_label(&b.detection.label, b.detection.source);
                let category = if ca == Category::Unknown { cb } else { ca };
                out.push(LocalizedObject {
                    category,
                    raw_labels: vec![raw_label(a), raw_label(b)],
                    // The depth centroid is measured; the RGB position is an estimate.
                    position: b.position,
                    bbox: a.detection.bbox.union(&b.detection.bbox),
                    sources: BTreeSet::from([a.detection.source, b.detection.source]),
                    rgb_index: Some(i),
                    depth_index: Some(j),
                });
            }
        }
    }
    for (j, b) in depth.iter().enumerate() {
        if !depth_taken[j] {
            out.push(single(b, None, Some(j)));
        }
    }
    out.sort_by(|x, y| {
        cmp_corner(corner(&x.bbox), corner(&y.bbox))
            .then(x.bbox.x_max.total_cmp(&y.bbox.x_max))
            .then(x.bbox.y_max.total_cmp(&y.bbox.y_max))
            .then(x.rgb_index.cmp(&y.rgb_index))
            .then(x.depth_index.cmp(&y.depth_index))
    });
    out
}
