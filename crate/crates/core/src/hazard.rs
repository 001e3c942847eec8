//! Rule-based fall-hazard severity over fused objects.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{Category, LocalizedObject};
use crate::geometry::WorldPoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

impl Cell {
    fn code(self) -> char {
        match self {
            Cell::Free => '.',
            Cell::Occupied => '#',
            Cell::Unknown => '?',
        }
    }

    fn from_code(c: char) -> Option<Self> {
        match c {
            '.' => Some(Cell::Free),
            '#' => Some(Cell::Occupied),
            '?' => Some(Cell::Unknown),
            _ => None,
        }
    }
}

/// 2-D floor grid. Cell `(i, j)` covers
/// `[ox + i*res, ox + (i+1)*res) x [oy + j*res, oy + (j+1)*res)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMap {
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    cells: Vec<Cell>,
}

impl OccupancyMap {
    pub fn new(width: usize, height: usize, resolution: f64, origin: (f64, f64), cells: Vec<Cell>) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Validation(format!("map resolution {resolution} must be > 0")));
        }
        if !origin.0.is_finite() || !origin.1.is_finite() {
            return Err(Error::Validation("map origin must be finite".into()));
        }
        if cells.len() != width * height {
            return Err(Error::Validation(format!(
                "map has {} cells, expected {width}x{height}",
                cells.len()
            )));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    pub fn filled(width: usize, height: usize, resolution: f64, origin: (f64, f64), cell: Cell) -> Result<Self> {
        Self::new(width, height, resolution, origin, vec![cell; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn get(&self, i: usize, j: usize) -> Option<Cell> {
        (i < self.width && j < self.height).then(|| self.cells[j * self.width + i])
    }

    pub fn set(&mut self, i: usize, j: usize, cell: Cell) {
        assert!(i < self.width && j < self.height, "cell ({i}, {j}) outside map");
        self.cells[j * self.width + i] = cell;
    }

    /// Cell containing world point `(x, y)`, if inside the map.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.origin.0) / self.resolution).floor();
        let fj = ((y - self.origin.1) / self.resolution).floor();
        if !(fi >= 0.0 && fj >= 0.0 && fi < self.width as f64 && fj < self.height as f64) {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (i as f64 + 0.5) * self.resolution,
            self.origin.1 + (j as f64 + 0.5) * self.resolution,
        )
    }

    /// Parses the text format: a header `occmap v1 <w> <h> <res> <ox> <oy>`,
    /// then `h` rows of `w` cell codes (`.` free, `#` occupied, `?` unknown).
    /// The first row is `j = 0`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Validation("empty occupancy map".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "occmap" || fields[1] != "v1" {
            return Err(Error::Validation(format!(
                "bad occupancy map header `{header}`, expected `occmap v1 <w> <h> <res> <ox> <oy>`"
            )));
        }
        let num = |name: &str, s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Validation(format!("occupancy map header field {name} = `{s}` is not a number")))
        };
        let int = |name: &str, s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::Validation(format!("occupancy map header field {name} = `{s}` is not a count")))
        };
        let width = int("width", fields[2])?;
        let height = int("height", fields[3])?;
        let resolution = num("resolution", fields[4])?;
        let origin = (num("origin_x", fields[5])?, num("origin_y", fields[6])?);

        let mut cells = Vec::with_capacity(width * height);
        let mut rows = 0;
        for (n, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() && rows == height {
                continue;
            }
            if rows == height {
                return Err(Error::Validation(format!("occupancy map has more than {height} rows")));
            }
            let row: Vec<Cell> = line
                .chars()
                .map(|c| {
                    Cell::from_code(c)
                        .ok_or_else(|| Error::Validation(format!("occupancy map row {n}: bad cell code `{c}`")))
                })
                .collect::<Result<_>>()?;
            if row.len() != width {
                return Err(Error::Validation(format!(
                    "occupancy map row {n} has {} cells, expected {width}",
                    row.len()
                )));
            }
            cells.extend(row);
            rows += 1;
        }
        if rows != height {
            return Err(Error::Validation(format!("occupancy map has {rows} rows, expected {height}")));
        }
        Self::new(width, height, resolution, origin, cells)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::load(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for OccupancyMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "occmap v1 {} {} {} {} {}",
            self.width, self.height, self.resolution, self.origin.0, self.origin.1
        )?;
        for row in self.cells.chunks(self.width.max(1)) {
            let line: String = row.iter().map(|c| c.code()).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    None,
    Moderate,
    High,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::None => "none",
            Severity::Moderate => "moderate",
            Severity::High => "high",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleId {
    /// Object is not on the floor.
    #[serde(rename = "R1_off_floor")]
    OffFloor,
    /// Furniture next to walls or mapped furniture.
    #[serde(rename = "R2_fixed_furniture")]
    FixedFurniture,
    /// Furniture away from occupied map regions.
    #[serde(rename = "R3_furniture_mid_room")]
    FurnitureMidRoom,
    #[serde(rename = "R4_animal")]
    Animal,
    #[serde(rename = "R5_other")]
    Other,
}

impl RuleId {
    pub const CASCADE: [RuleId; 5] = [
        RuleId::OffFloor,
        RuleId::FixedFurniture,
        RuleId::FurnitureMidRoom,
        RuleId::Animal,
        RuleId::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RuleId::OffFloor => "R1_off_floor",
            RuleId::FixedFurniture => "R2_fixed_furniture",
            RuleId::FurnitureMidRoom => "R3_furniture_mid_room",
            RuleId::Animal => "R4_animal",
            RuleId::Other => "R5_other",
        }
    }

    fn applies(&self, f: &RuleFacts) -> Option<Severity> {
        let furniture = f.category == Category::Furniture;
        match self {
            RuleId::OffFloor => (!f.on_floor).then_some(Severity::None),
            RuleId::FixedFurniture => (furniture && f.near_occupied).then_some(Severity::None),
            RuleId::FurnitureMidRoom => (furniture && !f.near_occupied).then_some(Severity::High),
            RuleId::Animal => (f.category == Category::Animal).then_some(Severity::Moderate),
            RuleId::Other => Some(Severity::High),
        }
    }
}

/// Inputs the rule cascade decides on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFacts {
    pub category: Category,
    pub on_floor: bool,
    pub near_occupied: bool,
}

/// Runs the cascade; the trace lists every rule evaluated, the last one
/// being the rule that decided.
pub fn decide(facts: &RuleFacts) -> (Severity, Vec<RuleId>) {
    let mut trace = Vec::new();
    for rule in RuleId::CASCADE {
        trace.push(rule);
        if let Some(s) = rule.applies(facts) {
            return (s, trace);
        }
    }
    unreachable!("the last rule always applies")
}

#[derive(Clone, Debug, PartialEq)]
pub struct HazardConfig {
    /// Highest reference point still counted as on the floor, meters.
    pub h_max: f64,
    /// Wall proximity radius for furniture, meters.
    pub near_radius: f64,
}

impl Default for HazardConfig {
    fn default() -> Self {
        Self {
            h_max: 0.25,
            near_radius: 0.5,
        }
    }
}

/// `0 <= z <= h_max`.
pub fn is_on_floor(p: &WorldPoint, h_max: f64) -> bool {
    (0.0..=h_max).contains(&p.z)
}

/// Whether any occupied cell center lies within `r` of the center of the
/// cell containing `p`. Points outside the map count as near-occupied.
pub fn near_occupied(p: &WorldPoint, map: &OccupancyMap, r: f64) -> bool {
    let Some((ci, cj)) = map.cell_of(p.x, p.y) else {
        return true;
    };
    let (px, py) = map.cell_center(ci, cj);
    let reach = (r / map.resolution).ceil() as usize;
    let i_range = ci.saturating_sub(reach)..=(ci + reach).min(map.width - 1);
    for j in cj.saturating_sub(reach)..=(cj + reach).min(map.height - 1) {
        for i in i_range.clone() {
            if map.get(i, j) == Some(Cell::Occupied) {
                let (x, y) = map.cell_center(i, j);
                if (x - px).hypot(y - py) <= r + 1e-12 {
                    return true;
                }
            }
        }
    }
    false
}

#[derive(Clone, Debug, PartialEq)]
pub struct HazardEntry {
    pub object: LocalizedObject,
    pub severity: Severity,
    pub rule_trace: Vec<RuleId>,
    pub facts: RuleFacts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HazardReport {
    pub frame_id: String,
    pub entries: Vec<HazardEntry>,
}

impl HazardReport {
    pub fn count(&self, severity: Severity) -> usize {
        self.entries.iter().filter(|e| e.severity == severity).count()
    }
}

fn canonical_order(a: &HazardEntry, b: &HazardEntry) -> std::cmp::Ordering {
    let (x, y) = (&a.object, &b.object);
    x.bbox
        .x_min
        .total_cmp(&y.bbox.x_min)
        .then(x.bbox.y_min.total_cmp(&y.bbox.y_min))
        .then(x.bbox.x_max.total_cmp(&y.bbox.x_max))
        .then(x.bbox.y_max.total_cmp(&y.bbox.y_max))
        .then(x.category.cmp(&y.category))
        .then(x.position.x.total_cmp(&y.position.x))
        .then(x.position.y.total_cmp(&y.position.y))
        .then(x.position.z.total_cmp(&y.position.z))
        .then_with(|| {
            let la: Vec<&str> = x.raw_labels.iter().map(|l| l.label.as_str()).collect();
            let lb: Vec<&str> = y.raw_labels.iter().map(|l| l.label.as_str()).collect();
            la.cmp(&lb)
        })
}

/// Assigns a severity to every object. Entries are sorted by bounding box so
/// the report does not depend on input order.
pub fn classify_hazard(
    frame_id: &str,
    objects: &[LocalizedObject],
    map: &OccupancyMap,
    cfg: &HazardConfig,
) -> HazardReport {
    let mut entries: Vec<HazardEntry> = objects
        .iter()
        .map(|o| {
            let facts = RuleFacts {
                category: o.category,
                on_floor: is_on_floor(&o.position, cfg.h_max),
                near_occupied: near_occupied(&o.position, map, cfg.near_radius),
            };
            let (severity, rule_trace) = decide(&facts);
            HazardEntry {
                object: o.clone(),
                severity,
                rule_trace,
                facts,
            }
        })
        .collect();
    entries.sort_by(canonical_order);
    HazardReport {
        frame_id: frame_id.to_string(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 4 x 4 m room at 0.1 m resolution with a one-cell wall border.
    fn room() -> OccupancyMap {
        let mut m = OccupancyMap::filled(40, 40, 0.1, (0.0, 0.0), Cell::Free).unwrap();
        for k in 0..40 {
            m.set(k, 0, Cell::Occupied);
            m.set(k, 39, Cell::Occupied);
            m.set(0, k, Cell::Occupied);
            m.set(39, k, Cell::Occupied);
        }
        m
    }

    #[test]
    fn floor_height_examples() {
        assert!(is_on_floor(&WorldPoint::new(0.0, 0.0, 0.0), 0.25));
        assert!(!is_on_floor(&WorldPoint::new(0.0, 0.0, 0.8), 0.25));
        assert!(is_on_floor(&WorldPoint::new(0.0, 0.0, 0.25), 0.25));
        assert!(!is_on_floor(&WorldPoint::new(0.0, 0.0, -0.01), 0.25));
    }

    #[test]
    fn wall_proximity_examples() {
        let m = room();
        assert!(near_occupied(&WorldPoint::new(0.15, 2.0, 0.0), &m, 0.5));
        assert!(!near_occupied(&WorldPoint::new(2.0, 2.0, 0.0), &m, 0.5));
        let free = OccupancyMap::filled(40, 40, 0.1, (0.0, 0.0), Cell::Free).unwrap();
        assert!(!near_occupied(&WorldPoint::new(0.05, 0.05, 0.0), &free, 0.5));
        // Outside the map is conservative.
        assert!(near_occupied(&WorldPoint::new(-1.0, 2.0, 0.0), &free, 0.5));
    }

    #[test]
    fn near_occupied_matches_brute_force() {
        let m = room();
        for (x, y) in [(0.55, 2.0), (0.62, 2.0), (0.65, 0.65), (3.4, 3.4), (1.0, 1.0)] {
            let p = WorldPoint::new(x, y, 0.0);
            let (ci, cj) = m.cell_of(x, y).unwrap();
            let c = m.cell_center(ci, cj);
            let brute = (0..40).any(|j| {
                (0..40).any(|i| {
                    let o = m.cell_center(i, j);
                    m.get(i, j) == Some(Cell::Occupied) && (o.0 - c.0).hypot(o.1 - c.1) <= 0.5 + 1e-12
                })
            });
            assert_eq!(near_occupied(&p, &m, 0.5), brute, "({x}, {y})");
        }
    }

    #[test]
    fn map_text_round_trip() {
        let text = "occmap v1 3 2 0.5 -1 2.5\n.#?\n##.\n";
        let m = OccupancyMap::parse(text).unwrap();
        assert_eq!(m.get(1, 0), Some(Cell::Occupied));
        assert_eq!(m.get(2, 0), Some(Cell::Unknown));
        assert_eq!(m.get(2, 1), Some(Cell::Free));
        assert_eq!(m.to_string(), text);
    }

    #[test]
    fn map_parse_errors() {
        assert!(OccupancyMap::parse("").is_err());
        assert!(OccupancyMap::parse("occmap v2 1 1 1 0 0\n.\n").is_err());
        assert!(OccupancyMap::parse("occmap v1 2 1 1 0 0\n.\n").is_err());
        assert!(OccupancyMap::parse("occmap v1 1 2 1 0 0\n.\n").is_err());
        assert!(OccupancyMap::parse("occmap v1 1 1 1 0 0\nx\n").is_err());
        assert!(OccupancyMap::parse("occmap v1 1 1 0 0 0\n.\n").is_err());
    }

    #[test]
    fn decide_traces() {
        let (s, t) = decide(&RuleFacts {
            category: Category::Animal,
            on_floor: true,
            near_occupied: false,
        });
        assert_eq!(s, Severity::Moderate);
        assert_eq!(t.last(), Some(&RuleId::Animal));
        let (s, t) = decide(&RuleFacts {
            category: Category::Furniture,
            on_floor: true,
            near_occupied: true,
        });
        assert_eq!(s, Severity::None);
        assert_eq!(t, vec![RuleId::OffFloor, RuleId::FixedFurniture]);
        let (s, t) = decide(&RuleFacts {
            category: Category::SmallObject,
            on_floor: false,
            near_occupied: true,
        });
        assert_eq!(s, Severity::None);
        assert_eq!(t, vec![RuleId::OffFloor]);
    }

    #[test]
    fn severity_order() {
        assert!(Severity::None < Severity::Moderate && Severity::Moderate < Severity::High);
    }
}
