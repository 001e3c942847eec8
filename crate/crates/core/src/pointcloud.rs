//! Organized point clouds, floor-plane estimation and obstacle segmentation.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backends::BBox;
use crate::error::{Error, Result};
use crate::geometry::{back_project, CameraIntrinsics, CameraPoint, PixelPoint};

/// Row-major depth image in meters. Pixels without a reading are stored as
/// `0.0` and reported as `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl DepthImage {
    /// Non-finite and non-positive values are treated as missing readings.
    pub fn new(width: u32, height: u32, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::Validation(format!(
                "depth image has {} values, expected {}x{}",
                values.len(),
                width,
                height
            )));
        }
        for v in &mut values {
            if !v.is_finite() || *v <= 0.0 {
                *v = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn invalid(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    /// Millimeter readings, 0 = invalid.
    pub fn from_millimeters(width: u32, height: u32, mm: &[u16]) -> Result<Self> {
        Self::new(width, height, mm.iter().map(|&v| v as f64 / 1000.0).collect())
    }

    /// Rounds to the nearest millimeter; readings that do not fit in 16 bits
    /// or round to zero become invalid.
    pub fn to_millimeters(&self) -> Vec<u16> {
        self.values
            .iter()
            .map(|&v| {
                let mm = (v * 1000.0).round();
                if mm >= 1.0 && mm <= u16::MAX as f64 {
                    mm as u16
                } else {
                    0
                }
            })
            .collect()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn depth(&self, index: usize) -> Option<f64> {
        self.values.get(index).copied().filter(|&v| v > 0.0)
    }

    pub fn at(&self, x: u32, y: u32) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        self.depth((y * self.width + x) as usize)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Valid readings from the pixels covered by `b`, in raster order.
    pub fn roi_values(&self, b: &BBox) -> Vec<f64> {
        let (xs, ys) = b.pixel_ranges(self.width, self.height);
        let mut out = Vec::new();
        for y in ys {
            for x in xs.clone() {
                if let Some(d) = self.at(x, y) {
                    out.push(d);
                }
            }
        }
        out
    }
}

/// Point cloud that keeps the pixel grid of its source depth image.
#[derive(Clone, Debug, PartialEq)]
pub struct OrganizedCloud {
    width: u32,
    height: u32,
    points: Vec<Option<CameraPoint>>,
}

impl OrganizedCloud {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, index: usize) -> Option<CameraPoint> {
        self.points.get(index).copied().flatten()
    }

    /// Number of present points.
    pub fn point_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }

    pub fn iter_points(&self) -> impl Iterator<Item = (usize, CameraPoint)> + '_ {
        self.points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (i, p)))
    }

    pub fn pixel_of(&self, index: usize) -> (u32, u32) {
        (index as u32 % self.width, index as u32 / self.width)
    }
}

pub fn depth_to_cloud(depth: &DepthImage, k: &CameraIntrinsics) -> Result<OrganizedCloud> {
    if depth.width != k.width || depth.height != k.height {
        return Err(Error::Config(format!(
            "depth image is {}x{} but intrinsics describe {}x{}",
            depth.width, depth.height, k.width, k.height
        )));
    }
    let points = depth
        .values
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            if z <= 0.0 {
                return None;
            }
            let u = (i as u32 % depth.width) as f64;
            let v = (i as u32 / depth.width) as f64;
            back_project(PixelPoint::new(u, v), z, k).ok()
        })
        .collect();
    Ok(OrganizedCloud {
        width: depth.width,
        height: depth.height,
        points,
    })
}

/// Plane `{q : normal . q + offset = 0}` in camera coordinates. The normal is
/// oriented toward the camera, so `offset` is the camera's height above the
/// plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: [f64; 3],
    pub offset: f64,
    #[serde(skip)]
    pub inliers: Vec<usize>,
}

impl PlaneModel {
    pub fn normal_vector(&self) -> Vector3<f64> {
        Vector3::from(self.normal)
    }

    pub fn signed_distance(&self, q: &CameraPoint) -> f64 {
        self.normal_vector().dot(&q.coords()) + self.offset
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Meters.
    pub inlier_tol: f64,
    pub min_inlier_fraction: f64,
    /// Maximum angle (degrees) between the plane normal and the up axis.
    pub max_tilt_deg: f64,
    /// Hypotheses are scored on a random subset of at most this many points.
    pub max_scoring_points: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_tol: 0.015,
            min_inlier_fraction: 0.3,
            max_tilt_deg: 30.0,
            max_scoring_points: 5000,
        }
    }
}

fn oriented_plane(normal: Vector3<f64>, through: &Vector3<f64>) -> (Vector3<f64>, f64) {
    let offset = -normal.dot(through);
    if offset < 0.0 {
        (-normal, -offset)
    } else {
        (normal, offset)
    }
}

fn within_tilt(normal: &Vector3<f64>, up: Option<&Vector3<f64>>, max_tilt_deg: f64) -> bool {
    match up {
        None => true,
        Some(up) => {
            let cos = normal.dot(up) / up.norm();
            cos >= max_tilt_deg.to_radians().cos()
        }
    }
}

/// Least-squares plane through `pts`: centroid plus the eigenvector of the
/// smallest scatter eigenvalue.
fn least_squares_plane(pts: &[Vector3<f64>]) -> Option<(Vector3<f64>, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mean = pts.iter().sum::<Vector3<f64>>() / n;
    let mut scatter = Matrix3::zeros();
    for p in pts {
        let d = p - mean;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let (min_idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let normal = eig.eigenvectors.column(min_idx).normalize();
    if !normal.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(oriented_plane(normal, &mean))
}

/// RanSaC floor fit over 3-point hypotheses, refined by least squares over the
/// inliers of the best hypothesis.
///
/// `up` is the world up-axis in camera coordinates; when given, hypotheses
/// tilted more than `max_tilt_deg` away from it are rejected.
pub fn fit_floor_plane<R: Rng + ?Sized>(
    cloud: &OrganizedCloud,
    params: &RansacParams,
    up: Option<Vector3<f64>>,
    rng: &mut R,
) -> Result<PlaneModel> {
    let pts: Vec<(usize, Vector3<f64>)> = cloud.iter_points().map(|(i, p)| (i, p.coords())).collect();
    if pts.len() < 3 {
        return Err(Error::NoFloorFound(format!(
            "cloud has {} points, need at least 3",
            pts.len()
        )));
    }
    let up = up.as_ref();
    let scoring: Vec<Vector3<f64>> = if pts.len() > params.max_scoring_points {
        index::sample(rng, pts.len(), params.max_scoring_points)
            .into_iter()
            .map(|i| pts[i].1)
            .collect()
    } else {
        pts.iter().map(|p| p.1).collect()
    };

    let mut best: Option<(usize, Vector3<f64>, f64)> = None;
    for _ in 0..params.iterations {
        let s = index::sample(rng, pts.len(), 3);
        let (a, b, c) = (pts[s.index(0)].1, pts[s.index(1)].1, pts[s.index(2)].1);
        let cross = (b - a).cross(&(c - a));
        let norm = cross.norm();
        if norm < 1e-12 {
            continue;
        }
        let (normal, offset) = oriented_plane(cross / norm, &a);
        if !within_tilt(&normal, up, params.max_tilt_deg) {
            continue;
        }
        let count = scoring
            .iter()
            .filter(|q| (normal.dot(q) + offset).abs() <= params.inlier_tol)
            .count();
        if best.is_none_or(|(c, _, _)| count > c) {
            best = Some((count, normal, offset));
        }
    }
    let Some((_, mut normal, mut offset)) = best else {
        return Err(Error::NoFloorFound("no plane hypothesis within tilt limit".into()));
    };

    let inliers_of = |normal: &Vector3<f64>, offset: f64| -> Vec<usize> {
        pts.iter()
            .enumerate()
            .filter(|(_, (_, q))| (normal.dot(q) + offset).abs() <= params.inlier_tol)
            .map(|(k, _)| k)
            .collect()
    };

    let mut members = inliers_of(&normal, offset);
    for _ in 0..3 {
        let support: Vec<Vector3<f64>> = members.iter().map(|&k| pts[k].1).collect();
        let Some((n, d)) = least_squares_plane(&support) else {
            break;
        };
        let next = inliers_of(&n, d);
        if next.len() < 3 {
            break;
        }
        normal = n;
        offset = d;
        let converged = next == members;
        members = next;
        if converged {
            break;
        }
    }

    let fraction = members.len() as f64 / pts.len() as f64;
    if fraction < params.min_inlier_fraction {
        return Err(Error::NoFloorFound(format!(
            "best plane has inlier fraction {fraction:.3} < {}",
            params.min_inlier_fraction
        )));
    }
    if !within_tilt(&normal, up, params.max_tilt_deg) {
        return Err(Error::NoFloorFound(format!(
            "plane normal tilted more than {} deg from up",
            params.max_tilt_deg
        )));
    }
    Ok(PlaneModel {
        normal: normal.into(),
        offset,
        inliers: members.into_iter().map(|k| pts[k].0).collect(),
    })
}

/// Drops every point within `tol` of the plane; all other points keep their
/// pixel position.
pub fn remove_plane(cloud: &OrganizedCloud, plane: &PlaneModel, tol: f64) -> OrganizedCloud {
    let points = cloud
        .points
        .iter()
        .map(|p| p.filter(|q| plane.signed_distance(q).abs() > tol))
        .collect();
    OrganizedCloud {
        width: cloud.width,
        height: cloud.height,
        points,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionGrowParams {
    /// Maximum Euclidean step between 4-connected pixels, meters.
    pub max_neighbor_dist: f64,
    pub min_segment_size: usize,
}

impl Default for RegionGrowParams {
    fn default() -> Self {
        Self {
            max_neighbor_dist: 0.05,
            min_segment_size: 40,
        }
    }
}

/// Connected group of cloud points.
#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleSegment {
    /// Sorted organized-cloud indices.
    pub indices: Vec<usize>,
    pub centroid: CameraPoint,
}

impl ObstacleSegment {
    pub fn new(mut indices: Vec<usize>, cloud: &OrganizedCloud) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        let centroid = centroid_of(&indices, cloud)?;
        Ok(Self { indices, centroid })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn centroid_of(indices: &[usize], cloud: &OrganizedCloud) -> Result<CameraPoint> {
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for &i in indices {
        let q = cloud.get(i).ok_or_else(|| {
            Error::InvalidArgument(format!("segment index {i} has no point in the cloud"))
        })?;
        sum += q.coords();
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("centroid of an empty segment".into()));
    }
    Ok((sum / n as f64).into())
}

/// Component-wise mean of the segment's points.
pub fn segment_centroid(seg: &ObstacleSegment, cloud: &OrganizedCloud) -> Result<CameraPoint> {
    centroid_of(&seg.indices, cloud)
}

/// Breadth-first growth over the 4-connected pixel grid. Neighbors join a
/// region when their 3-D distance is within `max_neighbor_dist`; missing
/// points break connectivity. Segments are returned in order of their first
/// pixel in raster order.
pub fn region_grow(cloud: &OrganizedCloud, params: &RegionGrowParams) -> Vec<ObstacleSegment> {
    let w = cloud.width as usize;
    let h = cloud.height as usize;
    let mut visited = vec![false; cloud.points.len()];
    let mut queue = VecDeque::new();
    let mut segments = Vec::new();

    for seed in 0..cloud.points.len() {
        if visited[seed] || cloud.points[seed].is_none() {
            continue;
        }
        visited[seed] = true;
        queue.push_back(seed);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let q = cloud.points[i].expect("queued points are present").coords();
            let (x, y) = (i % w, i / w);
            let mut neighbors = [None; 4];
            if x > 0 {
                neighbors[0] = Some(i - 1);
            }
            if x + 1 < w {
                neighbors[1] = Some(i + 1);
            }
            if y > 0 {
                neighbors[2] = Some(i - w);
            }
            if y + 1 < h {
                neighbors[3] = Some(i + w);
            }
            for j in neighbors.into_iter().flatten() {
                if visited[j] {
                    continue;
                }
                if let Some(p) = cloud.points[j] {
                    if (p.coords() - q).norm() <= params.max_neighbor_dist {
                        visited[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if members.len() >= params.min_segment_size.max(1) {
            let seg = ObstacleSegment::new(members, cloud).expect("members are present points");
            segments.push(seg);
        }
    }
    segments
}

/// Binary image mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn from_indices(width: u32, height: u32, indices: &[usize]) -> Result<Self> {
        let mut data = vec![false; width as usize * height as usize];
        for &i in indices {
            let cell = data.get_mut(i).ok_or_else(|| {
                Error::InvalidArgument(format!("index {i} outside {width}x{height} mask"))
            })?;
            *cell = true;
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.data[(y * self.width + x) as usize]
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// Smallest box covering every set pixel, with exclusive max edges.
    pub fn bounding_box(&self) -> Option<BBox> {
        let mut bounds: Option<(u32, u32, u32, u32)> = None;
        for i in self.indices() {
            let (x, y) = (i as u32 % self.width, i as u32 / self.width);
            bounds = Some(match bounds {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bounds.map(|(x0, y0, x1, y1)| {
            BBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64)
                .expect("non-empty pixel range")
        })
    }

    /// Intersection over union of the set pixels.
    pub fn iou(&self, other: &Mask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.data.iter().zip(&other.data) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

pub fn segment_mask(seg: &ObstacleSegment, width: u32, height: u32) -> Result<Mask> {
    Mask::from_indices(width, height, &seg.indices)
}
