//! Pinhole camera model and rigid camera-to-world transforms.
//!
//! Camera frame: Z forward along the optical axis, X right, Y down.
//! World frame: Z up, with the floor being the plane Z = 0.

use nalgebra::{Matrix3, Point3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the quaternion norm accepted by [`Pose::new`].
pub const QUATERNION_NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation("intrinsics must be finite".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Validation(format!(
                "intrinsics.fx/fy must be positive (got {}, {})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) {
            return Err(Error::Validation(format!(
                "intrinsics.cx = {} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::Validation(format!(
                "intrinsics.cy = {} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.cx, self.cy)
    }

    /// Unnormalized viewing ray through `p`, scaled so its Z component is 1.
    pub fn pixel_ray(&self, p: PixelPoint) -> Vector3<f64> {
        Vector3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A point in the camera frame, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A point in the world frame, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

macro_rules! point_conversions {
    ($ty:ident) => {
        impl $ty {
            pub fn new(x: f64, y: f64, z: f64) -> Self {
                Self { x, y, z }
            }

            pub fn coords(&self) -> Vector3<f64> {
                Vector3::new(self.x, self.y, self.z)
            }

            pub fn distance(&self, other: &$ty) -> f64 {
                (self.coords() - other.coords()).norm()
            }

            pub fn is_finite(&self) -> bool {
                self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
            }
        }

        impl From<Vector3<f64>> for $ty {
            fn from(v: Vector3<f64>) -> Self {
                Self::new(v.x, v.y, v.z)
            }
        }

        impl From<Point3<f64>> for $ty {
            fn from(p: Point3<f64>) -> Self {
                Self::new(p.x, p.y, p.z)
            }
        }
    };
}

point_conversions!(CameraPoint);
point_conversions!(WorldPoint);

/// Camera pose in the world: maps camera-frame coordinates to world
/// coordinates (rotation first, then translation). Robot base pose and head
/// orientation are expected to be composed by the caller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose", into = "RawPose")]
pub struct Pose {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

/// On-disk pose: translation in meters, rotation as `[w, x, y, z]`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPose {
    translation: [f64; 3],
    rotation: [f64; 4],
}

impl TryFrom<RawPose> for Pose {
    type Error = Error;

    fn try_from(raw: RawPose) -> Result<Self> {
        let [w, x, y, z] = raw.rotation;
        Pose::new(Vector3::from(raw.translation), Quaternion::new(w, x, y, z))
    }
}

impl From<Pose> for RawPose {
    fn from(p: Pose) -> Self {
        let q = p.rotation.quaternion();
        RawPose {
            translation: [p.translation.x, p.translation.y, p.translation.z],
            rotation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl Pose {
    /// Builds a pose from a quaternion that must already be unit length.
    pub fn new(translation: Vector3<f64>, rotation: Quaternion<f64>) -> Result<Self> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("translation must be finite".into()));
        }
        let norm = rotation.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOL {
            return Err(Error::InvalidPose(format!(
                "quaternion norm {norm} is not 1 within {QUATERNION_NORM_TOL}"
            )));
        }
        Ok(Self {
            translation,
            rotation: UnitQuaternion::new_unchecked(rotation),
        })
    }

    pub fn from_parts(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts(Vector3::zeros(), UnitQuaternion::identity())
    }

    /// Camera at `position` whose optical axis points along world heading
    /// `yaw` (radians, 0 = +X) and is pitched `pitch_down` radians below the
    /// horizon. Image rows stay parallel to the floor (no roll).
    pub fn looking(position: Vector3<f64>, yaw: f64, pitch_down: f64) -> Self {
        let (s, c) = pitch_down.sin_cos();
        // Columns are the camera axes expressed in world coordinates for a
        // camera heading along +X.
        let right = Vector3::new(0.0, -1.0, 0.0);
        let down = Vector3::new(-s, 0.0, -c);
        let forward = Vector3::new(c, 0.0, -s);
        let base = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[right, down, forward]));
        let yaw_rot = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        let rotation = UnitQuaternion::from_rotation_matrix(&(yaw_rot * base));
        Self::from_parts(position, rotation)
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    /// World up-axis expressed in camera coordinates.
    pub fn up_in_camera(&self) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&Vector3::z())
    }
}

/// Back-projects pixel `p` at depth `z` into the camera frame:
/// `X = (x - cx) * Z / fx`, `Y = (y - cy) * Z / fy`.
pub fn back_project(p: PixelPoint, z: f64, k: &CameraIntrinsics) -> Result<CameraPoint> {
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::InvalidDepth(z));
    }
    Ok(CameraPoint::new(
        (p.x - k.cx) * z / k.fx,
        (p.y - k.cy) * z / k.fy,
        z,
    ))
}

/// Projects a camera-frame point onto the image plane. The result may fall
/// outside the image; clipping is left to the caller.
pub fn project(q: CameraPoint, k: &CameraIntrinsics) -> Result<PixelPoint> {
    if !(q.z > 0.0) {
        return Err(Error::BehindCamera(q.z));
    }
    Ok(PixelPoint::new(
        k.fx * q.x / q.z + k.cx,
        k.fy * q.y / q.z + k.cy,
    ))
}

pub fn camera_to_world(q: CameraPoint, pose: &Pose) -> WorldPoint {
    (pose.rotation * q.coords() + pose.translation).into()
}

pub fn world_to_camera(p: WorldPoint, pose: &Pose) -> CameraPoint {
    pose.rotation
        .inverse_transform_vector(&(p.coords() - pose.translation))
        .into()
}

/// Intersects the viewing ray through `p` with the floor plane Z = 0.
pub fn ray_ground_intersect(p: PixelPoint, k: &CameraIntrinsics, pose: &Pose) -> Result<WorldPoint> {
    let origin = pose.translation;
    if !(origin.z > 0.0) {
        return Err(Error::InvalidPose(format!(
            "camera height {} is not above the floor",
            origin.z
        )));
    }
    let dir = pose.rotation * k.pixel_ray(p);
    // Rays that are (numerically) parallel to the floor never reach it.
    if dir.z >= -1e-12 * dir.norm() {
        return Err(Error::NoIntersection);
    }
    let t = -origin.z / dir.z;
    let hit = origin + dir * t;
    Ok(WorldPoint::new(hit.x, hit.y, 0.0))
}
