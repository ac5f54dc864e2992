//! Rigid transforms and the pinhole camera model.
//!
//! Camera frame: x right, y down, z forward. Pixel `(u, v)` refers to the
//! center of column `u`, row `v`, so integer coordinates land on pixel
//! centers.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest camera-frame depth that still projects.
pub const MIN_PROJECT_Z: f64 = 1e-9;

/// Rigid-body transform `x ↦ R·x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl SE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform from a rotation matrix assumed orthonormal.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    /// Rotation about the z axis by `angle` radians.
    pub fn rot_z(angle: f64) -> Self {
        Self::new(
            Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner(),
            Vector3::zeros(),
        )
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotates a direction (no translation).
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SE3) -> SE3 {
        SE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Largest per-entry deviation of `RᵀR` from identity, plus `|det R − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        e.max((self.rotation.determinant() - 1.0).abs())
    }

    /// Per-entry max distance between the two transforms.
    pub fn max_abs_diff(&self, other: &SE3) -> f64 {
        (self.rotation - other.rotation)
            .amax()
            .max((self.translation - other.translation).amax())
    }

    /// Interpolates between two poses: linear in translation, slerp in rotation.
    pub fn interpolate(&self, other: &SE3, alpha: f64) -> SE3 {
        if alpha == 0.0 {
            return *self;
        }
        if alpha == 1.0 {
            return *other;
        }
        let q = self.quaternion().slerp(&other.quaternion(), alpha);
        SE3::from_quaternion(
            &q,
            self.translation + (other.translation - self.translation) * alpha,
        )
    }
}

/// Largest accepted deviation of a stored quaternion's norm from 1.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

/// Normalizes a `(w, x, y, z)` quaternion read from disk.
///
/// Norms within [`QUATERNION_NORM_TOLERANCE`] of one are renormalized (with a
/// log warning when not already unit); anything further off is rejected.
pub fn quaternion_from_wxyz(q: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = raw.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE * (1.0 + 1e-9) {
        return Err(Error::NonUnitQuaternion(norm));
    }
    if (norm - 1.0).abs() > 1e-12 {
        log::warn!("renormalizing quaternion with norm {norm}");
    }
    Ok(UnitQuaternion::from_quaternion(raw))
}

pub fn quaternion_to_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// Pinhole intrinsics without skew or distortion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
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
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} raster",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Camera-frame direction with unit z through pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Lifts pixel `(u, v)` at z-depth `depth` into the camera frame.
pub fn backproject(pixel: (f64, f64), depth: f64, k: &Intrinsics) -> Result<Vector3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::NonPositiveDepth(depth));
    }
    let (u, v) = pixel;
    Ok(Vector3::new(
        (u - k.cx) * depth / k.fx,
        (v - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Projects a camera-frame point to pixel coordinates and depth.
pub fn project(point: &Vector3<f64>, k: &Intrinsics) -> Result<((f64, f64), f64)> {
    let z = point.z;
    if !(z > MIN_PROJECT_Z) {
        return Err(Error::BehindCamera(z));
    }
    Ok((
        (k.fx * point.x / z + k.cx, k.fy * point.y / z + k.cy),
        z,
    ))
}

/// Maps pixel coordinates to the `[-1, 1]` sampling grid (pixel centers at the ends).
pub fn normalize_to_grid(pixel: (f64, f64), width: usize, height: usize) -> (f64, f64) {
    debug_assert!(width >= 2 && height >= 2);
    (
        2.0 * pixel.0 / (width - 1) as f64 - 1.0,
        2.0 * pixel.1 / (height - 1) as f64 - 1.0,
    )
}

/// Inverse of [`normalize_to_grid`].
pub fn grid_to_pixel(grid: (f64, f64), width: usize, height: usize) -> (f64, f64) {
    (
        (grid.0 + 1.0) * 0.5 * (width - 1) as f64,
        (grid.1 + 1.0) * 0.5 * (height - 1) as f64,
    )
}

/// One camera of the rig.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraEntry {
    pub id: String,
    pub intrinsics: Intrinsics,
    /// Camera → ego transform.
    pub extrinsic: SE3,
}

/// Rigidly mounted cameras; ids are unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CameraRig {
    cameras: Vec<CameraEntry>,
}

impl CameraRig {
    pub fn new(cameras: Vec<CameraEntry>) -> Result<Self> {
        for (i, c) in cameras.iter().enumerate() {
            c.intrinsics.validate()?;
            if c.extrinsic.orthonormality_error() > 1e-9 {
                return Err(Error::InvalidRig(format!(
                    "camera {} extrinsic rotation is not orthonormal",
                    c.id
                )));
            }
            if cameras[..i].iter().any(|o| o.id == c.id) {
                return Err(Error::InvalidRig(format!("duplicate camera id {}", c.id)));
            }
        }
        Ok(Self { cameras })
    }

    pub fn cameras(&self) -> &[CameraEntry] {
        &self.cameras
    }

    pub fn get(&self, id: &str) -> Option<&CameraEntry> {
        self.cameras.iter().find(|c| c.id == id)
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

/// Ego → world transform at a timestamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EgoPose {
    pub t: f64,
    pub pose: SE3,
}

/// Ego pose at `t`, interpolated between the bracketing samples.
///
/// `poses` must be sorted by time; times outside the samples clamp to the ends.
pub fn pose_at(poses: &[EgoPose], t: f64) -> Result<SE3> {
    let first = poses
        .first()
        .ok_or_else(|| Error::InvalidRequest("no ego poses".into()))?;
    let last = poses.last().unwrap();
    if t < first.t || t > last.t {
        return Err(Error::OutOfSegment {
            t,
            start: first.t,
            end: last.t,
        });
    }
    if let Some(exact) = poses.iter().find(|p| p.t == t) {
        return Ok(exact.pose);
    }
    let i = poses.partition_point(|p| p.t <= t);
    let (a, b) = (&poses[i - 1], &poses[i]);
    Ok(a.pose.interpolate(&b.pose, (t - a.t) / (b.t - a.t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn k100() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 50.0, 25.0, 200, 200).unwrap()
    }

    #[test]
    fn backproject_principal_ray() {
        let k = Intrinsics::new(1.0, 1.0, 0.0, 0.0, 2, 2).unwrap();
        let p = backproject((0.0, 0.0), 5.0, &k).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn backproject_matches_linear_solve() {
        // K·x = [u·d, v·d, d]
        let k = k100();
        let rhs = Vector3::new(150.0 * 10.0, 125.0 * 10.0, 10.0);
        let solved = k.matrix().lu().solve(&rhs).unwrap();
        let p = backproject((150.0, 125.0), 10.0, &k).unwrap();
        assert!((p - solved).amax() < 1e-12);
        assert!((p - Vector3::new(10.0, 10.0, 10.0)).amax() < 1e-12);
    }

    #[test]
    fn degenerate_depth_rejected() {
        assert!(matches!(
            backproject((0.0, 0.0), 0.0, &k100()),
            Err(Error::NonPositiveDepth(_))
        ));
        assert!(backproject((0.0, 0.0), -1.0, &k100()).is_err());
        assert!(backproject((0.0, 0.0), f64::NAN, &k100()).is_err());
    }

    #[test]
    fn project_examples() {
        let k = Intrinsics::new(1.0, 1.0, 0.0, 0.0, 2, 2).unwrap();
        assert_eq!(
            project(&Vector3::new(0.0, 0.0, 5.0), &k).unwrap(),
            ((0.0, 0.0), 5.0)
        );
        let ((u, v), d) = project(&Vector3::new(10.0, 10.0, 10.0), &k100()).unwrap();
        assert!((u - 150.0).abs() < 1e-12 && (v - 125.0).abs() < 1e-12 && d == 10.0);
        assert!(matches!(
            project(&Vector3::new(0.0, 0.0, -1.0), &k),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn compose_rot_z_twice() {
        let r = SE3::rot_z(FRAC_PI_2);
        let p = r.compose(&r).apply(&Vector3::new(1.0, 0.0, 0.0));
        // matrix product oracle
        let m = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let expected = m * m * Vector3::new(1.0, 0.0, 0.0);
        assert!((p - expected).amax() < 1e-12);
        assert!((p - Vector3::new(-1.0, 0.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn identity_and_inverse_laws() {
        let t = SE3::from_quaternion(
            &UnitQuaternion::from_euler_angles(0.1, -0.4, 1.2),
            Vector3::new(1.0, -2.0, 3.0),
        );
        assert!(SE3::identity().compose(&t).max_abs_diff(&t) < 1e-15);
        assert!(t.compose(&t.inverse()).max_abs_diff(&SE3::identity()) < 1e-12);
    }

    #[test]
    fn grid_edges_and_midpoint() {
        assert_eq!(normalize_to_grid((0.0, 0.0), 518, 280).0, -1.0);
        assert_eq!(normalize_to_grid((517.0, 0.0), 518, 280).0, 1.0);
        assert!(normalize_to_grid((258.5, 0.0), 518, 280).0.abs() < 1e-15);
        assert_eq!(normalize_to_grid((0.0, 279.0), 518, 280).1, 1.0);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 2, 2).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 2.0, 0.0, 2, 2).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, -0.1, 2, 2).is_err());
    }

    #[test]
    fn rig_rejects_duplicate_ids() {
        let k = k100();
        let cam = CameraEntry {
            id: "front".into(),
            intrinsics: k,
            extrinsic: SE3::identity(),
        };
        assert!(CameraRig::new(vec![cam.clone(), cam]).is_err());
    }

    #[test]
    fn quaternion_tolerance() {
        let q = quaternion_from_wxyz([0.9990, 0.0, 0.0, 0.0]).unwrap();
        assert!((q.norm() - 1.0).abs() < 1e-15);
        assert!(quaternion_from_wxyz([0.99, 0.0, 0.0, 0.0]).is_err());
        assert!(quaternion_from_wxyz([0.0; 4]).is_err());
    }

    #[test]
    fn pose_interpolation() {
        let poses = [
            EgoPose {
                t: 0.0,
                pose: SE3::identity(),
            },
            EgoPose {
                t: 1.0,
                pose: SE3::from_translation(Vector3::new(2.0, 0.0, 0.0)),
            },
        ];
        let mid = pose_at(&poses, 0.25).unwrap();
        assert!((mid.translation - Vector3::new(0.5, 0.0, 0.0)).amax() < 1e-12);
        assert_eq!(pose_at(&poses, 1.0).unwrap(), poses[1].pose);
        assert!(pose_at(&poses, 1.5).is_err());
    }
}
