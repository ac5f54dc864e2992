//! Pixel-wise Gaussian construction from depth and attribute maps.
//!
//! Each pixel `(u, v)` of a view yields exactly one kernel at index
//! `v·W + u`; downstream stages rely on that bijection.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss::Gaussian4D;
use crate::geom::{backproject, CameraEntry};
use crate::raster::{DepthMap, Image, Raster};
use crate::sh::{coeffs_per_channel, dc_from_rgb, degree_of};

pub const DEPTH_MIN: f64 = 1.5;
pub const DEPTH_MAX: f64 = 110.0;
pub const SCALE_MIN: f64 = 1e-4;
pub const SCALE_MAX: f64 = 50.0;

/// Pre-activation per-pixel attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeMaps {
    /// 4 channels, `(w, x, y, z)` in the camera frame.
    pub raw_rotation: Raster<f64>,
    /// 3 channels, log-scale.
    pub raw_scale: Raster<f64>,
    /// 1 channel, logit.
    pub raw_opacity: Raster<f64>,
    /// `3·(degree+1)²` channels, coefficient-major, ego frame.
    pub raw_sh: Raster<f64>,
}

impl AttributeMaps {
    pub fn width(&self) -> usize {
        self.raw_opacity.width()
    }

    pub fn height(&self) -> usize {
        self.raw_opacity.height()
    }

    pub fn sh_degree(&self) -> Result<usize> {
        degree_of(self.raw_sh.channels())
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.raw_opacity;
        o.check_size(&self.raw_rotation, "rotation map")?;
        o.check_size(&self.raw_scale, "scale map")?;
        o.check_size(&self.raw_sh, "sh map")?;
        let channels = [
            ("rotation", self.raw_rotation.channels(), 4),
            ("scale", self.raw_scale.channels(), 3),
            ("opacity", o.channels(), 1),
        ];
        for (name, got, want) in channels {
            if got != want {
                return Err(Error::ShapeMismatch(format!(
                    "{name} map has {got} channels, expected {want}"
                )));
            }
        }
        self.sh_degree()?;
        Ok(())
    }
}

/// Activated attributes of one pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelAttributes {
    pub rotation: UnitQuaternion<f64>,
    pub scale: Vector3<f64>,
    pub opacity: f64,
    pub sh: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn activate_scale(raw: f64) -> f64 {
    raw.exp().clamp(SCALE_MIN, SCALE_MAX)
}

/// Normalized quaternion; a zero (or non-finite) input maps to identity.
pub fn activate_rotation(raw: [f64; 4]) -> UnitQuaternion<f64> {
    let q = Quaternion::new(raw[0], raw[1], raw[2], raw[3]);
    let n = q.norm();
    if n > 0.0 && n.is_finite() {
        UnitQuaternion::from_quaternion(q)
    } else {
        UnitQuaternion::identity()
    }
}

/// Clamps every depth into `[DEPTH_MIN, DEPTH_MAX]`.
pub fn clamp_depth(depth: &DepthMap) -> Result<DepthMap> {
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let d = depth.at(u, v);
            if !d.is_finite() {
                return Err(Error::InvalidDepth { u, v, value: d });
            }
        }
    }
    Ok(depth.map(|d| d.clamp(DEPTH_MIN, DEPTH_MAX)))
}

pub fn activate_pixel(raw: &AttributeMaps, index: usize) -> PixelAttributes {
    let r = raw.raw_rotation.pixel_at(index);
    let s = raw.raw_scale.pixel_at(index);
    PixelAttributes {
        rotation: activate_rotation([r[0], r[1], r[2], r[3]]),
        scale: Vector3::new(activate_scale(s[0]), activate_scale(s[1]), activate_scale(s[2])),
        opacity: sigmoid(raw.raw_opacity.pixel_at(index)[0]),
        sh: raw.raw_sh.pixel_at(index).to_vec(),
    }
}

pub fn activate_attributes(raw: &AttributeMaps) -> Result<Vec<PixelAttributes>> {
    raw.validate()?;
    Ok((0..raw.raw_opacity.pixel_count())
        .map(|i| activate_pixel(raw, i))
        .collect())
}

/// Builds one static kernel per pixel in the ego frame of the view's timestamp.
///
/// The degree-0 SH band comes from the image; higher bands from `attrs`.
pub fn build_frame_gaussians(
    image: &Image,
    depth: &DepthMap,
    attrs: &AttributeMaps,
    cam: &CameraEntry,
    t_start: f64,
    t_end: f64,
) -> Result<Vec<Gaussian4D>> {
    attrs.validate()?;
    depth.check_size(image, "depth vs image")?;
    depth.check_size(&attrs.raw_opacity, "depth vs attribute maps")?;
    if image.channels() != 3 || depth.channels() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "image has {} channels, depth has {}",
            image.channels(),
            depth.channels()
        )));
    }
    let k = &cam.intrinsics;
    if k.width != depth.width() || k.height != depth.height() {
        return Err(Error::ShapeMismatch(format!(
            "camera {} is {}x{}, rasters are {}x{}",
            cam.id,
            k.width,
            k.height,
            depth.width(),
            depth.height()
        )));
    }
    if !(t_start < t_end) {
        return Err(Error::TimeMismatch(format!("empty span [{t_start}, {t_end}]")));
    }
    let n_coeffs = 3 * coeffs_per_channel(attrs.sh_degree()?);
    let width = depth.width();
    let extrinsic_q = cam.extrinsic.quaternion();

    let rows: Vec<Result<Vec<Gaussian4D>>> = (0..depth.height())
        .into_par_iter()
        .map(|v| {
            (0..width)
                .map(|u| {
                    let idx = v * width + u;
                    let p_cam = backproject((u as f64, v as f64), depth.at(u, v), k)?;
                    let a = activate_pixel(attrs, idx);
                    let mut sh = a.sh;
                    debug_assert_eq!(sh.len(), n_coeffs);
                    let rgb = image.pixel(u, v);
                    for c in 0..3 {
                        sh[c] = dc_from_rgb(rgb[c]);
                    }
                    Ok(Gaussian4D {
                        center: cam.extrinsic.apply(&p_cam),
                        rotation: extrinsic_q * a.rotation,
                        scale: a.scale,
                        opacity: a.opacity,
                        sh,
                        velocity: Vector3::zeros(),
                        dynamic: false,
                        t_start,
                        t_end,
                    })
                })
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(depth.pixel_count());
    for row in rows {
        out.extend(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Intrinsics, SE3};
    use crate::sh::sh_to_rgb;
    use proptest::prelude::*;

    fn maps(w: usize, h: usize) -> AttributeMaps {
        AttributeMaps {
            raw_rotation: Raster::filled(w, h, 4, 0.0),
            raw_scale: Raster::filled(w, h, 3, 0.0),
            raw_opacity: Raster::filled(w, h, 1, 0.0),
            raw_sh: Raster::filled(w, h, 3, 0.0),
        }
    }

    fn cam(w: usize, h: usize, extrinsic: SE3) -> CameraEntry {
        CameraEntry {
            id: "cam".into(),
            intrinsics: Intrinsics::new(1.0, 1.0, 0.0, 0.0, w, h).unwrap(),
            extrinsic,
        }
    }

    #[test]
    fn clamp_examples() {
        let d = Raster::from_vec(3, 1, 1, vec![0.3, 200.0, 50.0]).unwrap();
        assert_eq!(clamp_depth(&d).unwrap().data(), &[1.5, 110.0, 50.0]);
    }

    #[test]
    fn clamp_rejects_non_finite_with_location() {
        let d = Raster::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, f64::NAN]).unwrap();
        match clamp_depth(&d) {
            Err(Error::InvalidDepth { u: 1, v: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let d = Raster::from_vec(1, 1, 1, vec![f64::INFINITY]).unwrap();
        assert!(clamp_depth(&d).is_err());
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(values in prop::collection::vec(-10.0f64..500.0, 16)) {
            let d = Raster::from_vec(4, 4, 1, values).unwrap();
            let once = clamp_depth(&d).unwrap();
            prop_assert_eq!(clamp_depth(&once).unwrap(), once.clone());
            prop_assert!(once.data().iter().all(|v| (DEPTH_MIN..=DEPTH_MAX).contains(v)));
        }
    }

    #[test]
    fn activation_examples() {
        let a = activate_attributes(&maps(1, 1)).unwrap();
        assert_eq!(a[0].opacity, 0.5);
        assert_eq!(a[0].scale, Vector3::repeat(1.0));
        assert_eq!(a[0].rotation, UnitQuaternion::identity());
        assert_eq!(activate_scale(100.0), SCALE_MAX);
        assert_eq!(activate_scale(-100.0), SCALE_MIN);
        assert!((sigmoid(logit(0.99)) - 0.99).abs() < 1e-12);
    }

    #[test]
    fn row_major_index_order() {
        let image = Raster::filled(2, 2, 3, 0.5);
        let depth = Raster::from_vec(2, 2, 1, vec![2.0, 3.0, 4.0, 5.0]).unwrap();
        let g = build_frame_gaussians(&image, &depth, &maps(2, 2), &cam(2, 2, SE3::identity()), 0.0, 1.0)
            .unwrap();
        assert_eq!(g.len(), 4);
        // fx = 1, cx = 0: x = u·d, y = v·d
        let expected = [(0.0, 0.0, 2.0), (3.0, 0.0, 3.0), (0.0, 4.0, 4.0), (5.0, 5.0, 5.0)];
        for (g, e) in g.iter().zip(expected) {
            assert_eq!(g.center, Vector3::new(e.0, e.1, e.2));
            assert!(!g.dynamic && g.velocity == Vector3::zeros());
        }
    }

    #[test]
    fn extrinsic_is_applied() {
        let image = Raster::filled(1, 1, 3, 0.25);
        let depth = Raster::filled(1, 1, 1, 5.0);
        let g = build_frame_gaussians(&image, &depth, &maps(1, 1), &cam(1, 1, SE3::identity()), 0.0, 1.0)
            .unwrap();
        assert_eq!(g[0].center, Vector3::new(0.0, 0.0, 5.0));
        let shifted = SE3::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let g = build_frame_gaussians(&image, &depth, &maps(1, 1), &cam(1, 1, shifted), 0.0, 1.0).unwrap();
        let oracle = shifted.rotation * Vector3::new(0.0, 0.0, 5.0) + shifted.translation;
        assert_eq!(g[0].center, oracle);
        assert_eq!(g[0].center, Vector3::new(1.0, 0.0, 5.0));
        let rgb = sh_to_rgb(&g[0].sh, &Vector3::z()).unwrap();
        assert!(rgb.iter().all(|c| (c - 0.25).abs() < 1e-12));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let image = Raster::filled(2, 2, 3, 0.5);
        let depth = Raster::filled(2, 2, 1, 5.0);
        assert!(matches!(
            build_frame_gaussians(&image, &depth, &maps(3, 2), &cam(2, 2, SE3::identity()), 0.0, 1.0),
            Err(Error::ShapeMismatch(_))
        ));
        let depth = Raster::filled(2, 1, 1, 5.0);
        assert!(build_frame_gaussians(&image, &depth, &maps(2, 2), &cam(2, 2, SE3::identity()), 0.0, 1.0)
            .is_err());
    }
}
