use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{backproject, grid_to_pixel, normalize_to_grid, project, Intrinsics, SE3};
use crate::raster::{DepthMap, Image, Raster};

/// Sample coordinates this close to an integer are treated as that integer,
/// so zero-motion warps hit pixel centers exactly.
pub const SNAP_TOLERANCE: f64 = 1e-6;

/// Warped source image, validity mask and the normalized sampling grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpResult {
    pub warped: Image,
    pub mask: Raster<u8>,
    /// 2 channels; NaN where the point fell behind the source camera.
    pub grid: Raster<f64>,
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP_TOLERANCE {
        r
    } else {
        x
    }
}

/// Bilinear sample at pixel coordinates with zero padding outside the image.
pub fn sample_bilinear(image: &Image, x: f64, y: f64) -> Vec<f64> {
    let (x, y) = (snap(x), snap(y));
    let channels = image.channels();
    let mut out = vec![0.0; channels];
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1.0, y0, fx * (1.0 - fy)),
        (x0, y0 + 1.0, (1.0 - fx) * fy),
        (x0 + 1.0, y0 + 1.0, fx * fy),
    ];
    for (tx, ty, w) in taps {
        if w == 0.0 || tx < 0.0 || ty < 0.0 {
            continue;
        }
        let (tu, tv) = (tx as usize, ty as usize);
        if tu >= image.width() || tv >= image.height() {
            continue;
        }
        for (o, s) in out.iter_mut().zip(image.pixel(tu, tv)) {
            *o += w * s;
        }
    }
    out
}

/// Samples `image` at normalized grid coordinates (corner-aligned).
pub fn grid_sample(image: &Image, grid: (f64, f64)) -> Vec<f64> {
    let (x, y) = grid_to_pixel(grid, image.width(), image.height());
    sample_bilinear(image, x, y)
}

/// Warps `source` into the target view using target depth and the target → source transform.
pub fn warp(source: &Image, target_depth: &DepthMap, k: &Intrinsics, target_to_source: &SE3) -> Result<WarpResult> {
    let (w, h) = (target_depth.width(), target_depth.height());
    if w < 2 || h < 2 {
        return Err(Error::ShapeMismatch(format!("{w}x{h} is too small to warp")));
    }
    if source.width() != k.width || source.height() != k.height {
        return Err(Error::ShapeMismatch(format!(
            "source {}x{} vs intrinsics {}x{}",
            source.width(),
            source.height(),
            k.width,
            k.height
        )));
    }
    let channels = source.channels();
    let mut warped = Raster::filled(w, h, channels, 0.0);
    let mut mask = Raster::filled(w, h, 1, 0u8);
    let mut grid = Raster::filled(w, h, 2, f64::NAN);
    for v in 0..h {
        for u in 0..w {
            let p_t = backproject((u as f64, v as f64), target_depth.at(u, v), k)?;
            let p_s: Vector3<f64> = target_to_source.apply(&p_t);
            let Ok(((su, sv), _)) = project(&p_s, k) else {
                continue;
            };
            let g = normalize_to_grid((snap(su), snap(sv)), source.width(), source.height());
            grid.pixel_mut(u, v).copy_from_slice(&[g.0, g.1]);
            let valid = g.0.is_finite() && g.1.is_finite() && g.0.abs() <= 1.0 && g.1.abs() <= 1.0;
            if valid {
                mask.pixel_mut(u, v)[0] = 1;
                warped.pixel_mut(u, v).copy_from_slice(&grid_sample(source, g));
            }
        }
    }
    Ok(WarpResult { warped, mask, grid })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Raster::from_fn(w, h, 3, |u, v, c| ((u * 7 + v * 13 + c * 5) % 31) as f64 / 31.0)
    }

    #[test]
    fn identity_warp_is_exact() {
        let k = Intrinsics::new(40.0, 42.0, 12.3, 7.9, 24, 16).unwrap();
        let src = ramp(24, 16);
        let depth = Raster::from_fn(24, 16, 1, |u, v, _| 2.0 + (u + v) as f64 * 0.37);
        let r = warp(&src, &depth, &k, &SE3::identity()).unwrap();
        assert_eq!(r.warped, src);
        assert!(r.mask.data().iter().all(|m| *m == 1));
    }

    #[test]
    fn out_of_bounds_is_masked() {
        let k = Intrinsics::new(10.0, 10.0, 5.0, 5.0, 11, 11).unwrap();
        let src = ramp(11, 11);
        let depth = Raster::filled(11, 11, 1, 10.0);
        // Shift points so that pixel u lands at u + 21 (beyond width + 10).
        let t = SE3::from_translation(Vector3::new(21.0, 0.0, 0.0));
        let r = warp(&src, &depth, &k, &t).unwrap();
        assert!(r.mask.data().iter().all(|m| *m == 0));
        assert!(r.grid.pixel(0, 0)[0] > 1.0);
    }

    #[test]
    fn behind_camera_is_masked() {
        let k = Intrinsics::new(10.0, 10.0, 5.0, 5.0, 11, 11).unwrap();
        let depth = Raster::filled(11, 11, 1, 3.0);
        let t = SE3::from_translation(Vector3::new(0.0, 0.0, -5.0));
        let r = warp(&ramp(11, 11), &depth, &k, &t).unwrap();
        assert!(r.mask.data().iter().all(|m| *m == 0));
        assert!(r.grid.data().iter().all(|g| g.is_nan()));
    }

    #[test]
    fn bilinear_midpoint_and_padding() {
        let img = Raster::from_vec(2, 1, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(sample_bilinear(&img, 0.5, 0.0), vec![0.5]);
        assert_eq!(sample_bilinear(&img, 1.0, 0.0), vec![1.0]);
        assert_eq!(sample_bilinear(&img, 1.5, 0.0), vec![0.5]);
        assert_eq!(grid_sample(&img, (1.0, -1.0)), vec![1.0]);
    }
}
