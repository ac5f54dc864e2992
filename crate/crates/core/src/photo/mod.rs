//! Photometric evaluation: the depth-based warp, the masked L1 + SSIM
//! projection loss, render and regularization losses, and PSNR/SSIM metrics.

mod ssim;
mod warp;

pub use ssim::{erode_mask, ssim, ssim_map, C1, C2, SIGMA as SSIM_SIGMA, WINDOW as SSIM_WINDOW};
pub use warp::{grid_sample, sample_bilinear, warp, WarpResult, SNAP_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::Gaussian4D;
use crate::raster::{Image, Raster};

/// Guard added to the valid-pixel count of masked means.
pub const MASK_EPSILON: f64 = 1e-8;
/// PSNR reported for identical images (and the ceiling otherwise).
pub const PSNR_CAP: f64 = 99.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub l1: f64,
    pub ssim: f64,
    pub l2: f64,
    pub percep: f64,
    pub scale: f64,
    pub opacity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 0.85,
            ssim: 0.15,
            l2: 1.0,
            percep: 0.05,
            scale: 0.01,
            opacity: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("l1", self.l1),
            ("ssim", self.ssim),
            ("l2", self.l2),
            ("percep", self.percep),
            ("scale", self.scale),
            ("opacity", self.opacity),
        ];
        match all.iter().find(|(_, w)| !(*w >= 0.0 && w.is_finite())) {
            Some((name, w)) => Err(Error::InvalidWeights(format!("{name} = {w}"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProjectLoss {
    pub l1: f64,
    pub ssim: f64,
    pub combined: f64,
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) || a.channels() != b.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Masked L1 and masked (1 − SSIM), combined with the L1/SSIM weights.
///
/// The SSIM term uses the mask eroded by the SSIM window so no window
/// touches an invalid pixel. The SSIM map is only computed when its weight
/// is nonzero.
pub fn masked_photometric_loss(
    warped: &Image,
    target: &Image,
    mask: &Raster<u8>,
    weights: &LossWeights,
) -> Result<ProjectLoss> {
    check_pair(warped, target)?;
    warped.check_size(mask, "mask")?;
    let ch = warped.channels() as f64;
    let mut abs_sum = 0.0;
    let mut count = 0.0;
    for (i, &m) in mask.data().iter().enumerate() {
        if m == 0 {
            continue;
        }
        let px: f64 = warped
            .pixel_at(i)
            .iter()
            .zip(target.pixel_at(i))
            .map(|(a, b)| (a - b).abs())
            .sum();
        abs_sum += px / ch;
        count += 1.0;
    }
    let l1 = abs_sum / (count + MASK_EPSILON);

    let ssim_term = if weights.ssim > 0.0 {
        let map = ssim_map(warped, target)?;
        let eroded = erode_mask(mask);
        let mut sum = 0.0;
        let mut n = 0.0;
        for (s, &m) in map.data().iter().zip(eroded.data()) {
            if m != 0 {
                sum += 1.0 - s;
                n += 1.0;
            }
        }
        sum / (n + MASK_EPSILON)
    } else {
        0.0
    };
    Ok(ProjectLoss {
        l1,
        ssim: ssim_term,
        combined: weights.l1 * l1 + weights.ssim * ssim_term,
    })
}

/// Mean squared error over all pixels and channels.
pub fn l2_render_loss(rendered: &Image, target: &Image) -> Result<f64> {
    check_pair(rendered, target)?;
    let n = rendered.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = rendered
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n as f64)
}

/// `10·log10(1/MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let mse = l2_render_loss(a, b)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// `λ_scale·E[‖scale‖₂] + λ_opacity·E[|opacity|]`.
pub fn norm_loss(gaussians: &[Gaussian4D], weights: &LossWeights) -> Result<f64> {
    if gaussians.is_empty() {
        return Err(Error::EmptyGaussians);
    }
    let n = gaussians.len() as f64;
    let scale: f64 = gaussians.iter().map(|g| g.scale.norm()).sum::<f64>() / n;
    let opacity: f64 = gaussians.iter().map(|g| g.opacity.abs()).sum::<f64>() / n;
    Ok(weights.scale * scale + weights.opacity * opacity)
}

/// Feature-space loss between a render and its reference (e.g. a VGG distance).
pub trait PerceptualLoss {
    fn loss(&self, rendered: &Image, target: &Image) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TotalLoss {
    pub render: f64,
    pub project: f64,
    pub norm: f64,
    pub total: f64,
}

/// Render + project + norm losses.
///
/// A nonzero perceptual weight needs a [`PerceptualLoss`] implementation.
pub fn total_loss(
    rendered: &Image,
    target: &Image,
    warp: &WarpResult,
    warp_target: &Image,
    gaussians: &[Gaussian4D],
    weights: &LossWeights,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<TotalLoss> {
    weights.validate()?;
    let percep = match perceptual {
        Some(p) => p.loss(rendered, target)?,
        None if weights.percep == 0.0 => 0.0,
        None => return Err(Error::MissingPerceptualLoss(weights.percep)),
    };
    let render = weights.percep * percep + weights.l2 * l2_render_loss(rendered, target)?;
    let project = masked_photometric_loss(&warp.warped, warp_target, &warp.mask, weights)?.combined;
    let norm = norm_loss(gaussians, weights)?;
    Ok(TotalLoss {
        render,
        project,
        norm,
        total: render + project + norm,
    })
}
