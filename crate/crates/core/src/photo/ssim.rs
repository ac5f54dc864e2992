//! Gaussian-window SSIM (11×11, σ = 1.5) with mirrored borders.

use crate::error::{Error, Result};
use crate::raster::{Image, Raster};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;
const RADIUS: isize = (WINDOW / 2) as isize;

fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *w = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.map(|w| w / sum)
}

/// Mirror index without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Separable Gaussian blur of a single-channel plane.
fn blur(plane: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, kw) in k.iter().enumerate() {
                let xx = reflect(x as isize + j as isize - RADIUS, w);
                s += kw * plane[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, kw) in k.iter().enumerate() {
                let yy = reflect(y as isize + j as isize - RADIUS, h);
                s += kw * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

pub fn check_window(width: usize, height: usize) -> Result<()> {
    if width < WINDOW || height < WINDOW {
        return Err(Error::ImageTooSmall {
            width,
            height,
            window: WINDOW,
        });
    }
    Ok(())
}

/// Per-pixel SSIM averaged over channels. Symmetric in its arguments bit for bit.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Raster<f64>> {
    if !a.same_shape(b) || a.channels() != b.channels() {
        return Err(Error::ShapeMismatch("ssim inputs differ in shape".into()));
    }
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    check_window(w, h)?;
    let k = kernel();
    let mut acc = vec![0.0; w * h];
    for c in 0..ch {
        let pa: Vec<f64> = a.data().iter().skip(c).step_by(ch).copied().collect();
        let pb: Vec<f64> = b.data().iter().skip(c).step_by(ch).copied().collect();
        let sq_a: Vec<f64> = pa.iter().map(|x| x * x).collect();
        let sq_b: Vec<f64> = pb.iter().map(|x| x * x).collect();
        let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = blur(&pa, w, h, &k);
        let mu_b = blur(&pb, w, h, &k);
        let e_aa = blur(&sq_a, w, h, &k);
        let e_bb = blur(&sq_b, w, h, &k);
        let e_ab = blur(&prod, w, h, &k);
        for i in 0..w * h {
            let mab = mu_a[i] * mu_b[i];
            let var_a = e_aa[i] - mu_a[i] * mu_a[i];
            let var_b = e_bb[i] - mu_b[i] * mu_b[i];
            let cov = e_ab[i] - mab;
            let num = (2.0 * mab + C1) * (2.0 * cov + C2);
            let den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + C1) * (var_a + var_b + C2);
            acc[i] += num / den;
        }
    }
    Raster::from_vec(w, h, 1, acc.into_iter().map(|s| s / ch as f64).collect())
}

/// Mean SSIM over the image.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let m = ssim_map(a, b)?;
    Ok(m.data().iter().sum::<f64>() / m.pixel_count() as f64)
}

/// Keeps only pixels whose whole (mirrored) window is valid.
pub fn erode_mask(mask: &Raster<u8>) -> Raster<u8> {
    let (w, h) = (mask.width(), mask.height());
    let mut rows = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let ok = (-RADIUS..=RADIUS).all(|d| mask.at(reflect(x as isize + d, w), y) != 0);
            rows[y * w + x] = ok as u8;
        }
    }
    Raster::from_fn(w, h, 1, |x, y, _| {
        (-RADIUS..=RADIUS).all(|d| rows[reflect(y as isize + d, h) * w + x] != 0) as u8
    })
}
