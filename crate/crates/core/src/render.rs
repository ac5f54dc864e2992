//! Time-conditioned CPU splatting of a [`Scene4D`].
//!
//! Kernels are projected with the EWA approximation, sorted front to back and
//! composited per pixel inside fixed 16×16 tiles. Per-pixel work never depends
//! on the tile schedule, so output is bit-identical for any thread count.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss::{Gaussian4D, Scene4D};
use crate::geom::{CameraEntry, Intrinsics, SE3};
use crate::raster::{Image, Raster};
use crate::sh::sh_to_rgb;

pub const TILE_SIZE: usize = 16;
/// Screen-space low-pass added to every projected covariance, px².
pub const COV_DILATION: f64 = 0.3;
pub const ALPHA_MAX: f64 = 0.999;
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
pub const NEAR_PLANE: f64 = 0.2;
/// Half-width of each splat's screen bounding box, in standard deviations.
pub const BOUND_SIGMAS: f64 = 3.0;

/// A kernel placed in the world frame at a fixed time.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub center: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub scale: Vector3<f64>,
    pub opacity: f64,
    pub sh: Vec<f64>,
    /// Rotation from the frame the SH coefficients are expressed in to world.
    pub sh_frame: Matrix3<f64>,
}

impl Kernel {
    pub fn world_covariance(&self) -> Matrix3<f64> {
        let s2 = Matrix3::from_diagonal(&self.scale.component_mul(&self.scale));
        self.rotation * s2 * self.rotation.transpose()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderRequest {
    pub t: f64,
    pub camera: CameraEntry,
    /// Viewer ego → world pose, possibly a novel one.
    pub ego_pose: SE3,
    pub width: usize,
    pub height: usize,
    pub background: [f64; 3],
}

impl RenderRequest {
    /// Request at the camera's native resolution.
    pub fn new(t: f64, camera: CameraEntry, ego_pose: SE3, background: [f64; 3]) -> Self {
        let (width, height) = (camera.intrinsics.width, camera.intrinsics.height);
        Self {
            t,
            camera,
            ego_pose,
            width,
            height,
            background,
        }
    }

    /// Camera → world transform of the viewer.
    pub fn camera_to_world(&self) -> SE3 {
        self.ego_pose.compose(&self.camera.extrinsic)
    }

    /// Intrinsics rescaled to the output size (pixel-center convention).
    pub fn output_intrinsics(&self) -> Intrinsics {
        let k = self.camera.intrinsics;
        if k.width == self.width && k.height == self.height {
            return k;
        }
        let sx = self.width as f64 / k.width as f64;
        let sy = self.height as f64 / k.height as f64;
        Intrinsics {
            fx: k.fx * sx,
            fy: k.fy * sy,
            cx: (k.cx + 0.5) * sx - 0.5,
            cy: (k.cy + 0.5) * sy - 0.5,
            width: self.width,
            height: self.height,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub visible: usize,
    pub culled: usize,
    /// Kernels dropped because their projected covariance was singular.
    pub singular: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub rgb: Image,
    /// Accumulated opacity `1 − Π(1−α)`; 1 once compositing terminates early.
    pub alpha: Raster<f64>,
    /// Alpha-weighted view-space z.
    pub depth: Raster<f64>,
    pub stats: RenderStats,
}

/// Places segment kernels in the world at time `t` via the anchor pose.
pub fn kernels_from_gaussians(gaussians: &[Gaussian4D], anchor: &SE3, t: f64) -> Result<Vec<Kernel>> {
    gaussians
        .iter()
        .map(|g| {
            let c = g.center_at(t)?;
            Ok(Kernel {
                center: anchor.apply(&c),
                rotation: anchor.rotation * g.rotation.to_rotation_matrix().into_inner(),
                scale: g.scale,
                opacity: g.opacity,
                sh: g.sh.clone(),
                sh_frame: anchor.rotation,
            })
        })
        .collect()
}

/// Kernels of the segment owning `t`, advanced to `t`, in the world frame.
pub fn select_and_advance(scene: &Scene4D, t: f64) -> Result<Vec<Kernel>> {
    let seg = scene.segment_at(t)?;
    kernels_from_gaussians(&seg.gaussians, &seg.anchor_pose.pose, t)
}

/// Screen-space splat of one kernel.
#[derive(Clone, Copy, Debug)]
struct Splat {
    mean: (f64, f64),
    conic: (f64, f64, f64),
    /// Inclusive pixel bounds (x0, y0, x1, y1).
    bounds: (usize, usize, usize, usize),
    depth: f64,
    opacity: f64,
    color: [f64; 3],
    index: usize,
}

enum Projected {
    Visible(Splat),
    Culled,
    Singular,
}

fn project_kernel(
    index: usize,
    k: &Kernel,
    world_to_cam: &SE3,
    cam_center: &Vector3<f64>,
    intr: &Intrinsics,
) -> Result<Projected> {
    let p = world_to_cam.apply(&k.center);
    if !(p.z > NEAR_PLANE) {
        return Ok(Projected::Culled);
    }
    let cov_cam = world_to_cam.rotation * k.world_covariance() * world_to_cam.rotation.transpose();
    let (x, y, z) = (p.x, p.y, p.z);
    let j = Matrix2x3::new(
        intr.fx / z,
        0.0,
        -intr.fx * x / (z * z),
        0.0,
        intr.fy / z,
        -intr.fy * y / (z * z),
    );
    let cov2: Matrix2<f64> = j * cov_cam * j.transpose() + Matrix2::identity() * COV_DILATION;
    let (a, b, c) = (cov2[(0, 0)], cov2[(0, 1)], cov2[(1, 1)]);
    let det = a * c - b * b;
    if !(det > 0.0) || !det.is_finite() {
        return Ok(Projected::Singular);
    }
    let mid = 0.5 * (a + c);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = BOUND_SIGMAS * lambda_max.sqrt();
    let mean = (intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy);

    let lo_x = (mean.0 - radius).ceil().max(0.0);
    let lo_y = (mean.1 - radius).ceil().max(0.0);
    let hi_x = (mean.0 + radius).floor().min(intr.width as f64 - 1.0);
    let hi_y = (mean.1 + radius).floor().min(intr.height as f64 - 1.0);
    if !(lo_x <= hi_x && lo_y <= hi_y) {
        return Ok(Projected::Culled);
    }

    let dir = (k.center - cam_center).normalize();
    let color = sh_to_rgb(&k.sh, &(k.sh_frame.transpose() * dir))?;
    Ok(Projected::Visible(Splat {
        mean,
        conic: (c / det, -b / det, a / det),
        bounds: (lo_x as usize, lo_y as usize, hi_x as usize, hi_y as usize),
        depth: z,
        opacity: k.opacity,
        color,
        index,
    }))
}

struct TilePixels {
    rgb: Vec<[f64; 3]>,
    alpha: Vec<f64>,
    depth: Vec<f64>,
}

fn shade_tile(
    tx: usize,
    ty: usize,
    list: &[u32],
    splats: &[Splat],
    width: usize,
    height: usize,
    background: [f64; 3],
) -> TilePixels {
    let x0 = tx * TILE_SIZE;
    let y0 = ty * TILE_SIZE;
    let x1 = (x0 + TILE_SIZE).min(width);
    let y1 = (y0 + TILE_SIZE).min(height);
    let n = (x1 - x0) * (y1 - y0);
    let mut out = TilePixels {
        rgb: Vec::with_capacity(n),
        alpha: Vec::with_capacity(n),
        depth: Vec::with_capacity(n),
    };
    for py in y0..y1 {
        for px in x0..x1 {
            let mut transmittance = 1.0f64;
            let mut color = [0.0f64; 3];
            let mut depth = 0.0f64;
            let mut terminated = false;
            for &si in list {
                let s = &splats[si as usize];
                let (bx0, by0, bx1, by1) = s.bounds;
                if px < bx0 || px > bx1 || py < by0 || py > by1 {
                    continue;
                }
                let dx = px as f64 - s.mean.0;
                let dy = py as f64 - s.mean.1;
                let power = -0.5 * (s.conic.0 * dx * dx + s.conic.2 * dy * dy) - s.conic.1 * dx * dy;
                if power > 0.0 {
                    continue;
                }
                let alpha = (s.opacity * power.exp()).min(ALPHA_MAX);
                if alpha < ALPHA_MIN {
                    continue;
                }
                let w = alpha * transmittance;
                for c in 0..3 {
                    color[c] += s.color[c] * w;
                }
                depth += s.depth * w;
                transmittance *= 1.0 - alpha;
                if transmittance < TRANSMITTANCE_MIN {
                    terminated = true;
                    break;
                }
            }
            let weight = 1.0 - transmittance;
            if terminated {
                out.rgb.push(color);
                out.alpha.push(1.0);
            } else {
                out.rgb.push([
                    color[0] + transmittance * background[0],
                    color[1] + transmittance * background[1],
                    color[2] + transmittance * background[2],
                ]);
                out.alpha.push(weight);
            }
            out.depth.push(depth / weight.max(1e-8));
        }
    }
    out
}

fn rasterize_inner(kernels: &[Kernel], request: &RenderRequest) -> Result<RenderOutput> {
    let intr = request.output_intrinsics();
    let (width, height) = (request.width, request.height);
    let cam_to_world = request.camera_to_world();
    let world_to_cam = cam_to_world.inverse();
    let cam_center = cam_to_world.translation;

    let projected: Vec<Result<Projected>> = kernels
        .par_iter()
        .enumerate()
        .map(|(i, k)| project_kernel(i, k, &world_to_cam, &cam_center, &intr))
        .collect();
    let mut stats = RenderStats::default();
    let mut splats = Vec::with_capacity(kernels.len());
    for p in projected {
        match p? {
            Projected::Visible(s) => splats.push(s),
            Projected::Culled => stats.culled += 1,
            Projected::Singular => stats.singular += 1,
        }
    }
    stats.visible = splats.len();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut tile_lists: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        let (bx0, by0, bx1, by1) = s.bounds;
        for ty in by0 / TILE_SIZE..=by1 / TILE_SIZE {
            for tx in bx0 / TILE_SIZE..=bx1 / TILE_SIZE {
                tile_lists[ty * tiles_x + tx].push(si as u32);
            }
        }
    }

    let shaded: Vec<TilePixels> = tile_lists
        .par_iter()
        .enumerate()
        .map(|(ti, list)| {
            shade_tile(
                ti % tiles_x,
                ti / tiles_x,
                list,
                &splats,
                width,
                height,
                request.background,
            )
        })
        .collect();

    let mut rgb = Raster::filled(width, height, 3, 0.0);
    let mut alpha = Raster::filled(width, height, 1, 0.0);
    let mut depth = Raster::filled(width, height, 1, 0.0);
    for (ti, tile) in shaded.iter().enumerate() {
        let x0 = (ti % tiles_x) * TILE_SIZE;
        let y0 = (ti / tiles_x) * TILE_SIZE;
        let tw = (x0 + TILE_SIZE).min(width) - x0;
        for (j, px) in tile.rgb.iter().enumerate() {
            let (u, v) = (x0 + j % tw, y0 + j / tw);
            rgb.pixel_mut(u, v).copy_from_slice(px);
            alpha.pixel_mut(u, v)[0] = tile.alpha[j];
            depth.pixel_mut(u, v)[0] = tile.depth[j];
        }
    }
    Ok(RenderOutput {
        rgb,
        alpha,
        depth,
        stats,
    })
}

/// Rasterizes world-frame kernels. `threads` bounds the worker count
/// (`None` uses the global pool).
pub fn rasterize(kernels: &[Kernel], request: &RenderRequest, threads: Option<usize>) -> Result<RenderOutput> {
    if request.width == 0 || request.height == 0 {
        return Err(Error::InvalidRequest(format!(
            "output size {}x{}",
            request.width, request.height
        )));
    }
    match threads {
        None => rasterize_inner(kernels, request),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidRequest(format!("thread pool: {e}")))?
            .install(|| rasterize_inner(kernels, request)),
    }
}

/// Renders the scene at `request.t`.
pub fn render(scene: &Scene4D, request: &RenderRequest, threads: Option<usize>) -> Result<RenderOutput> {
    let kernels = select_and_advance(scene, request.t)?;
    rasterize(&kernels, request, threads)
}
