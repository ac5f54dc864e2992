//! End-to-end steps shared by the command-line tool and the Python bindings.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;

use crate::build::clamp_depth;
use crate::dynamics::{estimate_segment_velocities, LabeledView};
use crate::error::{Error, Result};
use crate::fuse::{aggregate_scene_with, apply_frame_flow, build_frame, frame_span, segment_tracks, Aggregated};
use crate::gauss::{Scene4D, SceneSegment};
use crate::geom::{pose_at, EgoPose, SE3};
use crate::io::{load_ppm, LoadedScene};
use crate::photo::{masked_photometric_loss, psnr, ssim, warp, LossWeights, ProjectLoss, WarpResult};
use crate::render::{render, RenderOutput, RenderRequest};

fn context_times(scene: &LoadedScene) -> Vec<f64> {
    scene.frames.iter().map(|f| f.t).collect()
}

fn views<'a>(scene: &'a LoadedScene, k: usize, g: &'a [crate::gauss::Gaussian4D]) -> Result<Vec<LabeledView<'a>>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for v in &scene.frames[k].views {
        let n = v.mask.pixel_count();
        let gaussians = g
            .get(offset..offset + n)
            .ok_or_else(|| Error::ShapeMismatch("kernel list shorter than views".into()))?;
        out.push(LabeledView { mask: &v.mask, gaussians });
        offset += n;
    }
    Ok(out)
}

/// Builds every context frame and applies the velocity field of the segment
/// the frame starts (the last frame uses the segment it ends). Each result is
/// expressed in its own ego frame.
pub fn build_frames(scene: &LoadedScene) -> Result<Vec<SceneSegment>> {
    let times = context_times(scene);
    if times.len() < 2 {
        return Err(Error::TooFewFrames(times.len()));
    }
    let ego: Vec<SE3> = times.iter().map(|&t| pose_at(&scene.poses, t)).collect::<Result<_>>()?;
    let built: Vec<_> = (0..times.len())
        .map(|k| build_frame(&scene.frames[k], &scene.rig, frame_span(&times, k)))
        .collect::<Result<_>>()?;
    (0..times.len())
        .map(|k| {
            let s = if k + 1 < times.len() { k } else { k - 1 };
            let velocities = estimate_segment_velocities(
                &views(scene, s, &built[s])?,
                &views(scene, s + 1, &built[s + 1])?,
                &segment_tracks(&scene.frames[s], &scene.frames[s + 1]),
                &ego[s],
                &ego[s + 1],
                times[s + 1] - times[s],
            )?;
            let plain: BTreeMap<u32, Vector3<f64>> = velocities.into_iter().map(|(id, (v, _))| (id, v)).collect();
            let g = apply_frame_flow(&scene.frames[k], &built[k], &plain)?;
            let (t0, t1) = frame_span(&times, k);
            SceneSegment::new(t0, t1, EgoPose { t: times[k], pose: ego[k] }, g)
        })
        .collect()
}

/// Fuses a loaded scene into segments. With `prebuilt`, frame kernels come
/// from those lists instead of being rebuilt.
pub fn fuse_scene(scene: &LoadedScene, prebuilt: Option<&[SceneSegment]>) -> Result<Aggregated> {
    if let Some(p) = prebuilt {
        if p.len() != scene.frames.len() {
            return Err(Error::Manifest(format!(
                "{} prebuilt frames for {} context frames",
                p.len(),
                scene.frames.len()
            )));
        }
    }
    aggregate_scene_with(&scene.frames, &scene.rig, &scene.poses, |k, span| match prebuilt {
        Some(p) => {
            let seg = &p[k];
            if (seg.t_start, seg.t_end) != span {
                return Err(Error::TimeMismatch(format!(
                    "prebuilt frame {k} spans [{}, {}], expected [{}, {}]",
                    seg.t_start, seg.t_end, span.0, span.1
                )));
            }
            Ok(seg.gaussians.clone())
        }
        None => build_frame(&scene.frames[k], &scene.rig, span),
    })
}

/// Parses `dx=..,dy=..,dz=..` (any subset) into an ego-frame offset.
pub fn parse_ego_offset(text: &str) -> Result<Vector3<f64>> {
    let mut out = Vector3::zeros();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidRequest(format!("ego offset term {part:?} is not key=value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidRequest(format!("ego offset value {value:?} is not a number")))?;
        if !value.is_finite() {
            return Err(Error::InvalidRequest(format!("ego offset {value} is not finite")));
        }
        let axis = match key.trim() {
            "dx" => 0,
            "dy" => 1,
            "dz" => 2,
            other => return Err(Error::InvalidRequest(format!("unknown ego offset axis {other:?}"))),
        };
        out[axis] = value;
    }
    Ok(out)
}

/// Viewer ego pose at `t`, displaced by `offset` in the ego frame.
pub fn offset_ego_pose(scene: &Scene4D, t: f64, offset: &Vector3<f64>) -> Result<SE3> {
    Ok(pose_at(&scene.poses, t)?.compose(&SE3::from_translation(*offset)))
}

pub fn render_view(
    scene: &Scene4D,
    t: f64,
    camera_id: &str,
    offset: &Vector3<f64>,
    background: [f64; 3],
    threads: Option<usize>,
) -> Result<RenderOutput> {
    let camera = scene
        .rig
        .get(camera_id)
        .ok_or_else(|| Error::InvalidRig(format!("unknown camera {camera_id}")))?
        .clone();
    let request = RenderRequest::new(t, camera, offset_ego_pose(scene, t, offset)?, background);
    render(scene, &request, threads)
}

fn frame_index(scene: &LoadedScene, t: f64) -> Result<usize> {
    scene
        .frames
        .iter()
        .position(|f| (f.t - t).abs() <= 1e-9)
        .ok_or_else(|| Error::Manifest(format!("no context frame at t = {t}")))
}

/// Warps the source frame's image into the target frame using the target
/// depth and scores it against the target image.
pub fn warp_eval(
    scene: &LoadedScene,
    target_t: f64,
    source_t: f64,
    camera_id: &str,
    weights: &LossWeights,
) -> Result<(WarpResult, ProjectLoss)> {
    weights.validate()?;
    let (kt, ks) = (frame_index(scene, target_t)?, frame_index(scene, source_t)?);
    let cam = scene
        .rig
        .get(camera_id)
        .ok_or_else(|| Error::InvalidRig(format!("unknown camera {camera_id}")))?;
    let view = |k: usize| {
        scene.frames[k]
            .views
            .iter()
            .find(|v| v.camera_id == camera_id)
            .ok_or_else(|| Error::Manifest(format!("frame {k} has no view for {camera_id}")))
    };
    let (target, source) = (view(kt)?, view(ks)?);
    let ego_t = pose_at(&scene.poses, scene.frames[kt].t)?;
    let ego_s = pose_at(&scene.poses, scene.frames[ks].t)?;
    let target_to_source = cam
        .extrinsic
        .inverse()
        .compose(&ego_s.inverse())
        .compose(&ego_t)
        .compose(&cam.extrinsic);
    let depth = clamp_depth(&target.depth)?;
    let result = warp(&source.image, &depth, &cam.intrinsics, &target_to_source)?;
    let loss = masked_photometric_loss(&result.warped, &target.image, &result.mask, weights)?;
    Ok((result, loss))
}

/// Comma-separated PSNR/SSIM table over `.ppm` files present in `gt_dir`,
/// one row per image in name order plus a final mean row.
pub fn metrics_table(pred_dir: &Path, gt_dir: &Path) -> Result<String> {
    let mut names: Vec<String> = std::fs::read_dir(gt_dir)
        .map_err(|e| Error::io(gt_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".ppm"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Manifest(format!("no .ppm images in {}", gt_dir.display())));
    }
    let mut out = String::from("image,psnr,ssim\n");
    let (mut sum_p, mut sum_s) = (0.0, 0.0);
    for name in &names {
        let gt = load_ppm(&gt_dir.join(name))?;
        let pred = load_ppm(&pred_dir.join(name))?;
        let p = psnr(&pred, &gt)?;
        let s = ssim(&pred, &gt)?;
        out.push_str(&format!("{name},{p:.6},{s:.6}\n"));
        sum_p += p;
        sum_s += s;
    }
    let n = names.len() as f64;
    out.push_str(&format!("mean,{:.6},{:.6}\n", sum_p / n, sum_s / n));
    Ok(out)
}
