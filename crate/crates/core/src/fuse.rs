//! Temporal alignment of context-frame kernels and multi-segment aggregation.
//!
//! A segment `[T_s, T_{s+1}]` is assembled from the kernels of both context
//! frames. Frame `T_{s+1}` is first moved rigidly into the `T_s` ego frame,
//! then its dynamic kernels are rewound to time `T_s` with the segment's
//! velocity field. The velocity field is expressed in the `T_s` ego frame,
//! which fixes that order.

use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::build::{build_frame_gaussians, clamp_depth, AttributeMaps};
use crate::dynamics::{
    apply_flow, estimate_segment_velocities, rasterize_flow, LabeledView, ObjectTrack,
    VelocitySource,
};
use crate::error::{Error, Result};
use crate::gauss::{Gaussian4D, Scene4D, SceneSegment};
use crate::geom::{pose_at, CameraRig, EgoPose, SE3};
use crate::raster::{DepthMap, Image, InstanceMask};
use crate::sh::rotate_sh;

/// Rasters of one camera at one context time.
#[derive(Clone, Debug)]
pub struct ViewInputs {
    pub camera_id: String,
    pub image: Image,
    pub depth: DepthMap,
    pub mask: InstanceMask,
    pub attributes: AttributeMaps,
}

/// All views of one context frame plus optional annotated object centers (world frame).
#[derive(Clone, Debug)]
pub struct FrameInputs {
    pub t: f64,
    pub views: Vec<ViewInputs>,
    pub annotations: BTreeMap<u32, Vector3<f64>>,
}

/// Step 1: rigid transform into the anchor frame. Velocities are left as they
/// are because they are already expressed in the anchor frame.
pub fn spatial_align(gaussians: &mut [Gaussian4D], transform: &SE3) -> Result<()> {
    let q = UnitQuaternion::from_matrix(&transform.rotation);
    for g in gaussians.iter_mut() {
        g.center = transform.apply(&g.center);
        g.rotation = q * g.rotation;
        g.sh = rotate_sh(&g.sh, &transform.rotation)?;
    }
    Ok(())
}

/// Step 2: moves dynamic centers back by `velocity·dt`.
pub fn temporal_rewind(gaussians: &mut [Gaussian4D], dt: f64) {
    for g in gaussians.iter_mut().filter(|g| g.dynamic) {
        g.center -= g.velocity * dt;
    }
}

/// Fuses the kernels of two adjacent context frames into one segment.
///
/// `g_start` must already span `[ego_start.t, ego_end.t]`; `g_end` is
/// re-anchored to that span.
pub fn align_and_fuse(
    g_start: Vec<Gaussian4D>,
    mut g_end: Vec<Gaussian4D>,
    ego_start: &EgoPose,
    ego_end: &EgoPose,
) -> Result<SceneSegment> {
    let (t_s, t_s1) = (ego_start.t, ego_end.t);
    if !(t_s < t_s1) {
        return Err(Error::TimeMismatch(format!(
            "segment start {t_s} not before end {t_s1}"
        )));
    }
    let transform = ego_start.pose.inverse().compose(&ego_end.pose);
    spatial_align(&mut g_end, &transform)?;
    temporal_rewind(&mut g_end, t_s1 - t_s);
    for g in g_end.iter_mut() {
        g.t_start = t_s;
        g.t_end = t_s1;
    }
    let mut all = g_start;
    all.append(&mut g_end);
    SceneSegment::new(t_s, t_s1, *ego_start, all)
}

/// Span a frame's kernels carry when first built: its forward segment, or
/// the backward one for the last frame.
pub fn frame_span(times: &[f64], k: usize) -> (f64, f64) {
    if k + 1 < times.len() {
        (times[k], times[k + 1])
    } else {
        (times[k - 1], times[k])
    }
}

/// Builds the concatenated per-view kernels of one frame.
pub fn build_frame(frame: &FrameInputs, rig: &CameraRig, span: (f64, f64)) -> Result<Vec<Gaussian4D>> {
    let mut out = Vec::new();
    for view in &frame.views {
        let cam = rig
            .get(&view.camera_id)
            .ok_or_else(|| Error::InvalidRig(format!("unknown camera {}", view.camera_id)))?;
        let depth = clamp_depth(&view.depth)?;
        out.extend(build_frame_gaussians(
            &view.image,
            &depth,
            &view.attributes,
            cam,
            span.0,
            span.1,
        )?);
    }
    Ok(out)
}

fn labeled_views<'a>(frame: &'a FrameInputs, gaussians: &'a [Gaussian4D]) -> Result<Vec<LabeledView<'a>>> {
    let mut offset = 0;
    let mut views = Vec::with_capacity(frame.views.len());
    for v in &frame.views {
        let n = v.mask.pixel_count();
        let slice = gaussians.get(offset..offset + n).ok_or_else(|| {
            Error::ShapeMismatch(format!(
                "frame at t={} has {} kernels, views need more",
                frame.t,
                gaussians.len()
            ))
        })?;
        views.push(LabeledView {
            mask: &v.mask,
            gaussians: slice,
        });
        offset += n;
    }
    if offset != gaussians.len() {
        return Err(Error::ShapeMismatch(format!(
            "frame at t={} has {} kernels for {} pixels",
            frame.t,
            gaussians.len(),
            offset
        )));
    }
    Ok(views)
}

/// Applies a segment's instance velocities to every view of a frame.
pub fn apply_frame_flow(
    frame: &FrameInputs,
    gaussians: &[Gaussian4D],
    velocities: &BTreeMap<u32, Vector3<f64>>,
) -> Result<Vec<Gaussian4D>> {
    let mut out = Vec::with_capacity(gaussians.len());
    let mut offset = 0;
    for v in &frame.views {
        let n = v.mask.pixel_count();
        let chunk = gaussians
            .get(offset..offset + n)
            .ok_or_else(|| Error::ShapeMismatch("kernel list shorter than views".into()))?;
        let flow = rasterize_flow(velocities, &v.mask)?;
        out.extend(apply_flow(chunk.to_vec(), &flow, &v.mask)?);
        offset += n;
    }
    Ok(out)
}

/// Annotated tracks for instances annotated in both frames.
pub fn segment_tracks(start: &FrameInputs, end: &FrameInputs) -> Vec<ObjectTrack> {
    start
        .annotations
        .iter()
        .filter_map(|(id, a)| {
            end.annotations.get(id).map(|b| ObjectTrack {
                id: *id,
                start: *a,
                end: *b,
            })
        })
        .collect()
}

/// Per-frame kernel lists computed at most once each.
pub struct FrameCache {
    entries: Vec<Option<Vec<Gaussian4D>>>,
    builds: usize,
}

impl FrameCache {
    pub fn new(frames: usize) -> Self {
        Self {
            entries: vec![None; frames],
            builds: 0,
        }
    }

    pub fn get_or_build(
        &mut self,
        k: usize,
        build: impl FnOnce() -> Result<Vec<Gaussian4D>>,
    ) -> Result<&[Gaussian4D]> {
        if self.entries[k].is_none() {
            self.entries[k] = Some(build()?);
            self.builds += 1;
        }
        Ok(self.entries[k].as_deref().unwrap())
    }

    pub fn get(&self, k: usize) -> Option<&[Gaussian4D]> {
        self.entries[k].as_deref()
    }

    /// Number of build invocations so far.
    pub fn builds(&self) -> usize {
        self.builds
    }
}

/// Result of [`aggregate_scene`].
#[derive(Debug)]
pub struct Aggregated {
    pub scene: Scene4D,
    pub builds: usize,
    /// Per segment: instance id → (velocity in the segment frame, source).
    pub velocities: Vec<BTreeMap<u32, (Vector3<f64>, VelocitySource)>>,
}

/// Builds every frame once and fuses each adjacent pair into a segment.
pub fn aggregate_scene(frames: &[FrameInputs], rig: &CameraRig, poses: &[EgoPose]) -> Result<Aggregated> {
    aggregate_scene_with(frames, rig, poses, |k, span| build_frame(&frames[k], rig, span))
}

/// Like [`aggregate_scene`] with a caller-supplied frame builder, e.g. one that
/// loads pre-built archives. The builder runs once per frame.
pub fn aggregate_scene_with(
    frames: &[FrameInputs],
    rig: &CameraRig,
    poses: &[EgoPose],
    mut build: impl FnMut(usize, (f64, f64)) -> Result<Vec<Gaussian4D>>,
) -> Result<Aggregated> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames(frames.len()));
    }
    let times: Vec<f64> = frames.iter().map(|f| f.t).collect();
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::NonMonotoneTime(format!("context times {times:?}")));
    }
    let ego: Vec<EgoPose> = times
        .iter()
        .map(|&t| Ok(EgoPose { t, pose: pose_at(poses, t)? }))
        .collect::<Result<_>>()?;

    let mut cache = FrameCache::new(frames.len());
    for k in 0..frames.len() {
        cache.get_or_build(k, || build(k, frame_span(&times, k)))?;
    }
    let cache = &cache;

    let fused: Vec<Result<(SceneSegment, _)>> = (0..frames.len() - 1)
        .into_par_iter()
        .map(|s| {
            let (a, b) = (&frames[s], &frames[s + 1]);
            let ga = cache.get(s).unwrap();
            let gb = cache.get(s + 1).unwrap();
            let velocities = estimate_segment_velocities(
                &labeled_views(a, ga)?,
                &labeled_views(b, gb)?,
                &segment_tracks(a, b),
                &ego[s].pose,
                &ego[s + 1].pose,
                b.t - a.t,
            )?;
            let plain: BTreeMap<u32, Vector3<f64>> =
                velocities.iter().map(|(id, (v, _))| (*id, *v)).collect();
            let start = apply_frame_flow(a, ga, &plain)?;
            let end = apply_frame_flow(b, gb, &plain)?;
            Ok((align_and_fuse(start, end, &ego[s], &ego[s + 1])?, velocities))
        })
        .collect();

    let mut segments = Vec::with_capacity(fused.len());
    let mut velocities = Vec::with_capacity(fused.len());
    for r in fused {
        let (seg, vel) = r?;
        segments.push(seg);
        velocities.push(vel);
    }
    Ok(Aggregated {
        scene: Scene4D::new(segments, rig.clone(), poses.to_vec())?,
        builds: cache.builds(),
        velocities,
    })
}
