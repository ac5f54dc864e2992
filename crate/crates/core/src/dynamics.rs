//! Velocity estimation for dynamic instances and per-pixel flow assignment.
//!
//! All velocities for a segment `[T_s, T_{s+1}]` are expressed in the ego
//! frame of `T_s`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gauss::Gaussian4D;
use crate::geom::SE3;
use crate::raster::{InstanceMask, Raster};

/// H×W×3 velocity raster in m/s.
pub type VelocityFlow = Raster<f64>;

/// Annotated world-frame centers of one instance at both context times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectTrack {
    pub id: u32,
    pub start: Vector3<f64>,
    pub end: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VelocitySource {
    Track,
    Centroid,
    /// Instance seen in only one frame.
    ZeroFallback,
}

/// One camera view of a frame: its instance mask and the kernels built from it.
#[derive(Clone, Copy, Debug)]
pub struct LabeledView<'a> {
    pub mask: &'a InstanceMask,
    pub gaussians: &'a [Gaussian4D],
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveDt(dt))
    }
}

/// Displacement of an annotated track in the `T_s` ego frame, divided by `dt`.
pub fn velocity_from_track(track: &ObjectTrack, ego_at_start: &SE3, dt: f64) -> Result<Vector3<f64>> {
    check_dt(dt)?;
    let world_to_ego = ego_at_start.inverse();
    let a = world_to_ego.apply(&track.start);
    let b = world_to_ego.apply(&track.end);
    Ok((b - a) / dt)
}

fn centroid(views: &[LabeledView<'_>], id: u32, transform: Option<&SE3>) -> Option<Vector3<f64>> {
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for view in views {
        for (label, g) in view.mask.data().iter().zip(view.gaussians) {
            if *label == id {
                sum += match transform {
                    Some(t) => t.apply(&g.center),
                    None => g.center,
                };
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Velocity of one instance from the centroids of its kernels in both frames.
pub fn centroid_velocity(
    id: u32,
    start: &[LabeledView<'_>],
    end: &[LabeledView<'_>],
    end_to_start: &SE3,
    dt: f64,
) -> Result<Vector3<f64>> {
    check_dt(dt)?;
    let a = centroid(start, id, None).ok_or(Error::MissingInstance { id, frame: "T_s" })?;
    let b = centroid(end, id, Some(end_to_start)).ok_or(Error::MissingInstance { id, frame: "T_s+1" })?;
    Ok((b - a) / dt)
}

fn check_views(views: &[LabeledView<'_>]) -> Result<()> {
    for v in views {
        if v.mask.channels() != 1 || v.mask.pixel_count() != v.gaussians.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask of {} pixels for {} kernels",
                v.mask.pixel_count(),
                v.gaussians.len()
            )));
        }
    }
    Ok(())
}

/// Instance ids present in any of the views.
pub fn instance_ids(views: &[LabeledView<'_>]) -> BTreeSet<u32> {
    views
        .iter()
        .flat_map(|v| v.mask.data().iter().copied())
        .filter(|id| *id > 0)
        .collect()
}

/// Centroid velocities for every instance of either frame (single view each).
pub fn velocity_from_centroids(
    mask_start: &InstanceMask,
    mask_end: &InstanceMask,
    g_start: &[Gaussian4D],
    g_end: &[Gaussian4D],
    end_to_start: &SE3,
    dt: f64,
) -> Result<BTreeMap<u32, Vector3<f64>>> {
    let start = [LabeledView {
        mask: mask_start,
        gaussians: g_start,
    }];
    let end = [LabeledView {
        mask: mask_end,
        gaussians: g_end,
    }];
    check_views(&start)?;
    check_views(&end)?;
    let ids: BTreeSet<u32> = instance_ids(&start).union(&instance_ids(&end)).copied().collect();
    ids.into_iter()
        .map(|id| Ok((id, centroid_velocity(id, &start, &end, end_to_start, dt)?)))
        .collect()
}

/// Per-instance velocities with source priority: track, then centroid, then zero.
pub fn estimate_segment_velocities(
    start: &[LabeledView<'_>],
    end: &[LabeledView<'_>],
    tracks: &[ObjectTrack],
    ego_start: &SE3,
    ego_end: &SE3,
    dt: f64,
) -> Result<BTreeMap<u32, (Vector3<f64>, VelocitySource)>> {
    check_dt(dt)?;
    check_views(start)?;
    check_views(end)?;
    let end_to_start = ego_start.inverse().compose(ego_end);
    let start_ids = instance_ids(start);
    let end_ids = instance_ids(end);
    let mut out = BTreeMap::new();
    for &id in start_ids.union(&end_ids) {
        let in_both = start_ids.contains(&id) && end_ids.contains(&id);
        let entry = if let Some(track) = tracks.iter().find(|t| t.id == id) {
            (velocity_from_track(track, ego_start, dt)?, VelocitySource::Track)
        } else if in_both {
            (
                centroid_velocity(id, start, end, &end_to_start, dt)?,
                VelocitySource::Centroid,
            )
        } else {
            (Vector3::zeros(), VelocitySource::ZeroFallback)
        };
        out.insert(id, entry);
    }
    Ok(out)
}

/// Fills each instance region with its velocity; background stays zero.
pub fn rasterize_flow(
    velocities: &BTreeMap<u32, Vector3<f64>>,
    mask: &InstanceMask,
) -> Result<VelocityFlow> {
    let mut data = Vec::with_capacity(mask.pixel_count() * 3);
    for &id in mask.data() {
        let v = if id == 0 {
            Vector3::zeros()
        } else {
            *velocities.get(&id).ok_or(Error::MissingVelocity(id))?
        };
        data.extend_from_slice(v.as_slice());
    }
    Raster::from_vec(mask.width(), mask.height(), 3, data)
}

/// Checks the one-vector-per-instance, zero-on-background flow invariant.
pub fn check_flow_invariant(flow: &VelocityFlow, mask: &InstanceMask) -> bool {
    if !flow.same_shape(mask) || flow.channels() != 3 {
        return false;
    }
    let mut seen: BTreeMap<u32, [u64; 3]> = BTreeMap::new();
    for (i, &id) in mask.data().iter().enumerate() {
        let v = flow.pixel_at(i);
        let bits = [v[0].to_bits(), v[1].to_bits(), v[2].to_bits()];
        if id == 0 {
            if v.iter().any(|x| *x != 0.0) {
                return false;
            }
        } else if *seen.entry(id).or_insert(bits) != bits {
            return false;
        }
    }
    true
}

/// Assigns per-pixel velocity and the dynamic flag to the matching kernels.
pub fn apply_flow(
    mut gaussians: Vec<Gaussian4D>,
    flow: &VelocityFlow,
    mask: &InstanceMask,
) -> Result<Vec<Gaussian4D>> {
    if gaussians.len() != mask.pixel_count() || !flow.same_shape(mask) || flow.channels() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "{} kernels, {}x{} mask, {}x{}x{} flow",
            gaussians.len(),
            mask.width(),
            mask.height(),
            flow.width(),
            flow.height(),
            flow.channels()
        )));
    }
    for (i, g) in gaussians.iter_mut().enumerate() {
        let dynamic = mask.data()[i] > 0;
        if !dynamic && !g.dynamic {
            continue;
        }
        let v = flow.pixel_at(i);
        g.dynamic = dynamic;
        g.velocity = if dynamic {
            Vector3::new(v[0], v[1], v[2])
        } else {
            Vector3::zeros()
        };
    }
    Ok(gaussians)
}
