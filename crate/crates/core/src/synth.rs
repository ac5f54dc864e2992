//! Procedural driving-like scenes with exact images, depth, masks and tracks.
//!
//! Geometry is a bounded ground plane (`z = 0` in world, z up) plus
//! world-axis-aligned boxes, some moving at constant velocity. Shading is
//! flat albedo; pixels without a hit take the sky color at the maximum depth.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::build::{logit, AttributeMaps, DEPTH_MAX, DEPTH_MIN};
use crate::error::{Error, Result};
use crate::fuse::{FrameInputs, ViewInputs};
use crate::geom::{quaternion_from_wxyz, quaternion_to_wxyz, CameraEntry, CameraRig, EgoPose, Intrinsics, SE3};
use crate::raster::{DepthMap, Image, InstanceMask, Raster};
use crate::sh::{coeffs_per_channel, dc_from_rgb};

/// Default screen-space standard deviation of a built kernel, in pixels.
pub const FOOTPRINT_SIGMA_PX: f64 = 0.25;
/// Activated opacity of every synthetic surface kernel.
pub const SURFACE_OPACITY: f64 = 0.99;

/// Rotation (w, x, y, z) + translation, as written in spec and manifest files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl PoseSpec {
    pub fn from_se3(p: &SE3) -> Self {
        Self {
            rotation: quaternion_to_wxyz(&p.quaternion()),
            translation: p.translation.into(),
        }
    }

    pub fn to_se3(&self) -> Result<SE3> {
        let q = quaternion_from_wxyz(self.rotation)?;
        Ok(SE3::from_quaternion(&q, Vector3::from(self.translation)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub albedo: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicBoxSpec {
    /// Center at the first trajectory time.
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub albedo: [f64; 3],
    pub velocity: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub id: String,
    pub intrinsics: Intrinsics,
    /// Camera → ego.
    pub extrinsic: PoseSpec,
}

impl CameraSpec {
    pub fn from_entry(c: &CameraEntry) -> Self {
        Self {
            id: c.id.clone(),
            intrinsics: c.intrinsics,
            extrinsic: PoseSpec::from_se3(&c.extrinsic),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryKey {
    pub t: f64,
    /// Ego → world.
    pub pose: PoseSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    /// Half side length of the square ground patch around the world origin.
    pub ground_extent: f64,
    pub ground_albedo: [f64; 3],
    pub sky_color: [f64; 3],
    pub static_boxes: Vec<BoxSpec>,
    pub dynamic_boxes: Vec<DynamicBoxSpec>,
    /// Extra static boxes placed along the roadside from `seed`.
    pub random_static_boxes: usize,
    pub cameras: Vec<CameraSpec>,
    pub ego_trajectory: Vec<TrajectoryKey>,
    pub context_times: Vec<f64>,
    pub sh_degree: usize,
    /// Screen-space kernel standard deviation the attribute maps encode, px.
    pub footprint_sigma_px: f64,
}

/// Camera → ego rotation for a forward-looking camera (ego x forward, y left, z up).
pub fn forward_camera_rotation() -> Matrix3<f64> {
    Matrix3::new(
        0.0, 0.0, 1.0, //
        -1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0,
    )
}

impl Default for SynthSpec {
    fn default() -> Self {
        let extrinsic = SE3::new(forward_camera_rotation(), Vector3::new(1.5, 0.0, 1.5));
        Self {
            seed: 0,
            ground_extent: 120.0,
            ground_albedo: [0.45, 0.45, 0.47],
            sky_color: [0.6, 0.66, 0.72],
            static_boxes: vec![
                BoxSpec {
                    center: [20.0, 6.0, 1.5],
                    size: [3.0, 3.0, 3.0],
                    albedo: [0.2, 0.5, 0.8],
                },
                BoxSpec {
                    center: [32.0, -8.0, 2.0],
                    size: [4.0, 3.0, 4.0],
                    albedo: [0.9, 0.8, 0.3],
                },
                BoxSpec {
                    center: [45.0, 5.0, 2.5],
                    size: [5.0, 4.0, 5.0],
                    albedo: [0.3, 0.7, 0.3],
                },
            ],
            dynamic_boxes: vec![DynamicBoxSpec {
                center: [12.0, -3.2, 0.8],
                size: [4.0, 1.8, 1.6],
                albedo: [0.85, 0.15, 0.1],
                velocity: [8.0, 0.0, 0.0],
            }],
            random_static_boxes: 0,
            cameras: vec![CameraSpec {
                id: "CAM_FRONT".into(),
                intrinsics: Intrinsics {
                    fx: 300.0,
                    fy: 300.0,
                    cx: 258.5,
                    cy: 139.5,
                    width: 518,
                    height: 280,
                },
                extrinsic: PoseSpec::from_se3(&extrinsic),
            }],
            ego_trajectory: vec![
                TrajectoryKey {
                    t: 0.0,
                    pose: PoseSpec::from_se3(&SE3::identity()),
                },
                TrajectoryKey {
                    t: 0.5,
                    pose: PoseSpec::from_se3(&SE3::from_translation(Vector3::new(2.5, 0.0, 0.0))),
                },
            ],
            context_times: vec![0.0, 0.5],
            sh_degree: 1,
            footprint_sigma_px: FOOTPRINT_SIGMA_PX,
        }
    }
}

#[derive(Clone, Debug)]
struct SceneBox {
    center: Vector3<f64>,
    half: Vector3<f64>,
    albedo: [f64; 3],
    velocity: Vector3<f64>,
    /// 0 for static boxes.
    instance: u32,
}

/// One rendered oracle frame.
#[derive(Clone, Debug)]
pub struct SynthFrame {
    pub t: f64,
    pub camera_id: String,
    pub image: Image,
    pub depth: DepthMap,
    pub mask: InstanceMask,
    /// World-frame centers of every dynamic box at `t`.
    pub objects: BTreeMap<u32, Vector3<f64>>,
}

/// A validated [`SynthSpec`] ready for ray casting.
#[derive(Clone, Debug)]
pub struct SynthScene {
    spec: SynthSpec,
    rig: CameraRig,
    trajectory: Vec<EgoPose>,
    boxes: Vec<SceneBox>,
}

fn slab_hit(origin: &Vector3<f64>, dir: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut t0, mut t1) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
    }
    (t_near <= t_far && t_near > 0.0).then_some(t_near)
}

impl SynthScene {
    pub fn new(spec: &SynthSpec) -> Result<Self> {
        let cameras = spec
            .cameras
            .iter()
            .map(|c| {
                Ok(CameraEntry {
                    id: c.id.clone(),
                    intrinsics: c.intrinsics,
                    extrinsic: c.extrinsic.to_se3()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rig = CameraRig::new(cameras)?;
        if rig.is_empty() {
            return Err(Error::InvalidRig("synthetic spec has no cameras".into()));
        }
        let trajectory = spec
            .ego_trajectory
            .iter()
            .map(|k| Ok(EgoPose { t: k.t, pose: k.pose.to_se3()? }))
            .collect::<Result<Vec<_>>>()?;
        if trajectory.is_empty() {
            return Err(Error::Manifest("empty ego trajectory".into()));
        }
        if trajectory.windows(2).any(|w| !(w[0].t < w[1].t)) {
            return Err(Error::NonMonotoneTime("ego trajectory".into()));
        }
        if spec.context_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::NonMonotoneTime("context times".into()));
        }
        if !(spec.footprint_sigma_px > 0.0 && spec.footprint_sigma_px.is_finite()) {
            return Err(Error::InvalidRequest(format!(
                "footprint sigma {} must be positive",
                spec.footprint_sigma_px
            )));
        }
        if spec.sh_degree > crate::sh::MAX_SH_DEGREE {
            return Err(Error::UnsupportedShDegree(spec.sh_degree));
        }

        let mut boxes: Vec<SceneBox> = spec
            .static_boxes
            .iter()
            .map(|b| SceneBox {
                center: Vector3::from(b.center),
                half: Vector3::from(b.size) / 2.0,
                albedo: b.albedo,
                velocity: Vector3::zeros(),
                instance: 0,
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for _ in 0..spec.random_static_boxes {
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let size = Vector3::new(
                rng.random_range(1.0..4.0),
                rng.random_range(1.0..4.0),
                rng.random_range(1.0..5.0),
            );
            boxes.push(SceneBox {
                center: Vector3::new(
                    rng.random_range(8.0..70.0),
                    side * rng.random_range(5.0..14.0),
                    size.z / 2.0,
                ),
                half: size / 2.0,
                albedo: [
                    rng.random_range(0.1..0.9),
                    rng.random_range(0.1..0.9),
                    rng.random_range(0.1..0.9),
                ],
                velocity: Vector3::zeros(),
                instance: 0,
            });
        }
        for (i, b) in spec.dynamic_boxes.iter().enumerate() {
            boxes.push(SceneBox {
                center: Vector3::from(b.center),
                half: Vector3::from(b.size) / 2.0,
                albedo: b.albedo,
                velocity: Vector3::from(b.velocity),
                instance: i as u32 + 1,
            });
        }
        Ok(Self {
            spec: spec.clone(),
            rig,
            trajectory,
            boxes,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn rig(&self) -> &CameraRig {
        &self.rig
    }

    pub fn background(&self) -> [f64; 3] {
        self.spec.sky_color
    }

    pub fn time_span(&self) -> (f64, f64) {
        (self.trajectory[0].t, self.trajectory[self.trajectory.len() - 1].t)
    }

    pub fn ego_pose(&self, t: f64) -> Result<SE3> {
        crate::geom::pose_at(&self.trajectory, t)
    }

    /// Ego poses at every trajectory key and context time.
    pub fn ego_poses(&self) -> Result<Vec<EgoPose>> {
        let mut times: Vec<f64> = self
            .trajectory
            .iter()
            .map(|p| p.t)
            .chain(self.spec.context_times.iter().copied())
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
            .into_iter()
            .map(|t| Ok(EgoPose { t, pose: self.ego_pose(t)? }))
            .collect()
    }

    /// World-frame center of dynamic instance `id` at `t`.
    pub fn object_center(&self, id: u32, t: f64) -> Option<Vector3<f64>> {
        let t0 = self.trajectory[0].t;
        self.boxes
            .iter()
            .find(|b| b.instance == id && id > 0)
            .map(|b| b.center + b.velocity * (t - t0))
    }

    fn trace(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t: f64) -> Option<(f64, [f64; 3], u32)> {
        let t0 = self.trajectory[0].t;
        let mut best: Option<(f64, [f64; 3], u32)> = None;
        if dir.z < 0.0 && origin.z > 0.0 {
            let s = -origin.z / dir.z;
            let p = origin + dir * s;
            let e = self.spec.ground_extent;
            if p.x.abs() <= e && p.y.abs() <= e {
                best = Some((s, self.spec.ground_albedo, 0));
            }
        }
        for b in &self.boxes {
            let c = b.center + b.velocity * (t - t0);
            if let Some(s) = slab_hit(origin, dir, &(c - b.half), &(c + b.half)) {
                if best.is_none_or(|(bs, _, _)| s < bs) {
                    best = Some((s, b.albedo, b.instance));
                }
            }
        }
        best
    }

    /// Ray casts one camera at time `t`.
    pub fn generate_frame(&self, t: f64, camera_id: &str) -> Result<SynthFrame> {
        let (start, end) = self.time_span();
        if !(t >= start && t <= end) {
            return Err(Error::OutOfSegment { t, start, end });
        }
        let cam = self
            .rig
            .get(camera_id)
            .ok_or_else(|| Error::InvalidRig(format!("unknown camera {camera_id}")))?;
        let k = cam.intrinsics;
        let cam_to_world = self.ego_pose(t)?.compose(&cam.extrinsic);
        let origin = cam_to_world.translation;
        let (w, h) = (k.width, k.height);

        let rows: Vec<Vec<(f64, [f64; 3], u32)>> = (0..h)
            .into_par_iter()
            .map(|v| {
                (0..w)
                    .map(|u| {
                        // Camera-frame ray with unit z, so the hit parameter is z-depth.
                        let dir = cam_to_world.rotation * k.ray(u as f64, v as f64);
                        match self.trace(&origin, &dir, t) {
                            Some((s, albedo, id)) => (s.clamp(DEPTH_MIN, DEPTH_MAX), albedo, id),
                            None => (DEPTH_MAX, self.spec.sky_color, 0),
                        }
                    })
                    .collect()
            })
            .collect();

        let mut image = Vec::with_capacity(w * h * 3);
        let mut depth = Vec::with_capacity(w * h);
        let mut mask = Vec::with_capacity(w * h);
        for (d, rgb, id) in rows.into_iter().flatten() {
            image.extend_from_slice(&rgb);
            depth.push(d);
            mask.push(id);
        }
        let objects = self
            .boxes
            .iter()
            .filter(|b| b.instance > 0)
            .map(|b| (b.instance, self.object_center(b.instance, t).unwrap()))
            .collect();
        Ok(SynthFrame {
            t,
            camera_id: camera_id.to_string(),
            image: Raster::from_vec(w, h, 3, image)?,
            depth: Raster::from_vec(w, h, 1, depth)?,
            mask: Raster::from_vec(w, h, 1, mask)?,
            objects,
        })
    }

    /// Raw attribute maps whose activations give footprint-sized isotropic
    /// kernels, opacity [`SURFACE_OPACITY`] and albedo color.
    pub fn generate_attribute_maps(&self, frame: &SynthFrame) -> Result<AttributeMaps> {
        let cam = self
            .rig
            .get(&frame.camera_id)
            .ok_or_else(|| Error::InvalidRig(format!("unknown camera {}", frame.camera_id)))?;
        let k = cam.intrinsics;
        let focal = (k.fx * k.fy).sqrt();
        let (w, h) = (frame.depth.width(), frame.depth.height());
        let n_sh = 3 * coeffs_per_channel(self.spec.sh_degree);
        let footprint = self.spec.footprint_sigma_px;
        let image = &frame.image;
        Ok(AttributeMaps {
            raw_rotation: Raster::from_fn(w, h, 4, |_, _, c| if c == 0 { 1.0 } else { 0.0 }),
            raw_scale: Raster::from_fn(w, h, 3, |u, v, _| {
                (footprint * frame.depth.at(u, v) / focal).ln()
            }),
            raw_opacity: Raster::filled(w, h, 1, logit(SURFACE_OPACITY)),
            raw_sh: Raster::from_fn(w, h, n_sh, |u, v, c| {
                if c < 3 {
                    dc_from_rgb(*image.get(u, v, c))
                } else {
                    0.0
                }
            }),
        })
    }

    /// In-memory builder inputs for every context time.
    pub fn frame_inputs(&self) -> Result<Vec<FrameInputs>> {
        self.spec
            .context_times
            .iter()
            .map(|&t| {
                let mut views = Vec::new();
                let mut annotations = BTreeMap::new();
                for cam in self.rig.cameras() {
                    let frame = self.generate_frame(t, &cam.id)?;
                    let attributes = self.generate_attribute_maps(&frame)?;
                    annotations = frame.objects.clone();
                    views.push(ViewInputs {
                        camera_id: cam.id.clone(),
                        image: frame.image,
                        depth: frame.depth,
                        mask: frame.mask,
                        attributes,
                    });
                }
                Ok(FrameInputs { t, views, annotations })
            })
            .collect()
    }
}
