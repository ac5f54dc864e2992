//! JSON scene manifests and the frame/segment archive indices.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::archive::{load_archive, save_archive};
use super::raster_io::{load_float, load_mask, load_ppm, save_float, save_mask, save_ppm};
use super::{read_file, write_file};
use crate::build::AttributeMaps;
use crate::error::{Error, Result};
use crate::fuse::{FrameInputs, ViewInputs};
use crate::gauss::{Scene4D, SceneSegment};
use crate::geom::{pose_at, CameraEntry, CameraRig, EgoPose};
use crate::raster::Raster;
use crate::sh::coeffs_per_channel;
use crate::synth::{CameraSpec, PoseSpec, SynthScene, TrajectoryKey};

pub const MANIFEST_VERSION: u32 = 1;

/// Raster files of one camera at one context time, relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub camera: String,
    pub image: String,
    pub depth: String,
    pub mask: String,
    pub rotation: String,
    pub scale: String,
    pub opacity: String,
    pub sh: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub t: f64,
    pub views: Vec<ViewEntry>,
    /// Instance id → annotated world-frame center.
    #[serde(default)]
    pub tracks: BTreeMap<u32, [f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: u32,
    pub timeline: [f64; 2],
    pub context_times: Vec<f64>,
    pub sh_degree: usize,
    pub background: [f64; 3],
    pub cameras: Vec<CameraSpec>,
    pub ego_poses: Vec<TrajectoryKey>,
    pub frames: Vec<FrameEntry>,
}

/// Validated builder inputs.
#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub manifest: SceneManifest,
    pub rig: CameraRig,
    pub poses: Vec<EgoPose>,
    pub frames: Vec<FrameInputs>,
    pub background: [f64; 3],
}

fn strictly_increasing(ts: &[f64]) -> bool {
    ts.windows(2).all(|w| w[0] < w[1])
}

fn rig_from(cameras: &[CameraSpec]) -> Result<CameraRig> {
    CameraRig::new(
        cameras
            .iter()
            .map(|c| {
                Ok(CameraEntry {
                    id: c.id.clone(),
                    intrinsics: c.intrinsics,
                    extrinsic: c.extrinsic.to_se3()?,
                })
            })
            .collect::<Result<_>>()?,
    )
}

fn poses_from(keys: &[TrajectoryKey]) -> Result<Vec<EgoPose>> {
    let times: Vec<f64> = keys.iter().map(|k| k.t).collect();
    if !strictly_increasing(&times) {
        return Err(Error::NonMonotoneTime(format!("ego poses {times:?}")));
    }
    keys.iter()
        .map(|k| Ok(EgoPose { t: k.t, pose: k.pose.to_se3()? }))
        .collect()
}

fn check_dims<T>(path: &Path, r: &Raster<T>, w: usize, h: usize, c: usize) -> Result<()> {
    if r.width() != w || r.height() != h || r.channels() != c {
        return Err(Error::Dimension {
            path: path.to_path_buf(),
            message: format!(
                "{}x{}x{}, expected {w}x{h}x{c}",
                r.width(),
                r.height(),
                r.channels()
            ),
        });
    }
    Ok(())
}

fn load_view(base: &Path, entry: &ViewEntry, rig: &CameraRig, sh_degree: usize) -> Result<ViewInputs> {
    let cam = rig
        .get(&entry.camera)
        .ok_or_else(|| Error::Manifest(format!("view references unknown camera {}", entry.camera)))?;
    let (w, h) = (cam.intrinsics.width, cam.intrinsics.height);
    let p = |rel: &str| base.join(rel);

    let image_path = p(&entry.image);
    let image = load_ppm(&image_path)?;
    check_dims(&image_path, &image, w, h, 3)?;
    let float = |rel: &str, c: usize| -> Result<Raster<f64>> {
        let path = p(rel);
        let r = load_float(&path)?;
        check_dims(&path, &r, w, h, c)?;
        Ok(r)
    };
    let depth = float(&entry.depth, 1)?;
    let mask_path = p(&entry.mask);
    let mask = load_mask(&mask_path)?;
    check_dims(&mask_path, &mask, w, h, 1)?;
    let attributes = AttributeMaps {
        raw_rotation: float(&entry.rotation, 4)?,
        raw_scale: float(&entry.scale, 3)?,
        raw_opacity: float(&entry.opacity, 1)?,
        raw_sh: float(&entry.sh, 3 * coeffs_per_channel(sh_degree))?,
    };
    attributes.validate()?;
    Ok(ViewInputs {
        camera_id: entry.camera.clone(),
        image,
        depth,
        mask,
        attributes,
    })
}

/// Reads and validates a manifest and every raster it references.
pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    let manifest: SceneManifest = serde_json::from_slice(&read_file(path)?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Manifest(format!(
            "manifest version {}, expected {MANIFEST_VERSION}",
            manifest.version
        )));
    }
    if manifest.sh_degree > crate::sh::MAX_SH_DEGREE {
        return Err(Error::UnsupportedShDegree(manifest.sh_degree));
    }
    if !strictly_increasing(&manifest.context_times) {
        return Err(Error::NonMonotoneTime(format!(
            "context times {:?}",
            manifest.context_times
        )));
    }
    let frame_times: Vec<f64> = manifest.frames.iter().map(|f| f.t).collect();
    if frame_times != manifest.context_times {
        return Err(Error::Manifest(format!(
            "frame times {frame_times:?} differ from context times {:?}",
            manifest.context_times
        )));
    }
    let [t0, t1] = manifest.timeline;
    if let Some(t) = manifest.context_times.iter().find(|t| !(**t >= t0 && **t <= t1)) {
        return Err(Error::Manifest(format!("context time {t} outside timeline [{t0}, {t1}]")));
    }
    let rig = rig_from(&manifest.cameras)?;
    let poses = poses_from(&manifest.ego_poses)?;
    for &t in &manifest.context_times {
        pose_at(&poses, t)?;
    }

    let base = path.parent().unwrap_or(Path::new("."));
    let frames = manifest
        .frames
        .par_iter()
        .map(|f| {
            let views = f
                .views
                .par_iter()
                .map(|v| load_view(base, v, &rig, manifest.sh_degree))
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameInputs {
                t: f.t,
                views,
                annotations: f.tracks.iter().map(|(id, c)| (*id, Vector3::from(*c))).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedScene {
        background: manifest.background,
        manifest,
        rig,
        poses,
        frames,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_file(path, &text)
}

/// Renders every context frame of a synthetic scene and writes the manifest
/// plus its rasters under `out`. Returns the manifest path.
pub fn write_synth_scene(scene: &SynthScene, out: &Path) -> Result<PathBuf> {
    let spec = scene.spec();
    let jobs: Vec<(usize, f64, String)> = spec
        .context_times
        .iter()
        .enumerate()
        .flat_map(|(k, &t)| scene.rig().cameras().iter().map(move |c| (k, t, c.id.clone())))
        .collect();
    let written = jobs
        .par_iter()
        .map(|(k, t, cam)| {
            let frame = scene.generate_frame(*t, cam)?;
            let maps = scene.generate_attribute_maps(&frame)?;
            let stem = format!("frames/{k:03}_{cam}");
            let entry = ViewEntry {
                camera: cam.clone(),
                image: format!("{stem}_image.ppm"),
                depth: format!("{stem}_depth.f32"),
                mask: format!("{stem}_mask.i32"),
                rotation: format!("{stem}_rotation.f32"),
                scale: format!("{stem}_scale.f32"),
                opacity: format!("{stem}_opacity.f32"),
                sh: format!("{stem}_sh.f32"),
            };
            save_ppm(&out.join(&entry.image), &frame.image)?;
            save_float(&out.join(&entry.depth), &frame.depth)?;
            save_mask(&out.join(&entry.mask), &frame.mask)?;
            save_float(&out.join(&entry.rotation), &maps.raw_rotation)?;
            save_float(&out.join(&entry.scale), &maps.raw_scale)?;
            save_float(&out.join(&entry.opacity), &maps.raw_opacity)?;
            save_float(&out.join(&entry.sh), &maps.raw_sh)?;
            Ok((*k, entry, frame.objects))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut frames: Vec<FrameEntry> = spec
        .context_times
        .iter()
        .map(|&t| FrameEntry {
            t,
            views: Vec::new(),
            tracks: BTreeMap::new(),
        })
        .collect();
    for (k, entry, objects) in written {
        frames[k].views.push(entry);
        frames[k].tracks = objects.iter().map(|(id, c)| (*id, (*c).into())).collect();
    }
    let (t0, t1) = scene.time_span();
    let manifest = SceneManifest {
        version: MANIFEST_VERSION,
        timeline: [t0, t1],
        context_times: spec.context_times.clone(),
        sh_degree: spec.sh_degree,
        background: scene.background(),
        cameras: spec.cameras.clone(),
        ego_poses: scene
            .ego_poses()?
            .iter()
            .map(|p| TrajectoryKey {
                t: p.t,
                pose: PoseSpec::from_se3(&p.pose),
            })
            .collect(),
        frames,
    };
    let path = out.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Per-frame archives written by the `build` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameIndex {
    pub version: u32,
    pub frames: Vec<SegmentEntry>,
}

/// An archive file and the span its kernels carry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub t_start: f64,
    pub t_end: f64,
    pub file: String,
}

/// Fused segments plus what is needed to render them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentIndex {
    pub version: u32,
    pub background: [f64; 3],
    pub cameras: Vec<CameraSpec>,
    pub ego_poses: Vec<TrajectoryKey>,
    pub segments: Vec<SegmentEntry>,
}

pub const FRAME_INDEX: &str = "frames.json";
pub const SEGMENT_INDEX: &str = "segments.json";

fn entry_for(seg: &SceneSegment, file: String) -> SegmentEntry {
    SegmentEntry {
        t_start: seg.t_start,
        t_end: seg.t_end,
        file,
    }
}

pub fn save_frame_index(dir: &Path, frames: &[SceneSegment]) -> Result<()> {
    let mut entries = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        let file = format!("frame_{k:03}.g4d");
        save_archive(&dir.join(&file), f)?;
        entries.push(entry_for(f, file));
    }
    write_json(
        &dir.join(FRAME_INDEX),
        &FrameIndex {
            version: MANIFEST_VERSION,
            frames: entries,
        },
    )
}

/// Loads the per-frame archives listed in a frame index.
pub fn load_frame_index(dir: &Path) -> Result<Vec<SceneSegment>> {
    let index: FrameIndex = serde_json::from_slice(&read_file(&dir.join(FRAME_INDEX))?)?;
    index
        .frames
        .par_iter()
        .map(|e| {
            let seg = load_archive(&dir.join(&e.file))?;
            if seg.t_start != e.t_start || seg.t_end != e.t_end {
                return Err(Error::Manifest(format!("{} span differs from its index entry", e.file)));
            }
            Ok(seg)
        })
        .collect()
}

pub fn save_segments(dir: &Path, scene: &Scene4D, cameras: &[CameraSpec], background: [f64; 3]) -> Result<()> {
    let mut entries = Vec::with_capacity(scene.segments().len());
    for (s, seg) in scene.segments().iter().enumerate() {
        let file = format!("segment_{s:03}.g4d");
        save_archive(&dir.join(&file), seg)?;
        entries.push(entry_for(seg, file));
    }
    let index = SegmentIndex {
        version: MANIFEST_VERSION,
        background,
        cameras: cameras.to_vec(),
        ego_poses: scene
            .poses
            .iter()
            .map(|p| TrajectoryKey {
                t: p.t,
                pose: PoseSpec::from_se3(&p.pose),
            })
            .collect(),
        segments: entries,
    };
    write_json(&dir.join(SEGMENT_INDEX), &index)
}

/// Loads a segment index and its archives into a scene plus background color.
pub fn load_segments(dir: &Path) -> Result<(Scene4D, [f64; 3])> {
    let index: SegmentIndex = serde_json::from_slice(&read_file(&dir.join(SEGMENT_INDEX))?)?;
    let segments = index
        .segments
        .par_iter()
        .map(|e| load_archive(&dir.join(&e.file)))
        .collect::<Result<Vec<_>>>()?;
    let scene = Scene4D::new(segments, rig_from(&index.cameras)?, poses_from(&index.ego_poses)?)?;
    Ok((scene, index.background))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Intrinsics;
    use crate::synth::SynthSpec;

    fn small_spec() -> SynthSpec {
        let mut spec = SynthSpec::default();
        spec.cameras[0].intrinsics = Intrinsics {
            fx: 60.0,
            fy: 60.0,
            cx: 32.0,
            cy: 24.0,
            width: 64,
            height: 48,
        };
        spec
    }

    #[test]
    fn synth_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SynthScene::new(&small_spec()).unwrap();
        let path = write_synth_scene(&scene, dir.path()).unwrap();
        let loaded = load_scene(&path).unwrap();
        assert_eq!(loaded.frames.len(), 2);
        assert_eq!(loaded.frames[0].views[0].image.width(), 64);
        assert_eq!(loaded.frames[1].annotations.len(), 1);
        let oracle = scene.generate_frame(0.5, "CAM_FRONT").unwrap();
        assert_eq!(loaded.frames[1].views[0].mask, oracle.mask);
    }

    #[test]
    fn wrong_depth_size_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SynthScene::new(&small_spec()).unwrap();
        let path = write_synth_scene(&scene, dir.path()).unwrap();
        let depth = dir.path().join("frames/001_CAM_FRONT_depth.f32");
        save_float(&depth, &Raster::filled(10, 10, 1, 5.0)).unwrap();
        match load_scene(&path) {
            Err(Error::Dimension { path, .. }) => assert_eq!(path, depth),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_and_bad_times() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SynthScene::new(&small_spec()).unwrap();
        let path = write_synth_scene(&scene, dir.path()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut m: SceneManifest = serde_json::from_str(&text).unwrap();

        let mut swapped = m.clone();
        swapped.context_times.reverse();
        swapped.frames.reverse();
        write_json(&path, &swapped).unwrap();
        assert!(matches!(load_scene(&path), Err(Error::NonMonotoneTime(_))));

        m.frames[0].views[0].mask = "frames/nope.i32".into();
        write_json(&path, &m).unwrap();
        assert!(matches!(load_scene(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn quaternion_tolerance() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SynthScene::new(&small_spec()).unwrap();
        let path = write_synth_scene(&scene, dir.path()).unwrap();
        let mut m: SceneManifest = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        m.ego_poses[0].pose.rotation = [0.9990, 0.0, 0.0, 0.0];
        write_json(&path, &m).unwrap();
        let loaded = load_scene(&path).unwrap();
        assert!(loaded.poses[0].pose.orthonormality_error() < 1e-12);

        m.ego_poses[0].pose.rotation = [0.99, 0.0, 0.0, 0.0];
        write_json(&path, &m).unwrap();
        assert!(matches!(load_scene(&path), Err(Error::NonUnitQuaternion(_))));
    }
}
