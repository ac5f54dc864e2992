use drivesplat::geom::{EgoPose, SE3};
use drivesplat::io::{
    decode_archive, decode_ppm, decode_raw, encode_archive, encode_ppm, encode_raw, load_scene, load_segments,
    save_segments, write_synth_scene,
};
use drivesplat::pipeline::fuse_scene;
use drivesplat::synth::{SynthScene, SynthSpec};
use drivesplat::{Gaussian4D, Raster, SceneSegment};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

fn gaussian(degree: usize) -> impl Strategy<Value = Gaussian4D> {
    let n = 3 * (degree + 1) * (degree + 1);
    (
        prop::array::uniform3(-100.0..100.0f64),
        prop::array::uniform3(-3.0..3.0f64),
        prop::array::uniform3(1e-4..50.0f64),
        0.0..1.0f64,
        prop::collection::vec(-2.0..2.0f64, n),
        prop::array::uniform3(-20.0..20.0f64),
        any::<bool>(),
    )
        .prop_map(|(c, r, s, o, sh, v, dynamic)| Gaussian4D {
            center: Vector3::from(c),
            rotation: UnitQuaternion::from_euler_angles(r[0], r[1], r[2]),
            scale: Vector3::from(s),
            opacity: o,
            sh,
            velocity: if dynamic { Vector3::from(v) } else { Vector3::zeros() },
            dynamic,
            t_start: 0.0,
            t_end: 0.5,
        })
}

fn segment() -> impl Strategy<Value = SceneSegment> {
    (0usize..=3)
        .prop_flat_map(|d| prop::collection::vec(gaussian(d), 0..20))
        .prop_map(|g| {
            let anchor = EgoPose { t: 0.0, pose: SE3::rot_z(0.3).compose(&SE3::from_translation(Vector3::new(1.0, 2.0, 0.0))) };
            SceneSegment::new(0.0, 0.5, anchor, g).unwrap()
        })
}

proptest! {
    #[test]
    fn archive_round_trip_is_byte_identical(seg in segment()) {
        let bytes = encode_archive(&seg).unwrap();
        let back = decode_archive(&bytes).unwrap();
        prop_assert_eq!(encode_archive(&back).unwrap(), bytes);
        prop_assert_eq!(back.gaussians.len(), seg.gaussians.len());
        for (a, b) in back.gaussians.iter().zip(&seg.gaussians) {
            prop_assert_eq!(a.center, b.center);
            prop_assert_eq!(&a.sh, &b.sh);
            prop_assert_eq!(a.dynamic, b.dynamic);
        }
    }

    #[test]
    fn archive_decoder_rejects_garbage_quietly(seg in segment(), cut in 0.0..1.0f64, flip in any::<prop::sample::Index>()) {
        let bytes = encode_archive(&seg).unwrap();
        let n = (cut * bytes.len() as f64) as usize;
        prop_assert!(decode_archive(&bytes[..n]).is_err());
        let mut flipped = bytes.clone();
        let i = flip.index(flipped.len());
        flipped[i] ^= 0x80;
        let _ = decode_archive(&flipped);
    }

    #[test]
    fn float_raster_round_trip(w in 1usize..20, h in 1usize..20, c in 1usize..4, seed in any::<u32>()) {
        let data: Vec<f32> = (0..w * h * c).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 40503))).collect();
        let r = Raster::from_vec(w, h, c, data).unwrap();
        let bytes = encode_raw(&r).unwrap();
        prop_assert_eq!(bytes.len(), 16 + 4 * w * h * c);
        let back: Raster<f32> = decode_raw(&bytes).unwrap();
        prop_assert_eq!(&encode_raw(&back).unwrap(), &bytes);
        prop_assert!(decode_raw::<i32>(&bytes).is_err());
    }

    #[test]
    fn ppm_round_trip_is_quantization_stable(w in 1usize..16, h in 1usize..16, values in prop::collection::vec(0u8..=255, 768)) {
        let data: Vec<f64> = (0..w * h * 3).map(|i| values[i % values.len()] as f64 / 255.0).collect();
        let img = Raster::from_vec(w, h, 3, data).unwrap();
        let bytes = encode_ppm(&img).unwrap();
        let back = decode_ppm(&bytes).unwrap();
        prop_assert_eq!(encode_ppm(&back).unwrap(), bytes);
    }
}

#[test]
fn on_disk_scene_fuses_like_memory() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { context_times: vec![0.0, 0.25, 0.5], ..SynthSpec::default() };
    let synth = SynthScene::new(&spec).unwrap();
    let manifest = write_synth_scene(&synth, dir.path()).unwrap();
    let scene = load_scene(&manifest).unwrap();
    assert_eq!(scene.frames.len(), 3);
    assert_eq!(scene.background, synth.background());
    let fused = fuse_scene(&scene, None).unwrap();
    assert_eq!(fused.builds, 3);

    let out = dir.path().join("segments");
    save_segments(&out, &fused.scene, &scene.manifest.cameras, scene.background).unwrap();
    let (back, background) = load_segments(&out).unwrap();
    assert_eq!(background, scene.background);
    assert_eq!(back.segments().len(), 2);
    for (a, b) in back.segments().iter().zip(fused.scene.segments()) {
        assert_eq!(encode_archive(a).unwrap(), encode_archive(b).unwrap());
    }
    assert_eq!(back.rig, fused.scene.rig);
}
