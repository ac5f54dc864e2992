use drivesplat::geom::{backproject, grid_to_pixel, normalize_to_grid, pose_at, project, EgoPose, Intrinsics, SE3};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

fn intrinsics() -> impl Strategy<Value = Intrinsics> {
    (50.0..2000.0f64, 50.0..2000.0f64, 16usize..1600, 16usize..900, 0.0..1.0f64, 0.0..1.0f64).prop_map(
        |(fx, fy, w, h, a, b)| Intrinsics::new(fx, fy, a * (w as f64 - 1.0), b * (h as f64 - 1.0), w, h).unwrap(),
    )
}

fn pose() -> impl Strategy<Value = SE3> {
    (prop::array::uniform3(-3.2..3.2f64), prop::array::uniform3(-50.0..50.0f64)).prop_map(|(r, t)| {
        SE3::from_quaternion(
            &UnitQuaternion::from_euler_angles(r[0], r[1] / 2.0, r[2]),
            Vector3::new(t[0], t[1], t[2]),
        )
    })
}

proptest! {
    #[test]
    fn backprojected_point_lies_on_pixel_ray(k in intrinsics(), a in 0.0..1.0f64, b in 0.0..1.0f64, d in 0.01..500.0f64) {
        let px = (a * (k.width - 1) as f64, b * (k.height - 1) as f64);
        let p = backproject(px, d, &k).unwrap();
        prop_assert!((p.z - d).abs() <= 1e-12 * d);
        let ray = k.ray(px.0, px.1) * d;
        prop_assert!((p - ray).norm() <= 1e-9 * (1.0 + d));
        let (q, z) = project(&p, &k).unwrap();
        prop_assert!((q.0 - px.0).abs() < 1e-6 && (q.1 - px.1).abs() < 1e-6);
        prop_assert!((z - d).abs() <= 1e-12 * d);
    }

    #[test]
    fn grid_normalization_inverts(w in 2usize..4000, h in 2usize..4000, u in 0.0..1.0f64, v in 0.0..1.0f64) {
        let px = (u * (w - 1) as f64, v * (h - 1) as f64);
        let g = normalize_to_grid(px, w, h);
        prop_assert!(g.0 >= -1.0 - 1e-12 && g.0 <= 1.0 + 1e-12);
        let back = grid_to_pixel(g, w, h);
        prop_assert!((back.0 - px.0).abs() < 1e-9 && (back.1 - px.1).abs() < 1e-9);
    }

    #[test]
    fn group_law(a in pose(), b in pose(), c in pose(), x in prop::array::uniform3(-20.0..20.0f64)) {
        let x = Vector3::new(x[0], x[1], x[2]);
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        prop_assert!(left.max_abs_diff(&right) < 1e-9);
        prop_assert!(a.compose(&a.inverse()).max_abs_diff(&SE3::identity()) < 1e-9);
        prop_assert!((a.compose(&b).apply(&x) - a.apply(&b.apply(&x))).norm() < 1e-9);
        prop_assert!(a.compose(&b).orthonormality_error() < 1e-9);
    }

    #[test]
    fn pose_interpolation_hits_keys(a in pose(), b in pose(), t0 in -5.0..5.0f64, dt in 0.01..3.0f64) {
        let keys = [EgoPose { t: t0, pose: a }, EgoPose { t: t0 + dt, pose: b }];
        prop_assert!(pose_at(&keys, t0).unwrap().max_abs_diff(&a) < 1e-9);
        prop_assert!(pose_at(&keys, t0 + dt).unwrap().max_abs_diff(&b) < 1e-9);
        prop_assert!(pose_at(&keys, t0 + dt / 2.0).unwrap().orthonormality_error() < 1e-9);
        prop_assert!(pose_at(&keys, t0 + 2.0 * dt).is_err());
    }
}

#[test]
fn pixel_centre_convention() {
    let k = Intrinsics::new(100.0, 100.0, 1.5, 1.5, 4, 4).unwrap();
    assert_eq!(backproject((1.5, 1.5), 2.0, &k).unwrap(), Vector3::new(0.0, 0.0, 2.0));
    assert_eq!(normalize_to_grid((0.0, 3.0), 4, 4), (-1.0, 1.0));
    assert!(project(&Vector3::new(0.0, 0.0, -1.0), &k).is_err());
    assert!(backproject((0.0, 0.0), 0.0, &k).is_err());
}
