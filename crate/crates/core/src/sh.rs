//! Real spherical harmonics up to degree 3, 3DGS basis and sign convention.
//!
//! Coefficients are stored coefficient-major: `sh[k * 3 + channel]`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: usize = 3;

/// Number of coefficients per channel for `degree`.
pub fn coeffs_per_channel(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Degree implied by a coefficient slice length.
pub fn degree_of(len: usize) -> Result<usize> {
    if len % 3 == 0 {
        let n = len / 3;
        let d = (n as f64).sqrt().round() as usize;
        if d >= 1 && d * d == n {
            return if d - 1 > MAX_SH_DEGREE {
                Err(Error::UnsupportedShDegree(d - 1))
            } else {
                Ok(d - 1)
            };
        }
    }
    Err(Error::ShapeMismatch(format!(
        "{len} SH values is not 3·(degree+1)²"
    )))
}

/// Degree-0 coefficient that evaluates to `rgb` under the 0.5 offset.
pub fn dc_from_rgb(rgb: f64) -> f64 {
    (rgb - 0.5) / SH_C0
}

/// View-dependent color, clamped to [0, 1]. `dir` points from the camera to the kernel.
pub fn sh_to_rgb(sh: &[f64], dir: &Vector3<f64>) -> Result<[f64; 3]> {
    let degree = degree_of(sh.len())?;
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut basis = [0.0f64; 16];
    basis[0] = SH_C0;
    if degree > 0 {
        basis[1] = -SH_C1 * y;
        basis[2] = SH_C1 * z;
        basis[3] = -SH_C1 * x;
    }
    if degree > 1 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        basis[4] = SH_C2[0] * x * y;
        basis[5] = SH_C2[1] * y * z;
        basis[6] = SH_C2[2] * (2.0 * zz - xx - yy);
        basis[7] = SH_C2[3] * x * z;
        basis[8] = SH_C2[4] * (xx - yy);
        if degree > 2 {
            basis[9] = SH_C3[0] * y * (3.0 * xx - yy);
            basis[10] = SH_C3[1] * x * y * z;
            basis[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
            basis[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            basis[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
            basis[14] = SH_C3[5] * z * (xx - yy);
            basis[15] = SH_C3[6] * x * (xx - 3.0 * yy);
        }
    }
    let mut rgb = [0.5; 3];
    for (k, b) in basis.iter().take(coeffs_per_channel(degree)).enumerate() {
        for (c, out) in rgb.iter_mut().enumerate() {
            *out += b * sh[k * 3 + c];
        }
    }
    Ok(rgb.map(|v| v.clamp(0.0, 1.0)))
}

/// Rotates SH coefficients so that evaluating the result along `R·d` matches
/// the original along `d`. Degrees 0 and 1 only.
///
/// The degree-1 band is a 3-vector `(-c3, -c1, c2)` per channel that rotates
/// like a direction.
pub fn rotate_sh(sh: &[f64], rotation: &Matrix3<f64>) -> Result<Vec<f64>> {
    let degree = degree_of(sh.len())?;
    if degree > 1 {
        return Err(Error::UnsupportedShDegree(degree));
    }
    let mut out = sh.to_vec();
    if degree == 1 {
        for c in 0..3 {
            let a = Vector3::new(-sh[9 + c], -sh[3 + c], sh[6 + c]);
            let r = rotation * a;
            out[3 + c] = -r.y;
            out[6 + c] = r.z;
            out[9 + c] = -r.x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dir(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v / n;
            }
        }
    }

    #[test]
    fn y00_constant_matches_closed_form() {
        let closed = 0.5 / std::f64::consts::PI.sqrt();
        assert!((SH_C0 - closed).abs() < 1e-15);
        assert!((SH_C0 - 0.28209479).abs() < 1e-8);
    }

    #[test]
    fn degree0_eval() {
        let c = 0.7;
        let rgb = sh_to_rgb(&[c, 0.0, -c], &Vector3::z()).unwrap();
        assert!((rgb[0] - (0.5 + SH_C0 * c)).abs() < 1e-15);
        assert_eq!(rgb[1], 0.5);
        assert!((rgb[2] - (0.5 - SH_C0 * c)).abs() < 1e-15);
        let other = sh_to_rgb(&[c, 0.0, -c], &Vector3::new(0.6, 0.0, 0.8)).unwrap();
        assert_eq!(rgb, other);
    }

    #[test]
    fn zero_coefficients_give_gray() {
        for degree in 0..=3 {
            let sh = vec![0.0; 3 * coeffs_per_channel(degree)];
            assert_eq!(sh_to_rgb(&sh, &Vector3::x()).unwrap(), [0.5; 3]);
        }
    }

    #[test]
    fn degree_validation() {
        assert!(matches!(
            degree_of(3 * 25),
            Err(Error::UnsupportedShDegree(4))
        ));
        assert!(degree_of(5).is_err());
        assert_eq!(degree_of(48).unwrap(), 3);
    }

    #[test]
    fn output_always_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let sh: Vec<f64> = (0..48).map(|_| rng.random_range(-20.0..20.0)).collect();
            let rgb = sh_to_rgb(&sh, &random_dir(&mut rng)).unwrap();
            assert!(rgb.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn rotation_identity_and_degree0() {
        let sh = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2];
        assert_eq!(rotate_sh(&sh, &Matrix3::identity()).unwrap(), sh.to_vec());
        let r = Rotation3::from_euler_angles(0.3, 0.2, 0.1).into_inner();
        assert_eq!(rotate_sh(&sh[..3], &r).unwrap(), sh[..3].to_vec());
        assert!(matches!(
            rotate_sh(&[0.0; 27], &r),
            Err(Error::UnsupportedShDegree(2))
        ));
    }

    #[test]
    fn rot_z90_sampled_over_sphere() {
        // Small coefficients keep evaluations inside the unclamped range.
        let sh = [0.1, -0.2, 0.05, 0.3, -0.1, 0.2, -0.25, 0.15, 0.1, 0.2, -0.3, 0.05];
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2)
            .into_inner();
        let rotated = rotate_sh(&sh, &r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let d = random_dir(&mut rng);
            let a = sh_to_rgb(&sh, &d).unwrap();
            let b = sh_to_rgb(&rotated, &(r * d)).unwrap();
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rotate_then_inverse_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let sh: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r = Rotation3::from_euler_angles(
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.0..3.0),
            )
            .into_inner();
            let back = rotate_sh(&rotate_sh(&sh, &r).unwrap(), &r.transpose()).unwrap();
            for (x, y) in sh.iter().zip(&back) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
