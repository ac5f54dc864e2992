//! Gaussian archive: one [`SceneSegment`] per file, all values little-endian f64.

use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use super::{read_file, with_path, write_file, Reader};
use crate::error::{Error, Result};
use crate::gauss::{Gaussian4D, SceneSegment};
use crate::geom::{EgoPose, SE3};
use crate::sh::{coeffs_per_channel, degree_of, MAX_SH_DEGREE};

pub const ARCHIVE_MAGIC: [u8; 4] = *b"G4DA";
pub const ARCHIVE_VERSION: u8 = 1;
/// magic 4 + version 1 + sh degree 1 + reserved 2 + count 8 + span 16 + anchor (1 + 9 + 3) f64.
pub const ARCHIVE_HEADER_LEN: usize = 136;

/// Bytes per kernel record for a given SH degree.
pub fn record_len(sh_degree: usize) -> usize {
    8 * (3 + 4 + 3 + 1 + 3 * coeffs_per_channel(sh_degree) + 3) + 1 + 16
}

fn put(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn segment_degree(segment: &SceneSegment) -> Result<usize> {
    let Some(first) = segment.gaussians.first() else {
        return Ok(0);
    };
    let degree = degree_of(first.sh.len())?;
    if let Some(i) = segment.gaussians.iter().position(|g| g.sh.len() != first.sh.len()) {
        return Err(Error::ShapeMismatch(format!(
            "kernel {i} has {} SH floats, kernel 0 has {}",
            segment.gaussians[i].sh.len(),
            first.sh.len()
        )));
    }
    Ok(degree)
}

pub fn encode_archive(segment: &SceneSegment) -> Result<Vec<u8>> {
    let degree = segment_degree(segment)?;
    let n = segment.gaussians.len();
    let mut out = Vec::with_capacity(ARCHIVE_HEADER_LEN + n * record_len(degree));
    out.extend_from_slice(&ARCHIVE_MAGIC);
    out.push(ARCHIVE_VERSION);
    out.push(degree as u8);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    put(&mut out, segment.t_start);
    put(&mut out, segment.t_end);
    let anchor = &segment.anchor_pose;
    put(&mut out, anchor.t);
    for r in 0..3 {
        for c in 0..3 {
            put(&mut out, anchor.pose.rotation[(r, c)]);
        }
    }
    for v in anchor.pose.translation.iter() {
        put(&mut out, *v);
    }
    debug_assert_eq!(out.len(), ARCHIVE_HEADER_LEN);

    for g in &segment.gaussians {
        for v in g.center.iter() {
            put(&mut out, *v);
        }
        let q = g.rotation.quaternion();
        for v in [q.w, q.i, q.j, q.k] {
            put(&mut out, v);
        }
        for v in g.scale.iter() {
            put(&mut out, *v);
        }
        put(&mut out, g.opacity);
        for v in &g.sh {
            put(&mut out, *v);
        }
        for v in g.velocity.iter() {
            put(&mut out, *v);
        }
        out.push(g.dynamic as u8);
        put(&mut out, g.t_start);
        put(&mut out, g.t_end);
    }
    Ok(out)
}

fn vec3(r: &mut Reader<'_>) -> Result<Vector3<f64>> {
    Ok(Vector3::new(r.f64()?, r.f64()?, r.f64()?))
}

pub fn decode_archive(bytes: &[u8]) -> Result<SceneSegment> {
    let mut r = Reader::new(bytes);
    let magic = r.bytes::<4>()?;
    if magic != ARCHIVE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {magic:?}"),
        });
    }
    let version = r.u8()?;
    if version != ARCHIVE_VERSION {
        return Err(Error::Version {
            found: version,
            expected: ARCHIVE_VERSION,
        });
    }
    let degree = r.u8()? as usize;
    if degree > MAX_SH_DEGREE {
        return Err(Error::Format {
            offset: 5,
            message: format!("SH degree {degree} > {MAX_SH_DEGREE}"),
        });
    }
    if r.u16()? != 0 {
        return Err(Error::Format {
            offset: 6,
            message: "reserved bytes not zero".into(),
        });
    }
    let count = r.u64()?;
    let t_start = r.f64()?;
    let t_end = r.f64()?;
    let anchor_t = r.f64()?;
    let mut rotation = Matrix3::zeros();
    for row in 0..3 {
        for col in 0..3 {
            rotation[(row, col)] = r.f64()?;
        }
    }
    let pose = SE3::new(rotation, vec3(&mut r)?);
    let ortho = pose.orthonormality_error();
    if !(ortho <= 1e-6) {
        return Err(Error::Format {
            offset: 40,
            message: format!("anchor rotation not orthonormal (error {ortho:e})"),
        });
    }

    let rec = record_len(degree);
    let body = usize::try_from(count)
        .ok()
        .and_then(|n| n.checked_mul(rec))
        .ok_or_else(|| Error::Format {
            offset: 8,
            message: format!("record count {count} overflows"),
        })?;
    if r.remaining() < body {
        // Point at the first record that is cut short.
        let whole = r.remaining() / rec;
        return Err(Error::Format {
            offset: (ARCHIVE_HEADER_LEN + whole * rec) as u64,
            message: format!("truncated: header declares {count} records, {whole} complete"),
        });
    }

    let n_sh = 3 * coeffs_per_channel(degree);
    let mut gaussians = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let at = r.offset();
        let center = vec3(&mut r)?;
        let q = Quaternion::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let scale = vec3(&mut r)?;
        let opacity = r.f64()?;
        let mut sh = Vec::with_capacity(n_sh);
        for _ in 0..n_sh {
            sh.push(r.f64()?);
        }
        let velocity = vec3(&mut r)?;
        let dynamic = match r.u8()? {
            0 => false,
            1 => true,
            b => {
                return Err(Error::Format {
                    offset: r.offset() - 1,
                    message: format!("dynamic flag {b} is not 0 or 1"),
                })
            }
        };
        let g = Gaussian4D {
            center,
            rotation: UnitQuaternion::new_unchecked(q),
            scale,
            opacity,
            sh,
            velocity,
            dynamic,
            t_start: r.f64()?,
            t_end: r.f64()?,
        };
        g.validate().map_err(|message| Error::Format { offset: at, message })?;
        gaussians.push(g);
    }
    r.finish()?;
    SceneSegment::new(t_start, t_end, EgoPose { t: anchor_t, pose }, gaussians)
}

pub fn save_archive(path: &Path, segment: &SceneSegment) -> Result<()> {
    write_file(path, &encode_archive(segment)?)
}

pub fn load_archive(path: &Path) -> Result<SceneSegment> {
    decode_archive(&read_file(path)?).map_err(|e| with_path(e, path))
}
