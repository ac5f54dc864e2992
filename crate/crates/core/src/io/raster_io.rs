//! Binary PPM images and raw little-endian scalar rasters.

use std::path::Path;

use super::{read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::raster::{Image, Raster};

/// Bytes before the payload of a raw raster: magic + width + height + channels.
pub const RAW_HEADER_LEN: usize = 16;

/// Scalar types stored in raw rasters.
pub trait RawScalar: Copy + Default + Send + Sync {
    const MAGIC: [u8; 4];
    fn to_le(self) -> [u8; 4];
    fn from_le(b: [u8; 4]) -> Self;
}

impl RawScalar for f32 {
    const MAGIC: [u8; 4] = *b"RF32";
    fn to_le(self) -> [u8; 4] {
        self.to_le_bytes()
    }
    fn from_le(b: [u8; 4]) -> Self {
        f32::from_le_bytes(b)
    }
}

impl RawScalar for i32 {
    const MAGIC: [u8; 4] = *b"RI32";
    fn to_le(self) -> [u8; 4] {
        self.to_le_bytes()
    }
    fn from_le(b: [u8; 4]) -> Self {
        i32::from_le_bytes(b)
    }
}

fn dim_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format {
        offset: 0,
        message: format!("{what} {n} does not fit in 32 bits"),
    })
}

pub fn encode_raw<T: RawScalar>(raster: &Raster<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + raster.data().len() * 4);
    out.extend_from_slice(&T::MAGIC);
    out.extend_from_slice(&dim_u32(raster.width(), "width")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(raster.height(), "height")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(raster.channels(), "channels")?.to_le_bytes());
    for v in raster.data() {
        out.extend_from_slice(&v.to_le());
    }
    Ok(out)
}

pub fn decode_raw<T: RawScalar>(bytes: &[u8]) -> Result<Raster<T>> {
    let mut r = Reader::new(bytes);
    let magic = r.bytes::<4>()?;
    if magic != T::MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {magic:?}, expected {:?}", T::MAGIC),
        });
    }
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    let c = r.u32()? as usize;
    let n = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(c))
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| Error::Format {
            offset: 4,
            message: format!("dimensions {w}x{h}x{c} overflow"),
        })?;
    r.require(n * 4)?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(T::from_le(r.bytes::<4>()?));
    }
    r.finish()?;
    Raster::from_vec(w, h, c, data)
}

pub fn save_raw<T: RawScalar>(path: &Path, raster: &Raster<T>) -> Result<()> {
    write_file(path, &encode_raw(raster)?)
}

pub fn load_raw<T: RawScalar>(path: &Path) -> Result<Raster<T>> {
    decode_raw(&read_file(path)?).map_err(|e| super::with_path(e, path))
}

/// Stores an f64 raster as float32.
pub fn save_float(path: &Path, raster: &Raster<f64>) -> Result<()> {
    save_raw(path, &raster.map(|v| *v as f32))
}

/// Loads a float32 raster widened to f64.
pub fn load_float(path: &Path) -> Result<Raster<f64>> {
    Ok(load_raw::<f32>(path)?.map(|v| f64::from(*v)))
}

pub fn save_mask(path: &Path, mask: &Raster<u32>) -> Result<()> {
    if let Some(id) = mask.data().iter().find(|id| **id > i32::MAX as u32) {
        return Err(Error::Format {
            offset: 0,
            message: format!("instance id {id} does not fit in int32"),
        });
    }
    save_raw(path, &mask.map(|v| *v as i32))
}

pub fn load_mask(path: &Path) -> Result<Raster<u32>> {
    let raw = load_raw::<i32>(path)?;
    if let Some(i) = raw.data().iter().position(|v| *v < 0) {
        return Err(super::with_path(
            Error::Format {
                offset: (RAW_HEADER_LEN + 4 * i) as u64,
                message: format!("negative instance id {}", raw.data()[i]),
            },
            path,
        ));
    }
    Ok(raw.map(|v| *v as u32))
}

/// 8-bit quantization: clamp to [0, 1], scale by 255, round half away from zero.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(image: &Image) -> Result<Vec<u8>> {
    if image.channels() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "PPM needs 3 channels, got {}",
            image.channels()
        )));
    }
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|v| quantize(*v)));
    Ok(out)
}

fn ppm_token(r: &mut Reader<'_>) -> Result<usize> {
    // Skip whitespace and comments.
    loop {
        match r.peek() {
            Some(b) if b.is_ascii_whitespace() => {
                r.skip(1);
            }
            Some(b'#') => {
                while let Some(b) = r.peek() {
                    r.skip(1);
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = r.offset();
    let mut n: usize = 0;
    while let Some(b) = r.peek().filter(u8::is_ascii_digit) {
        n = n
            .checked_mul(10)
            .and_then(|n| n.checked_add((b - b'0') as usize))
            .ok_or_else(|| Error::Format {
                offset: start,
                message: "number too large".into(),
            })?;
        r.skip(1);
    }
    if r.offset() == start {
        return Err(Error::Format {
            offset: start,
            message: "expected a decimal number".into(),
        });
    }
    Ok(n)
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut r = Reader::new(bytes);
    if r.bytes::<2>()? != *b"P6" {
        return Err(Error::Format {
            offset: 0,
            message: "not a binary PPM (P6)".into(),
        });
    }
    let w = ppm_token(&mut r)?;
    let h = ppm_token(&mut r)?;
    let at = r.offset();
    let max = ppm_token(&mut r)?;
    if max != 255 {
        return Err(Error::Format {
            offset: at,
            message: format!("maxval {max}, only 255 is supported"),
        });
    }
    match r.peek() {
        Some(b) if b.is_ascii_whitespace() => r.skip(1),
        _ => {
            return Err(Error::Format {
                offset: r.offset(),
                message: "missing whitespace after header".into(),
            })
        }
    }
    let n = w.checked_mul(h).and_then(|n| n.checked_mul(3)).ok_or_else(|| Error::Format {
        offset: 2,
        message: "dimensions overflow".into(),
    })?;
    let payload = r.take(n)?;
    let data = payload.iter().map(|b| f64::from(*b) / 255.0).collect();
    r.finish()?;
    Raster::from_vec(w, h, 3, data)
}

pub fn save_ppm(path: &Path, image: &Image) -> Result<()> {
    write_file(path, &encode_ppm(image)?)
}

pub fn load_ppm(path: &Path) -> Result<Image> {
    decode_ppm(&read_file(path)?).map_err(|e| super::with_path(e, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_half_away() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(7.0), 255);
        assert_eq!(quantize(0.5 / 255.0), 1);
    }

    #[test]
    fn float_raster_round_trip_is_bit_exact() {
        let vals = [0.0f32, -0.0, 1.5, f32::MIN_POSITIVE, f32::MAX, -7.25, 1e-30, 3.3];
        let r = Raster::from_fn(4, 3, 2, |u, v, c| vals[(u + v * 3 + c) % vals.len()]);
        let bytes = encode_raw(&r).unwrap();
        assert_eq!(bytes.len(), RAW_HEADER_LEN + 4 * 24);
        let back: Raster<f32> = decode_raw(&bytes).unwrap();
        assert_eq!(encode_raw(&back).unwrap(), bytes);
    }

    #[test]
    fn raw_magic_mismatch() {
        let r = Raster::filled(2, 2, 1, 3i32);
        let bytes = encode_raw(&r).unwrap();
        assert!(matches!(decode_raw::<f32>(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn raw_truncation_reports_offset() {
        let r = Raster::filled(3, 3, 1, 1.0f32);
        let bytes = encode_raw(&r).unwrap();
        match decode_raw::<f32>(&bytes[..30]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("{other:?}"),
        }
        match decode_raw::<f32>(&bytes[..10]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("{other:?}"),
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_raw::<f32>(&long), Err(Error::Format { .. })));
    }

    #[test]
    fn ppm_round_trip_after_quantization() {
        let img = Raster::from_fn(5, 4, 3, |u, v, c| ((u * 31 + v * 17 + c * 70) % 256) as f64 / 255.0);
        let bytes = encode_ppm(&img).unwrap();
        assert!(bytes.starts_with(b"P6\n5 4\n255\n"));
        let back = decode_ppm(&bytes).unwrap();
        assert_eq!(back, img);
        assert!(decode_ppm(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_ppm(b"P3\n1 1\n255\n000").is_err());
    }

    #[test]
    fn ppm_header_comments() {
        let bytes = b"P6 # comment\n2 1\n255\n\x00\x80\xff\x01\x02\x03";
        let img = decode_ppm(bytes).unwrap();
        assert_eq!(img.pixel(0, 0), &[0.0, 128.0 / 255.0, 1.0]);
    }
}
