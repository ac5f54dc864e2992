//! On-disk formats: PPM images, raw scalar rasters, Gaussian archives and
//! JSON scene manifests. Byte layouts are documented in `FORMATS.md`.

mod archive;
mod manifest;
mod raster_io;

pub use archive::{
    decode_archive, encode_archive, load_archive, record_len, save_archive, ARCHIVE_HEADER_LEN,
    ARCHIVE_MAGIC, ARCHIVE_VERSION,
};
pub use manifest::{
    load_frame_index, load_scene, load_segments, save_frame_index, save_segments, write_synth_scene,
    FrameEntry, FrameIndex, LoadedScene, SceneManifest, SegmentEntry, SegmentIndex, ViewEntry,
    FRAME_INDEX, MANIFEST_VERSION, SEGMENT_INDEX,
};
pub use raster_io::{
    decode_ppm, decode_raw, encode_ppm, encode_raw, load_float, load_mask, load_ppm, load_raw, quantize,
    save_float, save_mask, save_ppm, save_raw, RawScalar, RAW_HEADER_LEN,
};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Prefixes format errors with the file they came from.
pub(crate) fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

/// Bounds-checked little-endian cursor. Errors carry the offset of the failed read.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn require(&self, n: usize) -> Result<()> {
        if self.remaining() < n {
            return Err(Error::Format {
                offset: self.offset(),
                message: format!("truncated: need {n} bytes, {} left", self.remaining()),
            });
        }
        Ok(())
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.require(n)?;
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    pub fn skip(&mut self, n: usize) {
        self.pos = (self.pos + n).min(self.bytes.len());
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format {
                offset: self.offset(),
                message: format!("{} trailing bytes", self.remaining()),
            });
        }
        Ok(())
    }
}
