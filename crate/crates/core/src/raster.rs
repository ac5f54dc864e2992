//! Row-major H×W×C rasters shared by images, depth maps, masks and flows.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

/// RGB image, values nominally in [0, 1].
pub type Image = Raster<f64>;
/// Single-channel z-depth in meters.
pub type DepthMap = Raster<f64>;
/// Instance ids; 0 is static background.
pub type InstanceMask = Raster<u32>;

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height}x{channels} raster",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for v in 0..height {
            for u in 0..width {
                for c in 0..channels {
                    data.push(f(u, v, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Row-major pixel index, the same index used for per-pixel Gaussians.
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn pixel(&self, u: usize, v: usize) -> &[T] {
        let i = self.index(u, v) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, u: usize, v: usize) -> &mut [T] {
        let i = self.index(u, v) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn pixel_at(&self, index: usize) -> &[T] {
        let i = index * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn get(&self, u: usize, v: usize, c: usize) -> &T {
        &self.data[self.index(u, v) * self.channels + c]
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_size<U>(&self, other: &Raster<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Copy> Raster<T> {
    pub fn at(&self, u: usize, v: usize) -> T {
        self.data[self.index(u, v) * self.channels]
    }
}
