//! Two-dimensional rasters.
//!
//! Images are stored row-major in *detector orientation*: column `u` grows
//! with the world Y axis (anterior) and row `v` grows with the world Z axis
//! (superior). Row 0 is therefore the inferior edge. File writers flip rows
//! when producing display-oriented images.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::par;

/// A dense `width × height` grid of pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T> Image2<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions(format!("{width}x{height} image")));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v * self.width + u
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.width)
    }

    pub fn same_dims<U>(&self, other: &Image2<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl<T: Copy> Image2<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, alloc::vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> T + Sync + Send,
    ) -> Result<Self>
    where
        T: Send + Default,
    {
        let mut img = Self::filled(width, height, T::default())?;
        par::fill_rows(&mut img.data, width, |v, row| {
            for (u, px) in row.iter_mut().enumerate() {
                *px = f(u, v);
            }
        });
        Ok(img)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[self.index(u, v)]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        let i = self.index(u, v);
        self.data[i] = value;
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> Image2<U> {
        Image2 {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Mirror along the column axis (`u → width−1−u`).
    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(row.iter().rev().copied());
        }
        Self { data, ..*self }
    }

    /// Mirror along the row axis (`v → height−1−v`).
    pub fn flip_vertical(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.rchunks_exact(self.width) {
            data.extend_from_slice(row);
        }
        Self { data, ..*self }
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for u in 0..self.width {
            for v in 0..self.height {
                data.push(self.get(u, v));
            }
        }
        Self {
            width: self.height,
            height: self.width,
            data,
        }
    }

    pub fn crop(&self, u0: usize, v0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || u0 + width > self.width || v0 + height > self.height {
            return Err(Error::Dimensions(format!(
                "crop {width}x{height}+{u0}+{v0} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for v in v0..v0 + height {
            let start = self.index(u0, v);
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Self::new(width, height, data)
    }

    /// Copy `src` into this image with its pixel (0,0) at `(u0, v0)`.
    pub fn paste(&mut self, src: &Image2<T>, u0: usize, v0: usize) -> Result<()> {
        if u0 + src.width > self.width || v0 + src.height > self.height {
            return Err(Error::Dimensions(format!(
                "paste {}x{}+{u0}+{v0} outside {}x{} image",
                src.width, src.height, self.width, self.height
            )));
        }
        for (dv, row) in src.rows().enumerate() {
            let start = self.index(u0, v0 + dv);
            self.data[start..start + src.width].copy_from_slice(row);
        }
        Ok(())
    }
}

impl Image2<f64> {
    /// Bilinear sample at continuous pixel coordinates `(x, y)`.
    ///
    /// The valid domain is the pixel footprint `[-0.5, n-0.5]`; the outer
    /// half-pixel border clamps to the edge. Returns `None` outside it.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let (i0, i1, fx) = axis_weights(x, self.width)?;
        let (j0, j1, fy) = axis_weights(y, self.height)?;
        let a = lerp(self.get(i0, j0), self.get(i1, j0), fx);
        let b = lerp(self.get(i0, j1), self.get(i1, j1), fx);
        Some(lerp(a, b, fy))
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

/// Neighbour indices and fractional weight along one axis of length `n`.
#[inline]
pub(crate) fn axis_weights(x: f64, n: usize) -> Option<(usize, usize, f64)> {
    let last = (n - 1) as f64;
    if !(x >= -0.5 && x <= last + 0.5) {
        return None;
    }
    let x = x.clamp(0.0, last);
    let i0 = libm::floor(x) as usize;
    if i0 >= n - 1 {
        return Some((n - 1, n - 1, 0.0));
    }
    Some((i0, i0 + 1, x - i0 as f64))
}

/// Physical placement of a raster: pixel pitch and the world `(y, z)`
/// position of the centre of pixel (0, 0), both in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneGrid {
    pub spacing: [f64; 2],
    pub origin: [f64; 2],
}

impl PlaneGrid {
    /// Grid of `width × height` pixels centred on the world origin.
    pub fn centered(width: usize, height: usize, spacing: [f64; 2]) -> Self {
        Self {
            spacing,
            origin: [
                -((width as f64 - 1.0) / 2.0) * spacing[0],
                -((height as f64 - 1.0) / 2.0) * spacing[1],
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing[0] > 0.0 && self.spacing[1] > 0.0)
            || !self
                .spacing
                .iter()
                .chain(self.origin.iter())
                .all(|x| x.is_finite())
        {
            return Err(Error::Spacing(format!(
                "plane grid spacing {:?} origin {:?}",
                self.spacing, self.origin
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn pixel_center(&self, u: usize, v: usize) -> [f64; 2] {
        [
            self.origin[0] + u as f64 * self.spacing[0],
            self.origin[1] + v as f64 * self.spacing[1],
        ]
    }

    /// Continuous pixel coordinates of a world `(y, z)` position.
    #[inline]
    pub fn to_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
        ]
    }
}

/// An image placed in physical space.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    pub image: Image2<T>,
    pub grid: PlaneGrid,
}

impl<T> Raster<T> {
    pub fn new(image: Image2<T>, grid: PlaneGrid) -> Result<Self> {
        grid.validate()?;
        Ok(Self { image, grid })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

/// Attenuation line integrals (dimensionless); also used for MIP outputs,
/// which hold HU.
pub type IntegralImage = Raster<f64>;

/// Film-domain 8-bit cephalogram.
pub type Cephalogram8 = Raster<u8>;

/// Integrals above this value are implausible for a human head.
pub const SUSPICIOUS_INTEGRAL: f64 = 20.0;

impl IntegralImage {
    /// Number of pixels that are negative, non-finite or above
    /// [`SUSPICIOUS_INTEGRAL`].
    pub fn suspicious_pixels(&self) -> usize {
        self.image
            .data()
            .iter()
            .filter(|&&g| !(g.is_finite() && (0.0..=SUSPICIOUS_INTEGRAL).contains(&g)))
            .count()
    }
}

/// Round half away from zero and saturate to the 8-bit range.
#[inline]
pub fn to_u8(x: f64) -> u8 {
    libm::round(x).clamp(0.0, 255.0) as u8
}
