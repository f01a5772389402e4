//! RGBA raster carrier with channels in `[0, 1]`, plus 8-bit PNG I/O.

use std::path::Path;

use thiserror::Error;

use crate::color::{relative_luminance, Luminance, Rgb};
use crate::geometry::Rect;
use crate::scalar::{clamp01, Scalar};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("pixel buffer length {len} does not match {width}x{height}")]
    BadLength { width: usize, height: usize, len: usize },
    #[error("image must have positive dimensions")]
    Empty,
    #[error("png i/o for {path}: {source}")]
    Png {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// Row-major RGBA image; every channel clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage<T: Scalar> {
    width: usize,
    height: usize,
    pixels: Vec<[T; 4]>,
}

impl<T: Scalar> RasterImage<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<[T; 4]>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Empty);
        }
        if pixels.len() != width * height {
            return Err(RasterError::BadLength {
                width,
                height,
                len: pixels.len(),
            });
        }
        let pixels = pixels.into_iter().map(|p| p.map(clamp01)).collect();
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: Rgb<T>) -> Result<Self, RasterError> {
        Self::new(
            width,
            height,
            vec![[color.r, color.g, color.b, T::one()]; width * height],
        )
    }

    /// Builds an opaque image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Rgb<T>,
    ) -> Result<Self, RasterError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let c = f(x, y);
                pixels.push([c.r, c.g, c.b, T::one()]);
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[T; 4]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [T; 4] {
        self.pixels[y * self.width + x]
    }

    pub(crate) fn get_mut(&mut self, x: usize, y: usize) -> &mut [T; 4] {
        &mut self.pixels[y * self.width + x]
    }

    pub fn rgb(&self, x: usize, y: usize) -> Rgb<T> {
        let p = self.get(x, y);
        Rgb::new(p[0], p[1], p[2])
    }

    pub fn luminance_at(&self, x: usize, y: usize) -> Luminance<T> {
        relative_luminance(&self.rgb(x, y))
    }

    pub fn same_size(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Pixel index ranges covered by a box: pixel `(x, y)` belongs to the box
/// when its center `(x + 0.5, y + 0.5)` lies inside. Clamped to the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelSpan {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelSpan {
    pub fn of<T: Scalar>(rect: &Rect<T>, width: usize, height: usize) -> Self {
        // first pixel whose center is >= v; doubles as the exclusive end
        let edge = |v: T, max: usize| -> usize {
            let c = (v - T::lit(0.5)).ceil().to_f64_lossy();
            c.max(0.0).min(max as f64) as usize
        };
        Self {
            x0: edge(rect.x0, width),
            y0: edge(rect.y0, height),
            x1: edge(rect.x1, width),
            y1: edge(rect.y1, height),
        }
    }

    pub fn count(&self) -> usize {
        self.x1.saturating_sub(self.x0) * self.y1.saturating_sub(self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..self.y1).flat_map(move |y| (self.x0..self.x1).map(move |x| (x, y)))
    }
}

pub type Raster = RasterImage<f64>;

impl RasterImage<f64> {
    pub fn read_png(path: &Path) -> Result<Self, RasterError> {
        let img = image::open(path)
            .map_err(|source| RasterError::Png {
                path: path.display().to_string(),
                source,
            })?
            .to_rgba8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0.map(|c| f64::from(c) / 255.0)).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    /// Quantized 8-bit RGBA bytes (round to nearest).
    pub fn to_rgba8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8))
            .collect()
    }

    /// PNG-encoded 8-bit RGBA bytes.
    pub fn encode_png(&self) -> Result<Vec<u8>, image::ImageError> {
        use image::ImageEncoder;
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out).write_image(
            &self.to_rgba8(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgba8,
        )?;
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<(), RasterError> {
        let err = |source| RasterError::Png {
            path: path.display().to_string(),
            source,
        };
        let bytes = self.encode_png().map_err(err)?;
        std::fs::write(path, bytes).map_err(|e| err(image::ImageError::IoError(e)))
    }
}
