//! Difficulty baselines computed from pixels or file bytes.

mod segment;

pub use segment::{segment, SegmentParams, SegmentationResult};

use alloc::vec::Vec;

use crate::{Error, Result};

/// 8-bit raster, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::param("channels", "must be 1 or 3"));
        }
        if width == 0 || height == 0 {
            return Err(Error::Empty("image pixels"));
        }
        if data.len() != width * height * channels {
            return Err(Error::LengthMismatch {
                left: width * height * channels,
                right: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, channels: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                data.extend_from_slice(&px[..channels]);
            }
        }
        Self::new(width, height, channels, data)
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Rec. 601 luma, one value per pixel in `[0, 255]`.
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.iter().map(|&v| f64::from(v)).collect();
        }
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
            .collect()
    }
}

pub fn area_score(image: &RasterImage) -> f64 {
    image.n_pixels() as f64
}

/// Byte count of the compressed file.
pub fn filesize_score(n_bytes: u64) -> f64 {
    n_bytes as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BorderMode {
    /// Out-of-range samples take the nearest edge pixel.
    #[default]
    Replicate,
    /// The image is treated as periodic.
    Wrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EdgeOptions {
    /// Divide the sum by the pixel count.
    pub normalize: bool,
    pub border: BorderMode,
}

/// Sum over pixels of the Sobel gradient magnitude of the luminance.
pub fn edge_density(image: &RasterImage, options: &EdgeOptions) -> f64 {
    let (w, h) = (image.width as isize, image.height as isize);
    let lum = image.luminance();
    let at = |x: isize, y: isize| -> f64 {
        let (x, y) = match options.border {
            BorderMode::Replicate => (x.clamp(0, w - 1), y.clamp(0, h - 1)),
            BorderMode::Wrap => (x.rem_euclid(w), y.rem_euclid(h)),
        };
        lum[(y * w + x) as usize]
    };
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            total += libm::hypot(gx, gy);
        }
    }
    if options.normalize {
        total / image.n_pixels() as f64
    } else {
        total
    }
}
