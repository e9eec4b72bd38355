//! Portable pixmap/graymap input. Other formats need converting first, for
//! example with `convert photo.jpg photo.ppm`.

use std::path::Path;

use image::{DynamicImage, ImageFormat};
use vsd_core::imaging::RasterImage;

use crate::error::{Error, Result};

pub fn decode_pnm(bytes: &[u8], file: &str) -> Result<RasterImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm).map_err(|e| Error::Image {
        file: file.into(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raster = match img {
        DynamicImage::ImageLuma8(g) => RasterImage::new(w, h, 1, g.into_raw()),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            RasterImage::new(w, h, 1, img.to_luma8().into_raw())
        }
        other => RasterImage::new(w, h, 3, other.to_rgb8().into_raw()),
    };
    raster.map_err(|e| Error::Image {
        file: file.into(),
        message: e.to_string(),
    })
}

pub fn read_pnm(path: &Path) -> Result<RasterImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, &path.display().to_string())
}

/// Binary PPM (3 channels) or PGM (1 channel) encoding.
pub fn encode_pnm(image: &RasterImage) -> Vec<u8> {
    let magic = if image.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}
