//! Portable raster input (PPM/PGM/PNM and farbfeld).

use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::bcr::ImageGeometry;
use crate::codec::Image;
use crate::error::{Error, Result};

/// File extensions accepted as image inputs.
pub const RASTER_EXTENSIONS: [&str; 5] = ["ppm", "pgm", "pbm", "pnm", "ff"];

pub fn is_raster_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| RASTER_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Loads a raster as a `[0, 1]` tensor. Grey images give one channel, colour
/// images three; alpha is dropped.
pub fn load_raster(path: &Path) -> Result<Image> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ff") => ImageFormat::Farbfeld,
        _ => ImageFormat::Pnm,
    };
    let bytes = std::fs::read(path)?;
    let img = image::load_from_memory_with_format(&bytes, format)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(from_dynamic(&img))
}

pub fn decode_raster(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(|e| Error::Data(format!("raster: {e}")))?;
    Ok(from_dynamic(&img))
}

fn from_dynamic(img: &DynamicImage) -> Image {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, interleaved): (usize, Vec<f32>) = if img.color().has_color() {
        (3, img.to_rgb32f().into_raw())
    } else {
        (1, img.to_luma32f().into_raw())
    };
    let geometry = ImageGeometry::new(channels, h, w);
    let mut data = vec![0.0; geometry.len()];
    for (i, v) in interleaved.iter().enumerate() {
        let (pixel, c) = (i / channels, i % channels);
        data[c * h * w + pixel] = f64::from(*v);
    }
    Image::new(geometry, data).expect("decoded raster has consistent geometry")
}

/// Encodes an image as a 16-bit binary PPM (3 channels) or PGM (1 channel).
/// Values are clamped to `[0, 1]`.
pub fn encode_pnm16(image: &Image) -> Result<Vec<u8>> {
    let g = image.geometry();
    let magic = match g.channels {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::Geometry(format!(
                "PNM output needs 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n65535\n", g.width, g.height).into_bytes();
    out.reserve(g.len() * 2);
    for y in 0..g.height {
        for x in 0..g.width {
            for c in 0..g.channels {
                let v = (image.get(c, y, x).clamp(0.0, 1.0) * 65535.0).round() as u16;
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm16_roundtrip_is_within_quantization() {
        let g = ImageGeometry::rgb(3, 5);
        let data: Vec<f64> = (0..g.len()).map(|i| i as f64 / g.len() as f64).collect();
        let img = Image::new(g, data).unwrap();
        let back = decode_raster(&encode_pnm16(&img).unwrap()).unwrap();
        assert_eq!(back.geometry(), g);
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-7);
        }
    }

    #[test]
    fn grey_images_have_one_channel() {
        let img = Image::new(ImageGeometry::new(1, 2, 2), vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let back = decode_raster(&encode_pnm16(&img).unwrap()).unwrap();
        assert_eq!(back.geometry(), ImageGeometry::new(1, 2, 2));
    }

    #[test]
    fn eight_bit_ppm_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.ppm");
        std::fs::write(&path, b"P6\n2 1\n255\n\xff\x00\x00\x00\x00\xff").unwrap();
        let img = load_raster(&path).unwrap();
        assert_eq!(img.geometry(), ImageGeometry::rgb(1, 2));
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.get(2, 0, 1), 1.0);
        assert_eq!(img.get(1, 0, 0), 0.0);
        assert!(is_raster_path(&path));
    }
}
