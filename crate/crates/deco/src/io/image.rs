//! PNG and PPM codecs for RGB frames, masks, normal maps and depth maps.
//!
//! Encodings:
//! - RGB: 8- or 16-bit per channel, value `q / qmax`; writing rounds
//!   `v·qmax` after clamping to `[0, 1]`, so 8-bit inputs round-trip exactly.
//! - Mask: 8-bit grayscale, `255` = foreground; any value `≥ 128` reads as foreground.
//! - Normal: 16-bit RGB storing `(n + 1) / 2`; decoded vectors shorter
//!   than 0.5 (the encoding of the zero normal) read as zero.
//! - Depth: 16-bit grayscale storing inverse depth `q = round(65535·min(1, near / d))`;
//!   `q = 0` is infinite depth.

use std::path::Path;

use deco_core::image::{Image, Mask};
use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use nalgebra::Vector3;

use super::IoError;

/// Bits per channel of an encoded image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

/// Nearest representable depth of the inverse-depth encoding.
pub const DEFAULT_DEPTH_NEAR: f64 = 0.1;

fn format_for(path: &Path) -> Result<ImageFormat, IoError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm") | Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(IoError::format(path, "expected a .png or .ppm extension")),
    }
}

fn open(path: &Path) -> Result<DynamicImage, IoError> {
    let format = format_for(path)?;
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    image::load_from_memory_with_format(&bytes, format).map_err(|e| IoError::format(path, e))
}

fn save(path: &Path, img: DynamicImage) -> Result<(), IoError> {
    let format = format_for(path)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    img.save_with_format(path, format).map_err(|e| IoError::format(path, e))
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Reads an RGB image; alpha is dropped and gray is replicated.
pub fn read_rgb(path: &Path) -> Result<(Image, BitDepth), IoError> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let sixteen = matches!(
        img.color(),
        image::ColorType::L16 | image::ColorType::La16 | image::ColorType::Rgb16 | image::ColorType::Rgba16
    );
    if sixteen {
        let buf = img.into_rgb16();
        let data = buf.into_raw().into_iter().map(|q| q as f64 / 65535.0).collect();
        Ok((Image::from_vec(w, h, 3, data).expect("rgb16 buffer"), BitDepth::Sixteen))
    } else {
        let buf = img.into_rgb8();
        let data = buf.into_raw().into_iter().map(|q| q as f64 / 255.0).collect();
        Ok((Image::from_vec(w, h, 3, data).expect("rgb8 buffer"), BitDepth::Eight))
    }
}

fn rgb_dynamic(img: &Image, depth: BitDepth) -> Result<DynamicImage, String> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let rgb: Vec<f64> = match img.channels() {
        3 => img.data().to_vec(),
        1 => img.data().iter().flat_map(|&v| [v, v, v]).collect(),
        c => return Err(format!("cannot encode {c}-channel image as RGB")),
    };
    Ok(match depth {
        BitDepth::Eight => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, rgb.iter().map(|&v| quantize(v, 255.0) as u8).collect())
                .expect("rgb8 buffer"),
        ),
        BitDepth::Sixteen => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, rgb.iter().map(|&v| quantize(v, 65535.0) as u16).collect())
                .expect("rgb16 buffer"),
        ),
    })
}

/// Writes an RGB (or single-channel, replicated) image.
pub fn write_rgb(path: &Path, img: &Image, depth: BitDepth) -> Result<(), IoError> {
    save(path, rgb_dynamic(img, depth).map_err(|e| IoError::format(path, e))?)
}

pub fn read_mask(path: &Path) -> Result<Mask, IoError> {
    let img = open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|q| q >= 128).collect();
    Ok(Mask::from_vec(w, h, data).expect("mask buffer"))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<(), IoError> {
    let raw = mask.data().iter().map(|&m| if m { 255u8 } else { 0 }).collect();
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("mask buffer");
    save(path, DynamicImage::ImageLuma8(buf))
}

/// Writes unit normals (zero where undefined) as `(n + 1) / 2`.
pub fn write_normals(path: &Path, normals: &[Vector3<f64>], width: usize, height: usize) -> Result<(), IoError> {
    if normals.len() != width * height {
        return Err(IoError::format(path, "normal count does not match the image size"));
    }
    let data = normals.iter().flat_map(|n| [0.5 * (n.x + 1.0), 0.5 * (n.y + 1.0), 0.5 * (n.z + 1.0)]).collect();
    write_rgb(path, &Image::from_vec(width, height, 3, data).expect("normal buffer"), BitDepth::Sixteen)
}

pub fn read_normals(path: &Path) -> Result<(Vec<Vector3<f64>>, usize, usize), IoError> {
    let (img, _) = read_rgb(path)?;
    let normals = img
        .data()
        .chunks_exact(3)
        .map(|c| {
            let n = Vector3::new(2.0 * c[0] - 1.0, 2.0 * c[1] - 1.0, 2.0 * c[2] - 1.0);
            if n.norm() < 0.5 {
                Vector3::zeros()
            } else {
                n.normalize()
            }
        })
        .collect();
    Ok((normals, img.width(), img.height()))
}

/// Writes depth as 16-bit inverse depth relative to `near`.
pub fn write_depth(path: &Path, depth: &[f64], width: usize, height: usize, near: f64) -> Result<(), IoError> {
    if depth.len() != width * height {
        return Err(IoError::format(path, "depth count does not match the image size"));
    }
    let raw = depth
        .iter()
        .map(|&d| if d > 0.0 { quantize(near / d, 65535.0) as u16 } else { 65535 })
        .collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(width as u32, height as u32, raw).expect("depth buffer");
    save(path, DynamicImage::ImageLuma16(buf))
}

pub fn read_depth(path: &Path, near: f64) -> Result<(Vec<f64>, usize, usize), IoError> {
    let img = open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let depth = img
        .into_raw()
        .into_iter()
        .map(|q| if q == 0 { f64::INFINITY } else { near * 65535.0 / q as f64 })
        .collect();
    Ok((depth, w, h))
}

/// PNG bytes of an RGB image, for wire payloads.
pub fn png_bytes(img: &Image, depth: BitDepth) -> Result<Vec<u8>, IoError> {
    let payload = Path::new("<payload>");
    let dynamic = rgb_dynamic(img, depth).map_err(|e| IoError::format(payload, e))?;
    let mut out = std::io::Cursor::new(Vec::new());
    dynamic
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| IoError::format(payload, e))?;
    Ok(out.into_inner())
}

/// PNG bytes of a mask.
pub fn mask_png_bytes(mask: &Mask) -> Result<Vec<u8>, IoError> {
    let raw = mask.data().iter().map(|&m| if m { 255u8 } else { 0 }).collect();
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("mask buffer");
    let mut out = std::io::Cursor::new(Vec::new());
    DynamicImage::ImageLuma8(buf)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| IoError::format(Path::new("<payload>"), e))?;
    Ok(out.into_inner())
}

/// Decodes PNG bytes into an RGB image.
pub fn image_from_png(bytes: &[u8]) -> Result<Image, IoError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| IoError::format(Path::new("<payload>"), e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = if img.color().bytes_per_pixel() / img.color().channel_count() == 2 {
        img.into_rgb16().into_raw().into_iter().map(|q| q as f64 / 65535.0).collect()
    } else {
        img.into_rgb8().into_raw().into_iter().map(|q| q as f64 / 255.0).collect()
    };
    Ok(Image::from_vec(w, h, 3, data).expect("rgb buffer"))
}
